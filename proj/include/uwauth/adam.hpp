#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "uwauth/error.hpp"

namespace uwauth {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style): p -= lr * weight_decay * p, independent of the gradient.
  double weight_decay = 0.0;
};

/// First/second moment estimates for a fixed list of parameter tensors.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const std::vector<std::span<double>>& params) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t steps() const noexcept { return step_; }

  /// One bias-corrected update of every tensor not flagged in `frozen`.
  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads,
            const AdamConfig& cfg, const std::vector<bool>& frozen = {}) {
    if (params.size() != grads.size() || params.size() != m_.size())
      throw DataError("adam_step: parameter/gradient/state count mismatch");
    ++step_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (std::size_t t = 0; t < params.size(); ++t) {
      if (!frozen.empty() && frozen[t]) continue;
      if (params[t].size() != grads[t].size() || params[t].size() != m_[t].size())
        throw DataError("adam_step: tensor shape mismatch");
      auto& m = m_[t];
      auto& v = v_[t];
      for (std::size_t k = 0; k < params[t].size(); ++k) {
        const double g = grads[t][k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[k] / c1;
        const double v_hat = v[k] / c2;
        double& p = params[t][k];
        p -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p);
      }
    }
  }

 private:
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace uwauth
