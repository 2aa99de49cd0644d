#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uwauth/channel.hpp"
#include "uwauth/error.hpp"

namespace uwauth {

/// K per-sub-band spatial covariance matrices and, once preprocessed, their
/// real-folded counterparts.
struct ScmTensor {
  std::vector<Eigen::MatrixXcd> slices;
  std::vector<Eigen::MatrixXd> folded;

  std::size_t subbands() const noexcept { return slices.size(); }
  Eigen::Index receivers() const noexcept { return slices.empty() ? 0 : slices.front().rows(); }
};

inline Eigen::VectorXcd normalize_gains(const Eigen::VectorXcd& gains) {
  const double norm = gains.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DataError("cannot normalize a zero or non-finite gain vector");
  return gains / norm;
}

/// Outer product q q^H of a unit-norm gain vector.
inline Eigen::MatrixXcd scm_at_subband(const Eigen::VectorXcd& unit_gains) { return unit_gains * unit_gains.adjoint(); }

inline ScmTensor stack_scm(std::vector<Eigen::MatrixXcd> slices) {
  if (slices.empty()) throw DataError("cannot stack an empty set of covariance matrices");
  const Eigen::Index n = slices.front().rows();
  for (const auto& c : slices)
    if (c.rows() != n || c.cols() != n) throw DataError("covariance slices differ in dimension");
  ScmTensor t;
  t.slices = std::move(slices);
  return t;
}

inline const std::vector<Eigen::MatrixXcd>& unstack_scm(const ScmTensor& tensor) noexcept { return tensor.slices; }

/// Normalized single-snapshot covariance of every sub-band column.
inline ScmTensor scm_from_snapshot(const ChannelSnapshot& snapshot) {
  std::vector<Eigen::MatrixXcd> slices;
  slices.reserve(static_cast<std::size_t>(snapshot.gains.cols()));
  for (Eigen::Index k = 0; k < snapshot.gains.cols(); ++k)
    slices.push_back(scm_at_subband(normalize_gains(snapshot.gains.col(k))));
  return stack_scm(std::move(slices));
}

/// Folds a Hermitian matrix into one real matrix: the upper triangle
/// (diagonal included) keeps the real parts, the strict lower triangle
/// holds the transposed imaginary parts.
inline Eigen::MatrixXd real_fold(const Eigen::MatrixXcd& c) {
  if (c.rows() != c.cols()) throw DataError("real_fold needs a square matrix");
  const Eigen::Index n = c.rows();
  Eigen::MatrixXcd upper = Eigen::MatrixXcd::Zero(n, n);
  upper.triangularView<Eigen::Upper>() = c.triangularView<Eigen::Upper>();
  return upper.real() + upper.imag().transpose();
}

/// Inverse of real_fold for Hermitian inputs.
inline Eigen::MatrixXcd real_unfold(const Eigen::MatrixXd& folded) {
  if (folded.rows() != folded.cols()) throw DataError("real_unfold needs a square matrix");
  const Eigen::Index n = folded.rows();
  Eigen::MatrixXcd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = Complex{folded(i, i), 0.0};
    for (Eigen::Index j = i + 1; j < n; ++j) {
      c(i, j) = Complex{folded(i, j), folded(j, i)};
      c(j, i) = std::conj(c(i, j));
    }
  }
  return c;
}

/// Shifts and scales one slice to zero mean and unit sample standard
/// deviation (n - 1 denominator).
inline Eigen::MatrixXd standardize_slice(const Eigen::MatrixXd& slice) {
  const auto n = static_cast<double>(slice.size());
  if (slice.size() < 2) throw DataError("standardization needs at least two entries");
  const double mean = slice.mean();
  const double var = (slice.array() - mean).square().sum() / (n - 1.0);
  if (!(var > 0.0)) throw DataError("degenerate slice: zero variance");
  return (slice.array() - mean) / std::sqrt(var);
}

inline std::vector<Eigen::MatrixXd> standardize(const std::vector<Eigen::MatrixXd>& folded) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(folded.size());
  for (const auto& s : folded) out.push_back(standardize_slice(s));
  return out;
}

/// real_fold followed by per-slice standardization; fills tensor.folded.
inline void preprocess(ScmTensor& tensor) {
  std::vector<Eigen::MatrixXd> folded;
  folded.reserve(tensor.slices.size());
  for (const auto& c : tensor.slices) folded.push_back(real_fold(c));
  tensor.folded = standardize(folded);
}

}  // namespace uwauth
