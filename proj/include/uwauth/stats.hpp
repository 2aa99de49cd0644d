#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "uwauth/csv.hpp"
#include "uwauth/error.hpp"

namespace uwauth {

/// Box-plot statistics of a sample: quartiles by linear interpolation
/// between order statistics, whiskers at the most extreme data inside
/// [q1 - 1.5 IQR, q3 + 1.5 IQR].
struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
};

struct RunSummary {
  double rmse_x_m = 0.0;
  double rmse_y_m = 0.0;
  std::optional<double> mape_x_pct;
  std::optional<double> mape_y_pct;
  std::size_t n_excluded_mape = 0;
  BoxStats euclidean;
  std::size_t samples = 0;
  std::optional<double> p_fa;
  std::optional<double> p_md;
};

/// Quantile of sorted data, h = (n - 1) p, linear between neighbours.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, 0.5);
}

inline BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw DataError("box statistics of an empty sample");
  std::sort(values.begin(), values.end());
  BoxStats b;
  b.q1 = quantile_sorted(values, 0.25);
  b.median = quantile_sorted(values, 0.5);
  b.q3 = quantile_sorted(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = *std::lower_bound(values.begin(), values.end(), lo_fence);
  b.whisker_high = *(std::upper_bound(values.begin(), values.end(), hi_fence) - 1);
  return b;
}

/// RMSE and MAPE per coordinate plus Euclidean-error box statistics. MAPE
/// skips coordinates with |true value| < 1 m; the number skipped (x and y
/// together) is reported.
inline RunSummary summarize_errors(std::span<const ErrorSample> samples) {
  if (samples.empty()) throw DataError("no error samples to summarize");
  RunSummary s;
  s.samples = samples.size();
  double sx = 0.0, sy = 0.0, ax = 0.0, ay = 0.0;
  std::size_t nx = 0, ny = 0;
  std::vector<double> euclid;
  euclid.reserve(samples.size());
  for (const ErrorSample& e : samples) {
    const Vec2 d = e.estimate - e.truth;
    sx += d.x() * d.x();
    sy += d.y() * d.y();
    if (std::abs(e.truth.x()) >= 1.0) {
      ax += std::abs(d.x()) / std::abs(e.truth.x());
      ++nx;
    }
    if (std::abs(e.truth.y()) >= 1.0) {
      ay += std::abs(d.y()) / std::abs(e.truth.y());
      ++ny;
    }
    euclid.push_back(d.norm());
  }
  const auto n = static_cast<double>(samples.size());
  s.rmse_x_m = std::sqrt(sx / n);
  s.rmse_y_m = std::sqrt(sy / n);
  if (nx > 0) s.mape_x_pct = 100.0 * ax / static_cast<double>(nx);
  if (ny > 0) s.mape_y_pct = 100.0 * ay / static_cast<double>(ny);
  s.n_excluded_mape = 2 * samples.size() - nx - ny;
  s.euclidean = box_stats(std::move(euclid));
  return s;
}

}  // namespace uwauth
