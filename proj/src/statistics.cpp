#include "mdm/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mdm/error.hpp"

namespace mdm {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kMean: return "mean";
    case Metric::kQ1: return "q1";
    case Metric::kQ2: return "q2";
    case Metric::kQ3: return "q3";
    case Metric::kMinWhisker: return "min-whisker";
  }
  return "mean";
}

std::optional<Metric> parse_metric(std::string_view name) {
  if (name == "mean") return Metric::kMean;
  if (name == "q1") return Metric::kQ1;
  if (name == "q2" || name == "median") return Metric::kQ2;
  if (name == "q3") return Metric::kQ3;
  if (name == "min-whisker") return Metric::kMinWhisker;
  return std::nullopt;
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptySample, "quantile of empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double statistic(std::span<const double> values, Metric metric) {
  if (values.empty()) throw Error(ErrorCode::kEmptySample, "statistic of empty sample");
  if (metric == Metric::kMean) {
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    // Summation rounding can push the mean a hair outside [min, max].
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return std::clamp(mean, *lo, *hi);
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  switch (metric) {
    case Metric::kQ1: return sorted_quantile(sorted, 0.25);
    case Metric::kQ2: return sorted_quantile(sorted, 0.5);
    case Metric::kQ3: return sorted_quantile(sorted, 0.75);
    case Metric::kMinWhisker: {
      const double q1 = sorted_quantile(sorted, 0.25);
      const double q3 = sorted_quantile(sorted, 0.75);
      const double fence = q1 - 1.5 * (q3 - q1);
      return *std::lower_bound(sorted.begin(), sorted.end(), fence);
    }
    case Metric::kMean: break;
  }
  return sorted.front();
}

}  // namespace mdm
