#pragma once

#include <optional>
#include <span>
#include <string_view>

namespace mdm {

// Threshold statistic over calibration confidences.
enum class Metric { kMean, kQ1, kQ2, kQ3, kMinWhisker };

std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

// Quantile at p via linear interpolation between the order statistics
// around p*(n-1). Expects sorted input.
double sorted_quantile(std::span<const double> sorted, double p);

// mean / q1 / q2 / q3 / min-whisker, where min-whisker is the smallest
// sample at or above q1 - 1.5*(q3 - q1). Throws kEmptySample.
double statistic(std::span<const double> values, Metric metric);

}  // namespace mdm
