#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdm/strategies.hpp"

namespace mdm::analysis {

// Mean confidence per (block, step) cell, ordered (1,0), (1,1), ..., (T, S-1).
struct TrajectoryVector {
  std::string prompt_id;
  std::vector<double> values;
};

struct SimilarityMatrix {
  std::vector<std::string> prompt_ids;
  std::vector<std::vector<double>> values;  // n x n
};

struct RunMetrics {
  double accuracy = 0.0;
  double tokens_per_second = 0.0;
  double tokens_per_call = 0.0;
  double mean_tokens_per_step = 0.0;
  std::size_t predictor_calls = 0;
  std::size_t generated_tokens = 0;
  double wall_time_s = 0.0;
};

struct ParetoPoint {
  std::string label;
  double accuracy = 0.0;
  double throughput = 0.0;
};

// Grid inferred from the records: blocks 1..max, steps 0..max per block.
// Throws kEmptyRecords for an empty input or any cell of the grid without values.
TrajectoryVector stepblock_mean_vector(std::span<const ConfidenceRecord> records, std::string prompt_id = {});

// Same, against an explicit num_blocks x steps_per_block grid.
TrajectoryVector stepblock_mean_vector(std::span<const ConfidenceRecord> records, int num_blocks,
                                       int steps_per_block, std::string prompt_id = {});

double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Throws kLengthMismatch when fewer than two vectors or lengths differ.
SimilarityMatrix pairwise_similarity(std::span<const TrajectoryVector> vectors);

// Throws kIncompleteTrace when the trace did not commit every generated
// position or when predictor_calls disagrees with the step count.
void check_complete(const DecodeTrace& trace, std::size_t gen_len);

RunMetrics run_metrics(const DecodeTrace& trace, std::size_t gen_len, bool correct);

// Aggregates over the traces of one run; correct[i] scores traces[i].
RunMetrics run_metrics(std::span<const DecodeTrace> traces, const std::vector<bool>& correct, std::size_t gen_len);

bool dominates(const ParetoPoint& a, const ParetoPoint& b);

// Non-dominated points, sorted by throughput descending (accuracy descending
// on ties); exact (accuracy, throughput) duplicates are kept once.
std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points);

// Report writers.
void write_similarity_csv(std::ostream& os, const SimilarityMatrix& m);
void write_trajectories_jsonl(std::ostream& os, std::span<const TrajectoryVector> vectors);
struct MetricsRow {
  std::string label;
  RunMetrics metrics;
};
void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows);

}  // namespace mdm::analysis
