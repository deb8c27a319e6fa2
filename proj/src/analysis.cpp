#include "mdm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "mdm/error.hpp"

namespace mdm::analysis {
namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

using Grid = std::map<std::pair<BlockIndex, StepIndex>, std::pair<double, std::size_t>>;

Grid pool(std::span<const ConfidenceRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyRecords, "no confidence records");
  Grid grid;
  for (const ConfidenceRecord& r : records) {
    auto& [sum, n] = grid[{r.block, r.step}];
    for (double v : r.values) sum += v;
    n += r.values.size();
  }
  return grid;
}

double cell_mean(const Grid& grid, BlockIndex b, StepIndex s) {
  auto it = grid.find({b, s});
  if (it == grid.end() || it->second.second == 0) {
    throw Error(ErrorCode::kEmptyRecords,
                "no confidences at block " + std::to_string(b) + " step " + std::to_string(s));
  }
  return it->second.first / static_cast<double>(it->second.second);
}

}  // namespace

TrajectoryVector stepblock_mean_vector(std::span<const ConfidenceRecord> records, std::string prompt_id) {
  const Grid grid = pool(records);
  std::map<BlockIndex, StepIndex> last_step;
  for (const auto& [key, cell] : grid) {
    last_step[key.first] = std::max(last_step[key.first], key.second);
  }
  const BlockIndex last_block = last_step.rbegin()->first;
  TrajectoryVector out{std::move(prompt_id), {}};
  for (BlockIndex b = 1; b <= last_block; ++b) {
    auto it = last_step.find(b);
    if (it == last_step.end()) throw Error(ErrorCode::kEmptyRecords, "no records for block " + std::to_string(b));
    for (StepIndex s = 0; s <= it->second; ++s) out.values.push_back(cell_mean(grid, b, s));
  }
  return out;
}

TrajectoryVector stepblock_mean_vector(std::span<const ConfidenceRecord> records, int num_blocks,
                                       int steps_per_block, std::string prompt_id) {
  const Grid grid = pool(records);
  TrajectoryVector out{std::move(prompt_id), {}};
  out.values.reserve(static_cast<std::size_t>(std::max(0, num_blocks * steps_per_block)));
  for (BlockIndex b = 1; b <= num_blocks; ++b) {
    for (StepIndex s = 0; s < steps_per_block; ++s) out.values.push_back(cell_mean(grid, b, s));
  }
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "vectors of length " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::kZeroVector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

SimilarityMatrix pairwise_similarity(std::span<const TrajectoryVector> vectors) {
  if (vectors.size() < 2) throw Error(ErrorCode::kLengthMismatch, "pairwise similarity needs at least 2 vectors");
  const std::size_t n = vectors.size();
  SimilarityMatrix m;
  m.values.assign(n, std::vector<double>(n, 1.0));
  for (const auto& v : vectors) m.prompt_ids.push_back(v.prompt_id);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      m.values[i][j] = m.values[j][i] = cosine_similarity(vectors[i].values, vectors[j].values);
    }
  }
  return m;
}

void check_complete(const DecodeTrace& trace, std::size_t gen_len) {
  std::size_t committed = 0;
  for (const TraceStep& st : trace.steps) committed += st.selection.positions.size();
  if (committed != gen_len || trace.generated_tokens != gen_len) {
    throw Error(ErrorCode::kIncompleteTrace,
                "trace committed " + std::to_string(committed) + " of " + std::to_string(gen_len) + " positions");
  }
  if (trace.predictor_calls != trace.steps.size()) {
    throw Error(ErrorCode::kIncompleteTrace, "predictor calls differ from recorded steps");
  }
}

RunMetrics run_metrics(const DecodeTrace& trace, std::size_t gen_len, bool correct) {
  return run_metrics(std::span<const DecodeTrace>(&trace, 1), std::vector<bool>{correct}, gen_len);
}

RunMetrics run_metrics(std::span<const DecodeTrace> traces, const std::vector<bool>& correct, std::size_t gen_len) {
  if (traces.size() != correct.size()) throw Error(ErrorCode::kArityMismatch, "one correctness flag per trace");
  if (traces.empty()) throw Error(ErrorCode::kIncompleteTrace, "no traces");
  RunMetrics m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    check_complete(traces[i], gen_len);
    m.predictor_calls += traces[i].predictor_calls;
    m.generated_tokens += traces[i].generated_tokens;
    m.wall_time_s += traces[i].wall_time_s;
    hits += correct[i] ? 1 : 0;
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(traces.size());
  const auto tokens = static_cast<double>(m.generated_tokens);
  m.tokens_per_second = m.wall_time_s > 0.0 ? tokens / m.wall_time_s : 0.0;
  m.tokens_per_call = tokens / static_cast<double>(m.predictor_calls);
  m.mean_tokens_per_step = m.tokens_per_call;
  return m;
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.accuracy >= b.accuracy && a.throughput >= b.throughput &&
         (a.accuracy > b.accuracy || a.throughput > b.throughput);
}

std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points) {
  std::vector<ParetoPoint> sorted(points.begin(), points.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    return a.throughput != b.throughput ? a.throughput > b.throughput : a.accuracy > b.accuracy;
  });
  // Sweep by descending throughput: a point survives iff its accuracy beats
  // every point with strictly higher-or-equal throughput seen so far.
  std::vector<ParetoPoint> frontier;
  for (const ParetoPoint& p : sorted) {
    if (frontier.empty()) {
      frontier.push_back(p);
      continue;
    }
    const ParetoPoint& last = frontier.back();
    if (p.accuracy == last.accuracy && p.throughput == last.throughput) continue;
    if (p.accuracy > last.accuracy) frontier.push_back(p);
  }
  return frontier;
}

void write_similarity_csv(std::ostream& os, const SimilarityMatrix& m) {
  os << "prompt";
  for (const auto& id : m.prompt_ids) os << ',' << csv_field(id);
  os << '\n';
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    os << csv_field(m.prompt_ids[i]);
    for (double v : m.values[i]) os << ',' << fmt(v);
    os << '\n';
  }
}

void write_trajectories_jsonl(std::ostream& os, std::span<const TrajectoryVector> vectors) {
  for (const auto& v : vectors) os << nlohmann::json{{"prompt", v.prompt_id}, {"values", v.values}}.dump() << '\n';
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << "label,accuracy,tokens_per_second,tokens_per_call,predictor_calls\n";
  for (const auto& r : rows) {
    os << csv_field(r.label) << ',' << fmt(r.metrics.accuracy) << ',' << fmt(r.metrics.tokens_per_second) << ','
       << fmt(r.metrics.tokens_per_call) << ',' << r.metrics.predictor_calls << '\n';
  }
}

}  // namespace mdm::analysis
