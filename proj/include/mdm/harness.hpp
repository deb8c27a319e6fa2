#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdm/analysis.hpp"
#include "mdm/predictor.hpp"
#include "mdm/strategies.hpp"

namespace mdm {

inline constexpr const char* kToolVersion = "0.3.0";

struct DatasetItem {
  std::string id;
  std::vector<TokenId> prompt;
  std::vector<TokenId> reference;
};

// Newline-delimited {"id":str,"prompt":str|[int],"reference":str|[int]}.
// Strings map to byte-level ids. Blank lines are skipped; errors carry the
// 1-based line number.
std::vector<DatasetItem> parse_dataset(std::istream& in);
std::vector<DatasetItem> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, std::span<const DatasetItem> items);

// Random lowercase prompts whose reference is the copy-task target.
std::vector<DatasetItem> make_copy_dataset(std::size_t n, std::size_t prompt_len, std::size_t gen_len,
                                           std::uint64_t seed);

// Generated tokens equal the reference position-wise up to its length.
bool exact_match(const SequenceState& answer, std::span<const TokenId> reference);
double evaluate_exact_match(std::span<const SequenceState> answers, std::span<const DatasetItem> items);

enum class PredictorKind { kScripted, kNoisy, kBigram, kExtern };
std::optional<PredictorKind> parse_predictor_kind(std::string_view name);

struct PredictorSpec {
  PredictorKind kind = PredictorKind::kScripted;
  std::string extern_cmd;
  std::uint64_t seed = 0;
  ScriptedSchedule schedule{};  // jitter_scale is forced to 0 for kScripted
  double noisy_jitter = 0.02;
  double bigram_alpha = 0.01;
};

// Scripted predictors get the dataset references registered; the bigram
// model is fitted on each item's prompt followed by its reference.
std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec, std::span<const DatasetItem> items);

struct RunReport {
  DecodePolicy policy;
  std::uint64_t seed = 0;
  std::vector<SequenceState> answers;
  std::vector<DecodeTrace> traces;
  std::vector<bool> correct;
  analysis::RunMetrics metrics;
  std::optional<ThresholdProfile> profile;
  std::string error;  // non-empty when the configuration failed

  bool ok() const { return error.empty(); }
};

RunReport run_policy(std::span<const DatasetItem> items, Predictor& predictor, const DecodePolicy& policy,
                     const GenShape& shape, std::uint64_t seed, const ThresholdProfile* preset_profile = nullptr);

struct SweepGrid {
  std::vector<Mode> modes;
  std::vector<Metric> metrics;
  std::vector<double> caps;
  std::vector<double> slacks;

  // Throws kInvalidGrid on an empty axis or an out-of-range value.
  void validate() const;
  std::size_t size() const { return modes.size() * metrics.size() * caps.size() * slacks.size(); }

  // Both modes, all five statistics, caps {0.75..0.95}, slacks {0.01..0.2}.
  static SweepGrid full();
};

SweepGrid grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const SweepGrid& g);

// One OSDT run per (mode, metric, cap, slack), in that nesting order. base
// supplies calibration_tau and record_scope. Failed configurations come back
// with error set. workers > 1 runs configurations in parallel when the
// predictor allows it.
std::vector<RunReport> sweep(std::span<const DatasetItem> items, Predictor& predictor, const SweepGrid& grid,
                             const DecodePolicy& base, const GenShape& shape, std::uint64_t seed,
                             unsigned workers = 1);

enum class FrontierAxis { kTokensPerCall, kTokensPerSecond };

struct CompareResult {
  std::vector<RunReport> reports;
  std::vector<analysis::MetricsRow> rows;
  std::vector<analysis::ParetoPoint> frontier;
};

CompareResult compare(std::span<const DatasetItem> items, Predictor& predictor, std::span<const DecodePolicy> policies,
                      const GenShape& shape, std::uint64_t seed, FrontierAxis axis = FrontierAxis::kTokensPerCall);

std::vector<analysis::ParetoPoint> frontier_of(std::span<const analysis::MetricsRow> rows, FrontierAxis axis);

// Report files. Only "wall_time" and "tokens_per_second" depend on timing.
void write_answers_jsonl(std::ostream& os, const RunReport& report, std::span<const DatasetItem> items);
void write_traces_jsonl(std::ostream& os, const RunReport& report);
nlohmann::json report_summary_json(const RunReport& report, const GenShape& shape, const PredictorSpec& spec);
void write_run_outputs(const std::filesystem::path& dir, const RunReport& report, std::span<const DatasetItem> items,
                       const GenShape& shape, const PredictorSpec& spec);

std::vector<DecodeTrace> read_traces_jsonl(std::istream& in);

}  // namespace mdm
