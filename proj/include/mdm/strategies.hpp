#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mdm/predictor.hpp"
#include "mdm/seqstate.hpp"
#include "mdm/statistics.hpp"

namespace mdm {

enum class Strategy { kFixedQuota, kStatic, kOsdt };
// Threshold granularity: one per block, or one per (block, step).
enum class Mode { kBlock, kStepBlock };
// Which confidences a decode records per (block, step).
enum class RecordScope { kAcceptedTokens, kAllMasked };
// Provenance of a trace inside an OSDT run.
enum class Phase { kStandalone, kCalibration, kDynamic };

std::string_view to_string(Strategy s);
std::string_view to_string(Mode m);
std::string_view to_string(RecordScope s);
std::string_view to_string(Phase p);
std::optional<Strategy> parse_strategy(std::string_view name);
std::optional<Mode> parse_mode(std::string_view name);
std::optional<RecordScope> parse_record_scope(std::string_view name);

struct GenShape {
  std::size_t gen_len = 256;
  std::size_t block_len = 32;
};

struct DecodePolicy {
  Strategy strategy = Strategy::kOsdt;
  Mode mode = Mode::kBlock;
  Metric metric = Metric::kQ1;
  double cap = 0.8;             // kappa, (0, 1]
  double slack = 0.1;           // epsilon, [0, 1)
  double tau_static = 0.9;      // (0, 1]
  std::size_t quota = 1;        // >= 1
  double calibration_tau = 0.9; // (0, 1]
  RecordScope record_scope = RecordScope::kAcceptedTokens;

  // Throws kInvalidPolicy when a field is outside its range.
  void validate() const;
  // Short human-readable tag, e.g. "osdt/block/q1/cap=0.8/slack=0.1".
  std::string label() const;

  bool operator==(const DecodePolicy&) const = default;
};

// Per-task OSDT settings selected by grid search: "gpqa", "gsm8k", "humaneval".
std::optional<DecodePolicy> osdt_preset(std::string_view task);

nlohmann::json policy_to_json(const DecodePolicy& p);
// Missing keys keep their defaults; "preset" seeds the fields first.
DecodePolicy policy_from_json(const nlohmann::json& j);

struct ConfidenceRecord {
  BlockIndex block = 1;
  StepIndex step = 0;
  std::vector<double> values;
  RecordScope scope = RecordScope::kAcceptedTokens;

  bool operator==(const ConfidenceRecord&) const = default;
};

class ThresholdProfile {
 public:
  ThresholdProfile() = default;
  static ThresholdProfile block_profile(Metric metric, std::vector<double> per_block);
  static ThresholdProfile step_block_profile(Metric metric, std::vector<std::vector<double>> per_step);

  Mode mode() const { return mode_; }
  Metric metric() const { return metric_; }
  int num_blocks() const;
  // Block mode only.
  const std::vector<double>& per_block() const { return per_block_; }
  // Step-block mode only.
  const std::vector<std::vector<double>>& per_step() const { return per_step_; }

  bool operator==(const ThresholdProfile&) const = default;

 private:
  Mode mode_ = Mode::kBlock;
  Metric metric_ = Metric::kMean;
  std::vector<double> per_block_;
  std::vector<std::vector<double>> per_step_;
};

// {"mode":"block"|"step-block","metric":str,"thresholds":[...]}; step-block
// thresholds are nested one array per block.
nlohmann::json profile_to_json(const ThresholdProfile& profile);
ThresholdProfile profile_from_json(const nlohmann::json& j);

struct TraceStep {
  UnmaskSelection selection;
  std::optional<double> tau_eff;  // absent for fixed-quota steps
  std::vector<double> frame_conf;     // every masked position, by position
  std::vector<double> accepted_conf;  // parallel to selection.positions

  bool operator==(const TraceStep&) const = default;
};

struct DecodeTrace {
  std::string prompt_id;
  Phase phase = Phase::kStandalone;
  std::vector<TraceStep> steps;
  std::size_t predictor_calls = 0;
  std::size_t generated_tokens = 0;
  double wall_time_s = 0.0;

  // Step-for-step equality ignoring timing and provenance.
  bool same_schedule(const DecodeTrace& other) const { return steps == other.steps; }
};

std::vector<ConfidenceRecord> records_from_trace(const DecodeTrace& trace, RecordScope scope);

nlohmann::json trace_to_json(const DecodeTrace& trace);
DecodeTrace trace_from_json(const nlohmann::json& j);

struct DecodeResult {
  SequenceState state;
  DecodeTrace trace;
  std::vector<ConfidenceRecord> records;
};

// conf > tau_eff, or the single most confident position when nothing clears
// it (ties to the lowest position).
UnmaskSelection select_unmask_set(const PredictionFrame& frame, double tau_eff);

// min(k, |frame|) most confident positions, ties to the lowest position.
UnmaskSelection select_top_k(const PredictionFrame& frame, std::size_t k);

DecodeResult fixed_quota_generate(std::span<const TokenId> prompt, Predictor& predictor, std::size_t k,
                                  const GenShape& shape,
                                  RecordScope scope = RecordScope::kAcceptedTokens);

DecodeResult static_threshold_generate(std::span<const TokenId> prompt, Predictor& predictor, double tau,
                                       const GenShape& shape,
                                       RecordScope scope = RecordScope::kAcceptedTokens);

// Phase-2 decode: tau_eff = lookup_threshold(profile, b, step, cap, slack).
DecodeResult dynamic_generate(std::span<const TokenId> prompt, Predictor& predictor,
                              const ThresholdProfile& profile, double cap, double slack, const GenShape& shape,
                              RecordScope scope = RecordScope::kAcceptedTokens);

// Throws kMissingBlock if any of blocks 1..num_blocks has no record, and
// kMissingStep if a block's steps are not contiguous from 0 in step-block mode.
ThresholdProfile calibrate(std::span<const ConfidenceRecord> records, Mode mode, Metric metric, int num_blocks);

// min(tau, cap) * (1 - slack); step-block lookups past the last calibrated
// step of a block use that last step.
double lookup_threshold(const ThresholdProfile& profile, BlockIndex b, StepIndex s, double cap, double slack);

struct OsdtRun {
  std::vector<SequenceState> answers;
  std::vector<DecodeTrace> traces;
  ThresholdProfile profile;
};

// Calibrates on prompts[0] with static thresholding at calibration_tau, then
// decodes prompts[1..] dynamically. With a preset profile every prompt is
// decoded dynamically and no calibration happens.
OsdtRun osdt_run(std::span<const std::vector<TokenId>> prompts, Predictor& predictor, const DecodePolicy& policy,
                 const GenShape& shape, std::span<const std::string> prompt_ids = {},
                 const ThresholdProfile* preset_profile = nullptr);

}  // namespace mdm
