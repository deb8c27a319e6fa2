#include "mdm/strategies.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>

#include "mdm/error.hpp"

namespace mdm {

using nlohmann::json;

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFixedQuota: return "fixed";
    case Strategy::kStatic: return "static";
    case Strategy::kOsdt: return "osdt";
  }
  return "osdt";
}

std::string_view to_string(Mode m) { return m == Mode::kBlock ? "block" : "step-block"; }

std::string_view to_string(RecordScope s) {
  return s == RecordScope::kAcceptedTokens ? "accepted" : "all-masked";
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kStandalone: return "standalone";
    case Phase::kCalibration: return "calibration";
    case Phase::kDynamic: return "dynamic";
  }
  return "standalone";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  if (name == "fixed" || name == "fixed_quota") return Strategy::kFixedQuota;
  if (name == "static") return Strategy::kStatic;
  if (name == "osdt") return Strategy::kOsdt;
  return std::nullopt;
}

std::optional<Mode> parse_mode(std::string_view name) {
  if (name == "block") return Mode::kBlock;
  if (name == "step-block") return Mode::kStepBlock;
  return std::nullopt;
}

std::optional<RecordScope> parse_record_scope(std::string_view name) {
  if (name == "accepted") return RecordScope::kAcceptedTokens;
  if (name == "all-masked") return RecordScope::kAllMasked;
  return std::nullopt;
}

namespace {

std::optional<Phase> parse_phase(std::string_view name) {
  if (name == "standalone") return Phase::kStandalone;
  if (name == "calibration") return Phase::kCalibration;
  if (name == "dynamic") return Phase::kDynamic;
  return std::nullopt;
}

bool in_unit_interval(double x) { return x > 0.0 && x <= 1.0; }

std::string fmt_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

void DecodePolicy::validate() const {
  if (!in_unit_interval(cap)) throw Error(ErrorCode::kInvalidPolicy, "cap must be in (0,1]");
  if (!(slack >= 0.0 && slack < 1.0)) throw Error(ErrorCode::kInvalidPolicy, "slack must be in [0,1)");
  if (!in_unit_interval(tau_static)) throw Error(ErrorCode::kInvalidPolicy, "tau must be in (0,1]");
  if (!in_unit_interval(calibration_tau)) throw Error(ErrorCode::kInvalidPolicy, "calib-tau must be in (0,1]");
  if (quota < 1) throw Error(ErrorCode::kInvalidPolicy, "quota must be >= 1");
}

std::string DecodePolicy::label() const {
  switch (strategy) {
    case Strategy::kFixedQuota: return "fixed/k=" + std::to_string(quota);
    case Strategy::kStatic: return "static/tau=" + fmt_real(tau_static);
    case Strategy::kOsdt:
      return "osdt/" + std::string(to_string(mode)) + "/" + std::string(to_string(metric)) +
             "/cap=" + fmt_real(cap) + "/slack=" + fmt_real(slack);
  }
  return "?";
}

std::optional<DecodePolicy> osdt_preset(std::string_view task) {
  DecodePolicy p;
  p.strategy = Strategy::kOsdt;
  if (task == "gpqa") {
    p.mode = Mode::kStepBlock;
    p.metric = Metric::kQ2;
    p.cap = 0.75;
    p.slack = 0.20;
  } else if (task == "gsm8k") {
    p.mode = Mode::kBlock;
    p.metric = Metric::kQ1;
    p.cap = 0.75;
    p.slack = 0.20;
  } else if (task == "humaneval") {
    p.mode = Mode::kBlock;
    p.metric = Metric::kQ1;
    p.cap = 0.80;
    p.slack = 0.10;
  } else {
    return std::nullopt;
  }
  return p;
}

json policy_to_json(const DecodePolicy& p) {
  return json{{"strategy", to_string(p.strategy)},
              {"mode", to_string(p.mode)},
              {"metric", to_string(p.metric)},
              {"cap", p.cap},
              {"slack", p.slack},
              {"tau", p.tau_static},
              {"quota", p.quota},
              {"calib_tau", p.calibration_tau},
              {"record_scope", to_string(p.record_scope)}};
}

DecodePolicy policy_from_json(const json& j) {
  DecodePolicy p;
  try {
    if (j.contains("preset")) {
      const auto name = j.at("preset").get<std::string>();
      auto preset = osdt_preset(name);
      if (!preset) throw Error(ErrorCode::kInvalidPolicy, "unknown preset '" + name + "'");
      p = *preset;
    }
    if (j.contains("strategy")) {
      auto s = parse_strategy(j.at("strategy").get<std::string>());
      if (!s) throw Error(ErrorCode::kInvalidPolicy, "unknown strategy");
      p.strategy = *s;
    }
    if (j.contains("mode")) {
      auto m = parse_mode(j.at("mode").get<std::string>());
      if (!m) throw Error(ErrorCode::kInvalidPolicy, "unknown mode");
      p.mode = *m;
    }
    if (j.contains("metric")) {
      auto m = parse_metric(j.at("metric").get<std::string>());
      if (!m) throw Error(ErrorCode::kInvalidPolicy, "unknown metric");
      p.metric = *m;
    }
    if (j.contains("record_scope")) {
      auto s = parse_record_scope(j.at("record_scope").get<std::string>());
      if (!s) throw Error(ErrorCode::kInvalidPolicy, "unknown record scope");
      p.record_scope = *s;
    }
    p.cap = j.value("cap", p.cap);
    p.slack = j.value("slack", p.slack);
    p.tau_static = j.value("tau", p.tau_static);
    p.quota = j.value("quota", p.quota);
    p.calibration_tau = j.value("calib_tau", p.calibration_tau);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidPolicy, e.what());
  }
  p.validate();
  return p;
}

ThresholdProfile ThresholdProfile::block_profile(Metric metric, std::vector<double> per_block) {
  if (per_block.empty()) throw Error(ErrorCode::kInvalidProfile, "profile has no blocks");
  for (double t : per_block) {
    if (!in_unit_interval(t)) throw Error(ErrorCode::kInvalidProfile, "threshold outside (0,1]");
  }
  ThresholdProfile p;
  p.mode_ = Mode::kBlock;
  p.metric_ = metric;
  p.per_block_ = std::move(per_block);
  return p;
}

ThresholdProfile ThresholdProfile::step_block_profile(Metric metric, std::vector<std::vector<double>> per_step) {
  if (per_step.empty()) throw Error(ErrorCode::kInvalidProfile, "profile has no blocks");
  for (const auto& block : per_step) {
    if (block.empty()) throw Error(ErrorCode::kInvalidProfile, "block without calibrated steps");
    for (double t : block) {
      if (!in_unit_interval(t)) throw Error(ErrorCode::kInvalidProfile, "threshold outside (0,1]");
    }
  }
  ThresholdProfile p;
  p.mode_ = Mode::kStepBlock;
  p.metric_ = metric;
  p.per_step_ = std::move(per_step);
  return p;
}

int ThresholdProfile::num_blocks() const {
  return static_cast<int>(mode_ == Mode::kBlock ? per_block_.size() : per_step_.size());
}

json profile_to_json(const ThresholdProfile& profile) {
  json j{{"mode", to_string(profile.mode())}, {"metric", to_string(profile.metric())}};
  if (profile.mode() == Mode::kBlock) {
    j["thresholds"] = profile.per_block();
  } else {
    j["thresholds"] = profile.per_step();
  }
  return j;
}

ThresholdProfile profile_from_json(const json& j) {
  try {
    const auto mode = parse_mode(j.at("mode").get<std::string>());
    const auto metric = parse_metric(j.at("metric").get<std::string>());
    if (!mode || !metric) throw Error(ErrorCode::kInvalidProfile, "unknown mode or metric");
    if (*mode == Mode::kBlock) {
      return ThresholdProfile::block_profile(*metric, j.at("thresholds").get<std::vector<double>>());
    }
    return ThresholdProfile::step_block_profile(*metric,
                                                j.at("thresholds").get<std::vector<std::vector<double>>>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidProfile, e.what());
  }
}

std::vector<ConfidenceRecord> records_from_trace(const DecodeTrace& trace, RecordScope scope) {
  std::vector<ConfidenceRecord> out;
  out.reserve(trace.steps.size());
  for (const TraceStep& step : trace.steps) {
    out.push_back({step.selection.block, step.selection.step,
                   scope == RecordScope::kAcceptedTokens ? step.accepted_conf : step.frame_conf, scope});
  }
  return out;
}

json trace_to_json(const DecodeTrace& trace) {
  json steps = json::array();
  for (const TraceStep& st : trace.steps) {
    steps.push_back({{"block", st.selection.block},
                     {"step", st.selection.step},
                     {"tau_eff", st.tau_eff ? json(*st.tau_eff) : json(nullptr)},
                     {"positions", st.selection.positions},
                     {"tokens", st.selection.tokens},
                     {"fallback", st.selection.fallback_used},
                     {"frame_conf", st.frame_conf},
                     {"accepted_conf", st.accepted_conf}});
  }
  return json{{"prompt_id", trace.prompt_id},
              {"phase", to_string(trace.phase)},
              {"predictor_calls", trace.predictor_calls},
              {"generated_tokens", trace.generated_tokens},
              {"wall_time", trace.wall_time_s},
              {"steps", std::move(steps)}};
}

DecodeTrace trace_from_json(const json& j) {
  DecodeTrace trace;
  try {
    trace.prompt_id = j.at("prompt_id").get<std::string>();
    auto phase = parse_phase(j.at("phase").get<std::string>());
    if (!phase) throw Error(ErrorCode::kParseError, "unknown trace phase");
    trace.phase = *phase;
    trace.predictor_calls = j.at("predictor_calls").get<std::size_t>();
    trace.generated_tokens = j.at("generated_tokens").get<std::size_t>();
    trace.wall_time_s = j.value("wall_time", 0.0);
    for (const auto& s : j.at("steps")) {
      TraceStep st;
      st.selection.block = s.at("block").get<BlockIndex>();
      st.selection.step = s.at("step").get<StepIndex>();
      if (!s.at("tau_eff").is_null()) st.tau_eff = s.at("tau_eff").get<double>();
      st.selection.positions = s.at("positions").get<std::vector<std::size_t>>();
      st.selection.tokens = s.at("tokens").get<std::vector<TokenId>>();
      st.selection.fallback_used = s.at("fallback").get<bool>();
      st.frame_conf = s.at("frame_conf").get<std::vector<double>>();
      st.accepted_conf = s.at("accepted_conf").get<std::vector<double>>();
      trace.steps.push_back(std::move(st));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  return trace;
}

UnmaskSelection select_unmask_set(const PredictionFrame& frame, double tau_eff) {
  if (frame.entries.empty()) throw Error(ErrorCode::kEmptyBlock, "empty prediction frame");
  UnmaskSelection sel;
  sel.block = frame.block;
  sel.step = frame.step;
  const FrameEntry* best = &frame.entries.front();
  for (const FrameEntry& e : frame.entries) {
    if (e.conf > tau_eff) {
      sel.positions.push_back(e.pos);
      sel.tokens.push_back(e.token);
    }
    if (e.conf > best->conf || (e.conf == best->conf && e.pos < best->pos)) best = &e;
  }
  if (sel.positions.empty()) {
    sel.positions.push_back(best->pos);
    sel.tokens.push_back(best->token);
    sel.fallback_used = true;
  }
  return sel;
}

UnmaskSelection select_top_k(const PredictionFrame& frame, std::size_t k) {
  if (frame.entries.empty()) throw Error(ErrorCode::kEmptyBlock, "empty prediction frame");
  if (k == 0) throw Error(ErrorCode::kInvalidPolicy, "quota must be >= 1");
  std::vector<const FrameEntry*> order;
  order.reserve(frame.entries.size());
  for (const FrameEntry& e : frame.entries) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const FrameEntry* a, const FrameEntry* b) {
    return a->conf != b->conf ? a->conf > b->conf : a->pos < b->pos;
  });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end(), [](const FrameEntry* a, const FrameEntry* b) { return a->pos < b->pos; });

  UnmaskSelection sel;
  sel.block = frame.block;
  sel.step = frame.step;
  for (const FrameEntry* e : order) {
    sel.positions.push_back(e->pos);
    sel.tokens.push_back(e->token);
  }
  return sel;
}

namespace {

// Shared block/step loop. choose(frame) returns the selection and the
// threshold it used, if any.
template <typename Choose>
DecodeResult run_decode(std::span<const TokenId> prompt, Predictor& predictor, const GenShape& shape,
                        RecordScope scope, Choose&& choose) {
  DecodeResult result;
  result.state = init_sequence(prompt, shape.gen_len, shape.block_len, predictor.mask_id());
  SequenceState& state = result.state;
  DecodeTrace& trace = result.trace;

  const auto start = std::chrono::steady_clock::now();
  for (BlockIndex b = 1; b <= state.layout().num_blocks; ++b) {
    StepIndex step = 0;
    while (!state.masked_in_block(b).empty()) {
      PredictionFrame frame = predictor.predict(state, b, step);
      ++trace.predictor_calls;
      validate_frame(frame, state, b);
      frame.block = b;
      frame.step = step;

      auto [sel, tau] = choose(frame);
      state.commit(sel);

      TraceStep record;
      record.tau_eff = tau;
      record.frame_conf.reserve(frame.entries.size());
      for (const FrameEntry& e : frame.entries) record.frame_conf.push_back(e.conf);
      std::size_t k = 0;
      for (const FrameEntry& e : frame.entries) {
        if (k < sel.positions.size() && e.pos == sel.positions[k]) {
          record.accepted_conf.push_back(e.conf);
          ++k;
        }
      }
      trace.generated_tokens += sel.positions.size();
      record.selection = std::move(sel);
      trace.steps.push_back(std::move(record));
      ++step;
    }
  }
  trace.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.records = records_from_trace(trace, scope);
  return result;
}

}  // namespace

DecodeResult fixed_quota_generate(std::span<const TokenId> prompt, Predictor& predictor, std::size_t k,
                                  const GenShape& shape, RecordScope scope) {
  if (k == 0) throw Error(ErrorCode::kInvalidPolicy, "quota must be >= 1");
  return run_decode(prompt, predictor, shape, scope, [k](const PredictionFrame& frame) {
    return std::pair{select_top_k(frame, k), std::optional<double>{}};
  });
}

DecodeResult static_threshold_generate(std::span<const TokenId> prompt, Predictor& predictor, double tau,
                                       const GenShape& shape, RecordScope scope) {
  if (!in_unit_interval(tau)) throw Error(ErrorCode::kInvalidPolicy, "tau must be in (0,1]");
  return run_decode(prompt, predictor, shape, scope, [tau](const PredictionFrame& frame) {
    return std::pair{select_unmask_set(frame, tau), std::optional<double>{tau}};
  });
}

DecodeResult dynamic_generate(std::span<const TokenId> prompt, Predictor& predictor,
                              const ThresholdProfile& profile, double cap, double slack, const GenShape& shape,
                              RecordScope scope) {
  if (!in_unit_interval(cap)) throw Error(ErrorCode::kInvalidPolicy, "cap must be in (0,1]");
  if (!(slack >= 0.0 && slack < 1.0)) throw Error(ErrorCode::kInvalidPolicy, "slack must be in [0,1)");
  const auto layout = BlockLayout::make(prompt.size(), shape.gen_len, shape.block_len);
  if (profile.num_blocks() != layout.num_blocks) {
    throw Error(ErrorCode::kInvalidProfile, "profile has " + std::to_string(profile.num_blocks()) +
                                                " blocks, layout has " + std::to_string(layout.num_blocks));
  }
  DecodeResult result = run_decode(prompt, predictor, shape, scope, [&](const PredictionFrame& frame) {
    const double tau_eff = lookup_threshold(profile, frame.block, frame.step, cap, slack);
    return std::pair{select_unmask_set(frame, tau_eff), std::optional<double>{tau_eff}};
  });
  result.trace.phase = Phase::kDynamic;
  return result;
}

ThresholdProfile calibrate(std::span<const ConfidenceRecord> records, Mode mode, Metric metric, int num_blocks) {
  if (num_blocks < 1) throw Error(ErrorCode::kMissingBlock, "calibration needs at least one block");
  // block -> step -> pooled values
  std::vector<std::map<StepIndex, std::vector<double>>> pooled(static_cast<std::size_t>(num_blocks));
  for (const ConfidenceRecord& r : records) {
    if (r.block < 1 || r.block > num_blocks) {
      throw Error(ErrorCode::kBlockOutOfRange, "record for block " + std::to_string(r.block));
    }
    if (r.values.empty()) continue;
    auto& cell = pooled[static_cast<std::size_t>(r.block - 1)][r.step];
    cell.insert(cell.end(), r.values.begin(), r.values.end());
  }
  for (int b = 0; b < num_blocks; ++b) {
    if (pooled[static_cast<std::size_t>(b)].empty()) {
      throw Error(ErrorCode::kMissingBlock, "no calibration records for block " + std::to_string(b + 1));
    }
  }

  if (mode == Mode::kBlock) {
    std::vector<double> per_block;
    per_block.reserve(pooled.size());
    for (const auto& steps : pooled) {
      std::vector<double> all;
      for (const auto& [s, values] : steps) all.insert(all.end(), values.begin(), values.end());
      per_block.push_back(statistic(all, metric));
    }
    return ThresholdProfile::block_profile(metric, std::move(per_block));
  }

  std::vector<std::vector<double>> per_step;
  per_step.reserve(pooled.size());
  for (std::size_t b = 0; b < pooled.size(); ++b) {
    std::vector<double> taus;
    StepIndex expected = 0;
    for (const auto& [s, values] : pooled[b]) {
      if (s != expected) {
        throw Error(ErrorCode::kMissingStep, "block " + std::to_string(b + 1) + " has no record for step " +
                                                 std::to_string(expected));
      }
      taus.push_back(statistic(values, metric));
      ++expected;
    }
    per_step.push_back(std::move(taus));
  }
  return ThresholdProfile::step_block_profile(metric, std::move(per_step));
}

double lookup_threshold(const ThresholdProfile& profile, BlockIndex b, StepIndex s, double cap, double slack) {
  if (b < 1 || b > profile.num_blocks()) {
    throw Error(ErrorCode::kBlockOutOfRange, "block " + std::to_string(b) + " not in profile");
  }
  double tau;
  if (profile.mode() == Mode::kBlock) {
    tau = profile.per_block()[static_cast<std::size_t>(b - 1)];
  } else {
    const auto& steps = profile.per_step()[static_cast<std::size_t>(b - 1)];
    const auto idx = std::min(static_cast<std::size_t>(std::max(s, 0)), steps.size() - 1);
    tau = steps[idx];
  }
  tau = std::min(tau, cap);
  return tau * (1.0 - slack);
}

OsdtRun osdt_run(std::span<const std::vector<TokenId>> prompts, Predictor& predictor, const DecodePolicy& policy,
                 const GenShape& shape, std::span<const std::string> prompt_ids,
                 const ThresholdProfile* preset_profile) {
  policy.validate();
  if (policy.strategy != Strategy::kOsdt) throw Error(ErrorCode::kInvalidPolicy, "osdt_run needs strategy osdt");
  if (prompts.empty()) throw Error(ErrorCode::kInvalidPolicy, "osdt_run needs at least one prompt");
  if (!prompt_ids.empty() && prompt_ids.size() != prompts.size()) {
    throw Error(ErrorCode::kArityMismatch, "prompt ids and prompts differ in length");
  }

  OsdtRun run;
  std::size_t first_dynamic = 0;
  if (preset_profile) {
    run.profile = *preset_profile;
  } else {
    DecodeResult calib = static_threshold_generate(prompts[0], predictor, policy.calibration_tau, shape,
                                                   policy.record_scope);
    run.profile = calibrate(calib.records, policy.mode, policy.metric, calib.state.layout().num_blocks);
    calib.trace.phase = Phase::kCalibration;
    if (!prompt_ids.empty()) calib.trace.prompt_id = prompt_ids[0];
    run.answers.push_back(std::move(calib.state));
    run.traces.push_back(std::move(calib.trace));
    first_dynamic = 1;
  }
  if (run.profile.mode() != policy.mode) {
    throw Error(ErrorCode::kInvalidProfile, "profile mode differs from policy mode");
  }

  for (std::size_t i = first_dynamic; i < prompts.size(); ++i) {
    DecodeResult r = dynamic_generate(prompts[i], predictor, run.profile, policy.cap, policy.slack, shape,
                                      policy.record_scope);
    if (!prompt_ids.empty()) r.trace.prompt_id = prompt_ids[i];
    run.answers.push_back(std::move(r.state));
    run.traces.push_back(std::move(r.trace));
  }
  return run;
}

}  // namespace mdm
