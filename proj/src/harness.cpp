#include "mdm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "mdm/error.hpp"
#include "mdm/wire.hpp"

namespace mdm {

using nlohmann::json;

namespace {

std::vector<TokenId> tokens_from_json(const json& j, const std::string& where) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    std::vector<TokenId> out;
    out.reserve(s.size());
    for (unsigned char c : s) out.push_back(static_cast<TokenId>(c));
    return out;
  }
  if (j.is_array()) {
    auto out = j.get<std::vector<TokenId>>();
    if (std::any_of(out.begin(), out.end(), [](TokenId t) { return t < 0; })) {
      throw Error(ErrorCode::kParseError, where + "negative token id");
    }
    return out;
  }
  throw Error(ErrorCode::kParseError, where + "expected a string or an array of token ids");
}

// Byte-range tokens round-trip as text; anything else stays an id array.
json tokens_to_json(std::span<const TokenId> tokens) {
  const bool printable = std::all_of(tokens.begin(), tokens.end(), [](TokenId t) { return t >= 0x20 && t < 0x7f; });
  if (!printable) return std::vector<TokenId>(tokens.begin(), tokens.end());
  std::string s;
  for (TokenId t : tokens) s.push_back(static_cast<char>(t));
  return s;
}

}  // namespace

std::vector<DatasetItem> parse_dataset(std::istream& in) {
  std::vector<DatasetItem> items;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    DatasetItem item;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw Error(ErrorCode::kParseError, where + "expected an object");
      for (const char* key : {"id", "prompt", "reference"}) {
        if (!j.contains(key)) throw Error(ErrorCode::kParseError, where + "missing \"" + key + "\"");
      }
      item.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      item.prompt = tokens_from_json(j.at("prompt"), where);
      item.reference = tokens_from_json(j.at("reference"), where);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, where + e.what());
    }
    if (!seen.insert(item.id).second) throw Error(ErrorCode::kDuplicateId, where + "duplicate id \"" + item.id + "\"");
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<DatasetItem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open dataset " + path.string());
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const DatasetItem> items) {
  for (const auto& item : items) {
    out << json{{"id", item.id}, {"prompt", tokens_to_json(item.prompt)}, {"reference", tokens_to_json(item.reference)}}
               .dump()
        << '\n';
  }
}

std::vector<DatasetItem> make_copy_dataset(std::size_t n, std::size_t prompt_len, std::size_t gen_len,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DatasetItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DatasetItem item;
    item.id = "copy-" + std::to_string(i);
    for (std::size_t k = 0; k < prompt_len; ++k) item.prompt.push_back(static_cast<TokenId>('a' + rng() % 26));
    item.reference = copy_task_reference(item.prompt, gen_len);
    items.push_back(std::move(item));
  }
  return items;
}

bool exact_match(const SequenceState& answer, std::span<const TokenId> reference) {
  const auto generated = answer.generated();
  if (reference.size() > generated.size()) return false;
  return std::equal(reference.begin(), reference.end(), generated.begin());
}

double evaluate_exact_match(std::span<const SequenceState> answers, std::span<const DatasetItem> items) {
  if (answers.size() != items.size()) {
    throw Error(ErrorCode::kArityMismatch, std::to_string(answers.size()) + " answers for " +
                                               std::to_string(items.size()) + " items");
  }
  if (items.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < items.size(); ++i) hits += exact_match(answers[i], items[i].reference) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(items.size());
}

std::optional<PredictorKind> parse_predictor_kind(std::string_view name) {
  if (name == "scripted") return PredictorKind::kScripted;
  if (name == "noisy") return PredictorKind::kNoisy;
  if (name == "bigram") return PredictorKind::kBigram;
  if (name == "extern") return PredictorKind::kExtern;
  return std::nullopt;
}

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec, std::span<const DatasetItem> items) {
  switch (spec.kind) {
    case PredictorKind::kScripted:
    case PredictorKind::kNoisy: {
      ScriptedSchedule schedule = spec.schedule;
      schedule.seed = spec.seed;
      schedule.jitter_scale = spec.kind == PredictorKind::kNoisy ? spec.noisy_jitter : 0.0;
      auto p = std::make_unique<ScriptedPredictor>(schedule);
      for (const auto& item : items) p->add_reference(item.prompt, item.reference);
      return p;
    }
    case PredictorKind::kBigram: {
      std::vector<std::vector<TokenId>> corpus;
      corpus.reserve(items.size());
      for (const auto& item : items) {
        auto seq = item.prompt;
        seq.insert(seq.end(), item.reference.begin(), item.reference.end());
        corpus.push_back(std::move(seq));
      }
      return std::make_unique<BigramPredictor>(bigram_fit(corpus, kByteVocab, spec.bigram_alpha), kByteMaskId);
    }
    case PredictorKind::kExtern:
      if (spec.extern_cmd.empty()) throw Error(ErrorCode::kPredictorUnavailable, "--extern-cmd is required");
      return std::make_unique<wire::ExternPredictor>(spec.extern_cmd);
  }
  throw Error(ErrorCode::kPredictorUnavailable, "unknown predictor kind");
}

RunReport run_policy(std::span<const DatasetItem> items, Predictor& predictor, const DecodePolicy& policy,
                     const GenShape& shape, std::uint64_t seed, const ThresholdProfile* preset_profile) {
  policy.validate();
  if (items.empty()) throw Error(ErrorCode::kEmptySample, "dataset is empty");
  for (const auto& item : items) {
    if (item.reference.size() > shape.gen_len) {
      throw Error(ErrorCode::kLengthMismatch, "reference of \"" + item.id + "\" is longer than gen_len");
    }
    for (TokenId t : item.prompt) {
      if (t >= predictor.vocab_size() || t == predictor.mask_id()) {
        throw Error(ErrorCode::kInvalidToken,
                    "prompt of \"" + item.id + "\" has token " + std::to_string(t) + " outside the vocabulary");
      }
    }
  }

  RunReport report;
  report.policy = policy;
  report.seed = seed;
  if (policy.strategy == Strategy::kOsdt) {
    std::vector<std::vector<TokenId>> prompts;
    std::vector<std::string> ids;
    for (const auto& item : items) {
      prompts.push_back(item.prompt);
      ids.push_back(item.id);
    }
    OsdtRun run = osdt_run(prompts, predictor, policy, shape, ids, preset_profile);
    report.answers = std::move(run.answers);
    report.traces = std::move(run.traces);
    report.profile = std::move(run.profile);
  } else {
    for (const auto& item : items) {
      DecodeResult r = policy.strategy == Strategy::kFixedQuota
                           ? fixed_quota_generate(item.prompt, predictor, policy.quota, shape, policy.record_scope)
                           : static_threshold_generate(item.prompt, predictor, policy.tau_static, shape,
                                                       policy.record_scope);
      r.trace.prompt_id = item.id;
      report.answers.push_back(std::move(r.state));
      report.traces.push_back(std::move(r.trace));
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) report.correct.push_back(exact_match(report.answers[i], items[i].reference));
  report.metrics = analysis::run_metrics(report.traces, report.correct, shape.gen_len);
  return report;
}

void SweepGrid::validate() const {
  if (modes.empty() || metrics.empty() || caps.empty() || slacks.empty()) {
    throw Error(ErrorCode::kInvalidGrid, "every sweep axis needs at least one value");
  }
  for (double k : caps) {
    if (!(k > 0.0 && k <= 1.0)) throw Error(ErrorCode::kInvalidGrid, "cap outside (0,1]");
  }
  for (double e : slacks) {
    if (!(e >= 0.0 && e < 1.0)) throw Error(ErrorCode::kInvalidGrid, "slack outside [0,1)");
  }
}

SweepGrid SweepGrid::full() {
  return SweepGrid{{Mode::kBlock, Mode::kStepBlock},
                   {Metric::kMean, Metric::kQ1, Metric::kQ2, Metric::kQ3, Metric::kMinWhisker},
                   {0.75, 0.8, 0.85, 0.9, 0.95},
                   {0.01, 0.05, 0.1, 0.15, 0.2}};
}

SweepGrid grid_from_json(const json& j) {
  SweepGrid g;
  try {
    for (const auto& m : j.at("modes")) {
      auto mode = parse_mode(m.get<std::string>());
      if (!mode) throw Error(ErrorCode::kInvalidGrid, "unknown mode " + m.dump());
      g.modes.push_back(*mode);
    }
    for (const auto& m : j.at("metrics")) {
      auto metric = parse_metric(m.get<std::string>());
      if (!metric) throw Error(ErrorCode::kInvalidGrid, "unknown metric " + m.dump());
      g.metrics.push_back(*metric);
    }
    g.caps = j.at("caps").get<std::vector<double>>();
    g.slacks = j.at("slacks").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidGrid, e.what());
  }
  g.validate();
  return g;
}

json grid_to_json(const SweepGrid& g) {
  json modes = json::array(), metrics = json::array();
  for (Mode m : g.modes) modes.push_back(to_string(m));
  for (Metric m : g.metrics) metrics.push_back(to_string(m));
  return json{{"modes", modes}, {"metrics", metrics}, {"caps", g.caps}, {"slacks", g.slacks}};
}

std::vector<RunReport> sweep(std::span<const DatasetItem> items, Predictor& predictor, const SweepGrid& grid,
                             const DecodePolicy& base, const GenShape& shape, std::uint64_t seed, unsigned workers) {
  grid.validate();
  std::vector<DecodePolicy> configs;
  configs.reserve(grid.size());
  for (Mode mode : grid.modes) {
    for (Metric metric : grid.metrics) {
      for (double cap : grid.caps) {
        for (double slack : grid.slacks) {
          DecodePolicy p = base;
          p.strategy = Strategy::kOsdt;
          p.mode = mode;
          p.metric = metric;
          p.cap = cap;
          p.slack = slack;
          configs.push_back(p);
        }
      }
    }
  }

  std::vector<RunReport> reports(configs.size());
  auto run_one = [&](std::size_t i) {
    try {
      reports[i] = run_policy(items, predictor, configs[i], shape, seed);
    } catch (const std::exception& e) {
      reports[i] = RunReport{};
      reports[i].policy = configs[i];
      reports[i].seed = seed;
      reports[i].error = e.what();
    }
  };

  if (!predictor.thread_safe()) workers = 1;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(configs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
    return reports;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < configs.size(); i = next++) run_one(i);
    });
  }
  pool.clear();
  return reports;
}

std::vector<analysis::ParetoPoint> frontier_of(std::span<const analysis::MetricsRow> rows, FrontierAxis axis) {
  std::vector<analysis::ParetoPoint> points;
  for (const auto& r : rows) {
    points.push_back({r.label, r.metrics.accuracy,
                      axis == FrontierAxis::kTokensPerCall ? r.metrics.tokens_per_call : r.metrics.tokens_per_second});
  }
  return analysis::pareto_frontier(points);
}

CompareResult compare(std::span<const DatasetItem> items, Predictor& predictor, std::span<const DecodePolicy> policies,
                      const GenShape& shape, std::uint64_t seed, FrontierAxis axis) {
  if (policies.empty()) throw Error(ErrorCode::kInvalidPolicy, "compare needs at least one policy");
  CompareResult out;
  for (const DecodePolicy& p : policies) {
    out.reports.push_back(run_policy(items, predictor, p, shape, seed));
    out.rows.push_back({p.label(), out.reports.back().metrics});
  }
  out.frontier = frontier_of(out.rows, axis);
  return out;
}

void write_answers_jsonl(std::ostream& os, const RunReport& report, std::span<const DatasetItem> items) {
  for (std::size_t i = 0; i < report.answers.size(); ++i) {
    const auto gen = report.answers[i].generated();
    os << json{{"id", i < items.size() ? items[i].id : report.traces[i].prompt_id},
               {"tokens", std::vector<TokenId>(gen.begin(), gen.end())},
               {"text", tokens_to_json(gen)},
               {"correct", bool(report.correct[i])}}
              .dump()
       << '\n';
  }
}

void write_traces_jsonl(std::ostream& os, const RunReport& report) {
  for (const auto& t : report.traces) os << trace_to_json(t).dump() << '\n';
}

json report_summary_json(const RunReport& report, const GenShape& shape, const PredictorSpec& spec) {
  static constexpr const char* kKinds[] = {"scripted", "noisy", "bigram", "extern"};
  const auto& m = report.metrics;
  json j{{"tool_version", kToolVersion},
         {"seed", report.seed},
         {"policy", policy_to_json(report.policy)},
         {"label", report.policy.label()},
         {"predictor", kKinds[static_cast<int>(spec.kind)]},
         {"gen_len", shape.gen_len},
         {"block_len", shape.block_len},
         {"metrics",
          {{"accuracy", m.accuracy},
           {"tokens_per_second", m.tokens_per_second},
           {"tokens_per_call", m.tokens_per_call},
           {"mean_tokens_per_step", m.mean_tokens_per_step},
           {"predictor_calls", m.predictor_calls},
           {"generated_tokens", m.generated_tokens},
           {"wall_time", m.wall_time_s}}}};
  if (report.profile) j["profile"] = profile_to_json(*report.profile);
  if (!report.ok()) j["error"] = report.error;
  return j;
}

void write_run_outputs(const std::filesystem::path& dir, const RunReport& report, std::span<const DatasetItem> items,
                       const GenShape& shape, const PredictorSpec& spec) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error(ErrorCode::kIo, "cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("answers.jsonl");
    write_answers_jsonl(f, report, items);
  }
  {
    auto f = open("traces.jsonl");
    write_traces_jsonl(f, report);
  }
  {
    auto f = open("metrics.csv");
    const analysis::MetricsRow row{report.policy.label(), report.metrics};
    analysis::write_metrics_csv(f, std::span(&row, 1));
  }
  {
    auto f = open("report.json");
    f << report_summary_json(report, shape, spec).dump(2) << '\n';
  }
  if (report.profile) {
    auto f = open("profile.json");
    f << profile_to_json(*report.profile).dump(2) << '\n';
  }
}

std::vector<DecodeTrace> read_traces_jsonl(std::istream& in) {
  std::vector<DecodeTrace> traces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      traces.push_back(trace_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return traces;
}

}  // namespace mdm
