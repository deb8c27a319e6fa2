// mdm_sched: decoding-policy runner for masked diffusion language models.
//
//   mdm_sched run --strategy osdt --dataset data/copy_task.jsonl --predictor noisy --out out/run
//   mdm_sched calibrate --dataset data/copy_task.jsonl --profile out/profile.json
//   mdm_sched sweep --dataset data/copy_task.jsonl --grid configs/grid_full.json --out out/sweep
//   mdm_sched analyze --traces out/run
//   mdm_sched compare --dataset data/copy_task.jsonl --policies configs/compare.json --out out/cmp

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdm/analysis.hpp"
#include "mdm/error.hpp"
#include "mdm/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string dataset;
  std::string predictor = "scripted";
  std::string extern_cmd;
  std::size_t gen_len = 256;
  std::size_t block_len = 32;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  double c_peak = 0.95;
  double c_edge = 0.80;
  double t_peak = 0.5;
  double jitter = 0.02;
  double alpha = 0.01;
};

struct PolicyOptions {
  std::string strategy = "osdt";
  std::size_t quota = 1;
  double tau = 0.9;
  std::string mode = "block";
  std::string metric = "q1";
  double cap = 0.8;
  double slack = 0.1;
  double calib_tau = 0.9;
  std::string preset;
  std::string scope = "accepted";
  std::string profile;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--dataset", o.dataset, "JSONL dataset {id,prompt,reference}")->required()->check(CLI::ExistingFile);
  app->add_option("--predictor", o.predictor, "scripted|noisy|bigram|extern")
      ->check(CLI::IsMember({"scripted", "noisy", "bigram", "extern"}));
  app->add_option("--extern-cmd", o.extern_cmd, "command for an external predictor (stdio protocol)");
  app->add_option("--gen-len", o.gen_len, "generated positions per prompt");
  app->add_option("--block-len", o.block_len, "positions per block");
  app->add_option("--seed", o.seed, "seed (falls back to $MDM_SCHED_SEED, then 0)");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--c-peak", o.c_peak, "scripted schedule: peak confidence");
  app->add_option("--c-edge", o.c_edge, "scripted schedule: edge confidence");
  app->add_option("--t-peak", o.t_peak, "scripted schedule: peak position in [0,1]");
  app->add_option("--jitter", o.jitter, "noisy predictor: jitter scale");
  app->add_option("--alpha", o.alpha, "bigram predictor: smoothing");
}

void add_policy(CLI::App* app, PolicyOptions& o, bool with_strategy) {
  if (with_strategy) {
    app->add_option("--strategy", o.strategy, "fixed|static|osdt")->check(CLI::IsMember({"fixed", "static", "osdt"}));
    app->add_option("--quota", o.quota, "fixed: positions per step")->check(CLI::PositiveNumber);
    app->add_option("--tau", o.tau, "static: global threshold");
    app->add_option("--cap", o.cap, "osdt: threshold cap");
    app->add_option("--slack", o.slack, "osdt: slack ratio");
    app->add_option("--preset", o.preset, "osdt: gpqa|gsm8k|humaneval")
        ->check(CLI::IsMember({"gpqa", "gsm8k", "humaneval"}));
  }
  app->add_option("--mode", o.mode, "block|step-block")->check(CLI::IsMember({"block", "step-block"}));
  app->add_option("--metric", o.metric, "mean|q1|q2|q3|min-whisker")
      ->check(CLI::IsMember({"mean", "q1", "q2", "q3", "min-whisker"}));
  app->add_option("--calib-tau", o.calib_tau, "threshold for the calibration decode");
  app->add_option("--record-scope", o.scope, "accepted|all-masked")->check(CLI::IsMember({"accepted", "all-masked"}));
  app->add_option("--profile", o.profile, "threshold profile JSON");
}

std::uint64_t resolve_seed(const CommonOptions& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("MDM_SCHED_SEED"); env && *env) return std::stoull(env);
  return 0;
}

mdm::PredictorSpec predictor_spec(const CommonOptions& o) {
  mdm::PredictorSpec spec;
  spec.kind = *mdm::parse_predictor_kind(o.predictor);
  spec.extern_cmd = o.extern_cmd;
  spec.seed = resolve_seed(o);
  spec.schedule.c_peak = o.c_peak;
  spec.schedule.c_edge = o.c_edge;
  spec.schedule.t_peak = o.t_peak;
  spec.noisy_jitter = o.jitter;
  spec.bigram_alpha = o.alpha;
  return spec;
}

mdm::DecodePolicy build_policy(const PolicyOptions& o, CLI::App* app) {
  mdm::DecodePolicy p;
  if (!o.preset.empty()) p = *mdm::osdt_preset(o.preset);
  p.strategy = *mdm::parse_strategy(o.strategy);
  // Explicit flags override a preset.
  if (o.preset.empty() || app->count("--mode")) p.mode = *mdm::parse_mode(o.mode);
  if (o.preset.empty() || app->count("--metric")) p.metric = *mdm::parse_metric(o.metric);
  if (o.preset.empty() || app->count("--cap")) p.cap = o.cap;
  if (o.preset.empty() || app->count("--slack")) p.slack = o.slack;
  p.quota = o.quota;
  p.tau_static = o.tau;
  p.calibration_tau = o.calib_tau;
  p.record_scope = *mdm::parse_record_scope(o.scope);
  p.validate();
  return p;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mdm::Error(mdm::ErrorCode::kIo, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw mdm::Error(mdm::ErrorCode::kParseError, path + ": " + e.what());
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw mdm::Error(mdm::ErrorCode::kIo, "cannot write " + path.string());
  return f;
}

std::vector<mdm::analysis::MetricsRow> rows_on_frontier(const std::vector<mdm::analysis::MetricsRow>& rows,
                                                        const std::vector<mdm::analysis::ParetoPoint>& frontier) {
  std::vector<mdm::analysis::MetricsRow> out;
  for (const auto& p : frontier) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.label == p.label; });
    if (it != rows.end()) out.push_back(*it);
  }
  return out;
}

int cmd_run(const CommonOptions& c, const PolicyOptions& po, CLI::App* app) {
  const auto items = mdm::load_dataset(c.dataset);
  const auto spec = predictor_spec(c);
  auto predictor = mdm::make_predictor(spec, items);
  mdm::DecodePolicy policy = build_policy(po, app);
  const mdm::GenShape shape{c.gen_len, c.block_len};

  // A saved profile fixes the threshold granularity and statistic.
  std::optional<mdm::ThresholdProfile> profile;
  if (!po.profile.empty()) {
    profile = mdm::profile_from_json(read_json(po.profile));
    policy.mode = profile->mode();
    policy.metric = profile->metric();
  }
  const auto report = mdm::run_policy(items, *predictor, policy, shape, spec.seed, profile ? &*profile : nullptr);
  mdm::write_run_outputs(c.out, report, items, shape, spec);

  const auto& m = report.metrics;
  std::cout << policy.label() << ": accuracy=" << m.accuracy << " tokens/call=" << m.tokens_per_call
            << " calls=" << m.predictor_calls << " tokens/s=" << m.tokens_per_second << "\n"
            << "wrote " << c.out << "\n";
  return 0;
}

int cmd_calibrate(const CommonOptions& c, const PolicyOptions& po) {
  const auto items = mdm::load_dataset(c.dataset);
  if (items.empty()) throw mdm::Error(mdm::ErrorCode::kEmptySample, "dataset is empty");
  const auto spec = predictor_spec(c);
  auto predictor = mdm::make_predictor(spec, items);
  const auto scope = *mdm::parse_record_scope(po.scope);
  const mdm::GenShape shape{c.gen_len, c.block_len};

  const auto result = mdm::static_threshold_generate(items.front().prompt, *predictor, po.calib_tau, shape, scope);
  const auto profile = mdm::calibrate(result.records, *mdm::parse_mode(po.mode), *mdm::parse_metric(po.metric),
                                      result.state.layout().num_blocks);
  const fs::path path = po.profile.empty() ? fs::path(c.out) / "profile.json" : fs::path(po.profile);
  auto f = open_out(path);
  f << mdm::profile_to_json(profile).dump(2) << '\n';
  std::cout << "calibrated on \"" << items.front().id << "\" (" << result.trace.predictor_calls
            << " calls), wrote " << path.string() << "\n";
  return 0;
}

int cmd_sweep(const CommonOptions& c, const PolicyOptions& po, const std::string& grid_path, unsigned workers) {
  const auto items = mdm::load_dataset(c.dataset);
  const auto spec = predictor_spec(c);
  auto predictor = mdm::make_predictor(spec, items);
  const mdm::SweepGrid grid = grid_path.empty() ? mdm::SweepGrid::full() : mdm::grid_from_json(read_json(grid_path));
  mdm::DecodePolicy base;
  base.calibration_tau = po.calib_tau;
  base.record_scope = *mdm::parse_record_scope(po.scope);
  base.validate();
  const mdm::GenShape shape{c.gen_len, c.block_len};

  const auto reports = mdm::sweep(items, *predictor, grid, base, shape, spec.seed, workers);

  std::vector<mdm::analysis::MetricsRow> rows;
  auto summaries = open_out(fs::path(c.out) / "reports.jsonl");
  auto errors = open_out(fs::path(c.out) / "sweep_errors.csv");
  errors << "label,error\n";
  std::size_t failed = 0;
  for (const auto& r : reports) {
    summaries << mdm::report_summary_json(r, shape, spec).dump() << '\n';
    if (r.ok()) {
      rows.push_back({r.policy.label(), r.metrics});
    } else {
      ++failed;
      std::string quoted;
      for (char ch : r.error) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      errors << r.policy.label() << ",\"" << quoted << "\"\n";
    }
  }
  {
    auto f = open_out(fs::path(c.out) / "sweep.csv");
    mdm::analysis::write_metrics_csv(f, rows);
  }
  const auto frontier = mdm::frontier_of(rows, mdm::FrontierAxis::kTokensPerCall);
  const auto frontier_rows = rows_on_frontier(rows, frontier);
  {
    auto f = open_out(fs::path(c.out) / "frontier.csv");
    mdm::analysis::write_metrics_csv(f, frontier_rows);
  }
  std::cout << reports.size() << " configurations (" << failed << " failed), " << frontier.size()
            << " on the frontier; wrote " << c.out << "\n";
  return failed == reports.size() ? 1 : 0;
}

int cmd_analyze(const std::string& traces_dir, std::string out, const std::string& scope_name) {
  const fs::path path = fs::is_directory(traces_dir) ? fs::path(traces_dir) / "traces.jsonl" : fs::path(traces_dir);
  std::ifstream in(path);
  if (!in) throw mdm::Error(mdm::ErrorCode::kIo, "cannot open " + path.string());
  const auto traces = mdm::read_traces_jsonl(in);
  const auto scope = *mdm::parse_record_scope(scope_name);
  if (out.empty()) out = path.parent_path().string();

  std::vector<mdm::analysis::TrajectoryVector> vectors;
  for (const auto& t : traces) {
    vectors.push_back(mdm::analysis::stepblock_mean_vector(mdm::records_from_trace(t, scope), t.prompt_id));
  }
  {
    auto f = open_out(fs::path(out) / "trajectories.jsonl");
    mdm::analysis::write_trajectories_jsonl(f, vectors);
  }
  const bool aligned = vectors.size() >= 2 && std::all_of(vectors.begin(), vectors.end(), [&](const auto& v) {
                         return v.values.size() == vectors.front().values.size();
                       });
  if (!aligned) {
    std::cout << vectors.size() << " trajectories written; lengths differ (threshold-driven decode?) "
              << "or fewer than two, so no similarity matrix. Use --strategy fixed for aligned grids.\n";
    return 0;
  }
  const auto m = mdm::analysis::pairwise_similarity(vectors);
  {
    auto f = open_out(fs::path(out) / "similarity.csv");
    mdm::analysis::write_similarity_csv(f, m);
  }
  double lo = 1.0;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    for (std::size_t j = 0; j < m.values.size(); ++j) {
      if (i != j) lo = std::min(lo, m.values[i][j]);
    }
  }
  std::cout << vectors.size() << " trajectories of length " << vectors.front().values.size()
            << ", min off-diagonal cosine " << lo << "; wrote " << out << "\n";
  return 0;
}

int cmd_compare(const CommonOptions& c, const std::string& policies_path, const std::string& axis_name) {
  const auto items = mdm::load_dataset(c.dataset);
  const auto spec = predictor_spec(c);
  auto predictor = mdm::make_predictor(spec, items);
  const json j = read_json(policies_path);
  const json& list = j.is_object() ? j.at("policies") : j;
  std::vector<mdm::DecodePolicy> policies;
  for (const auto& p : list) policies.push_back(mdm::policy_from_json(p));
  const auto axis =
      axis_name == "tokens_per_second" ? mdm::FrontierAxis::kTokensPerSecond : mdm::FrontierAxis::kTokensPerCall;
  const mdm::GenShape shape{c.gen_len, c.block_len};

  const auto result = mdm::compare(items, *predictor, policies, shape, resolve_seed(c), axis);
  {
    auto f = open_out(fs::path(c.out) / "metrics.csv");
    mdm::analysis::write_metrics_csv(f, result.rows);
  }
  const auto frontier_rows = rows_on_frontier(result.rows, result.frontier);
  {
    auto f = open_out(fs::path(c.out) / "frontier.csv");
    mdm::analysis::write_metrics_csv(f, frontier_rows);
  }
  for (const auto& r : result.rows) {
    std::cout << r.label << ": accuracy=" << r.metrics.accuracy << " tokens/call=" << r.metrics.tokens_per_call
              << " calls=" << r.metrics.predictor_calls << "\n";
  }
  std::cout << result.frontier.size() << " on the frontier; wrote " << c.out << "\n";
  return 0;
}

int cmd_make_dataset(std::size_t n, std::size_t prompt_len, std::size_t gen_len, std::uint64_t seed,
                     const std::string& out) {
  const auto items = mdm::make_copy_dataset(n, prompt_len, gen_len, seed);
  auto f = open_out(out);
  mdm::write_dataset(f, items);
  std::cout << "wrote " << items.size() << " items to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoding-policy engine for masked diffusion language models"};
  app.set_version_flag("--version", std::string(mdm::kToolVersion));
  app.require_subcommand(1);

  CommonOptions run_c, cal_c, sweep_c, cmp_c;
  PolicyOptions run_p, cal_p, sweep_p;

  auto* run = app.add_subcommand("run", "decode a dataset with one policy");
  add_common(run, run_c);
  add_policy(run, run_p, true);

  auto* cal = app.add_subcommand("calibrate", "decode the first prompt statically and write a threshold profile");
  add_common(cal, cal_c);
  add_policy(cal, cal_p, false);

  std::string grid_path;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  auto* sw = app.add_subcommand("sweep", "OSDT grid search over mode x metric x cap x slack");
  add_common(sw, sweep_c);
  add_policy(sw, sweep_p, false);
  sw->add_option("--grid", grid_path, "grid JSON {modes,metrics,caps,slacks}; default is the full grid");
  sw->add_option("--workers", workers, "parallel configurations");

  std::string traces_dir, analyze_out, analyze_scope = "accepted";
  auto* an = app.add_subcommand("analyze", "trajectories and pairwise cosine similarity from traces");
  an->add_option("--traces", traces_dir, "run directory or traces.jsonl")->required();
  an->add_option("--out", analyze_out, "output directory (default: next to the traces)");
  an->add_option("--record-scope", analyze_scope, "accepted|all-masked")
      ->check(CLI::IsMember({"accepted", "all-masked"}));

  std::string policies_path, axis = "tokens_per_call";
  auto* cmp = app.add_subcommand("compare", "run several policies and extract the Pareto frontier");
  add_common(cmp, cmp_c);
  cmp->add_option("--policies", policies_path, "JSON list of policies")->required()->check(CLI::ExistingFile);
  cmp->add_option("--frontier-axis", axis, "tokens_per_call|tokens_per_second")
      ->check(CLI::IsMember({"tokens_per_call", "tokens_per_second"}));

  std::size_t md_n = 50, md_prompt = 16, md_gen = 256;
  std::uint64_t md_seed = 0;
  std::string md_out = "data/copy_task.jsonl";
  auto* md = app.add_subcommand("make-dataset", "write a copy-task dataset for the scripted predictors");
  md->add_option("--n", md_n, "items");
  md->add_option("--prompt-len", md_prompt, "prompt length");
  md->add_option("--gen-len", md_gen, "reference length");
  md->add_option("--seed", md_seed, "seed");
  md->add_option("--out", md_out, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version report success; usage errors share the error status.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_c, run_p, run);
    if (*cal) return cmd_calibrate(cal_c, cal_p);
    if (*sw) return cmd_sweep(sweep_c, sweep_p, grid_path, workers);
    if (*an) return cmd_analyze(traces_dir, analyze_out, analyze_scope);
    if (*cmp) return cmd_compare(cmp_c, policies_path, axis);
    if (*md) return cmd_make_dataset(md_n, md_prompt, md_gen, md_seed, md_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
