#include "mdm/analysis.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace mdm;
using namespace mdm::analysis;

namespace {

// Trace with `calls` steps that together commit `tokens` positions.
DecodeTrace synthetic_trace(std::size_t tokens, std::size_t calls, double wall) {
  DecodeTrace t;
  for (std::size_t i = 0; i < calls; ++i) {
    TraceStep st;
    const std::size_t n = tokens / calls + (i < tokens % calls ? 1 : 0);
    for (std::size_t k = 0; k < n; ++k) st.selection.positions.push_back(t.generated_tokens + k);
    t.generated_tokens += n;
    t.steps.push_back(st);
  }
  t.predictor_calls = calls;
  t.wall_time_s = wall;
  return t;
}

}  // namespace

TEST_CASE("step-block mean vector") {
  const std::vector<ConfidenceRecord> one{{1, 0, {0.8, 0.9}}};
  const auto v = stepblock_mean_vector(one);
  REQUIRE(v.values.size() == 1);
  CHECK(v.values[0] == doctest::Approx(0.85).epsilon(1e-15));

  const std::vector<ConfidenceRecord> grid{{1, 0, {0.1}}, {1, 1, {0.2}}, {2, 0, {0.3}}, {2, 1, {0.4, 0.6}}};
  const auto g = stepblock_mean_vector(grid, 2, 2);
  CHECK(g.values.size() == 4);
  CHECK(g.values[3] == doctest::Approx(0.5));
  CHECK(stepblock_mean_vector(grid).values == g.values);

  const std::vector<ConfidenceRecord> gap{{1, 0, {0.1}}, {2, 0, {0.3}}, {2, 1, {0.4}}};
  CHECK(code_of([&] { stepblock_mean_vector(gap, 2, 2); }) == ErrorCode::kEmptyRecords);
  CHECK(code_of([] { stepblock_mean_vector({}); }) == ErrorCode::kEmptyRecords);
}

TEST_CASE("cosine similarity closed forms") {
  const std::vector<double> u{0.8, 0.9, 0.7};
  CHECK(cosine_similarity(u, u) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> e1{1, 0}, e2{0, 1}, d{1, 1};
  CHECK(cosine_similarity(e1, e2) == 0.0);
  CHECK(cosine_similarity(e1, d) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  const std::vector<double> zero{0, 0};
  CHECK(code_of([&] { cosine_similarity(e1, zero); }) == ErrorCode::kZeroVector);
  CHECK(code_of([&] { cosine_similarity(e1, u); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("pairwise similarity matrix") {
  const std::vector<TrajectoryVector> same{{"a", {0.8, 0.9}}, {"b", {0.8, 0.9}}, {"c", {0.8, 0.9}}};
  const auto m = pairwise_similarity(same);
  CHECK(m.prompt_ids == std::vector<std::string>{"a", "b", "c"});
  for (const auto& row : m.values) {
    for (double x : row) CHECK(x == doctest::Approx(1.0).epsilon(1e-15));
  }
  const std::vector<TrajectoryVector> single{{"a", {1.0}}};
  CHECK(code_of([&] { pairwise_similarity(single); }) == ErrorCode::kLengthMismatch);

  std::ostringstream os;
  write_similarity_csv(os, m);
  CHECK(os.str().rfind("prompt,a,b,c\na,1,1,1\n", 0) == 0);
}

TEST_CASE("noisy scripted trajectories are nearly parallel") {
  ScriptedSchedule sched;
  sched.jitter_scale = 0.02;
  sched.seed = 12;
  ScriptedPredictor pred(sched);
  std::vector<TrajectoryVector> vecs;
  for (int i = 0; i < 10; ++i) {
    const std::vector<TokenId> prompt{static_cast<TokenId>('a' + i), 'z'};
    // Quota one gives every prompt the same step grid.
    const auto r = fixed_quota_generate(prompt, pred, 1, GenShape{64, 16}, RecordScope::kAllMasked);
    vecs.push_back(stepblock_mean_vector(r.records, std::to_string(i)));
  }
  const auto m = pairwise_similarity(vecs);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    CHECK(m.values[i][i] == 1.0);
    for (std::size_t j = 0; j < m.values.size(); ++j) CHECK(m.values[i][j] >= 0.99);
  }
}

TEST_CASE("run metrics arithmetic") {
  const auto t = synthetic_trace(256, 32, 2.0);
  const auto m = run_metrics(t, 256, true);
  CHECK(m.tokens_per_second == 128.0);
  CHECK(m.tokens_per_call == 8.0);
  CHECK(m.accuracy == 1.0);
  CHECK(run_metrics(synthetic_trace(256, 32, 0.0), 256, false).tokens_per_second == 0.0);

  CHECK(code_of([] { run_metrics(synthetic_trace(200, 20, 1.0), 256, true); }) == ErrorCode::kIncompleteTrace);
  auto bad_calls = synthetic_trace(256, 32, 1.0);
  bad_calls.predictor_calls = 31;
  CHECK(code_of([&] { check_complete(bad_calls, 256); }) == ErrorCode::kIncompleteTrace);

  const std::vector<DecodeTrace> pair{synthetic_trace(16, 4, 1.0), synthetic_trace(16, 2, 1.0)};
  const auto agg = run_metrics(pair, std::vector<bool>{true, false}, 16);
  CHECK(agg.accuracy == 0.5);
  CHECK(agg.predictor_calls == 6);
  CHECK(agg.tokens_per_call == doctest::Approx(32.0 / 6.0).epsilon(1e-15));
  CHECK(agg.tokens_per_second == 16.0);
}

TEST_CASE("pareto frontier examples") {
  const std::vector<ParetoPoint> gpqa{{"a", 29.24, 63.27}, {"b", 28.12, 42.69}, {"c", 29.91, 43.58}};
  const auto f = pareto_frontier(gpqa);
  REQUIRE(f.size() == 2);
  CHECK(f[0].label == "a");
  CHECK(f[1].label == "c");

  const std::vector<ParetoPoint> one{{"x", 1, 2}};
  CHECK(pareto_frontier(one).size() == 1);
  const std::vector<ParetoPoint> dup{{"x", 1, 2}, {"y", 1, 2}};
  const auto fd = pareto_frontier(dup);
  REQUIRE(fd.size() == 1);
  CHECK(fd[0].label == "x");
  CHECK(dominates({"p", 2, 2}, {"q", 1, 2}));
  CHECK_FALSE(dominates({"p", 1, 2}, {"q", 1, 2}));
}

TEST_CASE("pareto frontier agrees with brute-force dominance") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ParetoPoint> pts;
    std::vector<oracle::Point> raw;
    const std::size_t n = 1 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse values so duplicates and ties occur.
      const double a = static_cast<double>(rng() % 6), t = static_cast<double>(rng() % 6);
      pts.push_back({std::to_string(i), a, t});
      raw.push_back({a, t});
    }
    std::vector<std::string> expected;
    for (std::size_t i : oracle::pareto_indices(raw)) expected.push_back(std::to_string(i));
    std::vector<std::string> got;
    for (const auto& p : pareto_frontier(pts)) got.push_back(p.label);
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    CHECK(got == expected);
  }
}

TEST_CASE("metrics csv layout") {
  RunMetrics m;
  m.accuracy = 1.0;
  m.tokens_per_second = 10.5;
  m.tokens_per_call = 4.0;
  m.predictor_calls = 64;
  const std::vector<MetricsRow> rows{{"static/tau=0.9", m}};
  std::ostringstream os;
  write_metrics_csv(os, rows);
  CHECK(os.str() == "label,accuracy,tokens_per_second,tokens_per_call,predictor_calls\nstatic/tau=0.9,1,10.5,4,64\n");
}
