#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bridge/diagnostics.hpp"
#include "bridge/error.hpp"
#include "bridge/estimator.hpp"
#include "bridge/simulation.hpp"

using namespace bridge;

namespace {

DgpParams desk_params() {
  DgpParams p;
  p.z_mean = 300.0;
  return p;
}

}  // namespace

TEST_CASE("potential time from the hazard display") {
  const DgpParams p;
  CHECK(potential_time(p, 1, 0, 0.0, std::exp(-1.0)) == doctest::Approx(std::exp(3.92)).epsilon(1e-12));
  CHECK(std::exp(3.92) == doctest::Approx(50.40).epsilon(1e-3));
  CHECK(dgp_lambda(p, 1, 0, 0.0) == doctest::Approx(std::exp(4.9)));
  CHECK(dgp_lambda(p, 3, 1, 100.0) ==
        doctest::Approx(std::exp(4.9 + 1.5 - 3.0 + 1.0 - 0.25)).epsilon(1e-12));
}

TEST_CASE("population draws") {
  const auto pop = generate_population(100000, desk_params(), 1);
  double w1 = 0.0;
  for (const auto& r : pop) {
    w1 += r.w1;
    CHECK(r.w2 >= 0.0);
    CHECK(r.w2 <= 1600.0);
    CHECK(r.t_star == std::min({r.t_pot[r.a - 1], r.c, 365.0}));
    CHECK(r.delta == (r.t_pot[r.a - 1] <= std::min(r.c, 365.0) ? 1 : 0));
    if (r.s == 0) CHECK((r.a == 1 || r.a == 2));
    if (r.s == 1) CHECK((r.a == 2 || r.a == 3));
  }
  CHECK(std::fabs(w1 / 100000.0 - 0.30) < 0.005);
}

TEST_CASE("population is deterministic in the seed") {
  const auto a = generate_population(1000, desk_params(), 7);
  const auto b = generate_population(1000, desk_params(), 7);
  const auto c = generate_population(1000, desk_params(), 8);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same &= a[i].t_star == b[i].t_star && a[i].w2 == b[i].w2 && a[i].s == b[i].s;
    differ |= a[i].w2 != c[i].w2;
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("sampled trials have exact stratum sizes") {
  const auto out = sample_trials(desk_params(), 1000, 1000, 3);
  std::size_t s1 = 0;
  for (const auto& r : out.dataset.records()) s1 += r.s == 1 ? 1 : 0;
  CHECK(out.dataset.size() == 2000);
  CHECK(s1 == 1000);
  const auto uneven = sample_trials(desk_params(), 123, 456, 3);
  s1 = 0;
  for (const auto& r : uneven.dataset.records()) s1 += r.s == 1 ? 1 : 0;
  CHECK(s1 == 123);
  CHECK(uneven.dataset.size() - s1 == 456);
  const auto again = sample_trials(desk_params(), 123, 456, 3);
  for (std::size_t i = 0; i < again.dataset.size(); ++i)
    CHECK(again.dataset.records()[i].t_star == uneven.dataset.records()[i].t_star);
}

TEST_CASE("small pools are regenerated") {
  DgpParams p = desk_params();
  p.pool_multiplier = 1.0;
  const auto out = sample_trials(p, 500, 500, 4);
  CHECK(out.regenerations > 0);
  CHECK(out.dataset.size() == 1000);
}

TEST_CASE("invalid scenario settings are rejected") {
  ScenarioConfig cfg;
  cfg.n1 = 0;
  try {
    cfg.validate();
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
  }
  cfg = ScenarioConfig{};
  cfg.t_eval = {400.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  DgpParams p;
  p.w1_prob = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
  CHECK_THROWS_AS(sample_trials(desk_params(), 0, 10, 1), Error);
}

TEST_CASE("oracle truth") {
  const auto p = desk_params();
  const auto a = true_rd(p, 1000000, {0.0, 91.0, 183.0, 274.0, 365.0}, 1, 4);
  const auto b = true_rd(p, 1000000, {0.0, 91.0, 183.0, 274.0, 365.0}, 2, 4);
  CHECK(a.rd[0] == 0.0);
  CHECK(a.n_target == 1000000);
  CHECK(a.n_drawn > a.n_target);
  for (std::size_t k = 1; k < a.t.size(); ++k) {
    CHECK(std::fabs(a.rd[k]) >= std::fabs(a.rd[k - 1]));
    const double se = std::hypot(a.mc_se[k], b.mc_se[k]);
    CHECK(std::fabs(a.rd[k] - b.rd[k]) <= 3.0 * se);
    CHECK(a.rd[k] < 0.0);
  }
  MESSAGE("truth: " << a.rd[1] << " " << a.rd[2] << " " << a.rd[3] << " " << a.rd[4]);
}

TEST_CASE("oracle and population are identical across worker counts") {
  const auto p = desk_params();
  const auto a = true_rd(p, 200000, {91.0, 365.0}, 3, 1);
  const auto b = true_rd(p, 200000, {91.0, 365.0}, 3, 5);
  CHECK(a.rd == b.rd);
  CHECK(a.n_drawn == b.n_drawn);
}

TEST_CASE("correct sampling weights balance both covariates") {
  const auto ds = sample_trials(desk_params(), 2000, 2000, 12).dataset;
  PipelineConfig cfg;
  cfg.sampling = ModelFormula::parse(sampling_terms(SamplingModel::Correct));
  const auto w = compute_weights(ds, fit_nuisance(ds, cfg), cfg);
  const auto rows = covariate_balance(ds, w, {"w1", "w2"});
  for (const auto& r : rows) CHECK(std::fabs(r.smd) < 0.1);
  WeightSet unit;
  unit.records.resize(ds.size());
  const auto raw = covariate_balance(ds, unit, {"w1", "w2"});
  CHECK(std::fabs(raw[0].smd) > 0.2);
}

TEST_CASE("event proportions are stable across samples") {
  std::vector<double> props;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ds = sample_trials(desk_params(), 1000, 1000, seed).dataset;
    double events = 0;
    for (const auto& r : ds.records()) events += r.delta;
    props.push_back(events / 2000.0);
  }
  double mean = 0, var = 0;
  for (double x : props) mean += x / 10.0;
  for (double x : props) var += (x - mean) * (x - mean) / 9.0;
  CHECK(mean > 0.05);
  CHECK(std::sqrt(var) / mean < 0.15);
}

TEST_CASE("sampling model names") {
  CHECK(parse_sampling_model("correct") == SamplingModel::Correct);
  CHECK(parse_sampling_model("incorrect") == SamplingModel::Incorrect);
  CHECK(to_string(SamplingModel::Incorrect) == "incorrect");
  CHECK_THROWS_AS(parse_sampling_model("other"), Error);
  CHECK(sampling_terms(SamplingModel::Correct) == std::vector<std::string>{"w1", "w2"});
  CHECK(sampling_terms(SamplingModel::Incorrect) == std::vector<std::string>{"w2"});
}

TEST_CASE("scenario configuration from TOML") {
  const auto cfg = parse_scenario_config(R"(
[scenario]
n1 = 500
n0 = 400
n_sims = 3
B = 20
p = 100
oracle_n = 50000
seed = 17
sampling_models = ["correct"]
alpha_levels = [0.05, 0.2]
t_eval = [100, 200]

[dgp]
z_mean = 300.0
)");
  CHECK(cfg.n1 == 500);
  CHECK(cfg.n0 == 400);
  CHECK(cfg.n_sims == 3);
  CHECK(cfg.master_seed == 17);
  CHECK(cfg.dgp.z_mean == 300.0);
  CHECK(cfg.sampling_models == std::vector<SamplingModel>{SamplingModel::Correct});
  CHECK(cfg.t_eval == std::vector<double>{100.0, 200.0});
  CHECK_THROWS_AS(parse_scenario_config("[scenario]\nbogus = 1\n"), Error);
  CHECK_THROWS_AS(parse_scenario_config("[scenario]\nn1 = 0\n"), Error);
}

TEST_CASE("small scenario runs and aggregates") {
  ScenarioConfig cfg;
  cfg.n1 = cfg.n0 = 200;
  cfg.dgp.z_mean = 300.0;
  cfg.n_sims = 3;
  cfg.B = 10;
  cfg.p = 50;
  cfg.oracle_n = 20000;
  cfg.master_seed = 5;
  std::size_t last = 0;
  const auto m = run_scenario(cfg, [&](std::size_t done, std::size_t) { last = done; });
  CHECK(last == 3);
  CHECK(m.completed == 3);
  REQUIRE(m.models.size() == 2);
  for (const auto& mm : m.models) {
    CHECK(mm.times.size() == 4);
    CHECK(mm.rejection.size() == 3);
    for (double r : mm.rejection) CHECK((r >= 0.0 && r <= 1.0));
    for (const auto& t : mm.times) CHECK(t.bias == doctest::Approx(t.mean_estimate - t.truth));
  }
  cfg.workers = 3;
  const auto m3 = run_scenario(cfg);
  std::ostringstream a, b, c, d;
  write_metrics_csv(a, m);
  write_metrics_csv(b, m3);
  write_rejection_csv(c, m);
  write_rejection_csv(d, m3);
  CHECK(a.str() == b.str());
  CHECK(c.str() == d.str());
  CHECK(metrics_json(m) == metrics_json(m3));
}

TEST_CASE("aggregation arithmetic") {
  ScenarioConfig cfg;
  cfg.sampling_models = {SamplingModel::Correct};
  cfg.t_eval = {100.0};
  cfg.alpha_levels = {0.05, 0.5};
  cfg.n_sims = 4;
  OracleResult truth;
  truth.t = {100.0};
  truth.rd = {-0.1};
  truth.mc_se = {0.0};
  std::vector<ReplicateOutcome> reps(4);
  const double est[4] = {-0.12, -0.08, -0.10, -0.30};
  const double pv[4] = {0.01, 0.3, 0.7, 0.9};
  for (int r = 0; r < 4; ++r) {
    reps[r].ok = true;
    reps[r].estimate = {{est[r]}};
    reps[r].se = {{0.02}};
    reps[r].p_value = {pv[r]};
  }
  const auto m = summarize_scenario(cfg, truth, reps);
  const auto& t = m.models[0].times[0];
  CHECK(t.mean_estimate == doctest::Approx(-0.15));
  CHECK(t.bias == doctest::Approx(-0.05));
  CHECK(t.mean_se == doctest::Approx(0.02));
  CHECK(t.coverage == doctest::Approx(0.75));
  CHECK(m.models[0].rejection[0] == 0.25);
  CHECK(m.models[0].rejection[1] == 0.5);
  CHECK(m.models[0].conditional[0].retained == 3);
  CHECK(m.models[0].conditional[0].coverage[0] == doctest::Approx(2.0 / 3.0));
  CHECK(m.models[0].conditional[1].retained == 2);
  CHECK(m.models[0].conditional[1].coverage[0] == doctest::Approx(0.5));
}
