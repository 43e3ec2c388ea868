#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bridge/diagnostics.hpp"
#include "bridge/error.hpp"
#include "helpers.hpp"

using namespace bridge;
using testing::rec;

namespace {

const StepFunction kR320({0.4, 1.2, 1.7, 2.5}, {0.10, 0.20, 0.35, 0.45});
const StepFunction kR175({0.2, 1.7, 2.4, 3.0}, {0.07, 0.30, 0.45, 0.55});
const CovariateSchema kOne({{"x", CovariateType::Real}});

// Both trials from one distribution, both arms of each trial present.
FusedDataset homogeneous(std::mt19937_64& rng, int n_per_trial, double censor = 0.2) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SubjectRecord> rs;
  for (int s = 0; s <= 1; ++s) {
    for (int i = 0; i < n_per_trial; ++i) {
      const int a = i % 2 == 0 ? 2 : (s == 0 ? 1 : 3);
      const double x = u(rng);
      double t = std::ceil(-std::log(u(rng)) * 400.0);
      int d = 1;
      if (t >= 365.0) {
        t = 365.0;
        d = 0;
      } else if (u(rng) < censor) {
        d = 0;
      }
      rs.push_back(rec(s, a, std::max(t, 1.0), d, {x}));
    }
  }
  return FusedDataset(std::move(rs), 365.0, kOne);
}

WeightSet fitted_weights(const FusedDataset& ds, const PipelineConfig& cfg) {
  return compute_weights(ds, fit_nuisance(ds, cfg), cfg);
}

// Test-side area: shared-arm curves built by direct summation and integrated
// over the union of their event times.
double brute_area(const FusedDataset& ds, const WeightSet& w, const std::vector<int>& s_star, double t_max) {
  std::vector<double> grid{0.0};
  for (const auto& r : ds.records())
    if (r.a == 2 && r.delta == 1 && r.t_star <= t_max) grid.push_back(r.t_star);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  auto curve = [&](int g, double t) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (s_star[i] != g) continue;
      den += w.records[i].sampling_odds;
      const auto& r = ds.records()[i];
      if (r.a == 2 && r.delta == 1 && r.t_star <= t) num += w.records[i].multiplier;
    }
    return num / den;
  };
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    area += std::fabs(curve(1, grid[k]) - curve(0, grid[k])) * (grid[k + 1] - grid[k]);
  }
  return area;
}

}  // namespace

TEST_CASE("worked table area") {
  CHECK(std::fabs(area_between(kR320, kR175, 3.0) - 0.148) < 1e-12);
  CHECK(std::fabs(area_between(kR175, kR320, 3.0) - 0.148) < 1e-12);
}

TEST_CASE("identical curves have zero area") {
  CHECK(area_between(kR320, kR320, 3.0) == 0.0);
  CHECK(area_between(kR175, kR175, 10.0, true) == 0.0);
}

TEST_CASE("constant offset over the follow-up window") {
  const StepFunction c2({2.0, 5.0}, {0.2, 0.3});
  const StepFunction c1({2.0, 5.0}, {0.3, 0.4}, 0.1);
  CHECK(area_between(c1, c2, 10.0, true) == doctest::Approx(1.0).epsilon(1e-12));
  // without padding the last interval ends at the final jump
  CHECK(area_between(c1, c2, 10.0, false) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("area is symmetric and invariant to grid refinement") {
  std::mt19937_64 rng(200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> t1, i1, t2, i2;
    for (int j = 0; j < 8; ++j) {
      t1.push_back(std::ceil(u(rng) * 50));
      i1.push_back(u(rng) * 0.1);
      t2.push_back(std::ceil(u(rng) * 50));
      i2.push_back(u(rng) * 0.1);
    }
    const auto c1 = StepFunction::from_increments(t1, i1);
    const auto c2 = StepFunction::from_increments(t2, i2);
    const double a = area_between(c1, c2, 50.0);
    CHECK(a == doctest::Approx(area_between(c2, c1, 50.0)).epsilon(1e-12));
    // a zero-size jump inserted strictly inside the grid changes nothing
    const double extra = std::floor(u(rng) * 30) + 0.5;
    t1.push_back(extra);
    i1.push_back(0.0);
    const auto refined = StepFunction::from_increments(t1, i1);
    if (extra < std::max(*std::max_element(t1.begin(), t1.end() - 1), *std::max_element(t2.begin(), t2.end()))) {
      CHECK(area_between(refined, c2, 50.0) == doctest::Approx(a).epsilon(1e-12));
    }
  }
}

TEST_CASE("observed area agrees with the estimator's shared-arm curves") {
  std::mt19937_64 rng(201);
  const auto ds = testing::random_dataset(rng, 80);
  PipelineConfig cfg;
  cfg.sampling = ModelFormula::parse({"x", "b"});
  const auto w = fitted_weights(ds, cfg);
  const auto r1 = ipw_risk(ds, w, 1, 2);
  const auto r0 = ipw_risk(ds, w, 0, 2);
  const SharedArmAreaStatistic stat(ds, w, true, 365.0);
  const double identity = *stat.area(stat.original_trials());
  CHECK(identity == doctest::Approx(area_between(r1, r0, 365.0)).epsilon(1e-12));
  PermutationSpec spec;
  spec.permutations = 50;
  spec.seed = 3;
  const auto res = permutation_test(ds, w, spec);
  CHECK(res.observed_area == identity);
  CHECK(res.permuted_areas.size() == 50);
  CHECK(res.warnings.size() == 1);
}

TEST_CASE("exhaustive enumeration on two shared-arm records per trial") {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<SubjectRecord> rs{
        rec(1, 2, std::ceil(u(rng) * 300), 1, {u(rng)}), rec(1, 2, std::ceil(u(rng) * 300), 1, {u(rng)}),
        rec(1, 3, std::ceil(u(rng) * 300), 1, {u(rng)}), rec(1, 3, 365, 0, {u(rng)}),
        rec(0, 2, std::ceil(u(rng) * 300), 1, {u(rng)}), rec(0, 2, std::ceil(u(rng) * 300), 1, {u(rng)}),
        rec(0, 1, std::ceil(u(rng) * 300), 1, {u(rng)}), rec(0, 1, 365, 0, {u(rng)})};
    const FusedDataset ds(rs, 365.0, kOne);
    WeightSet w;
    w.records.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto& x = w.records[i];
      x.treatment_prob = 0.5;
      x.censoring_surv = 0.6 + 0.4 * u(rng);
      x.sampling_odds = ds.records()[i].s == 1 ? 1.0 : 0.2 + 2.0 * u(rng);
      x.multiplier = x.sampling_odds / (x.treatment_prob * x.censoring_surv);
    }
    const std::vector<int> original{1, 1, 1, 1, 0, 0, 0, 0};
    const double observed = brute_area(ds, w, original, 365.0);

    // every assignment of four 1-labels among eight records
    std::size_t total = 0, exceed = 0;
    for (unsigned mask = 0; mask < 256; ++mask) {
      if (__builtin_popcount(mask) != 4) continue;
      std::vector<int> s_star(8);
      int shared1 = 0, shared0 = 0;
      for (int i = 0; i < 8; ++i) {
        s_star[i] = (mask >> i) & 1u;
        if (ds.records()[i].a == 2) (s_star[i] ? shared1 : shared0)++;
      }
      if (shared1 == 0 || shared0 == 0) continue;
      ++total;
      if (brute_area(ds, w, s_star, 365.0) > observed + 1e-12) ++exceed;
    }
    const auto res = exact_permutation_test(ds, w, true, 365.0);
    CHECK(res.observed_area == doctest::Approx(observed).epsilon(1e-12));
    CHECK(res.p == total);
    CHECK(res.skipped_permutations == 70 - total);
    CHECK(res.p_value == doctest::Approx(static_cast<double>(exceed) / static_cast<double>(total)));
  }
}

TEST_CASE("Monte Carlo p-value approaches the exact p-value") {
  std::mt19937_64 rng(203);
  const auto ds = homogeneous(rng, 5, 0.0);
  PipelineConfig cfg;
  const auto w = fitted_weights(ds, cfg);
  const auto exact = exact_permutation_test(ds, w, true, 365.0);
  PermutationSpec spec;
  spec.permutations = 20000;
  spec.seed = 9;
  const auto mc = permutation_test(ds, w, spec);
  const double se = std::sqrt(exact.p_value * (1 - exact.p_value) / 20000.0);
  CHECK(std::fabs(mc.p_value - exact.p_value) <= 4 * se + 1e-3);
}

TEST_CASE("degenerate assignments are redrawn") {
  std::vector<SubjectRecord> rs{rec(1, 2, 10, 1, {0}), rec(1, 3, 20, 1, {0}), rec(1, 3, 30, 1, {0}),
                                rec(0, 2, 15, 1, {0}), rec(0, 1, 25, 1, {0}), rec(0, 1, 35, 1, {0})};
  const FusedDataset ds(rs, 365.0, kOne);
  PipelineConfig cfg;
  const auto w = fitted_weights(ds, cfg);
  PermutationSpec spec;
  spec.permutations = 200;
  spec.seed = 1;
  const auto res = permutation_test(ds, w, spec);
  CHECK(res.skipped_permutations > 0);
  CHECK(res.permuted_areas.size() == 200);
}

TEST_CASE("p-value strict count and add-one variant") {
  std::mt19937_64 rng(204);
  const auto ds = homogeneous(rng, 60);
  const auto w = fitted_weights(ds, PipelineConfig{});
  PermutationSpec spec;
  spec.permutations = 300;
  spec.seed = 4;
  const auto plain = permutation_test(ds, w, spec);
  std::size_t count = 0;
  for (double a : plain.permuted_areas) count += a > plain.observed_area ? 1 : 0;
  CHECK(plain.p_value == static_cast<double>(count) / 300.0);
  spec.add_one = true;
  const auto plus = permutation_test(ds, w, spec);
  CHECK(plus.p_value == (static_cast<double>(count) + 1.0) / 301.0);
  CHECK(plus.permuted_areas == plain.permuted_areas);
}

TEST_CASE("null calibration on homogeneous trials") {
  std::mt19937_64 rng(205);
  int rejections = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto ds = homogeneous(rng, 100);
    PipelineConfig cfg;
    cfg.sampling = ModelFormula::parse({"x"});
    const auto w = fitted_weights(ds, cfg);
    PermutationSpec spec;
    spec.permutations = 400;
    spec.seed = static_cast<std::uint64_t>(rep) + 1000;
    if (permutation_test(ds, w, spec).p_value <= 0.05) ++rejections;
  }
  MESSAGE("rejections at 0.05: " << rejections << "/200");
  CHECK(rejections >= 4);
  CHECK(rejections <= 18);
}

TEST_CASE("p-value is seed invariant in distribution") {
  std::mt19937_64 rng(206);
  const auto ds = homogeneous(rng, 150);
  const auto w = fitted_weights(ds, PipelineConfig{});
  PermutationSpec spec;
  spec.permutations = 10000;
  spec.seed = 1;
  const double p1 = permutation_test(ds, w, spec).p_value;
  spec.seed = 2;
  const double p2 = permutation_test(ds, w, spec).p_value;
  const double pbar = (p1 + p2) / 2.0;
  CHECK(std::fabs(p1 - p2) <= 2.0 * std::sqrt(pbar * (1 - pbar) / 10000.0) + 0.02);
}

TEST_CASE("permutation output is identical across worker counts") {
  std::mt19937_64 rng(207);
  const auto ds = homogeneous(rng, 120);
  const auto w = fitted_weights(ds, PipelineConfig{});
  PermutationSpec spec;
  spec.permutations = 2000;
  spec.seed = 77;
  const auto one = permutation_test(ds, w, spec);
  for (unsigned k : {2u, 3u, 8u}) {
    spec.workers = k;
    const auto many = permutation_test(ds, w, spec);
    CHECK(many.permuted_areas == one.permuted_areas);
    CHECK(many.p_value == one.p_value);
    CHECK(many.skipped_permutations == one.skipped_permutations);
  }
}

TEST_CASE("refit permutations run and respect the seed") {
  std::mt19937_64 rng(208);
  const auto ds = homogeneous(rng, 40);
  PipelineConfig cfg;
  cfg.sampling = ModelFormula::parse({"x"});
  const auto fits = fit_nuisance(ds, cfg);
  PermutationSpec spec;
  spec.permutations = 30;
  spec.seed = 5;
  spec.refit = true;
  const auto a = permutation_test(ds, fits, cfg, spec);
  spec.workers = 3;
  const auto b = permutation_test(ds, fits, cfg, spec);
  CHECK(a.permuted_areas == b.permuted_areas);
  CHECK(a.p_value >= 0.0);
  CHECK(a.p_value <= 1.0);
  CHECK_THROWS_AS(permutation_test(ds, compute_weights(ds, fits, cfg), spec), Error);
}

TEST_CASE("twister export") {
  SUBCASE("zero curve without bands") {
    RiskDifferenceCurve rd{{0.0}, {0.0}, {}, {}, {}};
    const auto rows = twister_export(rd, 365.0, false);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].t == 0.0);
    CHECK(rows[1].t == 365.0);
    CHECK(rows[0].rd == 0.0);
    CHECK(rows[1].rd == 0.0);
  }
  SUBCASE("one jump") {
    RiskDifferenceCurve rd{{0.0, 100.0}, {0.0, 0.05}, {}, {}, {}};
    const auto rows = twister_export(rd, 365.0, false);
    REQUIRE(rows.size() == 4);
    CHECK(rows[1].t == 100.0);
    CHECK(rows[1].rd == 0.0);
    CHECK(rows[2].t == 100.0);
    CHECK(rows[2].rd == 0.05);
    CHECK(rows[3].t == 365.0);
  }
  SUBCASE("missing bands") {
    RiskDifferenceCurve rd{{0.0}, {0.0}, {}, {}, {}};
    try {
      twister_export(rd, 365.0, true);
      FAIL("expected MissingBands");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingBands);
    }
  }
  SUBCASE("round trip reproduces every grid value") {
    const auto rd = risk_difference(kR320, kR175);
    RiskDifferenceCurve banded = rd;
    banded.se = std::vector<double>(rd.grid.size(), 0.01);
    banded.ci_lo = banded.ci_hi = rd.rd;
    for (std::size_t k = 0; k < rd.grid.size(); ++k) {
      (*banded.ci_lo)[k] -= 0.0196;
      (*banded.ci_hi)[k] += 0.0196;
    }
    for (bool bands : {false, true}) {
      std::stringstream ss;
      write_twister_csv(ss, twister_export(banded, 3.0, bands), bands);
      const auto back = read_twister_csv(ss);
      REQUIRE(back.size() == 2 * rd.grid.size());
      for (std::size_t k = 0; k < rd.grid.size(); ++k) {
        const auto& row = back[k == 0 ? 0 : 2 * k];
        CHECK(row.t == rd.grid[k]);
        CHECK(row.rd == rd.rd[k]);
        if (bands) CHECK(row.ci_hi == (*banded.ci_hi)[k]);
      }
    }
  }
}

TEST_CASE("covariate balance") {
  SUBCASE("binary covariate 30% vs 50%") {
    std::vector<SubjectRecord> rs;
    for (int i = 0; i < 10; ++i) rs.push_back(rec(0, i % 2 ? 1 : 2, 10, 1, {i < 3 ? 1.0 : 0.0}));
    for (int i = 0; i < 10; ++i) rs.push_back(rec(1, i % 2 ? 3 : 2, 10, 1, {i < 5 ? 1.0 : 0.0}));
    const FusedDataset ds(rs, 365.0, CovariateSchema({{"z", CovariateType::Binary}}));
    WeightSet w;
    w.records.resize(ds.size());
    const auto rows = covariate_balance(ds, w, {"z"});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean_source_weighted == doctest::Approx(0.3));
    CHECK(rows[0].mean_target == doctest::Approx(0.5));
    CHECK(rows[0].smd == doctest::Approx(0.2 / std::sqrt(0.23)).epsilon(1e-12));
    CHECK(rows[0].smd == doctest::Approx(0.417).epsilon(1e-3));
  }
  SUBCASE("zero variance") {
    std::vector<SubjectRecord> rs{rec(0, 1, 10, 1, {1.0, 2.0}), rec(0, 2, 10, 1, {1.0, 2.0}),
                                  rec(1, 2, 10, 1, {1.0, 3.0}), rec(1, 3, 10, 1, {1.0, 3.0})};
    const FusedDataset ds(rs, 365.0, CovariateSchema({{"c", CovariateType::Real}, {"d", CovariateType::Real}}));
    WeightSet w;
    w.records.resize(ds.size());
    const auto rows = covariate_balance(ds, w, {"c", "d"});
    CHECK(rows[0].smd == 0.0);
    CHECK_FALSE(rows[0].zero_variance_flag);
    CHECK(std::isnan(rows[1].smd));
    CHECK(rows[1].zero_variance_flag);
  }
  SUBCASE("identical distributions") {
    std::mt19937_64 rng(209);
    const auto ds = homogeneous(rng, 2000);
    WeightSet w;
    w.records.resize(ds.size());
    CHECK(std::fabs(covariate_balance(ds, w, {"x"})[0].smd) < 0.05);
  }
  SUBCASE("unknown covariate") {
    std::mt19937_64 rng(210);
    const auto ds = homogeneous(rng, 10);
    WeightSet w;
    w.records.resize(ds.size());
    CHECK_THROWS_AS(covariate_balance(ds, w, {"nope"}), Error);
  }
}
