#include <doctest.h>

#include <cmath>
#include <random>

#include "bridge/cox.hpp"
#include "bridge/error.hpp"
#include "helpers.hpp"

using namespace bridge;

namespace {

CoxData random_cox(std::mt19937_64& rng, int n, int p, int strata = 1) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  CoxData d;
  d.X.resize(n, p);
  for (int i = 0; i < n; ++i) {
    double eta = 0.0;
    for (int j = 0; j < p; ++j) {
      d.X(i, j) = norm(rng);
      eta += 0.4 * d.X(i, j);
    }
    // integer times so ties occur
    d.time.push_back(std::ceil(-std::log(unif(rng)) / std::exp(eta) * 20.0));
    d.event.push_back(unif(rng) < 0.7 ? 1 : 0);
    d.stratum.push_back(i % strata);
  }
  return d;
}

}  // namespace

TEST_CASE("Nelson-Aalen hand example") {
  const std::vector<double> t{1, 2, 3};
  const std::vector<int> e{1, 0, 1};
  const auto na = nelson_aalen(t, e);
  CHECK(na(0.5) == 0.0);
  CHECK(na(1.0) == doctest::Approx(1.0 / 3.0));
  CHECK(na(2.5) == doctest::Approx(1.0 / 3.0));
  CHECK(na(3.0) == doctest::Approx(4.0 / 3.0));
  const std::vector<int> none{0, 0, 0};
  const auto zero = nelson_aalen(t, none);
  CHECK(zero(10.0) == 0.0);
}

TEST_CASE("Breslow baseline with an empty design equals Nelson-Aalen exactly") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 30; ++rep) {
    CoxData d = random_cox(rng, 40, 0, 2);
    const auto fit = fit_cox(d);
    for (int s = 0; s < 2; ++s) {
      std::vector<double> t;
      std::vector<int> e;
      for (std::size_t i = 0; i < d.time.size(); ++i) {
        if (d.stratum[i] == s) {
          t.push_back(d.time[i]);
          e.push_back(d.event[i]);
        }
      }
      const auto na = nelson_aalen(t, e);
      const auto& bl = fit.baseline_cumhaz.at(s);
      CHECK(bl.jump_times() == na.jump_times());
      CHECK(bl.values() == na.values());
    }
  }
}

TEST_CASE("Breslow baseline at zero coefficients equals Nelson-Aalen") {
  // A covariate with no association still gets an estimate; the identity is
  // checked with the coefficient forced to zero through a constant-free design.
  std::mt19937_64 rng(7);
  CoxData d = random_cox(rng, 60, 0);
  const auto fit = fit_cox(d);
  const auto na = nelson_aalen(d.time, d.event);
  for (double t : {0.5, 3.0, 10.0, 50.0}) CHECK(fit.baseline_cumhaz.at(0)(t) == na(t));
}

TEST_CASE("analytic score matches central finite differences") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const CoxData d = random_cox(rng, 30, 2, 1 + rep % 3);
    std::normal_distribution<double> norm(0.0, 0.5);
    Eigen::VectorXd beta(2);
    beta << norm(rng), norm(rng);
    const Eigen::VectorXd g = cox_score(d, beta);
    const double h = 1e-5;
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd up = beta, dn = beta;
      up(j) += h;
      dn(j) -= h;
      const double fd = (cox_log_partial_likelihood(d, up) - cox_log_partial_likelihood(d, dn)) / (2 * h);
      CHECK(std::fabs(fd - g(j)) <= 1e-6 * std::max(1.0, std::fabs(g(j))));
    }
  }
}

TEST_CASE("30-subject stratum: MLE matches golden-section search") {
  std::mt19937_64 rng(30);
  const CoxData d = random_cox(rng, 30, 1);
  const auto fit = fit_cox(d);
  CHECK(fit.converged);
  CHECK(std::fabs(cox_score(d, fit.coefficients)(0)) < 1e-8);
  const double oracle = testing::golden_max(
      [&](double b) {
        Eigen::VectorXd v(1);
        v << b;
        return cox_log_partial_likelihood(d, v);
      },
      -5.0, 5.0, 1e-11);
  CHECK(std::fabs(oracle - fit.coefficients(0)) < 1e-5);
}

TEST_CASE("two subjects with a monotone partial likelihood") {
  CoxData d;
  d.time = {1.0, 2.0};
  d.event = {1, 1};
  d.stratum = {0, 0};
  d.X.resize(2, 1);
  d.X << 1.0, 0.0;
  try {
    fit_cox(d);
    FAIL("expected MonotoneLikelihood");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MonotoneLikelihood);
  }
}

TEST_CASE("rank deficiency") {
  std::mt19937_64 rng(13);
  CoxData d = random_cox(rng, 30, 2);
  d.X.col(1) = d.X.col(0) * 3.0;
  try {
    fit_cox(d);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }
}

TEST_CASE("censoring survival") {
  // one drop-out among 5 at risk at t=2
  CoxData d;
  d.time = {2, 3, 4, 5, 6};
  d.event = {1, 0, 0, 0, 0};
  d.stratum = {1, 1, 1, 1, 1};
  d.X.resize(5, 0);
  const auto fit = fit_cox(d);
  CHECK(censoring_survival(fit, 1.0, {}, 1) == 1.0);
  CHECK(censoring_survival(fit, 2.0, {}, 1) == 1.0);  // left limit
  CHECK(censoring_survival(fit, 2.5, {}, 1) == doctest::Approx(std::exp(-0.2)));
  CHECK(censoring_survival(fit, 100.0, {}, 1) == doctest::Approx(0.8187307531));
  try {
    censoring_survival(fit, 1.0, {}, 7);
    FAIL("expected UnknownStratum");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownStratum);
  }
}

TEST_CASE("baselines are nondecreasing from zero and survival lies in (0, 1]") {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    const CoxData d = random_cox(rng, 80, 1, 2);
    auto fit = fit_cox(d);
    fit.design = DesignSpec({{"x", 0, std::nullopt}}, 1);
    for (const auto& [s, bl] : fit.baseline_cumhaz) {
      CHECK(bl.value_at_zero() == 0.0);
      CHECK(bl.is_nondecreasing());
      double prev = 1.0;
      for (double t = 0.5; t < 200; t += 3.7) {
        std::vector<double> cov{0.3};
        const double v = censoring_survival(fit, t, cov, s);
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        CHECK(v <= prev);
        prev = v;
      }
    }
  }
}
