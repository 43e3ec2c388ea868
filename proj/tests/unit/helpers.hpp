#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "bridge/data.hpp"

namespace testing {

inline bridge::SubjectRecord rec(int s, int a, double t, int delta, std::vector<double> cov = {}) {
  static int counter = 0;
  bridge::SubjectRecord r;
  r.id = "r" + std::to_string(++counter);
  r.s = s;
  r.a = a;
  r.t_star = t;
  r.delta = delta;
  r.covariates = std::move(cov);
  return r;
}

inline bridge::CovariateSchema xy_schema() {
  return bridge::CovariateSchema({{"x", bridge::CovariateType::Real}, {"b", bridge::CovariateType::Binary}});
}

// Random valid dataset with covariates x (real) and b (binary).
inline bridge::FusedDataset random_dataset(std::mt19937_64& rng, std::size_t n_per_trial, double tau = 365.0,
                                           double censor_rate = 0.3) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::vector<bridge::SubjectRecord> rs;
  for (int s = 0; s <= 1; ++s) {
    for (std::size_t i = 0; i < n_per_trial; ++i) {
      const int a = (i % 2 == 0 ? 2 : (s == 0 ? 1 : 3));
      const double x = norm(rng) + 0.3 * s;
      const double b = unif(rng) < 0.4 ? 1.0 : 0.0;
      double t = std::ceil(unif(rng) * tau * 1.3);
      int d = 1;
      if (t > tau) {
        t = tau;
        d = 0;
      } else if (unif(rng) < censor_rate) {
        d = 0;
      }
      rs.push_back(rec(s, a, t, d, {x, b}));
    }
  }
  return bridge::FusedDataset(std::move(rs), tau, xy_schema());
}

// Golden-section maximizer of a unimodal function on [lo, hi].
inline double golden_max(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-9) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2.0;
}

}  // namespace testing
