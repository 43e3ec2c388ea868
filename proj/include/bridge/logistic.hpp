#pragma once

#include <span>

#include <Eigen/Dense>

#include "bridge/design.hpp"

namespace bridge {

// Newton/IRLS controls shared by the logistic and Cox fitters.
struct NewtonOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;  // max-norm of the score, or the Newton decrement
  double step_tolerance = 1e-6;      // max-norm of the last Newton step
  double divergence_bound = 20.0;    // |coefficient| beyond which an increasing likelihood is divergence
  int max_halvings = 40;
};

struct LogisticFit {
  Eigen::VectorXd coefficients;  // intercept first when has_intercept
  DesignSpec design;
  bool has_intercept = true;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
};

double expit(double x) noexcept;

// Bernoulli log-likelihood and score at beta.
double logistic_log_likelihood(std::span<const double> y, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& beta);
Eigen::VectorXd logistic_score(std::span<const double> y, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& beta);

// Maximum likelihood by Newton-Raphson with step halving. X carries its own
// intercept column if one is wanted. Throws AllSameClass, RankDeficient,
// Separation, or NonConvergence.
LogisticFit fit_logistic(std::span<const double> y, const Eigen::MatrixXd& X,
                         const NewtonOptions& options = {});

// Fits y ~ 1 + design over the given rows.
LogisticFit fit_logistic(std::span<const double> y, const std::vector<SubjectRecord>& records,
                         std::span<const std::size_t> rows, DesignSpec design,
                         const NewtonOptions& options = {});

double linear_predictor(const LogisticFit& fit, std::span<const double> covariates);
// expit of the linear predictor after expanding covariates per fit.design.
double predict_prob(const LogisticFit& fit, std::span<const double> covariates);

}  // namespace bridge
