#pragma once

#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bridge/design.hpp"
#include "bridge/logistic.hpp"
#include "bridge/step_function.hpp"

namespace bridge {

// Right-censored data for one stratified Cox fit. Rows of X align with time,
// event, and stratum.
struct CoxData {
  std::vector<double> time;
  std::vector<int> event;
  std::vector<int> stratum;
  Eigen::MatrixXd X;  // n x p, may have zero columns
};

struct CoxFit {
  Eigen::VectorXd coefficients;
  DesignSpec design;
  std::vector<int> strata;                    // sorted stratum labels seen in the fit
  std::map<int, StepFunction> baseline_cumhaz;  // Breslow estimate per stratum
  bool converged = false;
  int iterations = 0;
  double log_partial_likelihood = 0.0;

  bool has_stratum(int label) const { return baseline_cumhaz.count(label) != 0; }
};

// Stratified log partial likelihood with Breslow ties, and its score and
// observed information.
double cox_log_partial_likelihood(const CoxData& data, const Eigen::VectorXd& beta);
Eigen::VectorXd cox_score(const CoxData& data, const Eigen::VectorXd& beta);

// Maximizes the stratified partial likelihood, then computes the Breslow
// baseline per stratum:
//   L0(t) = sum_{event times tj <= t} d_j / sum_{risk set at tj} exp(x'beta).
// With zero columns the baseline is the Nelson-Aalen estimator per stratum.
// Throws RankDeficient, MonotoneLikelihood, or NonConvergence.
CoxFit fit_cox(const CoxData& data, const NewtonOptions& options = {});

// exp(-L0_stratum(t-) * exp(x'beta)); covariates are expanded per fit.design.
double censoring_survival(const CoxFit& fit, double t, std::span<const double> covariates, int stratum);

// L(t) = sum_{tj <= t} d_j / n_j.
StepFunction nelson_aalen(std::span<const double> times, std::span<const int> events);

}  // namespace bridge
