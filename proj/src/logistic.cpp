#include "bridge/logistic.hpp"

#include <cmath>
#include <string>

#include "bridge/error.hpp"
#include "newton.hpp"

namespace bridge {

namespace {

double log1p_exp(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

void check_binary(std::span<const double> y) {
  std::size_t ones = 0;
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw Error(ErrorKind::InvalidValue, "logistic outcome must be 0/1");
    if (v == 1.0) ++ones;
  }
  if (ones == 0 || ones == y.size()) {
    throw Error(ErrorKind::AllSameClass, "logistic outcome has a single class (" + std::to_string(ones) +
                                             " of " + std::to_string(y.size()) + " positive)");
  }
}

}  // namespace

double expit(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logistic_log_likelihood(std::span<const double> y, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += y[static_cast<std::size_t>(i)] * eta(i) - log1p_exp(eta(i));
  }
  return ll;
}

Eigen::VectorXd logistic_score(std::span<const double> y, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r(i) = y[static_cast<std::size_t>(i)] - expit(eta(i));
  return X.transpose() * r;
}

LogisticFit fit_logistic(std::span<const double> y, const Eigen::MatrixXd& X,
                         const NewtonOptions& options) {
  if (static_cast<Eigen::Index>(y.size()) != X.rows()) {
    throw std::invalid_argument("fit_logistic: y and X row counts differ");
  }
  check_binary(y);
  const Eigen::Index p = X.cols();
  if (p == 0) throw Error(ErrorKind::RankDeficient, "logistic design has no columns");
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) {
      throw Error(ErrorKind::RankDeficient, "logistic design matrix has rank " + std::to_string(qr.rank()) +
                                                " < " + std::to_string(p));
    }
  }

  struct Objective {
    std::span<const double> y;
    const Eigen::MatrixXd& X;
    double value(const Eigen::VectorXd& beta) const { return logistic_log_likelihood(y, X, beta); }
    void derivatives(const Eigen::VectorXd& beta, Eigen::VectorXd& grad, Eigen::MatrixXd& info) const {
      const Eigen::VectorXd eta = X * beta;
      Eigen::VectorXd resid(eta.size());
      Eigen::VectorXd w(eta.size());
      for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double mu = expit(eta(i));
        resid(i) = y[static_cast<std::size_t>(i)] - mu;
        w(i) = mu * (1.0 - mu);
      }
      grad = X.transpose() * resid;
      info = X.transpose() * w.asDiagonal() * X;
    }
  };

  auto result = detail::newton_maximize(Objective{y, X}, Eigen::VectorXd::Zero(p), options,
                                        ErrorKind::Separation, "logistic fit");
  LogisticFit fit;
  fit.coefficients = std::move(result.beta);
  fit.converged = true;
  fit.iterations = result.iterations;
  fit.log_likelihood = result.log_likelihood;
  return fit;
}

LogisticFit fit_logistic(std::span<const double> y, const std::vector<SubjectRecord>& records,
                         std::span<const std::size_t> rows, DesignSpec design, const NewtonOptions& options) {
  const Eigen::MatrixXd X = design.matrix(records, rows, true);
  LogisticFit fit = fit_logistic(y, X, options);
  fit.design = std::move(design);
  fit.has_intercept = true;
  return fit;
}

double linear_predictor(const LogisticFit& fit, std::span<const double> covariates) {
  thread_local std::vector<double> buf;
  buf.clear();
  if (fit.has_intercept) buf.push_back(1.0);
  fit.design.expand(covariates, buf);
  if (static_cast<Eigen::Index>(buf.size()) != fit.coefficients.size()) {
    throw Error(ErrorKind::SchemaMismatch, "design width does not match fitted coefficients");
  }
  double eta = 0.0;
  for (std::size_t j = 0; j < buf.size(); ++j) eta += buf[j] * fit.coefficients(static_cast<Eigen::Index>(j));
  return eta;
}

double predict_prob(const LogisticFit& fit, std::span<const double> covariates) {
  return expit(linear_predictor(fit, covariates));
}

}  // namespace bridge
