#pragma once

// Newton-Raphson with step halving for concave log-likelihoods.

#include <string>

#include <Eigen/Dense>

#include "bridge/error.hpp"
#include "bridge/logistic.hpp"

namespace bridge::detail {

struct NewtonResult {
  Eigen::VectorXd beta;
  double log_likelihood = 0.0;
  int iterations = 0;
};

// Objective must provide
//   double value(const Eigen::VectorXd&) const;
//   void derivatives(const Eigen::VectorXd&, Eigen::VectorXd& grad, Eigen::MatrixXd& info) const;
// where info is the negative Hessian.
template <class Objective>
NewtonResult newton_maximize(const Objective& obj, Eigen::VectorXd beta, const NewtonOptions& options,
                             ErrorKind divergence_kind, const char* what) {
  double ll = obj.value(beta);
  Eigen::VectorXd grad(beta.size());
  Eigen::MatrixXd info(beta.size(), beta.size());

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    obj.derivatives(beta, grad, info);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step = ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      throw Error(divergence_kind, std::string(what) + ": information matrix became singular");
    }
    const double grad_max = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
    const double step_max = step.size() ? step.cwiseAbs().maxCoeff() : 0.0;
    // Newton decrement grad' info^-1 grad is invariant to covariate scaling;
    // the step test keeps monotone likelihoods (vanishing gradient, unit
    // steps) from passing as converged.
    const double decrement = grad.dot(step);
    const bool flat = grad_max < options.gradient_tolerance || decrement < options.gradient_tolerance;
    if (flat && step_max < options.step_tolerance) {
      beta += step;
      return {beta, obj.value(beta), iter};
    }

    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double ll_new = obj.value(candidate);
    int halvings = 0;
    while (!(ll_new >= ll) && halvings < options.max_halvings) {
      scale *= 0.5;
      candidate = beta + scale * step;
      ll_new = obj.value(candidate);
      ++halvings;
    }
    if (!(ll_new >= ll)) {
      // no ascent left at working precision
      if (grad_max < 1e3 * options.gradient_tolerance || decrement < 1e3 * options.gradient_tolerance) {
        return {beta, ll, iter};
      }
      throw Error(ErrorKind::NonConvergence, std::string(what) + ": step halving failed to increase the likelihood");
    }
    beta = candidate;
    ll = ll_new;
    if (beta.size() && beta.cwiseAbs().maxCoeff() > options.divergence_bound) {
      throw Error(divergence_kind, std::string(what) + ": coefficient exceeded " +
                                       std::to_string(options.divergence_bound) +
                                       " with the likelihood still increasing");
    }
  }
  throw Error(ErrorKind::NonConvergence,
              std::string(what) + ": no convergence in " + std::to_string(options.max_iterations) + " iterations");
}

}  // namespace bridge::detail
