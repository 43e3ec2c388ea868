#include "bridge/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bridge/error.hpp"
#include "newton.hpp"

namespace bridge {

namespace {

struct Stratum {
  int label = 0;
  std::vector<std::size_t> rows;  // sorted by decreasing time
  double max_eta = 0.0;
};

std::vector<Stratum> group_strata(const CoxData& d) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < d.time.size(); ++i) by_label[d.stratum[i]].push_back(i);
  std::vector<Stratum> out;
  for (auto& [label, rows] : by_label) {
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return d.time[a] > d.time[b]; });
    out.push_back(Stratum{label, std::move(rows), 0.0});
  }
  return out;
}

// Walks each stratum from the latest time backwards, accumulating risk-set
// sums. Visitor is called once per distinct event time with
// (stratum, time, d, sum_x_events, S0, S1, S2, shift).
class RiskSetWalker {
 public:
  RiskSetWalker(const CoxData& data) : data_(data), strata_(group_strata(data)) {}

  const std::vector<Stratum>& strata() const { return strata_; }

  template <class Visitor>
  void walk(const Eigen::VectorXd& beta, bool second_order, Visitor&& visit) const {
    const Eigen::Index p = data_.X.cols();
    Eigen::VectorXd eta = p ? Eigen::VectorXd(data_.X * beta) : Eigen::VectorXd::Zero(data_.X.rows());
    Eigen::VectorXd s1(p), xsum(p);
    Eigen::MatrixXd s2(second_order ? p : 0, second_order ? p : 0);
    for (const auto& st : strata_) {
      double shift = -INFINITY;
      for (auto i : st.rows) shift = std::max(shift, eta(static_cast<Eigen::Index>(i)));
      double s0 = 0.0;
      s1.setZero();
      if (second_order) s2.setZero();
      for (std::size_t k = 0; k < st.rows.size();) {
        const double t = data_.time[st.rows[k]];
        int d = 0;
        xsum.setZero();
        double eta_events = 0.0;
        std::size_t j = k;
        for (; j < st.rows.size() && data_.time[st.rows[j]] == t; ++j) {
          const auto i = static_cast<Eigen::Index>(st.rows[j]);
          const double r = std::exp(eta(i) - shift);
          s0 += r;
          if (p) {
            s1 += r * data_.X.row(i).transpose();
            if (second_order) s2 += r * data_.X.row(i).transpose() * data_.X.row(i);
          }
          if (data_.event[st.rows[j]]) {
            ++d;
            eta_events += eta(i);
            if (p) xsum += data_.X.row(i).transpose();
          }
        }
        if (d > 0) visit(st, t, d, eta_events, xsum, s0, s1, s2, shift);
        k = j;
      }
    }
  }

 private:
  const CoxData& data_;
  std::vector<Stratum> strata_;
};

struct CoxObjective {
  const RiskSetWalker& walker;

  double value(const Eigen::VectorXd& beta) const {
    double ll = 0.0;
    walker.walk(beta, false, [&](const Stratum&, double, int d, double eta_events, const Eigen::VectorXd&,
                                 double s0, const Eigen::VectorXd&, const Eigen::MatrixXd&, double shift) {
      ll += eta_events - d * (std::log(s0) + shift);
    });
    return ll;
  }

  void derivatives(const Eigen::VectorXd& beta, Eigen::VectorXd& grad, Eigen::MatrixXd& info) const {
    grad.setZero(beta.size());
    info.setZero(beta.size(), beta.size());
    walker.walk(beta, true, [&](const Stratum&, double, int d, double, const Eigen::VectorXd& xsum, double s0,
                                const Eigen::VectorXd& s1, const Eigen::MatrixXd& s2, double) {
      const Eigen::VectorXd mean = s1 / s0;
      grad += xsum - d * mean;
      info += d * (s2 / s0 - mean * mean.transpose());
    });
  }
};

void check_data(const CoxData& d) {
  const std::size_t n = d.time.size();
  if (d.event.size() != n || d.stratum.size() != n || static_cast<std::size_t>(d.X.rows()) != n) {
    throw std::invalid_argument("CoxData: inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(d.time[i])) throw Error(ErrorKind::InvalidValue, "Cox time is not finite");
    if (d.event[i] != 0 && d.event[i] != 1) throw Error(ErrorKind::InvalidValue, "Cox event must be 0/1");
  }
}

}  // namespace

double cox_log_partial_likelihood(const CoxData& data, const Eigen::VectorXd& beta) {
  check_data(data);
  RiskSetWalker walker(data);
  return CoxObjective{walker}.value(beta);
}

Eigen::VectorXd cox_score(const CoxData& data, const Eigen::VectorXd& beta) {
  check_data(data);
  RiskSetWalker walker(data);
  Eigen::VectorXd g;
  Eigen::MatrixXd info;
  CoxObjective{walker}.derivatives(beta, g, info);
  return g;
}

CoxFit fit_cox(const CoxData& data, const NewtonOptions& options) {
  check_data(data);
  const Eigen::Index p = data.X.cols();
  RiskSetWalker walker(data);

  CoxFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  fit.converged = true;

  if (p > 0) {
    const int events = std::accumulate(data.event.begin(), data.event.end(), 0);
    if (events == 0) throw Error(ErrorKind::RankDeficient, "Cox model with covariates needs at least one event");
    Eigen::MatrixXd centered = data.X.rowwise() - data.X.colwise().mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centered);
    if (qr.rank() < p) {
      throw Error(ErrorKind::RankDeficient, "Cox design has rank " + std::to_string(qr.rank()) + " < " +
                                                std::to_string(p) + " after centering");
    }
    auto result = detail::newton_maximize(CoxObjective{walker}, Eigen::VectorXd::Zero(p), options,
                                          ErrorKind::MonotoneLikelihood, "Cox fit");
    fit.coefficients = std::move(result.beta);
    fit.iterations = result.iterations;
  }
  fit.log_partial_likelihood = CoxObjective{walker}.value(fit.coefficients);

  // Breslow baseline.
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> jumps;
  walker.walk(fit.coefficients, false,
              [&](const Stratum& st, double t, int d, double, const Eigen::VectorXd&, double s0,
                  const Eigen::VectorXd&, const Eigen::MatrixXd&, double shift) {
                auto& [times, incs] = jumps[st.label];
                times.push_back(t);
                incs.push_back(static_cast<double>(d) / (s0 * std::exp(shift)));
              });
  for (const auto& st : walker.strata()) {
    fit.strata.push_back(st.label);
    auto it = jumps.find(st.label);
    if (it == jumps.end()) {
      fit.baseline_cumhaz.emplace(st.label, StepFunction());
      continue;
    }
    auto times = it->second.first;
    auto incs = it->second.second;
    std::reverse(times.begin(), times.end());
    std::reverse(incs.begin(), incs.end());
    std::vector<double> cum(incs.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < incs.size(); ++k) cum[k] = (acc += incs[k]);
    fit.baseline_cumhaz.emplace(st.label, StepFunction(std::move(times), std::move(cum), 0.0));
  }
  return fit;
}

double censoring_survival(const CoxFit& fit, double t, std::span<const double> covariates, int stratum) {
  auto it = fit.baseline_cumhaz.find(stratum);
  if (it == fit.baseline_cumhaz.end()) {
    throw Error(ErrorKind::UnknownStratum, "stratum " + std::to_string(stratum) + " was not in the censoring fit");
  }
  const double cumhaz = it->second.left_limit(t);
  if (cumhaz == 0.0) return 1.0;
  double eta = 0.0;
  if (fit.coefficients.size() > 0) {
    thread_local std::vector<double> buf;
    buf.clear();
    fit.design.expand(covariates, buf);
    if (static_cast<Eigen::Index>(buf.size()) != fit.coefficients.size()) {
      throw Error(ErrorKind::SchemaMismatch, "design width does not match Cox coefficients");
    }
    for (std::size_t j = 0; j < buf.size(); ++j) eta += buf[j] * fit.coefficients(static_cast<Eigen::Index>(j));
  }
  return std::exp(-cumhaz * std::exp(eta));
}

StepFunction nelson_aalen(std::span<const double> times, std::span<const int> events) {
  if (times.size() != events.size()) throw std::invalid_argument("nelson_aalen: length mismatch");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  std::vector<double> jt;
  std::vector<double> vals;
  double acc = 0.0;
  std::size_t at_risk = times.size();
  for (std::size_t k = 0; k < order.size();) {
    const double t = times[order[k]];
    std::size_t tied = 0;
    int d = 0;
    while (k + tied < order.size() && times[order[k + tied]] == t) {
      d += events[order[k + tied]] ? 1 : 0;
      ++tied;
    }
    if (d > 0) {
      acc += static_cast<double>(d) / static_cast<double>(at_risk);
      jt.push_back(t);
      vals.push_back(acc);
    }
    at_risk -= tied;
    k += tied;
  }
  return StepFunction(std::move(jt), std::move(vals), 0.0);
}

}  // namespace bridge
