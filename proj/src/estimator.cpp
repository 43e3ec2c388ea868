#include "bridge/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bridge/error.hpp"

namespace bridge {

namespace {

std::vector<std::size_t> rows_where(const FusedDataset& ds, int s) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.records()[i].s == s) rows.push_back(i);
  }
  return rows;
}

LogisticFit fit_treatment(const FusedDataset& ds, int s, const NewtonOptions& newton) {
  const auto rows = rows_where(ds, s);
  if (rows.empty()) {
    throw Error(ErrorKind::ZeroEffectiveSampleSize, "trial s=" + std::to_string(s) + " has no records");
  }
  std::vector<double> y;
  y.reserve(rows.size());
  for (auto i : rows) y.push_back(ds.records()[i].a == kArmShared ? 1.0 : 0.0);
  return fit_logistic(y, ds.records(), rows, DesignSpec(), newton);
}

CoxFit fit_censoring(const FusedDataset& ds, int s, const PipelineConfig& config) {
  const auto rows = rows_where(ds, s);
  DesignSpec design = resolve_design(config.censoring, ds.schema(), ds.records(), rows);
  CoxData data;
  data.time.reserve(rows.size());
  data.event.reserve(rows.size());
  data.stratum.reserve(rows.size());
  for (auto i : rows) {
    const auto& r = ds.records()[i];
    data.time.push_back(r.t_star);
    data.event.push_back(is_dropout(r, ds.admin_censor_time()) ? 1 : 0);
    data.stratum.push_back(config.censoring_by_arm ? r.a : 0);
  }
  data.X = design.matrix(ds.records(), rows, false);
  CoxFit fit = fit_cox(data, config.newton);
  fit.design = std::move(design);
  return fit;
}

LogisticFit fit_sampling(const FusedDataset& ds, const PipelineConfig& config) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  DesignSpec design = resolve_design(config.sampling, ds.schema(), ds.records(), rows);
  std::vector<double> y;
  y.reserve(ds.size());
  for (const auto& r : ds.records()) y.push_back(r.s == kSourceTrial ? 1.0 : 0.0);
  return fit_logistic(y, ds.records(), rows, std::move(design), config.newton);
}

}  // namespace

// ---------------------------------------------------------------------------

double NuisanceFits::treatment_probability(int s, int a) const {
  const double p_shared = predict_prob(treatment[static_cast<std::size_t>(s)], {});
  return a == kArmShared ? p_shared : 1.0 - p_shared;
}

double NuisanceFits::censoring_survival(const SubjectRecord& r, double t) const {
  return bridge::censoring_survival(censoring[static_cast<std::size_t>(r.s)], t, r.covariates,
                                    censoring_by_arm ? r.a : 0);
}

double NuisanceFits::sampling_probability(const SubjectRecord& r) const {
  return predict_prob(sampling, r.covariates);
}

NuisanceFits fit_nuisance(const FusedDataset& ds, const PipelineConfig& config) {
  NuisanceFits fits;
  fits.censoring_by_arm = config.censoring_by_arm;
  fits.admin_censor_time = ds.admin_censor_time();
  for (int s = 0; s <= 1; ++s) {
    fits.treatment[static_cast<std::size_t>(s)] = fit_treatment(ds, s, config.newton);
    fits.censoring[static_cast<std::size_t>(s)] = fit_censoring(ds, s, config);
  }
  fits.sampling = fit_sampling(ds, config);
  return fits;
}

std::vector<double> sampling_odds_weights(const LogisticFit& fit, const FusedDataset& ds) {
  std::vector<double> w(ds.size(), 1.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records()[i];
    if (r.s != kSourceTrial) continue;
    const double pi_s = predict_prob(fit, r.covariates);
    const double odds = (1.0 - pi_s) / pi_s;
    if (!std::isfinite(odds) || !(odds > 0.0)) {
      throw Error(ErrorKind::NonFiniteWeight,
                  "sampling odds weight for record '" + r.id + "' is not finite and positive (pi_S=" +
                      std::to_string(pi_s) + ")");
    }
    w[i] = odds;
  }
  return w;
}

WeightSet compute_weights(const FusedDataset& ds, const NuisanceFits& fits, const PipelineConfig& config) {
  WeightSet ws;
  ws.records.resize(ds.size());
  const std::vector<double> odds = sampling_odds_weights(fits.sampling, ds);
  const double p_shared[2] = {fits.treatment_probability(0, kArmShared), fits.treatment_probability(1, kArmShared)};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records()[i];
    RecordWeights& w = ws.records[i];
    w.sampling_odds = odds[i];
    const double ps = p_shared[r.s == kSourceTrial ? 0 : 1];
    w.treatment_prob = r.a == kArmShared ? ps : 1.0 - ps;
    w.censoring_surv = fits.censoring_survival(r, r.t_star);
    w.multiplier = w.sampling_odds / (w.treatment_prob * w.censoring_surv);
    if (!std::isfinite(w.multiplier) || !(w.multiplier > 0.0)) {
      throw Error(ErrorKind::NonFiniteWeight, "weight for record '" + r.id + "' is not finite and positive");
    }
    if (r.delta == 1) {
      if (w.multiplier > config.extreme_weight_cap) {
        ++ws.extreme_count;
        if (config.truncate_weights) w.multiplier = config.extreme_weight_cap;
      }
      ws.max_multiplier = std::max(ws.max_multiplier, w.multiplier);
    }
  }
  return ws;
}

WeightedSampleSize weighted_n175(const FusedDataset& ds, const WeightSet& weights) {
  WeightedSampleSize out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.records()[i].s == kSourceTrial) {
      out.n_source_weighted += weights.records[i].sampling_odds;
    } else {
      out.n_target += 1.0;
    }
  }
  out.ratio = out.n_target > 0.0 ? out.n_source_weighted / out.n_target : 0.0;
  return out;
}

RiskCurve ipw_risk(const FusedDataset& ds, const WeightSet& weights, int s, int a) {
  if (weights.records.size() != ds.size()) throw std::invalid_argument("ipw_risk: weight set size mismatch");
  double n_eff = 0.0;
  std::vector<double> times;
  std::vector<double> contributions;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records()[i];
    if (r.s != s) continue;
    n_eff += s == kTargetTrial ? 1.0 : weights.records[i].sampling_odds;
    if (r.a == a && r.delta == 1) {
      times.push_back(r.t_star);
      contributions.push_back(weights.records[i].multiplier);
    }
  }
  if (!(n_eff > 0.0)) {
    throw Error(ErrorKind::ZeroEffectiveSampleSize,
                "trial s=" + std::to_string(s) + " has zero effective sample size");
  }
  for (double& c : contributions) c /= n_eff;
  RiskCurve rc;
  rc.curve = StepFunction::from_increments(times, contributions, 0.0);
  rc.trial = s;
  rc.arm = a;
  rc.n_effective = n_eff;
  return rc;
}

RiskCurve ipw_risk(const FusedDataset& ds, const NuisanceFits& fits, const PipelineConfig& config, int s,
                   int a) {
  return ipw_risk(ds, compute_weights(ds, fits, config), s, a);
}

// ---------------------------------------------------------------------------

double RiskDifferenceCurve::value(double t) const {
  auto it = std::upper_bound(grid.begin(), grid.end(), t);
  if (it == grid.begin()) return 0.0;
  return rd[static_cast<std::size_t>(it - grid.begin()) - 1];
}

namespace {

std::vector<double> grid_with_origin(std::vector<double> g) {
  if (g.empty() || g.front() > 0.0) g.insert(g.begin(), 0.0);
  return g;
}

}  // namespace

RiskDifferenceCurve risk_difference(const StepFunction& hi, const StepFunction& lo) {
  RiskDifferenceCurve out;
  out.grid = grid_with_origin(union_grid(hi, lo));
  out.rd.reserve(out.grid.size());
  for (double t : out.grid) out.rd.push_back(hi(t) - lo(t));
  return out;
}

RiskDifferenceCurve risk_difference(const RiskCurve& hi, const RiskCurve& lo) {
  return risk_difference(hi.curve, lo.curve);
}

RiskDifferenceCurve bridged_rd(const RiskDifferenceCurve& rd_32, const RiskDifferenceCurve& rd_21) {
  RiskDifferenceCurve out;
  out.grid = grid_with_origin(union_grid(rd_32.grid, rd_21.grid));
  out.rd.reserve(out.grid.size());
  for (double t : out.grid) out.rd.push_back(rd_32.value(t) + rd_21.value(t));
  return out;
}

BridgedEstimate estimate_bridged(const FusedDataset& ds, const PipelineConfig& config) {
  BridgedEstimate est;
  est.fits = fit_nuisance(ds, config);
  est.weights = compute_weights(ds, est.fits, config);
  est.sample_size = weighted_n175(ds, est.weights);
  est.risk_target_shared = ipw_risk(ds, est.weights, kTargetTrial, kArmShared);
  est.risk_target_triple = ipw_risk(ds, est.weights, kTargetTrial, kArmTriple);
  est.risk_source_mono = ipw_risk(ds, est.weights, kSourceTrial, kArmMono);
  est.risk_source_shared = ipw_risk(ds, est.weights, kSourceTrial, kArmShared);
  est.rd_32 = risk_difference(est.risk_target_triple, est.risk_target_shared);
  est.rd_21 = risk_difference(est.risk_source_shared, est.risk_source_mono);
  est.rd_31 = bridged_rd(est.rd_32, est.rd_21);
  return est;
}

}  // namespace bridge
