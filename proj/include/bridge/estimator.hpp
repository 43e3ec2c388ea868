#pragma once

#include <array>
#include <optional>
#include <vector>

#include "bridge/cox.hpp"
#include "bridge/data.hpp"
#include "bridge/design.hpp"
#include "bridge/logistic.hpp"
#include "bridge/step_function.hpp"

namespace bridge {

struct PipelineConfig {
  // Censoring (drop-out) model, fit separately in each trial. An empty
  // formula gives the Nelson-Aalen estimator within each stratum.
  ModelFormula censoring;
  bool censoring_by_arm = true;
  // Sampling model for Pr(S=0 | V), fit on the stacked trials.
  ModelFormula sampling;
  // Records whose total weight multiplier exceeds the cap are flagged; they
  // are only truncated when truncate_weights is set.
  double extreme_weight_cap = 50.0;
  bool truncate_weights = false;
  NewtonOptions newton;
};

struct NuisanceFits {
  // Intercept-only logistic per trial for Pr(A = 2 | S = s); the other arm of
  // the trial gets the complement.
  std::array<LogisticFit, 2> treatment;
  std::array<CoxFit, 2> censoring;
  LogisticFit sampling;
  bool censoring_by_arm = true;
  double admin_censor_time = 365.0;

  double treatment_probability(int s, int a) const;
  // Probability of remaining uncensored just before t for record r.
  double censoring_survival(const SubjectRecord& r, double t) const;
  // pi_S: estimated Pr(S=0 | V).
  double sampling_probability(const SubjectRecord& r) const;
};

// Drop-out indicator for the censoring model: censored before the
// administrative censoring time.
inline bool is_dropout(const SubjectRecord& r, double admin_censor_time) {
  return r.delta == 0 && r.t_star < admin_censor_time;
}

NuisanceFits fit_nuisance(const FusedDataset& ds, const PipelineConfig& config);

struct RecordWeights {
  double treatment_prob = 1.0;  // Pr(A = a_i | S = s_i)
  double censoring_surv = 1.0;  // pi_C at t_i-
  double sampling_odds = 1.0;   // 1 for s=1; (1 - pi_S) / pi_S for s=0
  double multiplier = 1.0;      // sampling_odds / (treatment_prob * censoring_surv), possibly truncated
};

struct WeightSet {
  std::vector<RecordWeights> records;
  std::size_t extreme_count = 0;  // event records whose multiplier exceeded the cap
  double max_multiplier = 0.0;
};

WeightSet compute_weights(const FusedDataset& ds, const NuisanceFits& fits, const PipelineConfig& config);

// Inverse odds of sampling weights from a fit of Pr(S=0 | V).
std::vector<double> sampling_odds_weights(const LogisticFit& fit, const FusedDataset& ds);

struct WeightedSampleSize {
  double n_source_weighted = 0.0;  // n175-hat
  double n_target = 0.0;           // n320
  double ratio = 0.0;              // n175-hat / n320
};

WeightedSampleSize weighted_n175(const FusedDataset& ds, const WeightSet& weights);

struct RiskCurve {
  StepFunction curve;
  int trial = kTargetTrial;
  int arm = kArmShared;
  double n_effective = 0.0;
};

// Weighted cumulative incidence for arm a of trial s, normalized by n320
// (s=1) or n175-hat (s=0).
RiskCurve ipw_risk(const FusedDataset& ds, const WeightSet& weights, int s, int a);
RiskCurve ipw_risk(const FusedDataset& ds, const NuisanceFits& fits, const PipelineConfig& config, int s,
                   int a);

struct RiskDifferenceCurve {
  std::vector<double> grid;  // starts at 0, strictly increasing
  std::vector<double> rd;
  std::optional<std::vector<double>> se;
  std::optional<std::vector<double>> ci_lo;
  std::optional<std::vector<double>> ci_hi;

  double value(double t) const;
  bool has_bands() const { return se && ci_lo && ci_hi; }
};

RiskDifferenceCurve risk_difference(const StepFunction& hi, const StepFunction& lo);
RiskDifferenceCurve risk_difference(const RiskCurve& hi, const RiskCurve& lo);
// Pointwise sum on the union grid: RD(3-1) = RD(3-2) + RD(2-1).
RiskDifferenceCurve bridged_rd(const RiskDifferenceCurve& rd_32, const RiskDifferenceCurve& rd_21);

struct BridgedEstimate {
  NuisanceFits fits;
  WeightSet weights;
  WeightedSampleSize sample_size;
  RiskCurve risk_target_shared;   // s=1, a=2
  RiskCurve risk_target_triple;   // s=1, a=3
  RiskCurve risk_source_mono;     // s=0, a=1
  RiskCurve risk_source_shared;   // s=0, a=2
  RiskDifferenceCurve rd_32;
  RiskDifferenceCurve rd_21;
  RiskDifferenceCurve rd_31;
};

BridgedEstimate estimate_bridged(const FusedDataset& ds, const PipelineConfig& config);

}  // namespace bridge
