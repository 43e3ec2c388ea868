#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bridge/estimator.hpp"

namespace bridge {

// Area between two risk functions on the grid {0} U {jump times <= t_max}
// (plus t_max when pad_to_t_max): sum_k |c1(t_k) - c2(t_k)| * (t_{k+1} - t_k),
// with zero width after the last grid point.
double area_between(const StepFunction& c1, const StepFunction& c2, double t_max, bool pad_to_t_max = false);
double area_between(const RiskCurve& c1, const RiskCurve& c2, double t_max, bool pad_to_t_max = false);

// Shared-arm (a=2) area statistic with weights frozen at their original-data
// values. Records keep their own treatment probability, censoring survival,
// and sampling odds; only the group membership S* changes. The group-s curve
// is normalized by the sum of sampling odds over records with S* = s, which
// reproduces the n320 / n175-hat estimators when S* = S.
class SharedArmAreaStatistic {
 public:
  // weighted=false replaces every sampling odds weight by 1.
  SharedArmAreaStatistic(const FusedDataset& ds, const WeightSet& weights, bool weighted, double t_max,
                         bool pad_to_t_max = false);

  // Returns nullopt when one group has no shared-arm record or zero weight.
  std::optional<double> area(std::span<const int> s_star) const;
  const std::vector<int>& original_trials() const noexcept { return original_s_; }

 private:
  std::vector<int> original_s_;
  std::vector<int> shared_;              // 1 if a=2
  std::vector<double> normalizer_;       // per record
  std::vector<std::size_t> event_order_;  // shared-arm events with t <= t_max, by time
  std::vector<double> event_contrib_;    // aligned with event_order
  std::vector<std::size_t> block_end_;   // end index (exclusive) of each distinct event time
  std::vector<double> grid_;             // 0, distinct event times, optional t_max
};

struct PermutationSpec {
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
  bool add_one = false;        // (count + 1) / (p + 1)
  bool weighted = true;        // apply inverse odds of sampling weights
  bool refit = false;          // refit nuisance models under each S* (sensitivity analysis)
  bool pad_to_t_max = false;
  std::optional<double> t_max;  // defaults to the administrative censoring time
  unsigned workers = 1;
};

struct PermutationResult {
  double observed_area = 0.0;
  std::vector<double> permuted_areas;
  double p_value = 1.0;
  std::size_t p = 0;
  std::uint64_t seed = 0;
  std::size_t skipped_permutations = 0;
  std::size_t exceed_count = 0;  // permuted areas strictly above the observed area
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kRecommendedMinPermutations = 1000;

// Permutes the trial indicator across all records. Deterministic given seed
// regardless of spec.workers. Degenerate permutations are redrawn and counted;
// throws DegeneratePermutation once redraws exceed 10 * p.
PermutationResult permutation_test(const FusedDataset& ds, const WeightSet& weights, const PermutationSpec& spec);
PermutationResult permutation_test(const FusedDataset& ds, const NuisanceFits& fits, const PipelineConfig& config,
                                   const PermutationSpec& spec);

// Enumerates every distinct assignment of the trial labels (frozen weights).
// Intended for small data; throws InvalidConfig when the count exceeds
// max_assignments.
PermutationResult exact_permutation_test(const FusedDataset& ds, const WeightSet& weights, bool weighted,
                                         double t_max, bool add_one = false, std::size_t max_assignments = 1000000);

struct TwisterRow {
  double t = 0.0;
  double rd = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Step-function encoding of a risk difference: one row at t=0, two rows at
// every later grid point (value before and after the jump), and a final row at
// t_max. Throws MissingBands when bands are requested but absent.
std::vector<TwisterRow> twister_export(const RiskDifferenceCurve& rd, double t_max, bool with_bands);
void write_twister_csv(std::ostream& out, const std::vector<TwisterRow>& rows, bool with_bands);
std::vector<TwisterRow> read_twister_csv(std::istream& in);

struct BalanceRow {
  std::string covariate;
  double mean_source_weighted = 0.0;  // reweighted s=0 data
  double mean_target = 0.0;           // s=1 data
  double smd = 0.0;                   // (target - source) / pooled SD
  bool zero_variance_flag = false;    // pooled SD is 0 and means differ (smd is NaN)
};

std::vector<BalanceRow> covariate_balance(const FusedDataset& ds, const WeightSet& weights,
                                          const std::vector<std::string>& covariates);

}  // namespace bridge
