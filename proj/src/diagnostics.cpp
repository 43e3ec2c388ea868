#include "bridge/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "bridge/error.hpp"
#include "bridge/parallel.hpp"

namespace bridge {

// ---------------------------------------------------------------------------
// area between curves

double area_between(const StepFunction& c1, const StepFunction& c2, double t_max, bool pad_to_t_max) {
  std::vector<double> grid{0.0};
  for (double t : union_grid(c1, c2)) {
    if (t > 0.0 && t <= t_max) grid.push_back(t);
  }
  if (pad_to_t_max && grid.back() < t_max) grid.push_back(t_max);
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    area += std::fabs(c1(grid[k]) - c2(grid[k])) * (grid[k + 1] - grid[k]);
  }
  return area;
}

double area_between(const RiskCurve& c1, const RiskCurve& c2, double t_max, bool pad_to_t_max) {
  return area_between(c1.curve, c2.curve, t_max, pad_to_t_max);
}

// ---------------------------------------------------------------------------
// frozen-weight statistic

SharedArmAreaStatistic::SharedArmAreaStatistic(const FusedDataset& ds, const WeightSet& weights, bool weighted,
                                               double t_max, bool pad_to_t_max) {
  if (weights.records.size() != ds.size()) throw std::invalid_argument("weight set size mismatch");
  const std::size_t n = ds.size();
  original_s_.resize(n);
  shared_.resize(n);
  normalizer_.resize(n);
  std::vector<std::size_t> events;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = ds.records()[i];
    original_s_[i] = r.s;
    shared_[i] = r.a == kArmShared ? 1 : 0;
    normalizer_[i] = weighted ? weights.records[i].sampling_odds : 1.0;
    if (r.a == kArmShared && r.delta == 1 && r.t_star <= t_max) events.push_back(i);
  }
  std::stable_sort(events.begin(), events.end(),
                   [&](std::size_t a, std::size_t b) { return ds.records()[a].t_star < ds.records()[b].t_star; });
  event_order_ = events;
  grid_.push_back(0.0);
  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto& w = weights.records[events[k]];
    event_contrib_.push_back(weighted ? w.multiplier : 1.0 / (w.treatment_prob * w.censoring_surv));
    const double t = ds.records()[events[k]].t_star;
    if (k + 1 == events.size() || ds.records()[events[k + 1]].t_star != t) {
      block_end_.push_back(k + 1);
      if (t > 0.0) grid_.push_back(t);
    }
  }
  if (pad_to_t_max && grid_.back() < t_max) grid_.push_back(t_max);
}

std::optional<double> SharedArmAreaStatistic::area(std::span<const int> s_star) const {
  if (s_star.size() != original_s_.size()) throw std::invalid_argument("permuted indicator length mismatch");
  double norm[2] = {0.0, 0.0};
  std::size_t shared_count[2] = {0, 0};
  for (std::size_t i = 0; i < s_star.size(); ++i) {
    const int g = s_star[i] == kSourceTrial ? 0 : 1;
    norm[g] += normalizer_[i];
    shared_count[g] += static_cast<std::size_t>(shared_[i]);
  }
  if (shared_count[0] == 0 || shared_count[1] == 0 || !(norm[0] > 0.0) || !(norm[1] > 0.0)) {
    return std::nullopt;
  }

  double level[2] = {0.0, 0.0};
  double area = 0.0;
  std::size_t k = 0;
  // grid_[0] = 0 carries level 0 on both curves unless an event sits at t=0,
  // which validated data never has.
  std::size_t block = 0;
  for (std::size_t g = 0; g + 1 < grid_.size(); ++g) {
    if (g > 0 && block < block_end_.size()) {
      for (; k < block_end_[block]; ++k) {
        const std::size_t i = event_order_[k];
        const int grp = s_star[i] == kSourceTrial ? 0 : 1;
        level[grp] += event_contrib_[k] / norm[grp];
      }
      ++block;
    }
    area += std::fabs(level[1] - level[0]) * (grid_[g + 1] - grid_[g]);
  }
  return area;
}

// ---------------------------------------------------------------------------
// permutation tests

namespace {

double finalize_p(PermutationResult& res, double observed, bool add_one) {
  res.exceed_count = 0;
  for (double a : res.permuted_areas) {
    if (a > observed) ++res.exceed_count;
  }
  const double p = static_cast<double>(res.permuted_areas.size());
  res.p_value = add_one ? (static_cast<double>(res.exceed_count) + 1.0) / (p + 1.0)
                        : static_cast<double>(res.exceed_count) / p;
  return res.p_value;
}

}  // namespace

PermutationResult permutation_test(const FusedDataset& ds, const WeightSet& weights, const PermutationSpec& spec) {
  if (spec.permutations == 0) throw Error(ErrorKind::InvalidConfig, "permutation count must be positive");
  if (spec.refit) {
    throw Error(ErrorKind::InvalidConfig, "refit permutations need nuisance model settings");
  }
  const double t_max = spec.t_max.value_or(ds.admin_censor_time());
  const SharedArmAreaStatistic stat(ds, weights, spec.weighted, t_max, spec.pad_to_t_max);

  PermutationResult res;
  res.p = spec.permutations;
  res.seed = spec.seed;
  const auto observed = stat.area(stat.original_trials());
  if (!observed) {
    throw Error(ErrorKind::DegeneratePermutation, "observed data lacks shared-arm records in one trial");
  }
  res.observed_area = *observed;
  res.permuted_areas.assign(spec.permutations, 0.0);
  std::vector<std::size_t> skips(spec.permutations, 0);
  const std::size_t skip_limit = 10 * spec.permutations;

  parallel_for(spec.permutations, spec.workers, [&](std::size_t j) {
    std::mt19937_64 rng(derive_seed(spec.seed, seed_stream::kPermutation, j));
    std::vector<int> s_star = stat.original_trials();
    while (true) {
      std::shuffle(s_star.begin(), s_star.end(), rng);
      if (auto a = stat.area(s_star)) {
        res.permuted_areas[j] = *a;
        return;
      }
      if (++skips[j] > skip_limit) {
        throw Error(ErrorKind::DegeneratePermutation, "too many degenerate permutations");
      }
    }
  });
  res.skipped_permutations = std::accumulate(skips.begin(), skips.end(), std::size_t{0});
  if (res.skipped_permutations > skip_limit) {
    throw Error(ErrorKind::DegeneratePermutation,
                std::to_string(res.skipped_permutations) + " degenerate permutations exceed 10p");
  }
  finalize_p(res, res.observed_area, spec.add_one);
  if (spec.permutations < kRecommendedMinPermutations) {
    res.warnings.push_back("only " + std::to_string(spec.permutations) +
                           " permutations; at least 1000 are recommended");
  }
  return res;
}

PermutationResult permutation_test(const FusedDataset& ds, const NuisanceFits& fits, const PipelineConfig& config,
                                   const PermutationSpec& spec) {
  const WeightSet weights = compute_weights(ds, fits, config);
  if (!spec.refit) return permutation_test(ds, weights, spec);

  if (spec.permutations == 0) throw Error(ErrorKind::InvalidConfig, "permutation count must be positive");
  const double t_max = spec.t_max.value_or(ds.admin_censor_time());
  PermutationResult res;
  res.p = spec.permutations;
  res.seed = spec.seed;
  {
    const SharedArmAreaStatistic stat(ds, weights, spec.weighted, t_max, spec.pad_to_t_max);
    const auto observed = stat.area(stat.original_trials());
    if (!observed) throw Error(ErrorKind::DegeneratePermutation, "observed data lacks shared-arm records");
    res.observed_area = *observed;
  }
  std::vector<int> original(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) original[i] = ds.records()[i].s;

  res.permuted_areas.assign(spec.permutations, 0.0);
  std::vector<std::size_t> skips(spec.permutations, 0);
  const std::size_t skip_limit = 10 * spec.permutations;
  parallel_for(spec.permutations, spec.workers, [&](std::size_t j) {
    std::mt19937_64 rng(derive_seed(spec.seed, seed_stream::kPermutation, j));
    std::vector<int> s_star = original;
    while (true) {
      std::shuffle(s_star.begin(), s_star.end(), rng);
      try {
        const FusedDataset permuted = ds.with_trial_indicator(s_star);
        const NuisanceFits refit = fit_nuisance(permuted, config);
        const WeightSet w = compute_weights(permuted, refit, config);
        const SharedArmAreaStatistic stat(permuted, w, spec.weighted, t_max, spec.pad_to_t_max);
        if (auto a = stat.area(s_star)) {
          res.permuted_areas[j] = *a;
          return;
        }
      } catch (const Error& e) {
        if (is_input_error(e.kind())) throw;
      }
      if (++skips[j] > skip_limit) {
        throw Error(ErrorKind::DegeneratePermutation, "too many degenerate permutations");
      }
    }
  });
  res.skipped_permutations = std::accumulate(skips.begin(), skips.end(), std::size_t{0});
  if (res.skipped_permutations > skip_limit) {
    throw Error(ErrorKind::DegeneratePermutation, "degenerate permutations exceed 10p");
  }
  finalize_p(res, res.observed_area, spec.add_one);
  if (spec.permutations < kRecommendedMinPermutations) {
    res.warnings.push_back("only " + std::to_string(spec.permutations) +
                           " permutations; at least 1000 are recommended");
  }
  return res;
}

PermutationResult exact_permutation_test(const FusedDataset& ds, const WeightSet& weights, bool weighted,
                                         double t_max, bool add_one, std::size_t max_assignments) {
  const SharedArmAreaStatistic stat(ds, weights, weighted, t_max);
  const auto observed = stat.area(stat.original_trials());
  if (!observed) throw Error(ErrorKind::DegeneratePermutation, "observed data lacks shared-arm records");

  std::vector<int> labels = stat.original_trials();
  std::sort(labels.begin(), labels.end());
  const std::size_t n = labels.size();
  const auto ones = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  // C(n, ones), bailing out once the cap is exceeded
  double count = 1.0;
  for (std::size_t k = 1; k <= std::min(ones, n - ones); ++k) {
    count = count * static_cast<double>(n - std::min(ones, n - ones) + k) / static_cast<double>(k);
    if (count > static_cast<double>(max_assignments)) {
      throw Error(ErrorKind::InvalidConfig, "too many distinct assignments for exact enumeration");
    }
  }

  PermutationResult res;
  res.observed_area = *observed;
  do {
    if (auto a = stat.area(labels)) {
      res.permuted_areas.push_back(*a);
    } else {
      ++res.skipped_permutations;
    }
  } while (std::next_permutation(labels.begin(), labels.end()));
  res.p = res.permuted_areas.size();
  if (res.p == 0) throw Error(ErrorKind::DegeneratePermutation, "every assignment is degenerate");
  finalize_p(res, res.observed_area, add_one);
  return res;
}

// ---------------------------------------------------------------------------
// twister plot data

std::vector<TwisterRow> twister_export(const RiskDifferenceCurve& rd, double t_max, bool with_bands) {
  if (with_bands && !rd.has_bands()) {
    throw Error(ErrorKind::MissingBands, "confidence bands requested but the curve has none");
  }
  if (rd.grid.empty()) return {TwisterRow{0.0, 0.0, 0.0, 0.0}, TwisterRow{t_max, 0.0, 0.0, 0.0}};
  auto row = [&](double t, std::size_t k) {
    TwisterRow r{t, rd.rd[k], 0.0, 0.0};
    if (with_bands) {
      r.ci_lo = (*rd.ci_lo)[k];
      r.ci_hi = (*rd.ci_hi)[k];
    }
    return r;
  };
  std::vector<TwisterRow> rows;
  rows.push_back(row(rd.grid[0], 0));
  for (std::size_t k = 1; k < rd.grid.size(); ++k) {
    rows.push_back(row(rd.grid[k], k - 1));
    rows.push_back(row(rd.grid[k], k));
  }
  rows.push_back(row(std::max(t_max, rd.grid.back()), rd.grid.size() - 1));
  return rows;
}

void write_twister_csv(std::ostream& out, const std::vector<TwisterRow>& rows, bool with_bands) {
  out << (with_bands ? "t,rd,ci_lo,ci_hi\n" : "t,rd\n");
  for (const auto& r : rows) {
    out << format_double(r.t) << ',' << format_double(r.rd);
    if (with_bands) out << ',' << format_double(r.ci_lo) << ',' << format_double(r.ci_hi);
    out << '\n';
  }
}

std::vector<TwisterRow> read_twister_csv(std::istream& in) {
  std::vector<TwisterRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc()) throw Error(ErrorKind::NonNumericValue, "bad twister value '" + field + "'");
      vals.push_back(v);
    }
    if (vals.size() != 2 && vals.size() != 4) throw Error(ErrorKind::MissingColumn, "bad twister row");
    TwisterRow r{vals[0], vals[1], 0.0, 0.0};
    if (vals.size() == 4) {
      r.ci_lo = vals[2];
      r.ci_hi = vals[3];
    }
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// covariate balance

std::vector<BalanceRow> covariate_balance(const FusedDataset& ds, const WeightSet& weights,
                                          const std::vector<std::string>& covariates) {
  std::vector<BalanceRow> out;
  for (const auto& name : covariates) {
    const std::size_t j = ds.schema().index_of(name);
    double w_src = 0.0, sum_src = 0.0, n_tgt = 0.0, sum_tgt = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& r = ds.records()[i];
      const double x = r.covariates[j];
      if (r.s == kSourceTrial) {
        w_src += weights.records[i].sampling_odds;
        sum_src += weights.records[i].sampling_odds * x;
      } else {
        n_tgt += 1.0;
        sum_tgt += x;
      }
    }
    BalanceRow row;
    row.covariate = name;
    row.mean_source_weighted = sum_src / w_src;
    row.mean_target = sum_tgt / n_tgt;
    double var_src = 0.0, var_tgt = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& r = ds.records()[i];
      const double x = r.covariates[j];
      if (r.s == kSourceTrial) {
        var_src += weights.records[i].sampling_odds * (x - row.mean_source_weighted) * (x - row.mean_source_weighted);
      } else {
        var_tgt += (x - row.mean_target) * (x - row.mean_target);
      }
    }
    var_src /= w_src;
    var_tgt /= n_tgt;
    const double pooled = std::sqrt((var_src + var_tgt) / 2.0);
    const double diff = row.mean_target - row.mean_source_weighted;
    if (pooled > 0.0) {
      row.smd = diff / pooled;
    } else if (diff == 0.0) {
      row.smd = 0.0;
    } else {
      row.smd = std::nan("");
      row.zero_variance_flag = true;
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace bridge
