#include "bridge/inference.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "bridge/error.hpp"
#include "bridge/parallel.hpp"

namespace bridge {

void BootstrapSpec::validate(double admin_censor_time) const {
  if (B < 2) throw Error(ErrorKind::InvalidConfig, "bootstrap needs B >= 2");
  if (t_grid.empty()) throw Error(ErrorKind::InvalidConfig, "bootstrap t_grid is empty");
  for (double t : t_grid) {
    if (!(t > 0.0) || t > admin_censor_time) {
      throw Error(ErrorKind::InvalidConfig, "bootstrap time " + format_double(t) + " outside (0, tau]");
    }
  }
}

FusedDataset stratified_resample(const FusedDataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> by_trial[2];
  for (std::size_t i = 0; i < ds.size(); ++i) by_trial[ds.records()[i].s == kSourceTrial ? 0 : 1].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<SubjectRecord> out;
  out.reserve(ds.size());
  for (const auto& rows : by_trial) {
    if (rows.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    for (std::size_t k = 0; k < rows.size(); ++k) out.push_back(ds.records()[rows[pick(rng)]]);
  }
  return FusedDataset(std::move(out), ds.admin_censor_time(), ds.schema(), ds.provenance());
}

namespace {

bool redrawable(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Separation:
    case ErrorKind::RankDeficient:
    case ErrorKind::AllSameClass:
    case ErrorKind::NonConvergence:
    case ErrorKind::MonotoneLikelihood:
    case ErrorKind::UnknownStratum:
    case ErrorKind::ZeroEffectiveSampleSize:
    case ErrorKind::NonFiniteWeight:
      return true;
    default:
      return false;
  }
}

}  // namespace

ReplicateMatrix bootstrap_replicates(const FusedDataset& ds, const BootstrapSpec& spec,
                                     const std::function<std::vector<double>(const FusedDataset&)>& statistic) {
  if (spec.B < 2) throw Error(ErrorKind::InvalidConfig, "bootstrap needs B >= 2");
  ReplicateMatrix m;
  m.t_grid = spec.t_grid;
  m.values.assign(spec.B, {});
  std::vector<std::size_t> failures(spec.B, 0);
  const std::size_t limit = spec.B / 10;

  parallel_for(spec.B, spec.workers, [&](std::size_t b) {
    std::mt19937_64 stream(derive_seed(spec.seed, seed_stream::kBootstrap, b));
    while (true) {
      const FusedDataset resample = stratified_resample(ds, stream());
      try {
        m.values[b] = statistic(resample);
        return;
      } catch (const Error& e) {
        if (!redrawable(e)) throw;
      }
      if (++failures[b] > limit) {
        throw Error(ErrorKind::TooManyFailedReplicates,
                    "more than 10% of " + std::to_string(spec.B) + " bootstrap replicates failed");
      }
    }
  });
  for (auto f : failures) m.failed_replicates += f;
  if (m.failed_replicates > limit) {
    throw Error(ErrorKind::TooManyFailedReplicates,
                std::to_string(m.failed_replicates) + " of " + std::to_string(spec.B) +
                    " bootstrap replicates failed (limit 10%)");
  }
  return m;
}

std::vector<double> column_sd(const std::vector<std::vector<double>>& values) {
  if (values.size() < 2) throw std::invalid_argument("column_sd needs at least two rows");
  const std::size_t k = values.front().size();
  std::vector<double> sd(k, 0.0);
  const double n = static_cast<double>(values.size());
  for (std::size_t j = 0; j < k; ++j) {
    // shifted by the first value so a constant column gives exactly 0
    const double shift = values.front()[j];
    double mean = 0.0;
    for (const auto& row : values) mean += row[j] - shift;
    mean /= n;
    double ss = 0.0;
    for (const auto& row : values) ss += (row[j] - shift - mean) * (row[j] - shift - mean);
    sd[j] = std::sqrt(ss / (n - 1.0));
  }
  return sd;
}

RiskDifferenceCurve with_bands(const RiskDifferenceCurve& estimate, const std::vector<double>& t_grid,
                               const std::vector<double>& se) {
  if (se.size() != t_grid.size()) throw std::invalid_argument("se length does not match t_grid");
  RiskDifferenceCurve out;
  std::vector<double> s{0.0}, lo, hi;
  out.grid.push_back(0.0);
  out.rd.push_back(estimate.value(0.0));
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    if (t_grid[k] <= out.grid.back()) throw std::invalid_argument("t_grid must be strictly increasing");
    out.grid.push_back(t_grid[k]);
    out.rd.push_back(estimate.value(t_grid[k]));
    s.push_back(se[k]);
  }
  for (std::size_t k = 0; k < out.grid.size(); ++k) {
    lo.push_back(out.rd[k] - kZ975 * s[k]);
    hi.push_back(out.rd[k] + kZ975 * s[k]);
  }
  out.se = std::move(s);
  out.ci_lo = std::move(lo);
  out.ci_hi = std::move(hi);
  return out;
}

BootstrapResult bootstrap_bridged(const FusedDataset& ds, const PipelineConfig& config, const BootstrapSpec& spec,
                                  const BridgedEstimate* point) {
  spec.validate(ds.admin_censor_time());
  BridgedEstimate own;
  if (point == nullptr) {
    own = estimate_bridged(ds, config);
    point = &own;
  }
  const std::size_t k = spec.t_grid.size();
  const ReplicateMatrix all = bootstrap_replicates(ds, spec, [&](const FusedDataset& rs) {
    const BridgedEstimate e = estimate_bridged(rs, config);
    std::vector<double> v;
    v.reserve(3 * k);
    for (const auto* rd : {&e.rd_32, &e.rd_21, &e.rd_31}) {
      for (double t : spec.t_grid) v.push_back(rd->value(t));
    }
    return v;
  });

  std::vector<std::vector<double>> parts[3];
  for (const auto& row : all.values) {
    for (std::size_t c = 0; c < 3; ++c) {
      parts[c].emplace_back(row.begin() + static_cast<std::ptrdiff_t>(c * k),
                            row.begin() + static_cast<std::ptrdiff_t>((c + 1) * k));
    }
  }
  BootstrapResult out;
  out.rd_32 = with_bands(point->rd_32, spec.t_grid, column_sd(parts[0]));
  out.rd_21 = with_bands(point->rd_21, spec.t_grid, column_sd(parts[1]));
  out.rd_31 = with_bands(point->rd_31, spec.t_grid, column_sd(parts[2]));
  out.replicates_31.t_grid = spec.t_grid;
  out.replicates_31.values = std::move(parts[2]);
  out.replicates_31.failed_replicates = all.failed_replicates;
  out.failed_replicates = all.failed_replicates;
  return out;
}

RdBootstrap bootstrap_rd(const FusedDataset& ds, const PipelineConfig& config, const BootstrapSpec& spec) {
  BootstrapResult r = bootstrap_bridged(ds, config, spec);
  return RdBootstrap{std::move(r.rd_31), std::move(r.replicates_31)};
}

void write_replicates_csv(std::ostream& out, const ReplicateMatrix& m) {
  out << "b,t,rd\n";
  for (std::size_t b = 0; b < m.values.size(); ++b) {
    for (std::size_t k = 0; k < m.t_grid.size(); ++k) {
      out << (b + 1) << ',' << format_double(m.t_grid[k]) << ',' << format_double(m.values[b][k]) << '\n';
    }
  }
}

}  // namespace bridge
