#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "bridge/estimator.hpp"

namespace bridge {

inline constexpr double kZ975 = 1.959964;

struct BootstrapSpec {
  std::size_t B = 200;
  std::uint64_t seed = 0;
  std::vector<double> t_grid;  // evaluation times in (0, admin_censor_time]
  unsigned workers = 1;

  void validate(double admin_censor_time) const;
};

// Resamples records with replacement separately within each trial (n175 from
// s=0, n320 from s=1).
FusedDataset stratified_resample(const FusedDataset& ds, std::uint64_t seed);

struct ReplicateMatrix {
  std::vector<double> t_grid;
  std::vector<std::vector<double>> values;  // values[b][k]
  std::size_t failed_replicates = 0;        // redrawn replicates
};

// Runs statistic on B stratified resamples. A replicate whose statistic throws
// a model-fitting or estimation Error is redrawn from the same replicate
// stream; more than 10% of B failures throws TooManyFailedReplicates.
ReplicateMatrix bootstrap_replicates(const FusedDataset& ds, const BootstrapSpec& spec,
                                     const std::function<std::vector<double>(const FusedDataset&)>& statistic);

// Sample SD (n-1 denominator) per column.
std::vector<double> column_sd(const std::vector<std::vector<double>>& values);

// Attaches se and estimate +/- z se bands on {0} U t_grid to a point estimate.
RiskDifferenceCurve with_bands(const RiskDifferenceCurve& estimate, const std::vector<double>& t_grid,
                               const std::vector<double>& se);

struct BootstrapResult {
  RiskDifferenceCurve rd_32;
  RiskDifferenceCurve rd_21;
  RiskDifferenceCurve rd_31;
  ReplicateMatrix replicates_31;
  std::size_t failed_replicates = 0;
};

// Refits every nuisance model within each replicate and reports bands for
// all three risk differences.
BootstrapResult bootstrap_bridged(const FusedDataset& ds, const PipelineConfig& config, const BootstrapSpec& spec,
                                  const BridgedEstimate* point = nullptr);

struct RdBootstrap {
  RiskDifferenceCurve curve;  // RD(3-1) on {0} U t_grid with bands
  ReplicateMatrix replicates;
};

RdBootstrap bootstrap_rd(const FusedDataset& ds, const PipelineConfig& config, const BootstrapSpec& spec);

// Audit dump with columns b,t,rd (b is 1-based).
void write_replicates_csv(std::ostream& out, const ReplicateMatrix& m);

}  // namespace bridge
