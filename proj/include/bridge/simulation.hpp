#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "bridge/data.hpp"

namespace bridge {

struct DgpParams {
  double w1_prob = 0.3;
  double z_mean = 0.3;
  double z_sd = 45.0;
  double w2_w1 = -7.0;
  double w2_min = 0.0;
  double w2_max = 1600.0;
  // Pr(S=1) = expit(s_intercept + s_w1 W1 + s_w2 (W2 - s_w2_center))
  double s_intercept = 0.5;
  double s_w1 = -1.5;
  double s_w2 = 0.02;
  double s_w2_center = 250.0;
  double treat_prob = 0.5;
  // log lambda(a, W1, W2)
  double lam_intercept = 4.9;
  double lam_a2 = 0.4;
  double lam_a3 = 1.5;
  double lam_w1 = -3.0;
  double lam_w2 = 0.01;
  double lam_a2_w1 = -0.2;
  double lam_a3_w1 = -0.25;
  double event_power = 0.8;  // T = (-lambda ln U)^event_power
  double cens_scale = 7.2;   // C = (-cens_scale ln U~)^cens_power
  double cens_power = 3.0;
  double admin_censor_time = 365.0;
  double pool_multiplier = 3.0;

  void validate() const;
};

double dgp_lambda(const DgpParams& p, int a, int w1, double w2);
// Potential event time under arm a for a given uniform draw u.
double potential_time(const DgpParams& p, int a, int w1, double w2, double u);

struct PotentialOutcomeRecord {
  int w1 = 0;
  double w2 = 0.0;
  int s = 0;
  int a = 1;
  std::array<double, 3> t_pot{};  // T^1, T^2, T^3 (shared U)
  double c = 0.0;
  double t_star = 0.0;
  int delta = 0;
};

std::vector<PotentialOutcomeRecord> generate_population(std::size_t n_total, const DgpParams& params,
                                                        std::uint64_t seed);

// Schema of simulated datasets: w1 (binary), w2 (real).
CovariateSchema simulation_schema();

struct SampledTrials {
  FusedDataset dataset;
  std::size_t regenerations = 0;  // pools that were too small and regenerated larger
};

// Draws a pool of pool_multiplier * (n1 + n0) records and samples exactly n1
// with S=1 and n0 with S=0 without replacement. A pool that is too small is
// regenerated with a doubled multiplier; after 20 attempts InsufficientPool
// is thrown.
SampledTrials sample_trials(const DgpParams& params, std::size_t n1, std::size_t n0, std::uint64_t seed);

struct OracleResult {
  std::vector<double> t;
  std::vector<double> rd;     // Pr(T^3 < t | S=1) - Pr(T^1 < t | S=1)
  std::vector<double> mc_se;
  std::size_t n_target = 0;   // S=1 draws used
  std::size_t n_drawn = 0;    // total draws
};

// Monte Carlo truth from n_oracle draws with S=1.
OracleResult true_rd(const DgpParams& params, std::size_t n_oracle, const std::vector<double>& t,
                     std::uint64_t seed, unsigned workers = 1);

enum class SamplingModel { Correct, Incorrect };
std::string to_string(SamplingModel m);
SamplingModel parse_sampling_model(const std::string& s);
// correct: W1 + W2; incorrect: W2 only.
std::vector<std::string> sampling_terms(SamplingModel m);

struct ScenarioConfig {
  std::size_t n1 = 1000;
  std::size_t n0 = 1000;
  DgpParams dgp;
  std::vector<SamplingModel> sampling_models{SamplingModel::Correct, SamplingModel::Incorrect};
  std::vector<double> alpha_levels{0.05, 0.10, 0.20};
  std::size_t B = 200;
  std::size_t p = 1000;
  std::size_t n_sims = 200;
  std::vector<double> t_eval{91.0, 183.0, 274.0, 365.0};
  std::uint64_t master_seed = 0;
  std::size_t oracle_n = 1000000;
  bool add_one = false;
  unsigned workers = 1;

  void validate() const;
};

ScenarioConfig load_scenario_config(const std::string& path);
ScenarioConfig parse_scenario_config(const std::string& toml_text);

struct TimeMetrics {
  double t = 0.0;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double ese = 0.0;
  double mean_se = 0.0;
  double ser = 0.0;
  double coverage = 0.0;
};

struct ConditionalCoverage {
  double alpha = 0.0;
  std::size_t retained = 0;       // replicates with p > alpha
  std::vector<double> coverage;   // per t_eval; NaN when nothing is retained
};

struct ModelMetrics {
  SamplingModel model = SamplingModel::Correct;
  std::vector<TimeMetrics> times;
  std::vector<double> rejection;  // per alpha: Pr(p <= alpha)
  std::vector<ConditionalCoverage> conditional;
};

struct ReplicateOutcome {
  bool ok = false;
  std::string failure;
  std::size_t regenerations = 0;
  // per model
  std::vector<std::vector<double>> estimate;  // [m][t]
  std::vector<std::vector<double>> se;
  std::vector<double> p_value;
};

struct ScenarioMetrics {
  ScenarioConfig config;
  OracleResult truth;
  std::vector<ModelMetrics> models;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t regenerations = 0;
  std::vector<std::string> failure_log;
  std::vector<ReplicateOutcome> replicates;
};

using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;

// Runs every replicate with seeds derived from master_seed; bit-identical
// for any worker count. Throws ScenarioAborted when more than 5% of
// replicates fail.
ScenarioMetrics run_scenario(const ScenarioConfig& cfg, const ProgressCallback& progress = {});
// Aggregation over precomputed replicates and truth.
ScenarioMetrics summarize_scenario(const ScenarioConfig& cfg, OracleResult truth,
                                   std::vector<ReplicateOutcome> replicates);

// t,model,bias,ese,ser,coverage rows plus "<model>_p_gt_<alpha>" coverage rows.
void write_metrics_csv(std::ostream& out, const ScenarioMetrics& m);
// model,alpha,rejection,kind (type1 for correct, power for incorrect).
void write_rejection_csv(std::ostream& out, const ScenarioMetrics& m);
std::string metrics_json(const ScenarioMetrics& m);

}  // namespace bridge
