#include "bridge/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "bridge/diagnostics.hpp"
#include "bridge/error.hpp"
#include "bridge/estimator.hpp"
#include "bridge/inference.hpp"
#include "bridge/parallel.hpp"

namespace bridge {

namespace {

double expit_(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Uniform on the open interval (0, 1).
double open_uniform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  while (u <= 0.0 || u >= 1.0) u = unif(rng);
  return u;
}

struct Covariates {
  int w1;
  double w2;
  int s;
};

Covariates draw_covariates(const DgpParams& p, std::mt19937_64& rng) {
  std::bernoulli_distribution b_w1(p.w1_prob);
  std::normal_distribution<double> z_dist(p.z_mean, p.z_sd);
  Covariates c;
  c.w1 = b_w1(rng) ? 1 : 0;
  const double z = z_dist(rng);
  c.w2 = std::clamp(p.w2_w1 * c.w1 + z, p.w2_min, p.w2_max);
  std::bernoulli_distribution b_s(expit_(p.s_intercept + p.s_w1 * c.w1 + p.s_w2 * (c.w2 - p.s_w2_center)));
  c.s = b_s(rng) ? 1 : 0;
  return c;
}

}  // namespace

void DgpParams::validate() const {
  const double all[] = {w1_prob,   z_mean,    z_sd,          w2_w1,        w2_min,     w2_max,     s_intercept,
                        s_w1,      s_w2,      s_w2_center,   treat_prob,   lam_intercept, lam_a2, lam_a3,
                        lam_w1,    lam_w2,    lam_a2_w1,     lam_a3_w1,    event_power, cens_scale, cens_power,
                        admin_censor_time, pool_multiplier};
  for (double v : all) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidConfig, "DGP parameters must be finite");
  }
  if (w1_prob < 0.0 || w1_prob > 1.0 || treat_prob < 0.0 || treat_prob > 1.0) {
    throw Error(ErrorKind::InvalidConfig, "DGP probabilities must lie in [0, 1]");
  }
  if (!(z_sd >= 0.0) || w2_min > w2_max) throw Error(ErrorKind::InvalidConfig, "invalid W2 distribution");
  if (!(event_power > 0.0) || !(cens_scale > 0.0) || !(cens_power > 0.0) || !(admin_censor_time > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "DGP time parameters must be positive");
  }
  if (!(pool_multiplier >= 1.0)) throw Error(ErrorKind::InvalidConfig, "pool_multiplier must be >= 1");
}

double dgp_lambda(const DgpParams& p, int a, int w1, double w2) {
  const double i2 = a == 2 ? 1.0 : 0.0;
  const double i3 = a == 3 ? 1.0 : 0.0;
  return std::exp(p.lam_intercept + p.lam_a2 * i2 + p.lam_a3 * i3 + p.lam_w1 * w1 + p.lam_w2 * w2 +
                  p.lam_a2_w1 * i2 * w1 + p.lam_a3_w1 * i3 * w1);
}

double potential_time(const DgpParams& p, int a, int w1, double w2, double u) {
  return std::pow(-dgp_lambda(p, a, w1, w2) * std::log(u), p.event_power);
}

std::vector<PotentialOutcomeRecord> generate_population(std::size_t n_total, const DgpParams& params,
                                                        std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b_treat(params.treat_prob);
  std::vector<PotentialOutcomeRecord> out(n_total);
  for (auto& r : out) {
    const Covariates c = draw_covariates(params, rng);
    r.w1 = c.w1;
    r.w2 = c.w2;
    r.s = c.s;
    r.a = (b_treat(rng) ? 1 : 0) + 1 + r.s;
    const double u = open_uniform(rng);
    for (int a = 1; a <= 3; ++a) r.t_pot[static_cast<std::size_t>(a - 1)] = potential_time(params, a, r.w1, r.w2, u);
    r.c = std::pow(-params.cens_scale * std::log(open_uniform(rng)), params.cens_power);
    const double t = r.t_pot[static_cast<std::size_t>(r.a - 1)];
    r.t_star = std::min({t, r.c, params.admin_censor_time});
    r.delta = r.t_star == t ? 1 : 0;
  }
  return out;
}

CovariateSchema simulation_schema() {
  return CovariateSchema({{"w1", CovariateType::Binary}, {"w2", CovariateType::Real}});
}

SampledTrials sample_trials(const DgpParams& params, std::size_t n1, std::size_t n0, std::uint64_t seed) {
  if (n1 == 0 || n0 == 0) throw Error(ErrorKind::InvalidConfig, "trial sizes must be positive");
  params.validate();
  SampledTrials out;
  double multiplier = params.pool_multiplier;
  for (std::uint64_t attempt = 0; attempt < 20; ++attempt, multiplier *= 2.0) {
    const auto pool_size = static_cast<std::size_t>(std::ceil(multiplier * static_cast<double>(n1 + n0)));
    const auto pool = generate_population(pool_size, params, derive_seed(seed, seed_stream::kPopulation, attempt));
    std::vector<std::size_t> idx[2];
    for (std::size_t i = 0; i < pool.size(); ++i) idx[pool[i].s].push_back(i);
    if (idx[1].size() < n1 || idx[0].size() < n0) {
      ++out.regenerations;
      continue;
    }
    std::mt19937_64 rng(derive_seed(seed, seed_stream::kSampling, attempt));
    std::shuffle(idx[1].begin(), idx[1].end(), rng);
    std::shuffle(idx[0].begin(), idx[0].end(), rng);
    std::vector<SubjectRecord> records;
    records.reserve(n1 + n0);
    auto take = [&](const std::vector<std::size_t>& from, std::size_t n) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto& p = pool[from[k]];
        SubjectRecord r;
        r.id = "sim" + std::to_string(records.size() + 1);
        r.s = p.s;
        r.a = p.a;
        r.t_star = p.t_star;
        r.delta = p.delta;
        r.covariates = {static_cast<double>(p.w1), p.w2};
        records.push_back(std::move(r));
      }
    };
    take(idx[1], n1);
    take(idx[0], n0);
    Provenance prov;
    prov.source = "simulation seed " + std::to_string(seed);
    out.dataset = FusedDataset(std::move(records), params.admin_censor_time, simulation_schema(), prov);
    return out;
  }
  throw Error(ErrorKind::InsufficientPool, "could not draw " + std::to_string(n1) + " + " + std::to_string(n0) +
                                               " records after 20 pool regenerations");
}

OracleResult true_rd(const DgpParams& params, std::size_t n_oracle, const std::vector<double>& t,
                     std::uint64_t seed, unsigned workers) {
  params.validate();
  if (n_oracle == 0) throw Error(ErrorKind::InvalidConfig, "oracle size must be positive");
  constexpr std::size_t kChunk = 100000;
  const std::size_t chunks = (n_oracle + kChunk - 1) / kChunk;
  const std::size_t nt = t.size();
  std::vector<std::vector<double>> diff(chunks, std::vector<double>(nt, 0.0));
  std::vector<std::vector<double>> absdiff(chunks, std::vector<double>(nt, 0.0));
  std::vector<std::size_t> drawn(chunks, 0);

  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t quota = std::min(kChunk, n_oracle - c * kChunk);
    std::mt19937_64 rng(derive_seed(seed, seed_stream::kOracle, c));
    std::size_t got = 0;
    while (got < quota) {
      const Covariates cv = draw_covariates(params, rng);
      const double u = open_uniform(rng);
      ++drawn[c];
      if (cv.s != 1) continue;
      ++got;
      const double t3 = potential_time(params, 3, cv.w1, cv.w2, u);
      const double t1 = potential_time(params, 1, cv.w1, cv.w2, u);
      for (std::size_t k = 0; k < nt; ++k) {
        const double d = (t3 < t[k] ? 1.0 : 0.0) - (t1 < t[k] ? 1.0 : 0.0);
        diff[c][k] += d;
        absdiff[c][k] += std::fabs(d);
      }
    }
  });

  OracleResult out;
  out.t = t;
  out.n_target = n_oracle;
  const double n = static_cast<double>(n_oracle);
  for (std::size_t k = 0; k < nt; ++k) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      sum += diff[c][k];
      sq += absdiff[c][k];
    }
    const double mean = sum / n;
    out.rd.push_back(mean);
    out.mc_se.push_back(std::sqrt(std::max(0.0, sq / n - mean * mean) / n));
  }
  for (auto d : drawn) out.n_drawn += d;
  return out;
}

std::string to_string(SamplingModel m) { return m == SamplingModel::Correct ? "correct" : "incorrect"; }

SamplingModel parse_sampling_model(const std::string& s) {
  if (s == "correct") return SamplingModel::Correct;
  if (s == "incorrect") return SamplingModel::Incorrect;
  throw Error(ErrorKind::InvalidConfig, "unknown sampling model '" + s + "' (expected correct or incorrect)");
}

std::vector<std::string> sampling_terms(SamplingModel m) {
  if (m == SamplingModel::Correct) return {"w1", "w2"};
  return {"w2"};
}

void ScenarioConfig::validate() const {
  if (n1 == 0 || n0 == 0) throw Error(ErrorKind::InvalidConfig, "n1 and n0 must be positive");
  dgp.validate();
  if (sampling_models.empty()) throw Error(ErrorKind::InvalidConfig, "no sampling models configured");
  for (double a : alpha_levels) {
    if (!(a > 0.0 && a < 1.0)) throw Error(ErrorKind::InvalidConfig, "alpha levels must lie in (0, 1)");
  }
  if (!std::is_sorted(alpha_levels.begin(), alpha_levels.end())) {
    throw Error(ErrorKind::InvalidConfig, "alpha levels must be increasing");
  }
  if (B < 2) throw Error(ErrorKind::InvalidConfig, "B must be at least 2");
  if (p == 0) throw Error(ErrorKind::InvalidConfig, "p must be positive");
  if (n_sims == 0) throw Error(ErrorKind::InvalidConfig, "n_sims must be positive");
  if (oracle_n == 0) throw Error(ErrorKind::InvalidConfig, "oracle_n must be positive");
  if (t_eval.empty()) throw Error(ErrorKind::InvalidConfig, "t_eval is empty");
  for (std::size_t k = 0; k < t_eval.size(); ++k) {
    if (!(t_eval[k] > 0.0) || t_eval[k] > dgp.admin_censor_time || (k > 0 && t_eval[k] <= t_eval[k - 1])) {
      throw Error(ErrorKind::InvalidConfig, "t_eval must be increasing within (0, admin_censor_time]");
    }
  }
}

// ---------------------------------------------------------------------------
// TOML

namespace {

double number(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>()) return *v;
  throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be a number");
}

std::size_t count(const toml::node& n, const std::string& key) {
  auto v = n.value<std::int64_t>();
  if (!v || *v < 0) throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(*v);
}

std::vector<double> number_list(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (arr == nullptr) throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& el : *arr) out.push_back(number(el, key));
  return out;
}

std::map<std::string, double DgpParams::*> dgp_fields() {
  return {{"w1_prob", &DgpParams::w1_prob},
          {"z_mean", &DgpParams::z_mean},
          {"z_sd", &DgpParams::z_sd},
          {"w2_w1", &DgpParams::w2_w1},
          {"w2_min", &DgpParams::w2_min},
          {"w2_max", &DgpParams::w2_max},
          {"s_intercept", &DgpParams::s_intercept},
          {"s_w1", &DgpParams::s_w1},
          {"s_w2", &DgpParams::s_w2},
          {"s_w2_center", &DgpParams::s_w2_center},
          {"treat_prob", &DgpParams::treat_prob},
          {"lam_intercept", &DgpParams::lam_intercept},
          {"lam_a2", &DgpParams::lam_a2},
          {"lam_a3", &DgpParams::lam_a3},
          {"lam_w1", &DgpParams::lam_w1},
          {"lam_w2", &DgpParams::lam_w2},
          {"lam_a2_w1", &DgpParams::lam_a2_w1},
          {"lam_a3_w1", &DgpParams::lam_a3_w1},
          {"event_power", &DgpParams::event_power},
          {"cens_scale", &DgpParams::cens_scale},
          {"cens_power", &DgpParams::cens_power},
          {"admin_censor_time", &DgpParams::admin_censor_time},
          {"pool_multiplier", &DgpParams::pool_multiplier}};
}

}  // namespace

ScenarioConfig parse_scenario_config(const std::string& toml_text) {
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("TOML parse error: ") + std::string(e.description()));
  }
  ScenarioConfig cfg;
  for (const auto& [section, node] : tbl) {
    if (section != "scenario" && section != "dgp") {
      throw Error(ErrorKind::InvalidConfig, "unknown section [" + std::string(section.str()) + "]");
    }
  }
  if (const auto* sc = tbl["scenario"].as_table()) {
    for (const auto& [k, node] : *sc) {
      const std::string key(k.str());
      if (key == "n1") cfg.n1 = count(node, key);
      else if (key == "n0") cfg.n0 = count(node, key);
      else if (key == "B") cfg.B = count(node, key);
      else if (key == "p") cfg.p = count(node, key);
      else if (key == "n_sims") cfg.n_sims = count(node, key);
      else if (key == "oracle_n") cfg.oracle_n = count(node, key);
      else if (key == "seed") cfg.master_seed = count(node, key);
      else if (key == "workers") cfg.workers = static_cast<unsigned>(count(node, key));
      else if (key == "add_one") {
        auto v = node.value<bool>();
        if (!v) throw Error(ErrorKind::InvalidConfig, "'add_one' must be a boolean");
        cfg.add_one = *v;
      } else if (key == "alpha_levels") cfg.alpha_levels = number_list(node, key);
      else if (key == "t_eval") cfg.t_eval = number_list(node, key);
      else if (key == "sampling_models") {
        const auto* arr = node.as_array();
        if (arr == nullptr) throw Error(ErrorKind::InvalidConfig, "'sampling_models' must be an array");
        cfg.sampling_models.clear();
        for (const auto& el : *arr) {
          auto s = el.value<std::string>();
          if (!s) throw Error(ErrorKind::InvalidConfig, "'sampling_models' entries must be strings");
          cfg.sampling_models.push_back(parse_sampling_model(*s));
        }
      } else {
        throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in [scenario]");
      }
    }
  }
  if (const auto* dg = tbl["dgp"].as_table()) {
    const auto fields = dgp_fields();
    for (const auto& [k, node] : *dg) {
      const std::string key(k.str());
      auto it = fields.find(key);
      if (it == fields.end()) throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in [dgp]");
      cfg.dgp.*(it->second) = number(node, key);
    }
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open scenario config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_config(ss.str());
}

// ---------------------------------------------------------------------------
// scenario runner

namespace {

ReplicateOutcome run_replicate(const ScenarioConfig& cfg, std::size_t r) {
  ReplicateOutcome out;
  const std::uint64_t seed_r = derive_seed(cfg.master_seed, seed_stream::kReplicate, r);
  try {
    const SampledTrials trials = sample_trials(cfg.dgp, cfg.n1, cfg.n0, derive_seed(seed_r, seed_stream::kSampling, 0));
    out.regenerations = trials.regenerations;
    const FusedDataset& ds = trials.dataset;
    for (std::size_t m = 0; m < cfg.sampling_models.size(); ++m) {
      PipelineConfig pc;
      pc.sampling = ModelFormula::parse(sampling_terms(cfg.sampling_models[m]));
      pc.censoring_by_arm = true;
      const BridgedEstimate est = estimate_bridged(ds, pc);

      BootstrapSpec bs;
      bs.B = cfg.B;
      bs.seed = derive_seed(seed_r, seed_stream::kBootstrap, m);
      bs.t_grid = cfg.t_eval;
      const BootstrapResult boot = bootstrap_bridged(ds, pc, bs, &est);

      PermutationSpec ps;
      ps.permutations = cfg.p;
      ps.seed = derive_seed(seed_r, seed_stream::kPermutation, m);
      ps.add_one = cfg.add_one;
      ps.weighted = true;
      ps.t_max = ds.admin_censor_time();
      const PermutationResult perm = permutation_test(ds, est.weights, ps);

      std::vector<double> e, s;
      for (std::size_t k = 0; k < cfg.t_eval.size(); ++k) {
        e.push_back(boot.rd_31.rd[k + 1]);
        s.push_back((*boot.rd_31.se)[k + 1]);
      }
      out.estimate.push_back(std::move(e));
      out.se.push_back(std::move(s));
      out.p_value.push_back(perm.p_value);
    }
    out.ok = true;
  } catch (const Error& e) {
    if (is_input_error(e.kind())) throw;
    out = ReplicateOutcome{};
    out.failure = "replicate " + std::to_string(r + 1) + ": " + std::string(to_string(e.kind())) + ": " + e.what();
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool covers(double est, double se, double truth) {
  return est - kZ975 * se <= truth && truth <= est + kZ975 * se;
}

}  // namespace

ScenarioMetrics summarize_scenario(const ScenarioConfig& cfg, OracleResult truth,
                                   std::vector<ReplicateOutcome> replicates) {
  ScenarioMetrics out;
  out.config = cfg;
  out.truth = std::move(truth);
  for (const auto& r : replicates) {
    out.regenerations += r.regenerations;
    if (r.ok) {
      ++out.completed;
    } else {
      ++out.failed;
      out.failure_log.push_back(r.failure);
    }
  }
  const std::size_t nt = cfg.t_eval.size();
  for (std::size_t m = 0; m < cfg.sampling_models.size(); ++m) {
    ModelMetrics mm;
    mm.model = cfg.sampling_models[m];
    for (std::size_t k = 0; k < nt; ++k) {
      std::vector<double> est, se;
      std::size_t cov = 0;
      for (const auto& r : replicates) {
        if (!r.ok) continue;
        est.push_back(r.estimate[m][k]);
        se.push_back(r.se[m][k]);
        if (covers(r.estimate[m][k], r.se[m][k], out.truth.rd[k])) ++cov;
      }
      TimeMetrics tm;
      tm.t = cfg.t_eval[k];
      tm.truth = out.truth.rd[k];
      if (!est.empty()) {
        tm.mean_estimate = mean_of(est);
        tm.bias = tm.mean_estimate - tm.truth;
        tm.ese = sd_of(est);
        tm.mean_se = mean_of(se);
        tm.ser = tm.ese / tm.mean_se;
        tm.coverage = static_cast<double>(cov) / static_cast<double>(est.size());
      }
      mm.times.push_back(tm);
    }
    for (double alpha : cfg.alpha_levels) {
      std::size_t rejected = 0;
      ConditionalCoverage cc;
      cc.alpha = alpha;
      std::vector<std::size_t> cov(nt, 0);
      for (const auto& r : replicates) {
        if (!r.ok) continue;
        if (r.p_value[m] <= alpha) {
          ++rejected;
          continue;
        }
        ++cc.retained;
        for (std::size_t k = 0; k < nt; ++k) {
          if (covers(r.estimate[m][k], r.se[m][k], out.truth.rd[k])) ++cov[k];
        }
      }
      mm.rejection.push_back(out.completed ? static_cast<double>(rejected) / static_cast<double>(out.completed)
                                           : std::numeric_limits<double>::quiet_NaN());
      for (std::size_t k = 0; k < nt; ++k) {
        cc.coverage.push_back(cc.retained ? static_cast<double>(cov[k]) / static_cast<double>(cc.retained)
                                          : std::numeric_limits<double>::quiet_NaN());
      }
      mm.conditional.push_back(std::move(cc));
    }
    out.models.push_back(std::move(mm));
  }
  out.replicates = std::move(replicates);
  return out;
}

ScenarioMetrics run_scenario(const ScenarioConfig& cfg, const ProgressCallback& progress) {
  cfg.validate();
  OracleResult truth = true_rd(cfg.dgp, cfg.oracle_n, cfg.t_eval,
                               derive_seed(cfg.master_seed, seed_stream::kOracle, 0), cfg.workers);
  std::vector<ReplicateOutcome> reps(cfg.n_sims);
  std::mutex mu;
  std::size_t done = 0;
  parallel_for(cfg.n_sims, cfg.workers, [&](std::size_t r) {
    reps[r] = run_replicate(cfg, r);
    if (progress) {
      std::lock_guard<std::mutex> lock(mu);
      progress(++done, cfg.n_sims);
    }
  });
  std::size_t failed = 0;
  for (const auto& r : reps) failed += r.ok ? 0 : 1;
  if (static_cast<double>(failed) > 0.05 * static_cast<double>(cfg.n_sims)) {
    std::string msg = std::to_string(failed) + " of " + std::to_string(cfg.n_sims) +
                      " replicates failed (limit 5%)";
    for (const auto& r : reps) {
      if (!r.ok) {
        msg += "; first failure: " + r.failure;
        break;
      }
    }
    throw Error(ErrorKind::ScenarioAborted, msg);
  }
  return summarize_scenario(cfg, std::move(truth), std::move(reps));
}

// ---------------------------------------------------------------------------
// output

void write_metrics_csv(std::ostream& out, const ScenarioMetrics& m) {
  out << "t,model,truth,bias,ese,ser,coverage\n";
  const std::size_t nt = m.config.t_eval.size();
  for (std::size_t k = 0; k < nt; ++k) {
    for (const auto& mm : m.models) {
      const auto& tm = mm.times[k];
      out << format_double(tm.t) << ',' << to_string(mm.model) << ',' << format_double(tm.truth) << ','
          << format_double(tm.bias) << ',' << format_double(tm.ese) << ',' << format_double(tm.ser) << ','
          << format_double(tm.coverage) << '\n';
    }
    for (const auto& mm : m.models) {
      for (const auto& cc : mm.conditional) {
        out << format_double(m.config.t_eval[k]) << ',' << to_string(mm.model) << "_p_gt_"
            << format_double(cc.alpha) << ',' << format_double(mm.times[k].truth) << ",,,,"
            << format_double(cc.coverage[k]) << '\n';
      }
    }
  }
}

void write_rejection_csv(std::ostream& out, const ScenarioMetrics& m) {
  out << "model,n1,n0,alpha,rejection,kind\n";
  for (const auto& mm : m.models) {
    for (std::size_t j = 0; j < m.config.alpha_levels.size(); ++j) {
      out << to_string(mm.model) << ',' << m.config.n1 << ',' << m.config.n0 << ','
          << format_double(m.config.alpha_levels[j]) << ',' << format_double(mm.rejection[j]) << ','
          << (mm.model == SamplingModel::Correct ? "type1" : "power") << '\n';
    }
  }
}

std::string metrics_json(const ScenarioMetrics& m) {
  using nlohmann::json;
  auto num = [](double x) -> json { return std::isfinite(x) ? json(x) : json(nullptr); };
  json j;
  const auto& c = m.config;
  j["config"] = {{"n1", c.n1},         {"n0", c.n0},           {"B", c.B},
                 {"p", c.p},           {"n_sims", c.n_sims},   {"oracle_n", c.oracle_n},
                 {"seed", c.master_seed}, {"add_one", c.add_one}, {"alpha_levels", c.alpha_levels},
                 {"t_eval", c.t_eval}};
  json dgp;
  for (const auto& [name, ptr] : dgp_fields()) dgp[name] = c.dgp.*ptr;
  j["config"]["dgp"] = dgp;
  j["truth"] = {{"t", m.truth.t}, {"rd", m.truth.rd}, {"mc_se", m.truth.mc_se},
                {"n_target", m.truth.n_target}, {"n_drawn", m.truth.n_drawn}};
  j["completed"] = m.completed;
  j["failed"] = m.failed;
  j["pool_regenerations"] = m.regenerations;
  j["failures"] = m.failure_log;
  json models = json::array();
  for (const auto& mm : m.models) {
    json jm;
    jm["model"] = to_string(mm.model);
    json times = json::array();
    for (const auto& tm : mm.times) {
      times.push_back({{"t", tm.t},
                       {"truth", num(tm.truth)},
                       {"mean_estimate", num(tm.mean_estimate)},
                       {"bias", num(tm.bias)},
                       {"ese", num(tm.ese)},
                       {"mean_se", num(tm.mean_se)},
                       {"ser", num(tm.ser)},
                       {"coverage", num(tm.coverage)}});
    }
    jm["times"] = times;
    json rej = json::array();
    for (std::size_t a = 0; a < c.alpha_levels.size(); ++a) {
      json cov = json::array();
      for (double v : mm.conditional[a].coverage) cov.push_back(num(v));
      rej.push_back({{"alpha", c.alpha_levels[a]},
                     {"rejection", num(mm.rejection[a])},
                     {"retained", mm.conditional[a].retained},
                     {"conditional_coverage", cov}});
    }
    jm["alpha"] = rej;
    models.push_back(jm);
  }
  j["models"] = models;
  return j.dump(2);
}

}  // namespace bridge
