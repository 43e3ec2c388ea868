#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <toml.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>

#include "bridge/diagnostics.hpp"
#include "bridge/error.hpp"
#include "bridge/estimator.hpp"
#include "bridge/inference.hpp"
#include "bridge/parallel.hpp"
#include "bridge/simulation.hpp"

namespace bridge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Failure inside a named pipeline stage; keeps the original error kind.
struct StageError {
  std::string stage;
  Error error;
};

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError{name, e};
  }
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RestrictArg {
  std::string covariate;
  double lo = 0.0;
  double hi = 0.0;
};

struct RunConfig {
  std::string input;
  std::optional<CovariateSchema> schema;
  double admin_censor_time = 365.0;
  PipelineConfig pipeline;
  std::vector<RestrictArg> restrictions;
  std::optional<std::vector<double>> t_grid;
  std::size_t bootstrap = 200;
  std::size_t permutations = 10000;
  bool add_one = false;
  bool refit = false;
  bool pad_to_t_max = false;
  std::optional<double> t_max;
  std::vector<std::string> balance_covariates;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string config_text;
};

// Flags shared by estimate and diagnose.
struct Flags {
  std::string config;
  std::string input;
  std::string output_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> permutations;
  std::optional<std::size_t> bootstrap;
  std::vector<std::vector<std::string>> restrict;
  bool add_one = false;
  unsigned workers = 1;
  std::string emit_dataset;
};

double as_number(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>()) return *v;
  throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be a number");
}

std::size_t as_count(const toml::node& n, const std::string& key) {
  auto v = n.value<std::int64_t>();
  if (!v || *v < 0) throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(*v);
}

bool as_bool(const toml::node& n, const std::string& key) {
  if (auto v = n.value<bool>()) return *v;
  throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be a boolean");
}

std::string as_string(const toml::node& n, const std::string& key) {
  if (auto v = n.value<std::string>()) return *v;
  throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be a string");
}

std::vector<std::string> string_list(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (arr == nullptr) throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& el : *arr) out.push_back(as_string(el, key));
  return out;
}

std::vector<double> number_list(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (arr == nullptr) throw Error(ErrorKind::InvalidConfig, "'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& el : *arr) out.push_back(as_number(el, key));
  return out;
}

void unknown_key(const std::string& section, std::string_view key) {
  throw Error(ErrorKind::InvalidConfig, "unknown key '" + std::string(key) + "' in [" + section + "]");
}

RestrictArg parse_restrict_table(const toml::table& t) {
  RestrictArg r;
  bool have_cov = false;
  r.lo = -std::numeric_limits<double>::infinity();
  r.hi = std::numeric_limits<double>::infinity();
  for (const auto& [k, node] : t) {
    if (k == "covariate") {
      r.covariate = as_string(node, "covariate");
      have_cov = true;
    } else if (k == "lo") {
      r.lo = as_number(node, "lo");
    } else if (k == "hi") {
      r.hi = as_number(node, "hi");
    } else {
      unknown_key("restrict", k.str());
    }
  }
  if (!have_cov) throw Error(ErrorKind::InvalidConfig, "[restrict] needs a covariate");
  return r;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  cfg.config_text = text;
  toml::table tbl;
  try {
    tbl = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, "TOML parse error: " + std::string(e.description()));
  }
  for (const auto& [section, node] : tbl) {
    const std::string s(section.str());
    if (s == "seed") {
      cfg.seed = as_count(node, "seed");
    } else if (s == "workers") {
      cfg.workers = static_cast<unsigned>(as_count(node, "workers"));
    } else if (s == "data") {
      const auto* t = node.as_table();
      if (t == nullptr) throw Error(ErrorKind::InvalidConfig, "[data] must be a table");
      for (const auto& [k, v] : *t) {
        if (k == "input") {
          cfg.input = as_string(v, "input");
        } else if (k == "admin_censor_time") {
          cfg.admin_censor_time = as_number(v, "admin_censor_time");
        } else if (k == "t_grid") {
          cfg.t_grid = number_list(v, "t_grid");
        } else if (k == "covariates") {
          const auto* arr = v.as_array();
          if (arr == nullptr) throw Error(ErrorKind::InvalidConfig, "'covariates' must be an array of tables");
          std::vector<CovariateColumn> cols;
          for (const auto& el : *arr) {
            const auto* ct = el.as_table();
            if (ct == nullptr) throw Error(ErrorKind::InvalidConfig, "covariate entries need name and type");
            CovariateColumn col;
            for (const auto& [ck, cv] : *ct) {
              if (ck == "name") {
                col.name = as_string(cv, "name");
              } else if (ck == "type") {
                const std::string ty = as_string(cv, "type");
                if (ty == "real") col.type = CovariateType::Real;
                else if (ty == "binary") col.type = CovariateType::Binary;
                else throw Error(ErrorKind::InvalidConfig, "covariate type must be real or binary, got '" + ty + "'");
              } else {
                unknown_key("data.covariates", ck.str());
              }
            }
            if (col.name.empty()) throw Error(ErrorKind::InvalidConfig, "covariate entry without a name");
            cols.push_back(col);
          }
          cfg.schema = CovariateSchema(std::move(cols));
        } else {
          unknown_key("data", k.str());
        }
      }
    } else if (s == "models") {
      const auto* t = node.as_table();
      if (t == nullptr) throw Error(ErrorKind::InvalidConfig, "[models] must be a table");
      for (const auto& [k, v] : *t) {
        const auto* mt = v.as_table();
        if (mt == nullptr) throw Error(ErrorKind::InvalidConfig, "[models." + std::string(k.str()) + "] must be a table");
        if (k == "censoring") {
          for (const auto& [mk, mv] : *mt) {
            if (mk == "covariates") {
              cfg.pipeline.censoring = ModelFormula::parse(string_list(mv, "covariates"));
            } else if (mk == "strata") {
              const std::string st = as_string(mv, "strata");
              if (st == "arm") cfg.pipeline.censoring_by_arm = true;
              else if (st == "none") cfg.pipeline.censoring_by_arm = false;
              else throw Error(ErrorKind::InvalidConfig, "censoring strata must be 'arm' or 'none'");
            } else {
              unknown_key("models.censoring", mk.str());
            }
          }
        } else if (k == "sampling") {
          for (const auto& [mk, mv] : *mt) {
            if (mk == "covariates") cfg.pipeline.sampling = ModelFormula::parse(string_list(mv, "covariates"));
            else unknown_key("models.sampling", mk.str());
          }
        } else if (k == "treatment") {
          for (const auto& [mk, mv] : *mt) {
            if (mk == "covariates") {
              if (!string_list(mv, "covariates").empty()) {
                throw Error(ErrorKind::InvalidConfig, "the treatment model is intercept-only; covariates must be empty");
              }
            } else {
              unknown_key("models.treatment", mk.str());
            }
          }
        } else {
          throw Error(ErrorKind::InvalidConfig, "unknown model section [models." + std::string(k.str()) + "]");
        }
      }
    } else if (s == "weights") {
      const auto* t = node.as_table();
      if (t == nullptr) throw Error(ErrorKind::InvalidConfig, "[weights] must be a table");
      for (const auto& [k, v] : *t) {
        if (k == "extreme_cap") cfg.pipeline.extreme_weight_cap = as_number(v, "extreme_cap");
        else if (k == "truncate") cfg.pipeline.truncate_weights = as_bool(v, "truncate");
        else unknown_key("weights", k.str());
      }
    } else if (s == "diagnostic") {
      const auto* t = node.as_table();
      if (t == nullptr) throw Error(ErrorKind::InvalidConfig, "[diagnostic] must be a table");
      for (const auto& [k, v] : *t) {
        if (k == "permutations") cfg.permutations = as_count(v, "permutations");
        else if (k == "add_one") cfg.add_one = as_bool(v, "add_one");
        else if (k == "refit") cfg.refit = as_bool(v, "refit");
        else if (k == "pad_to_t_max") cfg.pad_to_t_max = as_bool(v, "pad_to_t_max");
        else if (k == "t_max") cfg.t_max = as_number(v, "t_max");
        else if (k == "balance") cfg.balance_covariates = string_list(v, "balance");
        else unknown_key("diagnostic", k.str());
      }
    } else if (s == "bootstrap") {
      const auto* t = node.as_table();
      if (t == nullptr) throw Error(ErrorKind::InvalidConfig, "[bootstrap] must be a table");
      for (const auto& [k, v] : *t) {
        if (k == "B") cfg.bootstrap = as_count(v, "B");
        else unknown_key("bootstrap", k.str());
      }
    } else if (s == "restrict") {
      if (const auto* t = node.as_table()) {
        cfg.restrictions.push_back(parse_restrict_table(*t));
      } else if (const auto* arr = node.as_array()) {
        for (const auto& el : *arr) {
          const auto* t2 = el.as_table();
          if (t2 == nullptr) throw Error(ErrorKind::InvalidConfig, "[[restrict]] entries must be tables");
          cfg.restrictions.push_back(parse_restrict_table(*t2));
        }
      } else {
        throw Error(ErrorKind::InvalidConfig, "[restrict] must be a table");
      }
    } else {
      throw Error(ErrorKind::InvalidConfig, "unknown config section [" + s + "]");
    }
  }
  return cfg;
}

double parse_bound(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "--restrict bound '" + s + "' is not a number");
  }
}

RunConfig resolve_run_config(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : parse_run_config(read_text(f.config));
  if (!f.input.empty()) cfg.input = f.input;
  if (f.seed) cfg.seed = f.seed;
  if (f.permutations) cfg.permutations = *f.permutations;
  if (f.bootstrap) cfg.bootstrap = *f.bootstrap;
  if (f.add_one) cfg.add_one = true;
  if (f.workers > 1) cfg.workers = f.workers;
  for (const auto& r : f.restrict) {
    if (r.size() != 3) throw Error(ErrorKind::InvalidConfig, "--restrict takes <covariate> <lo> <hi>");
    cfg.restrictions.push_back(RestrictArg{r[0], parse_bound(r[1]), parse_bound(r[2])});
  }
  if (cfg.input.empty()) throw Error(ErrorKind::InvalidConfig, "no input dataset (use --input or [data].input)");
  if (!(cfg.admin_censor_time > 0.0)) throw Error(ErrorKind::InvalidConfig, "admin_censor_time must be positive");
  if (cfg.bootstrap == 1) throw Error(ErrorKind::InvalidConfig, "bootstrap B must be 0 (off) or at least 2");
  return cfg;
}

// Fingerprint of everything that determines the outputs. Worker count and
// output location are excluded on purpose.
std::string config_hash(const RunConfig& cfg, const std::string& command) {
  std::ostringstream os;
  os << command << '\n' << cfg.config_text << '\n' << cfg.input << '\n'
     << (cfg.seed ? std::to_string(*cfg.seed) : "none") << '\n'
     << cfg.bootstrap << ' ' << cfg.permutations << ' ' << cfg.add_one << '\n';
  for (const auto& r : cfg.restrictions) os << r.covariate << ' ' << format_double(r.lo) << ' ' << format_double(r.hi) << '\n';
  return fnv1a_hex(os.str());
}

CovariateSchema infer_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingColumn, "cannot open input '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<CovariateColumn> cols;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.pop_back();
      while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.erase(0, 1);
      if (field == "id" || field == "s" || field == "a" || field == "t" || field == "delta") continue;
      cols.push_back({field, CovariateType::Real});
    }
    return CovariateSchema(std::move(cols));
  }
  throw Error(ErrorKind::MissingColumn, "input has no header row");
}

FusedDataset load_input(const RunConfig& cfg) {
  const CovariateSchema schema = cfg.schema ? *cfg.schema : infer_schema(cfg.input);
  for (const auto* formula : {&cfg.pipeline.censoring, &cfg.pipeline.sampling}) {
    for (const auto& name : formula->covariates()) schema.index_of(name);
  }
  for (const auto& name : cfg.balance_covariates) schema.index_of(name);
  FusedDataset ds = load_dataset_file(cfg.input, schema, cfg.admin_censor_time);
  ds.validate();
  for (const auto& r : cfg.restrictions) ds = restrict_range(ds, r.covariate, r.lo, r.hi);
  return ds;
}

struct Output {
  fs::path dir;
  std::string header;  // provenance comment line
  std::vector<std::string> written;

  void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << header << '\n';
    body(out);
    written.push_back(name);
  }
  void text(const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << content << '\n';
    written.push_back(name);
  }
};

Output make_output(const std::string& dir, const std::string& command, const std::string& hash,
                   std::optional<std::uint64_t> seed) {
  Output o;
  o.dir = dir;
  fs::create_directories(o.dir);
  o.header = "# bridge " BRIDGE_VERSION " command=" + command + " config_hash=" + hash +
             " seed=" + (seed ? std::to_string(*seed) : std::string("none"));
  return o;
}

json provenance_json(const std::string& command, const std::string& hash, std::optional<std::uint64_t> seed) {
  json j;
  j["version"] = BRIDGE_VERSION;
  j["command"] = command;
  j["config_hash"] = hash;
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

json dataset_json(const FusedDataset& ds) {
  json j;
  j["source"] = ds.provenance().source;
  j["schema_hash"] = ds.provenance().schema_hash;
  json rs = json::array();
  for (const auto& r : ds.provenance().restrictions) rs.push_back(r.describe());
  j["restrictions"] = rs;
  const TrialCounts c = ds.counts();
  j["n_source"] = c.n_source;
  j["n_target"] = c.n_target;
  j["arm_counts"] = {{"s0_a1", c.arm_counts[0][1]}, {"s0_a2", c.arm_counts[0][2]},
                     {"s1_a2", c.arm_counts[1][2]}, {"s1_a3", c.arm_counts[1][3]}};
  return j;
}

json logistic_json(const LogisticFit& fit) {
  json j;
  std::vector<std::string> names{"(intercept)"};
  for (const auto& n : fit.design.column_names()) names.push_back(n);
  j["columns"] = names;
  j["coefficients"] = std::vector<double>(fit.coefficients.begin(), fit.coefficients.end());
  j["iterations"] = fit.iterations;
  return j;
}

json cox_json(const CoxFit& fit) {
  json j;
  j["columns"] = fit.design.column_names();
  j["coefficients"] = std::vector<double>(fit.coefficients.begin(), fit.coefficients.end());
  j["strata"] = fit.strata;
  j["iterations"] = fit.iterations;
  return j;
}

json fits_json(const NuisanceFits& fits) {
  json j;
  j["treatment_pr_shared"] = {{"s0", fits.treatment_probability(0, kArmShared)},
                              {"s1", fits.treatment_probability(1, kArmShared)}};
  j["censoring"] = {{"s0", cox_json(fits.censoring[0])}, {"s1", cox_json(fits.censoring[1])}};
  j["censoring_strata"] = fits.censoring_by_arm ? "arm" : "none";
  j["sampling"] = logistic_json(fits.sampling);
  return j;
}

void write_risk_curve(std::ostream& out, const RiskCurve& rc) {
  out << "t,risk\n";
  out << "0," << format_double(rc.curve.value_at_zero()) << '\n';
  const auto& t = rc.curve.jump_times();
  const auto& v = rc.curve.values();
  for (std::size_t k = 0; k < t.size(); ++k) out << format_double(t[k]) << ',' << format_double(v[k]) << '\n';
}

void write_rd(std::ostream& out, const RiskDifferenceCurve& rd) {
  const bool bands = rd.has_bands();
  out << (bands ? "t,rd,se,ci_lo,ci_hi\n" : "t,rd\n");
  for (std::size_t k = 0; k < rd.grid.size(); ++k) {
    out << format_double(rd.grid[k]) << ',' << format_double(rd.rd[k]);
    if (bands) {
      out << ',' << format_double((*rd.se)[k]) << ',' << format_double((*rd.ci_lo)[k]) << ','
          << format_double((*rd.ci_hi)[k]);
    }
    out << '\n';
  }
}

void require_seed(const RunConfig& cfg, bool stochastic) {
  if (stochastic && !cfg.seed) {
    throw Error(ErrorKind::InvalidConfig, "a seed is required (use --seed or top-level seed in the config)");
  }
}

int cmd_estimate(const Flags& f, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = stage("config", [&] { return resolve_run_config(f); });
  stage("config", [&] { require_seed(cfg, cfg.bootstrap > 0); });
  const FusedDataset ds = stage("load data", [&] { return load_input(cfg); });
  const BridgedEstimate est = stage("estimation", [&] { return estimate_bridged(ds, cfg.pipeline); });

  std::optional<BootstrapResult> boot;
  if (cfg.bootstrap > 0) {
    BootstrapSpec spec;
    spec.B = cfg.bootstrap;
    spec.seed = *cfg.seed;
    spec.workers = cfg.workers;
    if (cfg.t_grid) {
      spec.t_grid = *cfg.t_grid;
    } else {
      for (double t : est.rd_31.grid) {
        if (t > 0.0) spec.t_grid.push_back(t);
      }
      if (spec.t_grid.empty()) spec.t_grid.push_back(ds.admin_censor_time());
    }
    boot = stage("bootstrap", [&] { return bootstrap_bridged(ds, cfg.pipeline, spec, &est); });
  }

  const std::string hash = config_hash(cfg, "estimate");
  Output o = make_output(f.output_dir, "estimate", hash, cfg.seed);
  o.csv("risk_s1_a2.csv", [&](std::ostream& s) { write_risk_curve(s, est.risk_target_shared); });
  o.csv("risk_s1_a3.csv", [&](std::ostream& s) { write_risk_curve(s, est.risk_target_triple); });
  o.csv("risk_s0_a1.csv", [&](std::ostream& s) { write_risk_curve(s, est.risk_source_mono); });
  o.csv("risk_s0_a2.csv", [&](std::ostream& s) { write_risk_curve(s, est.risk_source_shared); });
  o.csv("rd_3_2.csv", [&](std::ostream& s) { write_rd(s, boot ? boot->rd_32 : est.rd_32); });
  o.csv("rd_2_1.csv", [&](std::ostream& s) { write_rd(s, boot ? boot->rd_21 : est.rd_21); });
  o.csv("rd_3_1.csv", [&](std::ostream& s) { write_rd(s, boot ? boot->rd_31 : est.rd_31); });
  if (boot) {
    o.csv("twister_rd_3_1.csv", [&](std::ostream& s) {
      write_twister_csv(s, twister_export(boot->rd_31, ds.admin_censor_time(), true), true);
    });
    o.csv("bootstrap_replicates_rd_3_1.csv", [&](std::ostream& s) { write_replicates_csv(s, boot->replicates_31); });
  }

  json j = provenance_json("estimate", hash, cfg.seed);
  j["input"] = cfg.input;
  j["dataset"] = dataset_json(ds);
  j["sample_size"] = {{"n175_hat", est.sample_size.n_source_weighted},
                      {"n320", est.sample_size.n_target},
                      {"ratio", est.sample_size.ratio}};
  j["weights"] = {{"extreme_count", est.weights.extreme_count},
                  {"max_multiplier", est.weights.max_multiplier},
                  {"extreme_cap", cfg.pipeline.extreme_weight_cap},
                  {"truncated", cfg.pipeline.truncate_weights}};
  j["models"] = fits_json(est.fits);
  if (boot) {
    j["bootstrap"] = {{"B", cfg.bootstrap}, {"failed_replicates", boot->failed_replicates}};
  } else {
    j["bootstrap"] = nullptr;
  }
  std::vector<std::string> files = o.written;
  files.push_back("summary.json");
  j["outputs"] = files;
  o.text("summary.json", j.dump(2));

  if (est.weights.extreme_count > 0) {
    err << "warning: " << est.weights.extreme_count << " event records have weight multipliers above "
        << format_double(cfg.pipeline.extreme_weight_cap) << '\n';
  }
  out << "estimate: n175_hat/n320 = " << format_double(est.sample_size.n_source_weighted) << '/'
      << format_double(est.sample_size.n_target) << "; RD(3-1) at " << format_double(ds.admin_censor_time())
      << " = " << format_double(est.rd_31.value(ds.admin_censor_time())) << "; wrote " << files.size()
      << " files to " << o.dir.string() << '\n';
  return kOk;
}

WeightSet unit_sampling_weights(const WeightSet& w) {
  WeightSet u = w;
  u.extreme_count = 0;
  u.max_multiplier = 0.0;
  for (auto& r : u.records) {
    r.sampling_odds = 1.0;
    r.multiplier = 1.0 / (r.treatment_prob * r.censoring_surv);
  }
  return u;
}

void write_shared_curves(std::ostream& out, const RiskCurve& target, const RiskCurve& source) {
  out << "t,risk_target,risk_source,difference\n";
  const RiskDifferenceCurve d = risk_difference(target, source);
  for (std::size_t k = 0; k < d.grid.size(); ++k) {
    out << format_double(d.grid[k]) << ',' << format_double(target.curve(d.grid[k])) << ','
        << format_double(source.curve(d.grid[k])) << ',' << format_double(d.rd[k]) << '\n';
  }
}

json permutation_json(const PermutationResult& r, bool weighted) {
  return {{"weighted", weighted},
          {"observed_area", r.observed_area},
          {"p_value", r.p_value},
          {"permutations", r.p},
          {"exceed_count", r.exceed_count},
          {"skipped_permutations", r.skipped_permutations},
          {"seed", r.seed},
          {"warnings", r.warnings}};
}

int cmd_diagnose(const Flags& f, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = stage("config", [&] { return resolve_run_config(f); });
  stage("config", [&] {
    require_seed(cfg, cfg.permutations > 0);
    if (cfg.permutations == 0) throw Error(ErrorKind::InvalidConfig, "diagnose needs permutations > 0");
  });
  const FusedDataset ds = stage("load data", [&] { return load_input(cfg); });
  const NuisanceFits fits = stage("nuisance models", [&] { return fit_nuisance(ds, cfg.pipeline); });
  const WeightSet weighted = stage("weights", [&] { return compute_weights(ds, fits, cfg.pipeline); });
  const WeightSet unweighted = unit_sampling_weights(weighted);

  const auto curves = stage("shared-arm curves", [&] {
    return std::array<RiskCurve, 4>{ipw_risk(ds, weighted, kTargetTrial, kArmShared),
                                    ipw_risk(ds, weighted, kSourceTrial, kArmShared),
                                    ipw_risk(ds, unweighted, kTargetTrial, kArmShared),
                                    ipw_risk(ds, unweighted, kSourceTrial, kArmShared)};
  });

  PermutationSpec spec;
  spec.permutations = cfg.permutations;
  spec.seed = *cfg.seed;
  spec.add_one = cfg.add_one;
  spec.refit = cfg.refit;
  spec.pad_to_t_max = cfg.pad_to_t_max;
  spec.t_max = cfg.t_max;
  spec.workers = cfg.workers;
  const auto perms = stage("permutation test", [&] {
    PermutationSpec w = spec;
    w.weighted = true;
    PermutationSpec u = spec;
    u.weighted = false;
    return std::array<PermutationResult, 2>{permutation_test(ds, fits, cfg.pipeline, w),
                                            permutation_test(ds, fits, cfg.pipeline, u)};
  });

  std::vector<std::string> balance_names = cfg.balance_covariates;
  if (balance_names.empty()) {
    for (const auto& c : ds.schema().columns()) balance_names.push_back(c.name);
  }
  const auto balance_w = stage("balance", [&] { return covariate_balance(ds, weighted, balance_names); });
  const auto balance_u = stage("balance", [&] { return covariate_balance(ds, unweighted, balance_names); });

  const std::string hash = config_hash(cfg, "diagnose");
  Output o = make_output(f.output_dir, "diagnose", hash, cfg.seed);
  const double t_max = cfg.t_max.value_or(ds.admin_censor_time());
  o.csv("shared_arm_weighted.csv", [&](std::ostream& s) { write_shared_curves(s, curves[0], curves[1]); });
  o.csv("shared_arm_unweighted.csv", [&](std::ostream& s) { write_shared_curves(s, curves[2], curves[3]); });
  o.csv("twister_shared_weighted.csv", [&](std::ostream& s) {
    write_twister_csv(s, twister_export(risk_difference(curves[0], curves[1]), t_max, false), false);
  });
  o.csv("twister_shared_unweighted.csv", [&](std::ostream& s) {
    write_twister_csv(s, twister_export(risk_difference(curves[2], curves[3]), t_max, false), false);
  });
  o.csv("balance.csv", [&](std::ostream& s) {
    s << "covariate,weighting,mean_source,mean_target,smd,zero_variance\n";
    for (const auto* rows : {&balance_u, &balance_w}) {
      for (const auto& r : *rows) {
        s << r.covariate << ',' << (rows == &balance_w ? "weighted" : "unweighted") << ','
          << format_double(r.mean_source_weighted) << ',' << format_double(r.mean_target) << ','
          << (std::isnan(r.smd) ? std::string("NA") : format_double(r.smd)) << ','
          << (r.zero_variance_flag ? 1 : 0) << '\n';
      }
    }
  });
  o.csv("permutation_areas.csv", [&](std::ostream& s) {
    s << "j,area_weighted,area_unweighted\n";
    for (std::size_t j = 0; j < perms[0].permuted_areas.size(); ++j) {
      s << (j + 1) << ',' << format_double(perms[0].permuted_areas[j]) << ','
        << format_double(perms[1].permuted_areas[j]) << '\n';
    }
  });

  json j = provenance_json("diagnose", hash, cfg.seed);
  j["input"] = cfg.input;
  j["dataset"] = dataset_json(ds);
  j["models"] = fits_json(fits);
  j["t_max"] = t_max;
  j["refit"] = cfg.refit;
  j["add_one"] = cfg.add_one;
  j["weighted"] = permutation_json(perms[0], true);
  j["unweighted"] = permutation_json(perms[1], false);
  std::vector<std::string> files = o.written;
  files.push_back("permutation.json");
  j["outputs"] = files;
  o.text("permutation.json", j.dump(2));

  for (const auto& r : perms) {
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  }
  out << "diagnose: weighted area " << format_double(perms[0].observed_area) << " p=" << format_double(perms[0].p_value)
      << "; unweighted area " << format_double(perms[1].observed_area) << " p=" << format_double(perms[1].p_value)
      << "; wrote " << files.size() << " files to " << o.dir.string() << '\n';
  return kOk;
}

int cmd_simulate(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.config.empty()) throw StageError{"config", Error(ErrorKind::InvalidConfig, "simulate needs --config")};
  const std::string text = stage("config", [&] { return read_text(f.config); });
  ScenarioConfig cfg = stage("config", [&] { return parse_scenario_config(text); });
  const bool seed_in_config = stage("config", [&] {
    const toml::table tbl = toml::parse(text);
    return static_cast<bool>(tbl["scenario"]["seed"]);
  });
  if (!seed_in_config && !f.seed) {
    throw StageError{"config", Error(ErrorKind::InvalidConfig, "a seed is required (use --seed or scenario.seed)")};
  }
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.permutations) cfg.p = *f.permutations;
  if (f.bootstrap) cfg.B = *f.bootstrap;
  if (f.add_one) cfg.add_one = true;
  if (f.workers > 1) cfg.workers = f.workers;
  stage("config", [&] { cfg.validate(); });

  std::ostringstream canon;
  canon << "simulate\n" << text << '\n' << cfg.master_seed << ' ' << cfg.p << ' ' << cfg.B << ' ' << cfg.add_one;
  const std::string hash = fnv1a_hex(canon.str());

  if (!f.emit_dataset.empty()) {
    const SampledTrials st = stage("sample trials", [&] {
      return sample_trials(cfg.dgp, cfg.n1, cfg.n0, derive_seed(cfg.master_seed, seed_stream::kSampling, 0));
    });
    fs::path p(f.emit_dataset);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream o(p, std::ios::binary);
    if (!o) throw std::runtime_error("cannot write " + p.string());
    o << "# bridge " BRIDGE_VERSION " command=simulate config_hash=" << hash << " seed=" << cfg.master_seed << '\n';
    write_dataset(o, st.dataset);
    out << "simulate: wrote dataset with " << st.dataset.size() << " records to " << p.string() << '\n';
    return kOk;
  }

  const std::size_t every = std::max<std::size_t>(1, cfg.n_sims / 10);
  const ScenarioMetrics m = stage("scenario", [&] {
    return run_scenario(cfg, [&](std::size_t done, std::size_t total) {
      if (done % every == 0 || done == total) err << "simulate: " << done << '/' << total << " replicates\n";
    });
  });

  Output o = make_output(f.output_dir, "simulate", hash, cfg.master_seed);
  o.csv("metrics.csv", [&](std::ostream& s) { write_metrics_csv(s, m); });
  o.csv("rejection.csv", [&](std::ostream& s) { write_rejection_csv(s, m); });
  o.csv("replicates.csv", [&](std::ostream& s) {
    s << "replicate,model,t,estimate,se,p_value\n";
    for (std::size_t r = 0; r < m.replicates.size(); ++r) {
      const auto& rep = m.replicates[r];
      if (!rep.ok) continue;
      for (std::size_t k = 0; k < cfg.sampling_models.size(); ++k) {
        for (std::size_t t = 0; t < cfg.t_eval.size(); ++t) {
          s << (r + 1) << ',' << to_string(cfg.sampling_models[k]) << ',' << format_double(cfg.t_eval[t]) << ','
            << format_double(rep.estimate[k][t]) << ',' << format_double(rep.se[k][t]) << ','
            << format_double(rep.p_value[k]) << '\n';
        }
      }
    }
  });
  json j = json::parse(metrics_json(m));
  j["provenance"] = provenance_json("simulate", hash, cfg.master_seed);
  o.text("metrics.json", j.dump(2));
  if (m.failed > 0) err << "simulate: " << m.failed << " replicates failed\n";
  out << "simulate: " << m.completed << " replicates; wrote metrics to " << o.dir.string() << '\n';
  return kOk;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "TOML config file");
  sub->add_option("--input", f.input, "input dataset CSV");
  sub->add_option("--output-dir", f.output_dir, "directory for outputs");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--permutations", f.permutations, "permutation count");
  sub->add_option("--bootstrap", f.bootstrap, "bootstrap resamples (0 disables)");
  sub->add_option("--restrict", f.restrict, "restrict <covariate> <lo> <hi>")->expected(3)->allow_extra_args(false);
  sub->add_flag("--add-one", f.add_one, "use (count+1)/(p+1) p-values");
  sub->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bridged treatment comparisons across two trials sharing an arm", "bridge"};
  app.set_version_flag("--version", BRIDGE_VERSION);
  app.require_subcommand(1);
  Flags f;
  auto* est = app.add_subcommand("estimate", "fit nuisance models and estimate bridged risk differences");
  auto* diag = app.add_subcommand("diagnose", "compare shared-arm risk curves across trials");
  auto* sim = app.add_subcommand("simulate", "run a simulation scenario");
  add_common(est, f);
  add_common(diag, f);
  add_common(sim, f);
  sim->add_option("--emit-dataset", f.emit_dataset, "write one simulated dataset to this path and exit");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInputError;
  }

  try {
    if (*est) return cmd_estimate(f, out, err);
    if (*diag) return cmd_diagnose(f, out, err);
    return cmd_simulate(f, out, err);
  } catch (const StageError& e) {
    err << "error in stage '" << e.stage << "': " << e.error.what() << '\n';
    return is_input_error(e.error.kind()) ? kInputError : kEstimationError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_input_error(e.kind()) ? kInputError : kEstimationError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace bridge::cli
