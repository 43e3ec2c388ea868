#include "bridge/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "bridge/error.hpp"

namespace bridge {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    // accept integral decimals such as "1.0"
    auto d = parse_double(s);
    if (d && std::isfinite(*d) && std::floor(*d) == *d && std::fabs(*d) < 1e9) {
      return static_cast<int>(*d);
    }
    return std::nullopt;
  }
  return v;
}

std::string row_label(std::size_t row) { return "row " + std::to_string(row); }

}  // namespace

// ---------------------------------------------------------------------------
// CovariateSchema

CovariateSchema::CovariateSchema(std::vector<CovariateColumn> columns) : columns_(std::move(columns)) {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (columns_[i].name == columns_[j].name) {
        throw Error(ErrorKind::InvalidConfig, "duplicate covariate '" + columns_[i].name + "'");
      }
    }
    static constexpr std::string_view reserved[] = {"id", "s", "a", "t", "delta"};
    if (std::find(std::begin(reserved), std::end(reserved), columns_[i].name) != std::end(reserved)) {
      throw Error(ErrorKind::InvalidConfig,
                  "covariate name '" + columns_[i].name + "' collides with a reserved column");
    }
  }
}

std::optional<std::size_t> CovariateSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t CovariateSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorKind::UnknownCovariate, "covariate '" + std::string(name) + "' is not in the schema");
}

std::string CovariateSchema::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  for (const auto& c : columns_) {
    mix(c.name);
    mix(c.type == CovariateType::Binary ? "binary" : "real");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool operator==(const CovariateSchema& a, const CovariateSchema& b) {
  if (a.columns_.size() != b.columns_.size()) return false;
  for (std::size_t i = 0; i < a.columns_.size(); ++i) {
    if (a.columns_[i].name != b.columns_[i].name || a.columns_[i].type != b.columns_[i].type) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Restriction / FusedDataset

std::string Restriction::describe() const {
  return covariate + " in [" + format_double(lo) + ", " + format_double(hi) + "]: " +
         std::to_string(records_before) + " -> " + std::to_string(records_after) + " records";
}

FusedDataset::FusedDataset(std::vector<SubjectRecord> records, double admin_censor_time,
                           CovariateSchema schema, Provenance provenance)
    : records_(std::move(records)),
      admin_censor_time_(admin_censor_time),
      schema_(std::move(schema)),
      provenance_(std::move(provenance)) {
  if (provenance_.schema_hash.empty()) provenance_.schema_hash = schema_.hash();
}

TrialCounts FusedDataset::counts() const {
  TrialCounts c;
  for (const auto& r : records_) {
    if (r.s == kSourceTrial) ++c.n_source; else ++c.n_target;
    if ((r.s == 0 || r.s == 1) && r.a >= 1 && r.a <= 3) ++c.arm_counts[r.s][r.a];
  }
  return c;
}

void validate_record(const SubjectRecord& r, const CovariateSchema& schema, double admin_censor_time,
                     std::size_t row) {
  if (r.s != 0 && r.s != 1) {
    throw Error(ErrorKind::InvalidValue, row_label(row) + ": s must be 0 or 1", row);
  }
  if (r.a < 1 || r.a > 3) {
    throw Error(ErrorKind::InvalidValue, row_label(row) + ": a must be 1, 2, or 3", row);
  }
  if (!arm_allowed(r.s, r.a)) {
    throw Error(ErrorKind::ArmTrialMismatch,
                row_label(row) + ": arm " + std::to_string(r.a) + " is not part of trial s=" +
                    std::to_string(r.s),
                row);
  }
  if (!std::isfinite(r.t_star) || r.t_star <= 0.0) {
    throw Error(ErrorKind::NonPositiveTime, row_label(row) + ": t must be positive and finite", row);
  }
  if (r.t_star > admin_censor_time) {
    throw Error(ErrorKind::InvalidValue,
                row_label(row) + ": t exceeds the administrative censoring time " +
                    format_double(admin_censor_time),
                row);
  }
  if (r.delta != 0 && r.delta != 1) {
    throw Error(ErrorKind::InvalidValue, row_label(row) + ": delta must be 0 or 1", row);
  }
  if (r.covariates.size() != schema.size()) {
    throw Error(ErrorKind::SchemaMismatch, row_label(row) + ": covariate count does not match schema", row);
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const double v = r.covariates[j];
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::NonNumericValue,
                  row_label(row) + ": covariate '" + schema.columns()[j].name + "' is not finite", row);
    }
    if (schema.columns()[j].type == CovariateType::Binary && v != 0.0 && v != 1.0) {
      throw Error(ErrorKind::InvalidValue,
                  row_label(row) + ": binary covariate '" + schema.columns()[j].name + "' must be 0 or 1",
                  row);
    }
  }
}

void FusedDataset::validate() const {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    validate_record(records_[i], schema_, admin_censor_time_, i + 1);
  }
  const TrialCounts c = counts();
  if (c.n_source == 0 || c.n_target == 0) {
    throw Error(ErrorKind::InvalidValue, "dataset must contain records from both trials");
  }
  if (c.arm_counts[0][kArmShared] == 0 || c.arm_counts[1][kArmShared] == 0) {
    throw Error(ErrorKind::InvalidValue, "each trial must contain at least one shared-arm (a=2) record");
  }
}

FusedDataset FusedDataset::with_trial_indicator(const std::vector<int>& s) const {
  if (s.size() != records_.size()) throw std::invalid_argument("trial indicator length mismatch");
  FusedDataset out = *this;
  for (std::size_t i = 0; i < s.size(); ++i) out.records_[i].s = s[i];
  return out;
}

// ---------------------------------------------------------------------------
// CSV

FusedDataset load_dataset(std::istream& in, const CovariateSchema& schema, double admin_censor_time,
                          std::string source) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    if (v.size() >= 3 && static_cast<unsigned char>(v[0]) == 0xEF &&
        static_cast<unsigned char>(v[1]) == 0xBB && static_cast<unsigned char>(v[2]) == 0xBF) {
      v.remove_prefix(3);
    }
    for (auto f : split_csv_line(v)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw Error(ErrorKind::MissingColumn, "input has no header row");

  auto column = [&](std::string_view name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorKind::MissingColumn, "column '" + std::string(name) + "' is missing from the header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("id");
  const std::size_t c_s = column("s");
  const std::size_t c_a = column("a");
  const std::size_t c_t = column("t");
  const std::size_t c_delta = column("delta");
  std::vector<std::size_t> c_cov;
  for (const auto& col : schema.columns()) c_cov.push_back(column(col.name));

  std::vector<SubjectRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    ++row;
    auto fields = split_csv_line(v);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::MissingColumn,
                  row_label(row) + ": expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()),
                  row);
    }
    auto need_int = [&](std::size_t c, const char* name) {
      auto x = parse_int(fields[c]);
      if (!x) {
        throw Error(ErrorKind::NonNumericValue,
                    row_label(row) + ": column '" + name + "' value '" + std::string(fields[c]) +
                        "' is not an integer",
                    row);
      }
      return *x;
    };
    auto need_double = [&](std::size_t c, const std::string& name) {
      auto x = parse_double(fields[c]);
      if (!x) {
        throw Error(ErrorKind::NonNumericValue,
                    row_label(row) + ": column '" + name + "' value '" + std::string(fields[c]) +
                        "' is not numeric",
                    row);
      }
      return *x;
    };

    SubjectRecord r;
    r.id = std::string(fields[c_id]);
    r.s = need_int(c_s, "s");
    r.a = need_int(c_a, "a");
    r.t_star = need_double(c_t, "t");
    r.delta = need_int(c_delta, "delta");
    r.covariates.reserve(c_cov.size());
    for (std::size_t j = 0; j < c_cov.size(); ++j) {
      r.covariates.push_back(need_double(c_cov[j], schema.columns()[j].name));
    }
    validate_record(r, schema, admin_censor_time, row);
    records.push_back(std::move(r));
  }

  Provenance prov;
  prov.source = std::move(source);
  prov.schema_hash = schema.hash();
  FusedDataset ds(std::move(records), admin_censor_time, schema, std::move(prov));
  ds.validate();
  return ds;
}

FusedDataset load_dataset_file(const std::string& path, const CovariateSchema& schema,
                               double admin_censor_time) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open input file '" + path + "'");
  return load_dataset(in, schema, admin_censor_time, path);
}

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

void write_dataset(std::ostream& out, const FusedDataset& ds) {
  out << "id,s,a,t,delta";
  for (const auto& c : ds.schema().columns()) out << ',' << c.name;
  out << '\n';
  for (const auto& r : ds.records()) {
    out << r.id << ',' << r.s << ',' << r.a << ',' << format_double(r.t_star) << ',' << r.delta;
    for (double v : r.covariates) out << ',' << format_double(v);
    out << '\n';
  }
}

FusedDataset restrict_range(const FusedDataset& ds, std::string_view covariate, double lo, double hi) {
  const std::size_t j = ds.schema().index_of(covariate);
  if (lo > hi) throw Error(ErrorKind::InvalidConfig, "restriction bounds are reversed");

  std::vector<SubjectRecord> kept;
  kept.reserve(ds.size());
  for (const auto& r : ds.records()) {
    const double v = r.covariates[j];
    if (lo <= v && v <= hi) kept.push_back(r);
  }

  Provenance prov = ds.provenance();
  Restriction rest{std::string(covariate), lo, hi, ds.size(), kept.size()};
  prov.restrictions.push_back(rest);
  FusedDataset out(std::move(kept), ds.admin_censor_time(), ds.schema(), std::move(prov));

  const TrialCounts before = ds.counts();
  const TrialCounts after = out.counts();
  if (after.n_source == 0 || after.n_target == 0) {
    throw Error(ErrorKind::EmptyTrialAfterRestriction, rest.describe() + " leaves a trial empty");
  }
  for (int s = 0; s <= 1; ++s) {
    for (int a = 1; a <= 3; ++a) {
      if (before.arm_counts[s][a] > 0 && after.arm_counts[s][a] == 0) {
        throw Error(ErrorKind::EmptyTrialAfterRestriction,
                    rest.describe() + " leaves arm " + std::to_string(a) + " of trial s=" +
                        std::to_string(s) + " empty");
      }
    }
  }
  return out;
}

}  // namespace bridge
