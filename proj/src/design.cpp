#include "bridge/design.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "bridge/error.hpp"

namespace bridge {

namespace {

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

double plus_sq(double x) { return x > 0.0 ? x * x : 0.0; }

}  // namespace

void SplineSpec::validate() const {
  if (knots.size() < 3) throw Error(ErrorKind::InvalidConfig, "restricted spline needs at least 3 knots");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i - 1] < knots[i])) {
      throw Error(ErrorKind::RankDeficient, "spline knots are not strictly increasing");
    }
  }
}

void append_spline_basis(double x, const SplineSpec& spec, std::vector<double>& out) {
  const auto& k = spec.knots;
  const std::size_t K = k.size();
  const double kK = k[K - 1];
  const double kK1 = k[K - 2];
  const double span = kK - kK1;
  const double tail_last = plus_sq(x - kK);
  const double tail_prev = plus_sq(x - kK1);
  out.push_back(x);
  for (std::size_t j = 0; j + 2 < K; ++j) {
    out.push_back(plus_sq(x - k[j]) - tail_last * (kK - k[j]) / span + tail_prev * (kK1 - k[j]) / span);
  }
}

std::vector<double> spline_basis(double x, const SplineSpec& spec) {
  std::vector<double> out;
  out.reserve(spec.knots.size() - 1);
  append_spline_basis(x, spec, out);
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorKind::InvalidValue, "percentile of empty data");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------

ModelFormula ModelFormula::parse(const std::vector<std::string>& entries) {
  ModelFormula f;
  for (const auto& raw : entries) {
    std::string e = trimmed(raw);
    if (e.empty()) throw Error(ErrorKind::InvalidConfig, "empty model formula term");
    if (e.rfind("spline(", 0) == 0) {
      if (e.back() != ')') throw Error(ErrorKind::InvalidConfig, "unterminated spline term '" + e + "'");
      std::string inner = e.substr(7, e.size() - 8);
      std::vector<std::string> parts;
      std::size_t start = 0;
      while (true) {
        auto comma = inner.find(',', start);
        parts.push_back(trimmed(inner.substr(start, comma == std::string::npos ? std::string::npos
                                                                               : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      FormulaTerm t;
      t.covariate = parts.front();
      if (t.covariate.empty()) throw Error(ErrorKind::InvalidConfig, "spline term without covariate");
      std::vector<double> pct;
      for (std::size_t i = 1; i < parts.size(); ++i) {
        double v = 0.0;
        const auto& s = parts[i];
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
          throw Error(ErrorKind::InvalidConfig, "bad spline percentile '" + s + "' in '" + e + "'");
        }
        pct.push_back(v);
      }
      if (pct.empty()) pct = {5.0, 35.0, 65.0, 95.0};
      if (pct.size() < 3) throw Error(ErrorKind::InvalidConfig, "spline needs at least 3 percentiles: " + e);
      t.spline_percentiles = std::move(pct);
      f.terms.push_back(std::move(t));
    } else {
      f.terms.push_back(FormulaTerm{e, std::nullopt});
    }
  }
  return f;
}

std::vector<std::string> ModelFormula::covariates() const {
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(t.covariate);
  return out;
}

// ---------------------------------------------------------------------------

DesignSpec::DesignSpec(std::vector<DesignTerm> terms, std::size_t schema_size)
    : terms_(std::move(terms)), schema_size_(schema_size) {
  width_ = 0;
  for (const auto& t : terms_) {
    if (t.spline) {
      t.spline->validate();
      width_ += t.spline->knots.size() - 1;
    } else {
      width_ += 1;
    }
    schema_size_ = std::max(schema_size_, t.column + 1);
  }
}

std::vector<std::string> DesignSpec::column_names() const {
  std::vector<std::string> out;
  for (const auto& t : terms_) {
    out.push_back(t.covariate);
    if (t.spline) {
      for (std::size_t j = 1; j + 1 < t.spline->knots.size(); ++j) {
        out.push_back(t.covariate + "_rqs" + std::to_string(j));
      }
    }
  }
  return out;
}

void DesignSpec::expand(std::span<const double> covariates, std::vector<double>& out) const {
  if (covariates.size() < schema_size_) {
    throw Error(ErrorKind::SchemaMismatch, "covariate row has " + std::to_string(covariates.size()) +
                                               " values, design expects " + std::to_string(schema_size_));
  }
  for (const auto& t : terms_) {
    const double x = covariates[t.column];
    if (t.spline) {
      append_spline_basis(x, *t.spline, out);
    } else {
      out.push_back(x);
    }
  }
}

Eigen::MatrixXd DesignSpec::matrix(const std::vector<SubjectRecord>& records,
                                   std::span<const std::size_t> rows, bool intercept) const {
  const Eigen::Index p = static_cast<Eigen::Index>(width_ + (intercept ? 1 : 0));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), p);
  std::vector<double> buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    buf.clear();
    if (intercept) buf.push_back(1.0);
    expand(records[rows[i]].covariates, buf);
    for (Eigen::Index j = 0; j < p; ++j) X(static_cast<Eigen::Index>(i), j) = buf[static_cast<std::size_t>(j)];
  }
  return X;
}

DesignSpec resolve_design(const ModelFormula& formula, const CovariateSchema& schema,
                          const std::vector<SubjectRecord>& records, std::span<const std::size_t> rows) {
  std::vector<DesignTerm> terms;
  for (const auto& ft : formula.terms) {
    DesignTerm t;
    t.covariate = ft.covariate;
    t.column = schema.index_of(ft.covariate);
    if (ft.spline_percentiles) {
      if (schema.columns()[t.column].type != CovariateType::Real) {
        throw Error(ErrorKind::InvalidConfig, "spline requested for binary covariate '" + ft.covariate + "'");
      }
      std::vector<double> values;
      values.reserve(rows.size());
      for (auto i : rows) values.push_back(records[i].covariates[t.column]);
      if (values.empty()) throw Error(ErrorKind::InvalidValue, "no data to place spline knots");
      std::sort(values.begin(), values.end());
      SplineSpec spec;
      spec.percentiles = *ft.spline_percentiles;
      for (double p : spec.percentiles) spec.knots.push_back(percentile(values, p));
      try {
        spec.validate();
      } catch (const Error& e) {
        throw Error(e.kind(), "spline on '" + ft.covariate + "': knots at the requested percentiles are not distinct");
      }
      t.spline = std::move(spec);
    }
    terms.push_back(std::move(t));
  }
  return DesignSpec(std::move(terms), schema.size());
}

}  // namespace bridge
