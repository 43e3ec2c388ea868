#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bridge/data.hpp"

namespace bridge {

// Restricted quadratic spline: truncated-power quadratic terms with a linear
// tail beyond the last knot.
struct SplineSpec {
  std::vector<double> knots;        // k_1 < ... < k_K, K >= 3
  std::vector<double> percentiles;  // set when knots were placed from data

  void validate() const;
};

// [x, b_1(x), ..., b_{K-2}(x)]
std::vector<double> spline_basis(double x, const SplineSpec& spec);
void append_spline_basis(double x, const SplineSpec& spec, std::vector<double>& out);

// Linear-interpolation percentile (p in [0, 100]) of unsorted data.
double percentile(std::vector<double> values, double p);

// One formula term as written in a config: a covariate name, optionally wrapped
// as spline(name, p1, p2, ...).
struct FormulaTerm {
  std::string covariate;
  std::optional<std::vector<double>> spline_percentiles;
};

struct ModelFormula {
  std::vector<FormulaTerm> terms;

  // Parses entries like "w1" or "spline(age, 5, 35, 65, 95)".
  static ModelFormula parse(const std::vector<std::string>& entries);
  bool empty() const noexcept { return terms.empty(); }
  std::vector<std::string> covariates() const;
};

struct DesignTerm {
  std::string covariate;
  std::size_t column = 0;  // index into SubjectRecord::covariates
  std::optional<SplineSpec> spline;
};

// A formula bound to a schema with spline knots fixed. Does not include an
// intercept column.
class DesignSpec {
 public:
  DesignSpec() = default;
  explicit DesignSpec(std::vector<DesignTerm> terms, std::size_t schema_size = 0);

  const std::vector<DesignTerm>& terms() const noexcept { return terms_; }
  std::size_t width() const noexcept { return width_; }
  std::vector<std::string> column_names() const;

  // Throws SchemaMismatch when the row is shorter than the schema it was
  // resolved against.
  void expand(std::span<const double> covariates, std::vector<double>& out) const;
  Eigen::MatrixXd matrix(const std::vector<SubjectRecord>& records,
                         std::span<const std::size_t> rows, bool intercept) const;

 private:
  std::vector<DesignTerm> terms_;
  std::size_t width_ = 0;
  std::size_t schema_size_ = 0;
};

// Binds a formula to a schema. Spline knots are placed at percentiles of the
// covariate over the given rows.
DesignSpec resolve_design(const ModelFormula& formula, const CovariateSchema& schema,
                          const std::vector<SubjectRecord>& records,
                          std::span<const std::size_t> rows);

}  // namespace bridge
