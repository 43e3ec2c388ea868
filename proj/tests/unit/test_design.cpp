#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "bridge/design.hpp"
#include "bridge/error.hpp"
#include "helpers.hpp"

using namespace bridge;

namespace {

SplineSpec knots(std::vector<double> k) {
  SplineSpec s;
  s.knots = std::move(k);
  s.validate();
  return s;
}

double basis_j(double x, const SplineSpec& s, std::size_t j) { return spline_basis(x, s)[j]; }

}  // namespace

TEST_CASE("basis below the first knot is [x, 0, ..., 0]") {
  const auto s = knots({10, 20, 35, 50});
  for (double x : {-5.0, 0.0, 9.99, 10.0}) {
    const auto b = spline_basis(x, s);
    REQUIRE(b.size() == 3);
    CHECK(b[0] == x);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 0.0);
  }
}

TEST_CASE("basis matches the truncated-power formula") {
  const auto s = knots({1, 2, 4, 7, 8});
  auto pp = [](double v) { return v > 0 ? v * v : 0.0; };
  for (double x : {0.5, 1.5, 3.0, 5.0, 7.5, 9.0, 20.0}) {
    const auto b = spline_basis(x, s);
    REQUIRE(b.size() == 4);
    for (std::size_t j = 0; j < 3; ++j) {
      const double kj = s.knots[j];
      const double expected = pp(x - kj) - pp(x - 8) * (8 - kj) / (8 - 7) + pp(x - 7) * (7 - kj) / (8 - 7);
      CHECK(b[j + 1] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("basis is linear beyond the last knot") {
  const auto s = knots({5, 35, 65, 95});
  const double h = 1e-2;
  for (double x : {96.0, 120.0, 400.0}) {
    double sum_second = 0.0;
    for (std::size_t j = 1; j < 3; ++j) {
      const double second = (basis_j(x + h, s, j) - 2 * basis_j(x, s, j) + basis_j(x - h, s, j)) / (h * h);
      CHECK(std::fabs(second) < 1e-6 * (1 + std::fabs(basis_j(x, s, j))));
      sum_second += second;
    }
    CHECK(std::fabs(sum_second) < 1e-6 * 400);
  }
}

TEST_CASE("basis and first derivative are continuous at the knots") {
  const auto s = knots({5, 35, 65, 95});
  for (double k : s.knots) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double eps = 1e-7;
      CHECK(std::fabs(basis_j(k + eps, s, j) - basis_j(k - eps, s, j)) < 1e-4);
      const double h = 1e-4;
      const double right = (basis_j(k + 2 * h, s, j) - basis_j(k + h, s, j)) / h;
      const double left = (basis_j(k - h, s, j) - basis_j(k - 2 * h, s, j)) / h;
      CHECK(std::fabs(right - left) < 1e-2);
    }
  }
}

TEST_CASE("spline spec validation") {
  SplineSpec s;
  s.knots = {1, 2};
  CHECK_THROWS_AS(s.validate(), Error);
  s.knots = {1, 2, 2};
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("percentile uses linear interpolation between order statistics") {
  CHECK(percentile({4, 1, 3, 2}, 35) == doctest::Approx(2.05));
  CHECK(percentile({4, 1, 3, 2}, 0) == 1.0);
  CHECK(percentile({4, 1, 3, 2}, 100) == 4.0);
  CHECK(percentile({7}, 50) == 7.0);
  std::vector<double> v(101);
  std::iota(v.begin(), v.end(), 0.0);
  CHECK(percentile(v, 95) == doctest::Approx(95.0));
}

TEST_CASE("formula parsing") {
  const auto f = ModelFormula::parse({"w1", " spline( age , 5, 35, 65, 95 ) "});
  REQUIRE(f.terms.size() == 2);
  CHECK(f.terms[0].covariate == "w1");
  CHECK_FALSE(f.terms[0].spline_percentiles.has_value());
  CHECK(f.terms[1].covariate == "age");
  CHECK(*f.terms[1].spline_percentiles == std::vector<double>{5, 35, 65, 95});
  CHECK(f.covariates() == std::vector<std::string>{"w1", "age"});
  CHECK_THROWS_AS(ModelFormula::parse({"spline(age, 5, 95)"}), Error);
  CHECK_THROWS_AS(ModelFormula::parse({"spline(age, 5, x, 95)"}), Error);
  CHECK_THROWS_AS(ModelFormula::parse({"spline(age, 5, 35, 95"}), Error);
  CHECK_THROWS_AS(ModelFormula::parse({""}), Error);
}

TEST_CASE("design resolution and expansion") {
  std::vector<SubjectRecord> rs;
  for (int i = 0; i < 101; ++i) rs.push_back(testing::rec(i % 2, 2, 10, 1, {static_cast<double>(i), i % 3 == 0 ? 1.0 : 0.0}));
  std::vector<std::size_t> rows(rs.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto schema = testing::xy_schema();
  const auto f = ModelFormula::parse({"b", "spline(x, 5, 35, 65, 95)"});
  const auto d = resolve_design(f, schema, rs, rows);
  CHECK(d.width() == 4);
  REQUIRE(d.terms()[1].spline.has_value());
  CHECK(d.terms()[1].spline->knots == std::vector<double>{5, 35, 65, 95});
  CHECK(d.column_names().size() == 4);

  std::vector<double> out;
  d.expand(rs[50].covariates, out);
  REQUIRE(out.size() == 4);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 50.0);
  CHECK(out[2] == doctest::Approx(45.0 * 45.0));

  const Eigen::MatrixXd X = d.matrix(rs, rows, true);
  CHECK(X.rows() == 101);
  CHECK(X.cols() == 5);
  CHECK(X(50, 0) == 1.0);
  CHECK(X(50, 2) == 50.0);

  const std::vector<double> short_row{1.0};
  CHECK_THROWS_AS(d.expand(short_row, out), Error);

  try {
    resolve_design(ModelFormula::parse({"age"}), schema, rs, rows);
    FAIL("expected UnknownCovariate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownCovariate);
    CHECK(std::string(e.what()).find("age") != std::string::npos);
  }
}

TEST_CASE("knots placed on tied data are rejected") {
  std::vector<SubjectRecord> rs;
  for (int i = 0; i < 50; ++i) rs.push_back(testing::rec(0, 2, 10, 1, {i < 40 ? 0.0 : 1.0 * i, 0.0}));
  std::vector<std::size_t> rows(rs.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  CHECK_THROWS_AS(resolve_design(ModelFormula::parse({"spline(x, 5, 35, 65, 95)"}), testing::xy_schema(), rs, rows),
                  Error);
}
