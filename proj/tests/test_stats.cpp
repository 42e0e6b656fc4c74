#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "clreg/errors.hpp"
#include "clreg/stats.hpp"
#include "doctest.h"

using namespace clreg;

namespace {

// Independent high-precision oracle for I_x(a, b): composite Simpson on the
// sin^2 substitution, which removes the endpoint singularities for a, b >=
// 0.5. Numerator and denominator share the same quadrature, so no gamma
// functions are involved.
long double beta_integrand(long double phi, long double a, long double b) {
  const long double s = std::sin(phi);
  const long double c = std::cos(phi);
  return 2.0L * std::pow(s, 2.0L * a - 1.0L) * std::pow(c, 2.0L * b - 1.0L);
}

long double simpson_beta(long double upper, long double a, long double b, int intervals) {
  const long double h = upper / intervals;
  long double sum = beta_integrand(0.0L, a, b) + beta_integrand(upper, a, b);
  for (int i = 1; i < intervals; ++i) {
    sum += beta_integrand(h * i, a, b) * (i % 2 ? 4.0L : 2.0L);
  }
  return sum * h / 3.0L;
}

double ibeta_oracle(double a, double b, double x) {
  const long double phi_x = std::asin(std::sqrt(static_cast<long double>(x)));
  const long double half_pi = 1.57079632679489661923L;
  const int n = 1 << 16;
  const long double num = simpson_beta(phi_x, a, b, n);
  const long double den = simpson_beta(half_pi, a, b, n);
  return static_cast<double>(num / den);
}

// Independent oracle for P(T > t): direct Simpson integration of the
// Student-t density over [t, 2000].
double t_sf_oracle(double t, double nu) {
  const long double v = nu;
  const long double norm = std::exp(std::lgamma((v + 1.0L) / 2.0L) -
                                    std::lgamma(v / 2.0L)) /
                           std::sqrt(v * 3.14159265358979323846L);
  auto pdf = [&](long double u) {
    return norm * std::pow(1.0L + u * u / v, -(v + 1.0L) / 2.0L);
  };
  const long double lo = t;
  const long double hi = 2000.0L;
  const int n = 1 << 21;
  const long double h = (hi - lo) / n;
  long double sum = pdf(lo) + pdf(hi);
  for (int i = 1; i < n; ++i) sum += pdf(lo + h * i) * (i % 2 ? 4.0L : 2.0L);
  return static_cast<double>(sum * h / 3.0L);
}

}  // namespace

TEST_CASE("incomplete beta matches the quadrature oracle on a 64-point table") {
  const double as[] = {0.5, 1.0, 2.5, 5.0};
  const double bs[] = {0.5, 1.5, 4.0, 10.0};
  const double xs[] = {0.05, 0.3, 0.7, 0.95};
  for (double a : as) {
    for (double b : bs) {
      for (double x : xs) {
        const double got = regularized_incomplete_beta(a, b, x);
        const double expected = ibeta_oracle(a, b, x);
        CHECK(std::fabs(got - expected) < 1e-8);
      }
    }
  }
}

TEST_CASE("incomplete beta edge behavior") {
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1,1) = x
  CHECK(regularized_incomplete_beta(1.0, 1.0, 0.42) == doctest::Approx(0.42).epsilon(1e-12));
  CHECK_THROWS_AS(regularized_incomplete_beta(0.0, 1.0, 0.5), invalid_input);
}

TEST_CASE("student-t survival function against direct density integration") {
  const double cases[][2] = {{0.5, 3.0}, {1.2, 4.0}, {2.0, 5.0}, {3.434, 5.0}, {4.2426, 4.0}};
  for (const auto& c : cases) {
    const double got = student_t_sf(c[0], c[1]);
    const double expected = t_sf_oracle(c[0], c[1]);
    CHECK(std::fabs(got - expected) < 1e-8);
  }
  // symmetry: P(T > -t) = 1 - P(T > t)
  CHECK(student_t_sf(-1.2, 4.0) ==
        doctest::Approx(1.0 - student_t_sf(1.2, 4.0)).epsilon(1e-12));
}

TEST_CASE("one-sample t-test hand case: {1..5} vs 0") {
  const StatResult res = t_test_one_sample_greater({1, 2, 3, 4, 5}, 0.0);
  CHECK(res.statistic == doctest::Approx(3.0 * std::sqrt(5.0) / std::sqrt(2.5)).epsilon(1e-12));
  CHECK(res.statistic == doctest::Approx(4.242640687119285).epsilon(1e-12));
  // closed form: p = I_{2/11}(2, 1/2) / 2, with B_x(2, 1/2) elementary
  const double x = 2.0 / 11.0;
  const double bx = 4.0 / 3.0 -
                    (2.0 * std::sqrt(1.0 - x) - (2.0 / 3.0) * std::pow(1.0 - x, 1.5));
  const double expected_p = bx / (4.0 / 3.0) / 2.0;
  CHECK(res.p_value == doctest::Approx(expected_p).epsilon(1e-10));
  CHECK(std::fabs(res.p_value - 0.0066) < 1e-3);
  CHECK(std::fabs(res.p_value - t_sf_oracle(res.statistic, 4.0)) < 1e-8);
  CHECK(res.n == 5);
  CHECK(res.kind == StatKind::t_one_sample);
}

TEST_CASE("t-test trivial anchors") {
  SUBCASE("sample mean exactly at mu0 gives p = 0.5") {
    const StatResult res = t_test_one_sample_greater({1.0, 2.0, 3.0}, 2.0);
    CHECK(res.statistic == 0.0);
    CHECK(res.p_value == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("all observations below mu0 give p > 0.5") {
    const StatResult res = t_test_one_sample_greater({-3.0, -2.5, -1.0}, 0.0);
    CHECK(res.p_value > 0.5);
  }
  SUBCASE("degenerate inputs throw") {
    CHECK_THROWS_AS(t_test_one_sample_greater({1.0}, 0.0), numeric_error);
    CHECK_THROWS_AS(t_test_one_sample_greater({2.0, 2.0, 2.0}, 0.0), numeric_error);
  }
}

TEST_CASE("pearson trivial anchors") {
  const std::vector<double> xs = {1, 2, 3, 4, 5, 6, 7};
  SUBCASE("exact positive linearity") {
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2.0 * x + 1.0);
    const StatResult res = pearson(xs, ys);
    CHECK(res.statistic == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.p_value == 0.0);
  }
  SUBCASE("exact negation") {
    std::vector<double> ys;
    for (double x : xs) ys.push_back(-x);
    CHECK(pearson(xs, ys).statistic == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("degenerate inputs throw") {
    CHECK_THROWS_AS(pearson({1, 2}, {3, 4}), numeric_error);
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), numeric_error);
  }
}

TEST_CASE("pearson n=7 textbook fixture: r = 0.838 gives the t-table p") {
  // points built to land close to the textbook correlation of 0.838
  const std::vector<double> xs = {1, 2, 3, 4, 5, 6, 7};
  const std::vector<double> ys = {2.1, 2.2, 4.4, 3.9, 5.9, 5.0, 7.2};
  const StatResult res = pearson(xs, ys);
  // oracle recomputation of r from raw sums
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = 7.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    syy += ys[i] * ys[i];
    sxy += xs[i] * ys[i];
  }
  const double r_oracle = (n * sxy - sx * sy) /
                          std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  CHECK(res.statistic == doctest::Approx(r_oracle).epsilon(1e-12));

  // the published two-sided p for the resulting t at 5 dof, via the density oracle
  const double t = res.statistic * std::sqrt(5.0 / (1.0 - res.statistic * res.statistic));
  const double expected_p = 2.0 * t_sf_oracle(t, 5.0);
  CHECK(std::fabs(res.p_value - expected_p) < 1e-3);

  // and the textbook value itself: r = 0.838 at n = 7
  const double t_textbook = 0.838 * std::sqrt(5.0 / (1.0 - 0.838 * 0.838));
  const double p_textbook = 2.0 * t_sf_oracle(t_textbook, 5.0);
  CHECK(std::fabs(student_t_two_sided_p(t_textbook, 5.0) - p_textbook) < 1e-3);
}

TEST_CASE("pearson is symmetric and invariant to positive affine maps") {
  const std::vector<double> xs = {0.3, 1.9, -0.7, 2.2, 0.0, 1.1};
  const std::vector<double> ys = {1.0, 0.4, -1.3, 2.0, 0.7, 0.2};
  const StatResult base = pearson(xs, ys);
  CHECK(pearson(ys, xs).statistic == doctest::Approx(base.statistic).epsilon(1e-12));

  std::vector<double> scaled;
  for (double x : xs) scaled.push_back(3.5 * x - 11.0);
  const StatResult affine = pearson(scaled, ys);
  CHECK(affine.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
  CHECK(affine.p_value == doctest::Approx(base.p_value).epsilon(1e-10));
}
