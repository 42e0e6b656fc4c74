#include "clreg/stats.hpp"

#include <cmath>

#include "clreg/errors.hpp"

namespace clreg {

std::string stat_kind_name(StatKind kind) {
  return kind == StatKind::pearson ? "pearson" : "t_one_sample";
}

namespace {

// Lentz's continued fraction for the incomplete beta (Numerical Recipes form).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kTol = 1e-10;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kTol) return h;
  }
  throw numeric_error("incomplete beta: continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw invalid_input("incomplete beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * beta_cf(a, b, x) / a;
  }
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double nu) {
  if (nu <= 0.0) throw invalid_input("student_t: nu must be > 0");
  if (std::isinf(t)) return 0.0;
  const double x = nu / (nu + t * t);
  return regularized_incomplete_beta(nu / 2.0, 0.5, x);
}

double student_t_sf(double t, double nu) {
  const double half = 0.5 * student_t_two_sided_p(t, nu);
  return t >= 0.0 ? half : 1.0 - half;
}

StatResult pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw invalid_input("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 3) throw numeric_error("pearson: need n >= 3");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw numeric_error("pearson: constant input");
  double r = sxy / std::sqrt(sxx * syy);
  r = std::max(-1.0, std::min(1.0, r));

  StatResult result;
  result.statistic = r;
  result.n = n;
  result.kind = StatKind::pearson;
  const double nu = static_cast<double>(n - 2);
  if (std::fabs(r) >= 1.0) {
    result.p_value = 0.0;
  } else {
    const double t = r * std::sqrt(nu / (1.0 - r * r));
    result.p_value = student_t_two_sided_p(t, nu);
  }
  return result;
}

StatResult t_test_one_sample_greater(const std::vector<double>& xs, double mu0) {
  const std::size_t n = xs.size();
  if (n < 2) throw numeric_error("t-test: need n >= 2");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n - 1);
  if (var <= 0.0) throw numeric_error("t-test: zero sample variance");
  const double t = (mean - mu0) / std::sqrt(var / static_cast<double>(n));

  StatResult result;
  result.statistic = t;
  result.n = n;
  result.kind = StatKind::t_one_sample;
  result.p_value = student_t_sf(t, static_cast<double>(n - 1));
  return result;
}

}  // namespace clreg
