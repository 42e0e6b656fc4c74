#pragma once

#include <string>
#include <vector>

namespace clreg {

enum class StatKind { pearson, t_one_sample };

struct StatResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  StatKind kind = StatKind::pearson;
  bool degenerate = false;  // set by probes when inputs are constant
};

std::string stat_kind_name(StatKind kind);

// Regularized incomplete beta I_x(a, b) via continued fractions
// (absolute tolerance 1e-10, at most 300 iterations).
double regularized_incomplete_beta(double a, double b, double x);

// Survival functions of Student's t with nu degrees of freedom.
double student_t_sf(double t, double nu);            // P(T > t)
double student_t_two_sided_p(double t, double nu);   // P(|T| > |t|)

// Pearson r with two-sided p from t = r sqrt((n-2)/(1-r^2)).
// Throws numeric_error when n < 3 or either input is constant.
StatResult pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// One-sided test of mean(xs) > mu0, sample std (n-1 denominator).
// Throws numeric_error when n < 2 or the sample variance is zero.
StatResult t_test_one_sample_greater(const std::vector<double>& xs, double mu0);

}  // namespace clreg
