#pragma once

#include <functional>
#include <span>

namespace citecrit::dist {

/// Closed bracket for one-dimensional root finding.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Root of `f` inside `bracket`. `f(lo)` and `f(hi)` must differ in sign.
/// Combines bisection with secant steps; stops when the bracket is narrower
/// than `tol` (absolute) or `f` hits zero exactly.
double find_root(const std::function<double(double)>& f, Interval bracket, double tol = 1e-14);

double normal_pdf(double x);
double normal_cdf(double x);
/// Upper tail 1 - normal_cdf(x), accurate when that is tiny.
double normal_sf(double x);
/// log(normal_cdf(x)); stays finite far into the lower tail.
double log_normal_cdf(double x);
double normal_quantile(double p);

double logistic_pdf(double x);
double logistic_cdf(double x);
double logistic_sf(double x);
double logistic_quantile(double p);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

double t_cdf(double x, double df);
double t_sf(double x, double df);
/// Two-sided tail probability P(|T| >= |t|).
double t_two_sided_p(double t, double df);
double t_quantile(double p, double df);

/// log(sum(exp(v))) without overflow. Empty input gives -inf.
double log_sum_exp(std::span<const double> values);

}  // namespace citecrit::dist
