#include "citecrit/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "citecrit/error.hpp"

namespace citecrit::dist {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) {
        throw NumericError(std::string(what) + ": non-finite input " + std::to_string(x));
    }
}

void require_probability(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0)) {
        throw NumericError(std::string(what) + ": probability must lie in (0, 1), got " +
                           std::to_string(p));
    }
}

// Continued fraction for the incomplete beta, modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    constexpr int max_iter = 20000;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double find_root(const std::function<double(double)>& f, Interval bracket, double tol) {
    double lo = bracket.lo;
    double hi = bracket.hi;
    if (!(lo < hi)) throw NumericError("find_root: bracket must satisfy lo < hi");
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) throw NumericError("find_root: no sign change across bracket");
    for (int iter = 0; iter < 400 && hi - lo > tol; ++iter) {
        // Alternate secant (regula falsi) and bisection so the bracket always shrinks.
        double mid = (iter % 2 == 0) ? lo - flo * (hi - lo) / (fhi - flo) : 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
        const double fmid = f(mid);
        if (fmid == 0.0) return mid;
        if ((fmid > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
            fhi = fmid;
        }
    }
    return std::fabs(flo) < std::fabs(fhi) ? lo : hi;
}

double normal_pdf(double x) {
    require_finite(x, "normal_pdf");
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double normal_cdf(double x) {
    require_finite(x, "normal_cdf");
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

double normal_sf(double x) {
    require_finite(x, "normal_sf");
    return 0.5 * std::erfc(x * kInvSqrt2);
}

double log_normal_cdf(double x) {
    require_finite(x, "log_normal_cdf");
    if (x > 0.0) return std::log1p(-normal_sf(x));
    if (x > -30.0) return std::log(normal_cdf(x));
    // Asymptotic expansion of the Mills ratio for the far lower tail.
    const double z2 = 1.0 / (x * x);
    const double series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2 + 105.0 * z2 * z2 * z2 * z2;
    return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double normal_quantile(double p) {
    require_probability(p, "normal_quantile");
    // Acklam's rational approximation, then one Halley step against erfc.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00, 2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    for (int step = 0; step < 2; ++step) {
        // Work on whichever tail keeps the residual well conditioned.
        const double e = (x <= 0.0) ? normal_cdf(x) - p : (1.0 - p) - normal_sf(x);
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double logistic_pdf(double x) {
    require_finite(x, "logistic_pdf");
    const double e = std::exp(-std::fabs(x));
    return e / ((1.0 + e) * (1.0 + e));
}

double logistic_cdf(double x) {
    require_finite(x, "logistic_cdf");
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logistic_sf(double x) { return logistic_cdf(-x); }

double logistic_quantile(double p) {
    require_probability(p, "logistic_quantile");
    return std::log(p) - std::log1p(-p);
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
        throw NumericError("incomplete_beta: shape parameters must be positive and finite");
    }
    require_finite(x, "incomplete_beta");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double t_sf(double x, double df) {
    require_finite(x, "t_sf");
    if (!(df > 0.0) || !std::isfinite(df)) throw NumericError("t distribution: df must be positive");
    // Lower-tail mass beyond |x| is I_{df/(df+x^2)}(df/2, 1/2) / 2.
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + x * x));
    return x >= 0.0 ? tail : 1.0 - tail;
}

double t_cdf(double x, double df) {
    require_finite(x, "t_cdf");
    return t_sf(-x, df);
}

double t_two_sided_p(double t, double df) {
    require_finite(t, "t_two_sided_p");
    if (!(df > 0.0) || !std::isfinite(df)) throw NumericError("t distribution: df must be positive");
    return std::min(1.0, incomplete_beta(0.5 * df, 0.5, df / (df + t * t)));
}

double t_quantile(double p, double df) {
    require_probability(p, "t_quantile");
    if (!(df > 0.0) || !std::isfinite(df)) throw NumericError("t distribution: df must be positive");
    if (p == 0.5) return 0.0;
    // Work in the lower tail so the target probability is not rounded away.
    const bool upper = p > 0.5;
    const double target = upper ? 1.0 - p : p;
    double lo = std::min(-1.0, 2.0 * normal_quantile(target));
    while (t_cdf(lo, df) > target) lo *= 2.0;
    const double root = find_root([&](double x) { return t_cdf(x, df) - target; }, {lo, 0.0}, 1e-15);
    return upper ? -root : root;
}

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace citecrit::dist
