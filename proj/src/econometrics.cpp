#include "citecrit/econometrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "citecrit/csv.hpp"
#include "citecrit/distributions.hpp"
#include "citecrit/error.hpp"

namespace citecrit {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kInf = std::numeric_limits<double>::infinity();

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// log(1 - exp(d)) for d <= 0.
double log1mexp(double d) { return d > -0.6931471805599453 ? std::log(-std::expm1(d)) : std::log1p(-std::exp(d)); }

struct LinkFns {
    Link link;

    double log_cdf(double x) const { return link == Link::logit ? -softplus(-x) : dist::log_normal_cdf(x); }
    double log_sf(double x) const { return log_cdf(-x); }
    double log_pdf(double x) const {
        if (link == Link::probit) return -0.5 * x * x - kLogSqrt2Pi;
        const double a = std::fabs(x);
        return -a - 2.0 * std::log1p(std::exp(-a));
    }
    /// d/dx log f(x).
    double dlog_pdf(double x) const { return link == Link::logit ? 1.0 - 2.0 * dist::logistic_cdf(x) : -x; }
    double quantile(double p) const {
        return link == Link::logit ? dist::logistic_quantile(p) : dist::normal_quantile(p);
    }
    /// f(u) / F(u).
    double mills(double u) const {
        return link == Link::logit ? dist::logistic_cdf(-u) : std::exp(log_pdf(u) - log_cdf(u));
    }
};

// log(F(u) - F(l)) with l < u; either bound may be infinite.
double log_interval(const LinkFns& F, double l, double u) {
    if (l == -kInf) return F.log_cdf(u);
    if (u == kInf) return F.log_sf(l);
    if (l >= 0.0) {
        const double a = F.log_sf(l);
        return a + log1mexp(F.log_sf(u) - a);
    }
    const double a = F.log_cdf(u);
    return a + log1mexp(F.log_cdf(l) - a);
}

void require_finite(const Eigen::VectorXd& v, const char* what) {
    if (!v.allFinite()) throw NumericError(std::string(what) + " contains non-finite values");
}

std::vector<std::size_t> collinear_columns(const Eigen::MatrixXd& X) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    const auto rank = static_cast<std::size_t>(qr.rank());
    std::vector<std::size_t> out;
    for (std::size_t k = rank; k < static_cast<std::size_t>(X.cols()); ++k) {
        out.push_back(static_cast<std::size_t>(qr.colsPermutation().indices()(static_cast<Eigen::Index>(k))));
    }
    std::sort(out.begin(), out.end());
    return out;
}

void require_full_rank(const DesignMatrix& X) {
    const auto bad = collinear_columns(X.values);
    if (bad.empty()) return;
    std::string names;
    for (std::size_t j : bad) names += (names.empty() ? "" : ", ") + X.names[j];
    throw ValidationError("design matrix is rank deficient; collinear columns: " + names);
}

Eigen::MatrixXd sym_inverse(const Eigen::MatrixXd& A, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw NumericError(std::string(what) + " is not positive definite");
    }
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
    if (!inv.allFinite()) throw NumericError(std::string(what) + " could not be inverted");
    return inv;
}

Eigen::VectorXd sqrt_diag(const Eigen::MatrixXd& V) {
    Eigen::VectorXd out(V.rows());
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        if (!(V(i, i) > 0.0)) throw NumericError("non-positive variance estimate");
        out(i) = std::sqrt(V(i, i));
    }
    return out;
}

/// Column scaling used during iteration. Centering applies only when an
/// intercept (or threshold set) can absorb the shift.
struct Scaling {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    Eigen::MatrixXd Z;
};

Scaling standardize(const Eigen::MatrixXd& X, bool center, Eigen::Index skip_col) {
    Scaling s;
    const Eigen::Index p = X.cols();
    const auto n = static_cast<double>(X.rows());
    s.mean = Eigen::VectorXd::Zero(p);
    s.scale = Eigen::VectorXd::Ones(p);
    s.Z = X;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (j == skip_col) continue;
        const double m = X.col(j).mean();
        const double sd = std::sqrt((X.col(j).array() - m).square().sum() / n);
        const double sc = center ? sd : std::sqrt(X.col(j).squaredNorm() / n);
        if (sc > 0.0) s.scale(j) = sc;
        if (center) s.mean(j) = m;
        s.Z.col(j) = (X.col(j).array() - s.mean(j)) / s.scale(j);
    }
    return s;
}

double two_sided_normal_p(double z) { return std::min(1.0, 2.0 * dist::normal_sf(std::fabs(z))); }

struct NewtonResult {
    Eigen::VectorXd theta;
    double loglik = 0.0;
    int iterations = 0;
    Eigen::VectorXd last_step;  // the Newton step still pending at the stopping point
};

// Under separation the likelihood flattens towards its supremum, so the
// change criterion can fire while full Newton steps still move the
// standardized coefficients by a visible amount. At a genuine maximum the
// last step is orders of magnitude smaller.
void reject_drift(const NewtonResult& nr, const std::vector<std::string>& names, const char* model) {
    if (nr.last_step.size() == 0) return;
    Eigen::Index j = 0;
    if (nr.last_step.cwiseAbs().maxCoeff(&j) <= 1e-4) return;
    const std::string what = j < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(j)]
                                                                          : std::string("thresholds");
    throw SeparationError(fmt::format("{}: perfect or quasi-separation on '{}' (no finite maximum)", model, what));
}

// Damped Newton ascent with step-halving. `eval` returns loglik, gradient
// and Hessian; `loglik` evaluates the objective only. `check` may throw.
template <typename Eval, typename LogLik, typename Check>
NewtonResult newton(Eigen::VectorXd theta, const Eval& eval, const LogLik& loglik, const Check& check,
                    const FitOptions& options, const char* model) {
    likelihood::Evaluation cur = eval(theta);
    if (!std::isfinite(cur.loglik)) throw NumericError(std::string(model) + ": non-finite log-likelihood at start");
    auto newton_step = [&](const likelihood::Evaluation& at) {
        Eigen::MatrixXd negH = -at.hessian;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(negH);
        double ridge = 0.0;
        while (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any()) {
            ridge = ridge == 0.0 ? 1e-8 * std::max(1.0, negH.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
            if (!std::isfinite(ridge)) throw NumericError(std::string(model) + ": Hessian is degenerate");
            ldlt.compute(negH + ridge * Eigen::MatrixXd::Identity(negH.rows(), negH.cols()));
        }
        return Eigen::VectorXd(ldlt.solve(at.gradient));
    };
    for (int it = 1; it <= options.max_iterations; ++it) {
        if (cur.gradient.lpNorm<Eigen::Infinity>() < options.score_tolerance) {
            return {theta, cur.loglik, it - 1, newton_step(cur)};
        }
        const Eigen::VectorXd step = newton_step(cur);
        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd next;
        double next_ll = 0.0;
        for (int half = 0; half < 50; ++half, t *= 0.5) {
            next = theta + t * step;
            next_ll = loglik(next);
            if (std::isfinite(next_ll) && next_ll >= cur.loglik - 1e-12 * std::fabs(cur.loglik)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No ascent direction left within floating-point resolution.
            if (cur.gradient.lpNorm<Eigen::Infinity>() < 1e-5) return {theta, cur.loglik, it};
            throw ConvergenceError(std::string(model) + ": step-halving failed to increase the likelihood");
        }
        theta = next;
        check(theta);
        const double change = std::fabs(next_ll - cur.loglik);
        cur = eval(theta);
        if (change < options.loglik_tolerance && t == 1.0) return {theta, cur.loglik, it, step};
    }
    if (cur.gradient.lpNorm<Eigen::Infinity>() < options.score_tolerance) {
        return {theta, cur.loglik, options.max_iterations, newton_step(cur)};
    }
    throw ConvergenceError(fmt::format("{}: no convergence after {} iterations", model, options.max_iterations));
}

}  // namespace

// ---------------------------------------------------------------- design

DesignMatrix DesignMatrix::from_columns(std::vector<std::string> names, const std::vector<std::vector<double>>& columns,
                                        bool add_intercept) {
    if (names.size() != columns.size()) throw ValidationError("column names and data differ in count");
    const std::size_t n = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns) {
        if (c.size() != n) throw ValidationError("design columns have different lengths");
    }
    DesignMatrix X;
    X.names = std::move(names);
    const std::size_t p = columns.size() + (add_intercept ? 1 : 0);
    X.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            X.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns[j][i];
        }
    }
    if (add_intercept) {
        X.values.col(static_cast<Eigen::Index>(p - 1)).setOnes();
        X.names.emplace_back(kInterceptName);
    }
    X.validate();
    return X;
}

bool DesignMatrix::has_intercept() const { return !names.empty() && names.back() == kInterceptName; }

void DesignMatrix::validate() const {
    if (names.size() != cols()) throw ValidationError("design matrix has a column without a name");
    std::set<std::string_view> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw ValidationError("duplicate design column '" + n + "'");
    }
    if (!values.allFinite()) throw NumericError("design matrix contains non-finite values");
    if (rows() <= cols()) {
        throw ValidationError(fmt::format("need more observations ({}) than columns ({})", rows(), cols()));
    }
}

std::string_view family_name(Family family) {
    switch (family) {
        case Family::ols: return "ols";
        case Family::logit: return "logit";
        case Family::probit: return "probit";
        case Family::ordered_logit: return "ordered_logit";
        case Family::ordered_probit: return "ordered_probit";
    }
    return "unknown";
}

// ---------------------------------------------------------------- OLS

FitResult fit_ols(const DesignMatrix& X, const Eigen::VectorXd& y, const FitOptions& options) {
    X.validate();
    if (static_cast<std::size_t>(y.size()) != X.rows()) throw ValidationError("response length differs from design rows");
    require_finite(y, "response");
    require_full_rank(X);
    const Eigen::Index n = X.values.rows();
    const Eigen::Index p = X.values.cols();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X.values);
    FitResult r;
    r.family = Family::ols;
    r.terms = X.names;
    r.n = static_cast<std::size_t>(n);
    r.robust = options.robust;
    r.betas = qr.solve(y);
    r.residuals = y - X.values * r.betas;
    r.ssr = r.residuals.squaredNorm();
    r.loglik = std::numeric_limits<double>::quiet_NaN();
    r.converged = true;

    // (X'X)^-1 = P R^-1 R^-T P'.
    const Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd perm_bread = Rinv * Rinv.transpose();
    const auto& P = qr.colsPermutation();
    const Eigen::MatrixXd bread = P * perm_bread * P.transpose();

    const double dof = static_cast<double>(n - p);
    const double s2 = r.ssr / dof;
    r.classical_se = (s2 * bread.diagonal()).cwiseSqrt();
    const Eigen::MatrixXd meat = X.values.transpose() * r.residuals.cwiseAbs2().asDiagonal() * X.values;
    const Eigen::MatrixXd hc1 = (static_cast<double>(n) / dof) * bread * meat * bread;
    r.robust_se = hc1.diagonal().cwiseMax(0.0).cwiseSqrt();
    r.se = options.robust ? r.robust_se : r.classical_se;
    r.stat.resize(p);
    r.p.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        r.stat(j) = r.se(j) > 0.0 ? r.betas(j) / r.se(j) : (r.betas(j) == 0.0 ? 0.0 : kInf);
        r.p(j) = std::isfinite(r.stat(j)) ? dist::t_two_sided_p(r.stat(j), dof) : 0.0;
    }
    return r;
}

// ---------------------------------------------------------------- likelihoods

namespace likelihood {

double binary_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link, const Eigen::VectorXd& beta) {
    const LinkFns F{link};
    const Eigen::VectorXd eta = X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) ll += F.log_cdf(y(i) > 0.5 ? eta(i) : -eta(i));
    return ll;
}

Evaluation binary(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link, const Eigen::VectorXd& beta) {
    const LinkFns F{link};
    const Eigen::VectorXd eta = X * beta;
    const Eigen::Index n = X.rows();
    Eigen::VectorXd g(n), w(n);
    Evaluation e;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double q = y(i) > 0.5 ? 1.0 : -1.0;
        const double u = q * eta(i);
        e.loglik += F.log_cdf(u);
        const double m = F.mills(u);
        g(i) = q * m;
        w(i) = m * (F.dlog_pdf(u) - m);
    }
    e.gradient = X.transpose() * g;
    e.hessian = X.transpose() * w.asDiagonal() * X;
    return e;
}

Eigen::MatrixXd binary_scores(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link,
                              const Eigen::VectorXd& beta) {
    const LinkFns F{link};
    const Eigen::VectorXd eta = X * beta;
    Eigen::MatrixXd S(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double q = y(i) > 0.5 ? 1.0 : -1.0;
        S.row(i) = q * F.mills(q * eta(i)) * X.row(i);
    }
    return S;
}

Eigen::VectorXd thresholds_from(const Eigen::VectorXd& tail) {
    Eigen::VectorXd t(tail.size());
    for (Eigen::Index j = 0; j < tail.size(); ++j) t(j) = j == 0 ? tail(0) : t(j - 1) + std::exp(tail(j));
    return t;
}

Eigen::VectorXd theta_tail_from(const Eigen::VectorXd& t) {
    Eigen::VectorXd tail(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) {
        if (j > 0 && !(t(j) > t(j - 1))) throw ValidationError("thresholds must be strictly increasing");
        tail(j) = j == 0 ? t(0) : std::log(t(j) - t(j - 1));
    }
    return tail;
}

}  // namespace likelihood

namespace {

void check_ordered_inputs(const Eigen::MatrixXd& X, std::span<const int> y, int K, const Eigen::VectorXd& theta) {
    if (K < 2) throw ValidationError("ordered model needs at least two categories");
    if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw ValidationError("response length differs from design rows");
    if (theta.size() != X.cols() + K - 1) throw ValidationError("parameter vector has the wrong length");
    for (int c : y) {
        if (c < 0 || c >= K) throw ValidationError("category index out of range");
    }
}

// Log-likelihood, gradient, Hessian and optionally per-row scores in the
// natural parameters (beta, thresholds).
likelihood::Evaluation ordered_natural(const Eigen::MatrixXd& X, std::span<const int> y, int K, Link link,
                                       const Eigen::VectorXd& beta, const Eigen::VectorXd& t, bool derivatives,
                                       Eigen::MatrixXd* scores) {
    const LinkFns F{link};
    const Eigen::Index p = X.cols();
    const Eigen::Index m = p + K - 1;
    const Eigen::VectorXd eta = X * beta;
    likelihood::Evaluation e;
    if (derivatives) {
        e.gradient = Eigen::VectorXd::Zero(m);
        e.hessian = Eigen::MatrixXd::Zero(m, m);
    }
    if (scores) scores->setZero(X.rows(), m);
    // Accumulate the eta block as X' diag(w) X and the cross terms row-wise.
    Eigen::VectorXd w_eta = Eigen::VectorXd::Zero(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const int c = y[static_cast<std::size_t>(i)];
        const bool has_u = c < K - 1;
        const bool has_l = c > 0;
        const double u = has_u ? t(c) - eta(i) : kInf;
        const double l = has_l ? t(c - 1) - eta(i) : -kInf;
        const double lp = log_interval(F, l, u);
        e.loglik += lp;
        if (!derivatives && !scores) continue;
        const double ga = has_u ? std::exp(F.log_pdf(u) - lp) : 0.0;
        const double gb = has_l ? std::exp(F.log_pdf(l) - lp) : 0.0;
        const double g_eta = gb - ga;
        if (scores) {
            scores->row(i).head(p) = g_eta * X.row(i);
            if (has_u) (*scores)(i, p + c) += ga;
            if (has_l) (*scores)(i, p + c - 1) -= gb;
        }
        if (!derivatives) continue;
        e.gradient.head(p) += g_eta * X.row(i).transpose();
        if (has_u) e.gradient(p + c) += ga;
        if (has_l) e.gradient(p + c - 1) -= gb;
        const double huu = has_u ? ga * F.dlog_pdf(u) - ga * ga : 0.0;
        const double hll = has_l ? -gb * F.dlog_pdf(l) - gb * gb : 0.0;
        const double hul = ga * gb;
        w_eta(i) = huu + hll + 2.0 * hul;
        if (has_u) {
            const double cross = -(huu + hul);
            e.hessian.block(p + c, 0, 1, p) += cross * X.row(i);
            e.hessian(p + c, p + c) += huu;
        }
        if (has_l) {
            const double cross = -(hul + hll);
            e.hessian.block(p + c - 1, 0, 1, p) += cross * X.row(i);
            e.hessian(p + c - 1, p + c - 1) += hll;
        }
        if (has_u && has_l) {
            e.hessian(p + c, p + c - 1) += hul;
            e.hessian(p + c - 1, p + c) += hul;
        }
    }
    if (derivatives) {
        e.hessian.topLeftCorner(p, p) = X.transpose() * w_eta.asDiagonal() * X;
        e.hessian.topRightCorner(p, K - 1) = e.hessian.bottomLeftCorner(K - 1, p).transpose();
    }
    return e;
}

}  // namespace

namespace likelihood {

double ordered_loglik(const Eigen::MatrixXd& X, std::span<const int> y, int K, Link link,
                      const Eigen::VectorXd& theta) {
    check_ordered_inputs(X, y, K, theta);
    const Eigen::Index p = X.cols();
    return ordered_natural(X, y, K, link, theta.head(p), thresholds_from(theta.tail(K - 1)), false, nullptr).loglik;
}

Evaluation ordered(const Eigen::MatrixXd& X, std::span<const int> y, int K, Link link, const Eigen::VectorXd& theta) {
    check_ordered_inputs(X, y, K, theta);
    const Eigen::Index p = X.cols();
    const Eigen::Index k1 = K - 1;
    const Eigen::VectorXd tail = theta.tail(k1);
    Evaluation nat = ordered_natural(X, y, K, link, theta.head(p), thresholds_from(tail), true, nullptr);
    // Jacobian of thresholds with respect to (tau_1, log increments).
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k1, k1);
    for (Eigen::Index j = 0; j < k1; ++j) {
        J(j, 0) = 1.0;
        for (Eigen::Index k = 1; k <= j; ++k) J(j, k) = std::exp(tail(k));
    }
    Evaluation e;
    e.loglik = nat.loglik;
    e.gradient.resize(p + k1);
    e.gradient.head(p) = nat.gradient.head(p);
    const Eigen::VectorXd gt = nat.gradient.tail(k1);
    e.gradient.tail(k1) = J.transpose() * gt;
    e.hessian.resize(p + k1, p + k1);
    e.hessian.topLeftCorner(p, p) = nat.hessian.topLeftCorner(p, p);
    e.hessian.bottomLeftCorner(k1, p) = J.transpose() * nat.hessian.bottomLeftCorner(k1, p);
    e.hessian.topRightCorner(p, k1) = e.hessian.bottomLeftCorner(k1, p).transpose();
    Eigen::MatrixXd htt = J.transpose() * nat.hessian.bottomRightCorner(k1, k1) * J;
    for (Eigen::Index k = 1; k < k1; ++k) htt(k, k) += std::exp(tail(k)) * gt.tail(k1 - k).sum();
    e.hessian.bottomRightCorner(k1, k1) = htt;
    return e;
}

}  // namespace likelihood

// ---------------------------------------------------------------- binary

FitResult fit_binary(const DesignMatrix& X, const Eigen::VectorXd& y, Link link, const FitOptions& options) {
    X.validate();
    const char* model = link == Link::logit ? "logit" : "probit";
    if (static_cast<std::size_t>(y.size()) != X.rows()) throw ValidationError("response length differs from design rows");
    std::size_t ones = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError(std::string(model) + ": response must be 0 or 1");
        ones += y(i) == 1.0;
    }
    if (ones == 0 || ones == X.rows()) throw ValidationError(std::string(model) + ": response has a single class");
    require_full_rank(X);

    const Eigen::Index p = X.values.cols();
    const Eigen::Index icol = X.has_intercept() ? p - 1 : -1;
    const Scaling s = standardize(X.values, icol >= 0, icol);
    const LinkFns F{link};

    Eigen::VectorXd start = Eigen::VectorXd::Zero(p);
    if (icol >= 0) start(icol) = F.quantile(static_cast<double>(ones) / static_cast<double>(y.size()));

    auto eval = [&](const Eigen::VectorXd& b) { return likelihood::binary(s.Z, y, link, b); };
    auto ll = [&](const Eigen::VectorXd& b) { return likelihood::binary_loglik(s.Z, y, link, b); };
    auto check = [&](const Eigen::VectorXd& b) {
        for (Eigen::Index j = 0; j < p; ++j) {
            if (j != icol && std::fabs(b(j)) > options.separation_bound) {
                throw SeparationError(fmt::format("{}: perfect or quasi-separation on '{}'", model, X.names[j]));
            }
        }
    };
    const NewtonResult nr = newton(start, eval, ll, check, options, model);
    reject_drift(nr, X.names, model);

    FitResult r;
    r.family = link == Link::logit ? Family::logit : Family::probit;
    r.terms = X.names;
    r.n = X.rows();
    r.robust = options.robust;
    r.converged = true;
    r.iterations = nr.iterations;
    r.betas = nr.theta.cwiseQuotient(s.scale);
    if (icol >= 0) r.betas(icol) = nr.theta(icol) - r.betas.dot(s.mean);

    likelihood::Evaluation at = likelihood::binary(X.values, y, link, r.betas);
    r.loglik = at.loglik;
    const Eigen::MatrixXd bread = sym_inverse(-at.hessian, "information matrix");
    const Eigen::MatrixXd S = likelihood::binary_scores(X.values, y, link, r.betas);
    const double n = static_cast<double>(X.rows());
    const Eigen::MatrixXd robust = (n / (n - 1.0)) * bread * (S.transpose() * S) * bread;
    r.classical_se = sqrt_diag(bread);
    r.robust_se = sqrt_diag(robust);
    r.se = options.robust ? r.robust_se : r.classical_se;
    r.stat = r.betas.cwiseQuotient(r.se);
    r.p.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) r.p(j) = two_sided_normal_p(r.stat(j));
    const Eigen::VectorXd eta = X.values * r.betas;
    r.residuals.resize(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) r.residuals(i) = y(i) - std::exp(F.log_cdf(eta(i)));
    return r;
}

// ---------------------------------------------------------------- ordered

Eigen::VectorXd OrderedFitResult::category_probabilities(const Eigen::VectorXd& x) const {
    const LinkFns F{family == Family::ordered_logit ? Link::logit : Link::probit};
    const double eta = x.dot(betas);
    const Eigen::Index K = thresholds.size() + 1;
    Eigen::VectorXd out(K);
    for (Eigen::Index c = 0; c < K; ++c) {
        const double u = c < K - 1 ? thresholds(c) - eta : kInf;
        const double l = c > 0 ? thresholds(c - 1) - eta : -kInf;
        out(c) = std::exp(log_interval(F, l, u));
    }
    return out;
}

OrderedFitResult fit_ordered(const DesignMatrix& X, std::span<const int> y, Link link, const FitOptions& options) {
    X.validate();
    const char* model = link == Link::logit ? "ordered logit" : "ordered probit";
    if (X.has_intercept()) throw ValidationError(std::string(model) + ": design must not include an intercept");
    if (y.size() != X.rows()) throw ValidationError("response length differs from design rows");
    const std::set<int> distinct(y.begin(), y.end());
    if (distinct.size() < 2) throw ValidationError(std::string(model) + ": need at least two categories");
    for (int v = *distinct.begin(); v <= *distinct.rbegin(); ++v) {
        if (!distinct.count(v)) throw ValidationError(fmt::format("{}: category {} is never observed", model, v));
    }
    require_full_rank(X);
    const int K = static_cast<int>(distinct.size());
    const int lowest = *distinct.begin();
    std::vector<int> idx(y.size());
    std::vector<double> freq(static_cast<std::size_t>(K), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        idx[i] = y[i] - lowest;
        freq[static_cast<std::size_t>(idx[i])] += 1.0;
    }

    const Eigen::Index p = X.values.cols();
    const Scaling s = standardize(X.values, true, -1);
    const LinkFns F{link};

    Eigen::VectorXd t0(K - 1);
    double cum = 0.0;
    for (int c = 0; c < K - 1; ++c) {
        cum += freq[static_cast<std::size_t>(c)];
        t0(c) = F.quantile(cum / static_cast<double>(y.size()));
    }
    Eigen::VectorXd start(p + K - 1);
    start.head(p).setZero();
    start.tail(K - 1) = likelihood::theta_tail_from(t0);

    auto eval = [&](const Eigen::VectorXd& th) { return likelihood::ordered(s.Z, idx, K, link, th); };
    auto ll = [&](const Eigen::VectorXd& th) { return likelihood::ordered_loglik(s.Z, idx, K, link, th); };
    auto check = [&](const Eigen::VectorXd& th) {
        for (Eigen::Index j = 0; j < p; ++j) {
            if (std::fabs(th(j)) > options.separation_bound) {
                throw SeparationError(fmt::format("{}: perfect or quasi-separation on '{}'", model, X.names[j]));
            }
        }
        const Eigen::VectorXd t = likelihood::thresholds_from(th.tail(K - 1));
        if (!t.allFinite() || t.cwiseAbs().maxCoeff() > 2.0 * options.separation_bound) {
            throw SeparationError(std::string(model) + ": thresholds diverge (separated categories)");
        }
    };
    const NewtonResult nr = newton(start, eval, ll, check, options, model);
    reject_drift(nr, X.names, model);

    OrderedFitResult r;
    r.family = link == Link::logit ? Family::ordered_logit : Family::ordered_probit;
    r.terms = X.names;
    r.n = X.rows();
    r.robust = options.robust;
    r.converged = true;
    r.iterations = nr.iterations;
    for (int c = 0; c < K; ++c) r.categories.push_back(lowest + c);
    r.betas = nr.theta.head(p).cwiseQuotient(s.scale);
    r.thresholds = likelihood::thresholds_from(nr.theta.tail(K - 1)).array() + r.betas.dot(s.mean);

    Eigen::MatrixXd S;
    const likelihood::Evaluation at = ordered_natural(X.values, idx, K, link, r.betas, r.thresholds, true, &S);
    r.loglik = at.loglik;
    const Eigen::MatrixXd bread = sym_inverse(-at.hessian, "information matrix");
    const double n = static_cast<double>(X.rows());
    const Eigen::MatrixXd robust = (n / (n - 1.0)) * bread * (S.transpose() * S) * bread;
    r.classical_se = sqrt_diag(bread);
    r.robust_se = sqrt_diag(robust);
    r.se = options.robust ? r.robust_se : r.classical_se;
    Eigen::VectorXd est(p + K - 1);
    est << r.betas, r.thresholds;
    r.stat = est.cwiseQuotient(r.se);
    r.p.resize(est.size());
    for (Eigen::Index j = 0; j < est.size(); ++j) r.p(j) = two_sided_normal_p(r.stat(j));
    return r;
}

// ---------------------------------------------------------------- t-test

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("t-test needs at least two observations per group");
    auto moments = [](std::span<const double> v, double& mean, double& var) {
        for (double x : v) {
            if (!std::isfinite(x)) throw NumericError("t-test input contains non-finite values");
        }
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        var = ss / static_cast<double>(v.size() - 1);
    };
    TTestResult r;
    double va = 0.0, vb = 0.0;
    moments(a, r.mean_a, va);
    moments(b, r.mean_b, vb);
    if (va == 0.0 && vb == 0.0) throw ValidationError("t-test groups both have zero variance");
    r.n_a = a.size();
    r.n_b = b.size();
    r.sd_a = std::sqrt(va);
    r.sd_b = std::sqrt(vb);
    const double qa = va / static_cast<double>(r.n_a);
    const double qb = vb / static_cast<double>(r.n_b);
    r.t = (r.mean_a - r.mean_b) / std::sqrt(qa + qb);
    r.df = (qa + qb) * (qa + qb) /
           (qa * qa / static_cast<double>(r.n_a - 1) + qb * qb / static_cast<double>(r.n_b - 1));
    r.p = dist::t_two_sided_p(r.t, r.df);
    return r;
}

std::string_view significance_stars(double p) {
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

// ---------------------------------------------------------------- output

std::vector<CoefficientRow> coefficient_rows(const FitResult& fit) {
    std::vector<CoefficientRow> rows;
    for (std::size_t j = 0; j < fit.terms.size(); ++j) {
        const auto k = static_cast<Eigen::Index>(j);
        rows.push_back({fit.terms[j], fit.betas(k), fit.se(k), fit.stat(k), fit.p(k)});
    }
    return rows;
}

std::vector<CoefficientRow> coefficient_rows(const OrderedFitResult& fit) {
    std::vector<CoefficientRow> rows;
    const auto p = static_cast<Eigen::Index>(fit.terms.size());
    for (Eigen::Index j = 0; j < p; ++j) {
        rows.push_back({fit.terms[static_cast<std::size_t>(j)], fit.betas(j), fit.se(j), fit.stat(j), fit.p(j)});
    }
    for (Eigen::Index c = 0; c < fit.thresholds.size(); ++c) {
        rows.push_back({fmt::format("Threshold {}", c + 1), fit.thresholds(c), fit.se(p + c), fit.stat(p + c),
                        fit.p(p + c)});
    }
    return rows;
}

void write_coefficients_csv(std::ostream& out, std::span<const CoefficientRow> rows) {
    csv::write_row(out, {"term", "estimate", "robust_se", "stat", "p", "stars"});
    for (const auto& r : rows) {
        csv::write_row(out, {r.term, csv::format_double(r.estimate), csv::format_double(r.se),
                             csv::format_double(r.stat), csv::format_double(r.p), std::string(significance_stars(r.p))});
    }
}

std::string render_regression_table(std::string_view caption, std::span<const TableColumn> columns,
                                    std::span<const std::string> term_order) {
    std::vector<std::string> terms(term_order.begin(), term_order.end());
    for (const auto& col : columns) {
        for (const auto& row : col.rows) {
            if (std::find(terms.begin(), terms.end(), row.term) == terms.end()) terms.push_back(row.term);
        }
    }
    std::size_t label_w = 12;
    for (const auto& t : terms) label_w = std::max(label_w, t.size() + 2);
    constexpr std::size_t col_w = 16;
    std::string out;
    if (!caption.empty()) out += fmt::format("{}\n", caption);
    const std::size_t width = label_w + col_w * columns.size();
    out += std::string(width, '-') + "\n";
    out += fmt::format("{:<{}}", "", label_w);
    for (const auto& col : columns) out += fmt::format("{:>{}}", col.title, col_w);
    out += "\n" + std::string(width, '-') + "\n";
    for (const auto& term : terms) {
        std::string est = fmt::format("{:<{}}", term, label_w);
        std::string se = std::string(label_w, ' ');
        for (const auto& col : columns) {
            const auto it = std::find_if(col.rows.begin(), col.rows.end(),
                                         [&](const CoefficientRow& r) { return r.term == term; });
            if (it == col.rows.end()) {
                est += std::string(col_w, ' ');
                se += std::string(col_w, ' ');
                continue;
            }
            est += fmt::format("{:>{}}", fmt::format("{:.4f}{:<3}", it->estimate, significance_stars(it->p)), col_w);
            se += fmt::format("{:>{}}", fmt::format("({:.4f})   ", it->se), col_w);
        }
        out += est + "\n" + se + "\n";
    }
    out += std::string(width, '-') + "\n";
    out += fmt::format("{:<{}}", "Observations", label_w);
    for (const auto& col : columns) out += fmt::format("{:>{}}", fmt::format("{}   ", col.n), col_w);
    out += "\n" + std::string(width, '-') + "\n";
    out += "Standard errors in parentheses. *** p<0.01, ** p<0.05, * p<0.1\n";
    return out;
}

}  // namespace citecrit
