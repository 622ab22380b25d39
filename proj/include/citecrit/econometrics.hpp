#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace citecrit {

inline constexpr std::string_view kInterceptName = "Constant";

/// Named regressors. When present the intercept is the last column and is
/// named "Constant".
struct DesignMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    /// `columns[j]` holds regressor `names[j]` for every row.
    static DesignMatrix from_columns(std::vector<std::string> names, const std::vector<std::vector<double>>& columns,
                                     bool add_intercept);

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
    bool has_intercept() const;

    /// Checks finiteness, unique names and N > columns.
    void validate() const;
};

enum class Family { ols, logit, probit, ordered_logit, ordered_probit };
enum class Link { logit, probit };

std::string_view family_name(Family family);

struct FitOptions {
    bool robust = true;
    int max_iterations = 100;
    double loglik_tolerance = 1e-10;
    double score_tolerance = 1e-8;
    /// Bound on standardized coefficients beyond which separation is reported.
    double separation_bound = 30.0;
};

struct FitResult {
    Family family = Family::ols;
    std::vector<std::string> terms;
    Eigen::VectorXd betas;
    /// Robust (HC1 / sandwich) when FitOptions::robust, otherwise classical.
    Eigen::VectorXd se;
    Eigen::VectorXd classical_se;
    Eigen::VectorXd robust_se;
    Eigen::VectorXd stat;  // t for OLS, z otherwise
    Eigen::VectorXd p;
    double loglik = 0.0;   // NaN for OLS
    double ssr = 0.0;      // OLS only
    /// y - X beta for OLS, y - fitted probability for binary models.
    Eigen::VectorXd residuals;
    bool converged = false;
    int iterations = 0;
    std::size_t n = 0;
    bool robust = true;
};

struct OrderedFitResult {
    Family family = Family::ordered_logit;
    std::vector<std::string> terms;
    Eigen::VectorXd betas;
    Eigen::VectorXd thresholds;  // K - 1, strictly increasing
    /// Category values in ascending order; thresholds separate neighbours.
    std::vector<int> categories;
    Eigen::VectorXd se;  // betas then thresholds
    Eigen::VectorXd classical_se;
    Eigen::VectorXd robust_se;
    Eigen::VectorXd stat;
    Eigen::VectorXd p;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    std::size_t n = 0;
    bool robust = true;

    /// P(y = categories[c] | x) for every category.
    Eigen::VectorXd category_probabilities(const Eigen::VectorXd& x) const;
};

FitResult fit_ols(const DesignMatrix& X, const Eigen::VectorXd& y, const FitOptions& options = {});
FitResult fit_binary(const DesignMatrix& X, const Eigen::VectorXd& y, Link link, const FitOptions& options = {});
/// Proportional-odds model without intercept. `y` holds integer category
/// values; the distinct observed values, sorted, are the K categories.
OrderedFitResult fit_ordered(const DesignMatrix& X, std::span<const int> y, Link link,
                             const FitOptions& options = {});

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    double mean_a = 0.0, mean_b = 0.0;
    double sd_a = 0.0, sd_b = 0.0;
    std::size_t n_a = 0, n_b = 0;
};

/// Two-sided Welch t-test.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// "***" for p < 0.01, "**" for p < 0.05, "*" for p < 0.1.
std::string_view significance_stars(double p);

/// Log-likelihoods with analytic derivatives, shared by the fitters and
/// usable on their own.
namespace likelihood {

struct Evaluation {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

double binary_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link, const Eigen::VectorXd& beta);
Evaluation binary(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link, const Eigen::VectorXd& beta);
/// Per-observation gradient rows.
Eigen::MatrixXd binary_scores(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link,
                              const Eigen::VectorXd& beta);

/// `y` holds 0-based category indices in [0, K). The parameter vector is
/// (beta, tau_1, log(tau_2 - tau_1), ..., log(tau_{K-1} - tau_{K-2})).
double ordered_loglik(const Eigen::MatrixXd& X, std::span<const int> y, int K, Link link,
                      const Eigen::VectorXd& theta);
Evaluation ordered(const Eigen::MatrixXd& X, std::span<const int> y, int K, Link link, const Eigen::VectorXd& theta);

/// Thresholds from the unconstrained parameterization and back.
Eigen::VectorXd thresholds_from(const Eigen::VectorXd& theta_tail);
Eigen::VectorXd theta_tail_from(const Eigen::VectorXd& thresholds);

}  // namespace likelihood

/// One printed coefficient.
struct CoefficientRow {
    std::string term;
    double estimate = 0.0;
    double se = 0.0;
    double stat = 0.0;
    double p = 1.0;
};

std::vector<CoefficientRow> coefficient_rows(const FitResult& fit);
/// Betas followed by "Threshold 1" .. "Threshold K-1".
std::vector<CoefficientRow> coefficient_rows(const OrderedFitResult& fit);

/// CSV `term,estimate,robust_se,stat,p,stars`.
void write_coefficients_csv(std::ostream& out, std::span<const CoefficientRow> rows);

struct TableColumn {
    std::string title;
    std::vector<CoefficientRow> rows;
    std::size_t n = 0;
};

/// Side-by-side fixed-width table: estimate with stars, standard error in
/// parentheses on the next line. Terms appear in `term_order`, then any
/// others in first-seen order.
std::string render_regression_table(std::string_view caption, std::span<const TableColumn> columns,
                                    std::span<const std::string> term_order = {});

}  // namespace citecrit
