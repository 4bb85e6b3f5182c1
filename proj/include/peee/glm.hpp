#pragma once

#include "peee/formula.hpp"

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace peee {

enum class Family { linear, logistic };

std::string_view to_string(Family family) noexcept;
Family parse_family(std::string_view text);

struct GlmOptions {
    /// Converged when every |step_j| < tolerance * max(1, |theta_j|).
    double tolerance = 1e-8;
    int max_iter = 100;
    /// Coefficients beyond this magnitude (logit scale) flag separation.
    double separation_bound = 30.0;
};

/// Result of a weighted fit. Weights are case weights: they multiply each
/// row's estimating-function contribution.
struct FitResult {
    Family family = Family::linear;
    Eigen::VectorXd coefficients;
    /// Model-based covariance of the coefficients.
    Eigen::MatrixXd naive_vcov;
    /// Inverse of -d/dtheta of the summed scores. Equals naive_vcov for the
    /// logistic family and naive_vcov / sigma2 for the linear family.
    Eigen::MatrixXd bread;
    /// Per-row estimating-function contributions, weights included.
    Eigen::MatrixXd scores;
    bool converged = false;
    int iterations = 0;
    /// Weighted deviance (logistic) or weighted residual sum of squares (linear).
    double deviance = 0.0;
    /// Residual variance estimate, weighted SSE / (sum w - p); linear only.
    double sigma2 = std::numeric_limits<double>::quiet_NaN();
    bool separation = false;
    std::vector<double> deviance_trace;
    std::vector<std::string> column_names;
};

/// Per-row variance of one design column, added to E[x x'] for rows whose
/// entry in that column is a conditional mean rather than an observation.
struct MomentCorrection {
    int column = -1;
    Eigen::VectorXd variance;
};

FitResult fit_weighted_linear(const DesignMatrix& design, const Eigen::VectorXd& response,
                              const Eigen::VectorXd& weights,
                              const MomentCorrection* correction = nullptr);

FitResult fit_weighted_logistic(const DesignMatrix& design, const Eigen::VectorXd& response,
                                const Eigen::VectorXd& weights, const GlmOptions& options = {});

FitResult fit_weighted(Family family, const DesignMatrix& design, const Eigen::VectorXd& response,
                       const Eigen::VectorXd& weights, const MomentCorrection* correction = nullptr,
                       const GlmOptions& options = {});

/// Weighted estimating-function rows at an arbitrary theta.
Eigen::MatrixXd score_rows(Family family, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& weights, const Eigen::VectorXd& theta,
                           const MomentCorrection* correction = nullptr);

/// Multinomial logit with level 1 as reference.
struct MultinomFit {
    int levels = 0;
    /// Row k-2 holds the coefficients of level k (k = 2..K).
    Eigen::MatrixXd coefficients;
    /// Inverse observed information for flatten(coefficients).
    Eigen::MatrixXd vcov;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;

    /// Level blocks concatenated: (gamma_2', ..., gamma_K')'.
    Eigen::VectorXd flatten() const;
    static Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, int levels);
};

/// `response` holds level codes 1..K.
MultinomFit fit_multinomial_logit(const DesignMatrix& design, const Eigen::VectorXd& response,
                                  const Eigen::VectorXd& weights, int levels,
                                  const GlmOptions& options = {});

/// n x K class probabilities: softmax over (0, x'gamma_2, ..., x'gamma_K).
Eigen::MatrixXd predict_multinomial(const Eigen::MatrixXd& coefficients, const Eigen::MatrixXd& design);
Eigen::MatrixXd predict_multinomial(const MultinomFit& fit, const DesignMatrix& design);

/// Per-row score U_i = x_i (I(y_i = k) - p_ik) in level blocks k = 2..K;
/// rows with complete_flag == 0 are zero.
Eigen::MatrixXd multinomial_score_contributions(const Eigen::MatrixXd& coefficients,
                                                const Eigen::MatrixXd& design,
                                                const Eigen::VectorXd& response,
                                                std::span<const std::uint8_t> complete_flag);
Eigen::MatrixXd multinomial_score_contributions(const MultinomFit& fit, const DesignMatrix& design,
                                                const Eigen::VectorXd& response,
                                                std::span<const std::uint8_t> complete_flag);

/// Information sandwich bread * (sum s_i s_i') * bread.
Eigen::MatrixXd robust_covariance(const FitResult& fit);

}  // namespace peee
