#pragma once

#include "peee/formula.hpp"
#include "peee/glm.hpp"
#include "peee/random.hpp"
#include "peee/tabular.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace peee {

/// Model for the incompletely observed variable given the fully observed ones.
enum class GammaKind {
    multinomial,           // categorical X^m, level 1 reference
    linear_mean,           // E(X^m | W) = beta'w, fitted by least squares
    linear_mean_variance,  // adds eta^2 = mean squared residual; Gaussian draws
};

/// How incomplete subjects are expanded into pseudo-records.
enum class Regime {
    linear_moment,  // one record carrying E(X^m | W)
    discrete,       // K records weighted by P(X^m = x_k | W)
    monte_carlo,    // S records carrying F^-1(U_ij | W), weight 1/S
};

std::string_view to_string(GammaKind kind) noexcept;
std::string_view to_string(Regime regime) noexcept;
GammaKind parse_gamma_kind(std::string_view text);
Regime parse_regime(std::string_view text);

/// First-stage fit on the complete cases.
///
/// `gamma` is flattened: multinomial level blocks (gamma_2, ..., gamma_K),
/// or beta followed by eta^2 for linear_mean_variance. `bread` is the
/// inverse of -d/dgamma of the summed score contributions, so the influence
/// of subject i is n * bread * U_i.
struct GammaFit {
    GammaKind kind = GammaKind::linear_mean;
    std::string incomplete_column;
    std::shared_ptr<const DesignBuilder> builder;
    /// Design of the incomplete-variable model for every table row.
    Eigen::MatrixXd design;
    int levels = 0;
    Eigen::VectorXd gamma;
    Eigen::MatrixXd vcov;
    Eigen::MatrixXd bread;
    /// n x q score contributions; zero rows for incomplete subjects.
    Eigen::MatrixXd scores;
    /// Mean squared residual over complete cases (linear kinds).
    double eta2 = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_complete = 0;
    int iterations = 0;
    bool converged = false;

    Eigen::Index dimension() const noexcept { return gamma.size(); }
    /// Number of regression coefficients (excludes eta^2).
    Eigen::Index mean_dimension() const noexcept;

    /// P(X^m = k | W_row; gamma) for the given rows, rows x K.
    Eigen::MatrixXd probabilities(const Eigen::VectorXd& gamma, std::span<const std::size_t> rows) const;
    /// E(X^m | W_row; gamma).
    Eigen::VectorXd means(const Eigen::VectorXd& gamma, std::span<const std::size_t> rows) const;
    /// Conditional variance implied by gamma (linear_mean_variance only).
    double variance(const Eigen::VectorXd& gamma) const;
    /// F^-1(u | W_row; gamma); level codes for multinomial.
    double inverse_cdf(const Eigen::VectorXd& gamma, std::size_t row, double u) const;
};

GammaFit fit_gamma(std::shared_ptr<const ObservationTable> table, const Formula& incomplete_model,
                   GammaKind kind, const GlmOptions& options = {});
GammaFit fit_gamma(const ObservationTable& table, const Formula& incomplete_model, GammaKind kind,
                   const GlmOptions& options = {});

struct PseudoRecord {
    std::size_t source_row = 0;
    std::int64_t subject_id = 0;
    bool observed = true;
    /// Value used for the incomplete column.
    double value = 0.0;
    /// E[(X^m)^2 | W] when the second moment is carried, else NaN.
    double second_moment = std::numeric_limits<double>::quiet_NaN();
    double weight = 1.0;
    /// U_ij for Monte Carlo records, else NaN.
    double uniform = std::numeric_limits<double>::quiet_NaN();
    /// Level index (discrete) or draw index (Monte Carlo); -1 otherwise.
    int draw = -1;
};

/// Pseudo-complete weighted data set. Records are grouped by subject in the
/// source table's row order.
struct AugmentedTable {
    Regime regime = Regime::linear_moment;
    std::string incomplete_column;
    std::size_t n_subjects = 0;
    int levels = 0;
    int draws = 0;
    bool carries_second_moment = false;
    std::vector<PseudoRecord> rows;

    std::size_t size() const noexcept { return rows.size(); }
    std::vector<std::size_t> source_rows() const;
    Eigen::VectorXd weights() const;
    /// Substitute values for the incomplete column, aligned with rows.
    Overrides overrides() const;
    /// Var(X^m | W) per record (zero for observed records).
    Eigen::VectorXd second_moment_variance() const;
};

enum class MomentPlan {
    mean,             // substitute E(X^m | W)
    mean_and_square,  // also carry E[(X^m)^2 | W] = mean^2 + eta^2
};

AugmentedTable augment_linear_moment(const ObservationTable& table, const GammaFit& gamma_fit,
                                     MomentPlan plan = MomentPlan::mean);

AugmentedTable augment_discrete(const ObservationTable& table, const GammaFit& gamma_fit);

/// m x S uniforms for the incomplete subjects in row order, consumed row-major.
Eigen::MatrixXd draw_uniforms(RngStream& rng, std::size_t incomplete_subjects, int draws);

/// Refuses a multinomial model unless `force` is set, since the discrete
/// regime computes the same expectation exactly.
AugmentedTable augment_monte_carlo(const ObservationTable& table, const GammaFit& gamma_fit, int draws,
                                   RngStream& rng, bool force = false);

/// Same layout from caller-supplied uniforms (m x S).
AugmentedTable augment_monte_carlo(const ObservationTable& table, const GammaFit& gamma_fit,
                                   const Eigen::MatrixXd& uniforms, bool force = false);

/// Smallest level k (1-based) with P(X <= k) >= u.
int discrete_inverse_cdf(std::span<const double> probabilities, double u);

}  // namespace peee
