#pragma once

#include "peee/augment.hpp"
#include "peee/formula.hpp"
#include "peee/glm.hpp"
#include "peee/numdiff.hpp"
#include "peee/random.hpp"
#include "peee/tabular.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>

namespace peee {

/// First-stage model and the augmentation used to build the pseudo-complete data.
struct IncompleteSpec {
    Formula model;
    GammaKind kind = GammaKind::multinomial;
    Regime regime = Regime::discrete;
    /// Number of draws per incomplete subject (monte_carlo only).
    int draws = 0;
    /// Seed for the draws when no stream is passed explicitly.
    std::optional<std::uint64_t> seed;
    /// Chosen from the analysis formula when unset.
    std::optional<MomentPlan> plan;
    /// Allow Monte Carlo draws from a discrete conditional.
    bool force_monte_carlo = false;
};

struct PeeeOptions {
    GlmOptions glm;
    JacobianConfig jacobian;
};

struct PeeeFit {
    Family family = Family::linear;
    Formula analysis;
    IncompleteSpec spec;
    std::shared_ptr<const ObservationTable> table;
    std::shared_ptr<const DesignBuilder> builder;
    GammaFit gamma_fit;
    AugmentedTable augmented;
    FitResult analysis_fit;
    Eigen::VectorXd theta_hat;
    Regime regime = Regime::linear_moment;
    std::size_t n_subjects = 0;
    std::size_t n_incomplete = 0;
    /// Design column receiving the second-moment correction, or -1.
    int moment_column = -1;
    /// m x S uniforms behind the Monte Carlo records.
    Eigen::MatrixXd uniforms;
    PeeeOptions options;
};

PeeeFit peee_fit(std::shared_ptr<const ObservationTable> table, const Formula& analysis, Family family,
                 const IncompleteSpec& spec, RngStream& rng, const PeeeOptions& options = {});
/// Uses spec.seed for Monte Carlo draws; throws ConfigError if it is needed and absent.
PeeeFit peee_fit(std::shared_ptr<const ObservationTable> table, const Formula& analysis, Family family,
                 const IncompleteSpec& spec, const PeeeOptions& options = {});
PeeeFit peee_fit(const ObservationTable& table, const Formula& analysis, Family family,
                 const IncompleteSpec& spec, const PeeeOptions& options = {});

/// Response vector for the analysis model; a two-level categorical response
/// is mapped to 0/1 for the logistic family.
Eigen::VectorXd analysis_response(const DesignBuilder& builder, Family family, std::span<const std::size_t> rows,
                                  const Overrides& overrides = {});

/// n x d matrix; row i sums the score rows of subject i's pseudo-records.
Eigen::MatrixXd collapse_subject_scores(const FitResult& analysis_fit, const AugmentedTable& augmented);

/// n^-1 sum over incomplete subjects of E[psi_theta | W; gamma], as a function
/// of gamma, with theta fixed at the estimate. Monte Carlo fits hold the
/// uniforms fixed.
Eigen::VectorXd incomplete_score_mean(const PeeeFit& fit, const Eigen::VectorXd& gamma);

Eigen::MatrixXd compute_g_hat(const PeeeFit& fit);
Eigen::MatrixXd compute_h_hat(const PeeeFit& fit);

struct SandwichComponents {
    /// Inverse of the averaged derivative of the estimating function.
    Eigen::MatrixXd psi_dot_inv;
    Eigen::MatrixXd subject_scores;
    /// G-hat or H-hat (d x q).
    Eigen::MatrixXd correction;
    /// Rows are omega_i = I^-1 U_i.
    Eigen::MatrixXd omega_hat;
    Eigen::MatrixXd gamma_information_inverse;
    Eigen::MatrixXd gamma_scores;
};

SandwichComponents sandwich_components(const PeeeFit& fit);

/// Covariance of theta-hat from the components. Without the correction the
/// result ignores the first-stage estimation of gamma.
Eigen::MatrixXd assemble_sandwich(const SandwichComponents& parts, bool include_correction = true);

Eigen::MatrixXd variance_closed_form(const PeeeFit& fit);
Eigen::MatrixXd variance_closed_form_mc(const PeeeFit& fit);
/// Dispatches on the fit's regime.
Eigen::MatrixXd peee_variance(const PeeeFit& fit);

}  // namespace peee
