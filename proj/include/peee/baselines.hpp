#pragma once

#include "peee/peee.hpp"

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace peee {

/// Drops subjects with a missing cell and fits the analysis model directly.
FitResult complete_case_fit(const ObservationTable& table, const Formula& analysis, Family family,
                            const GlmOptions& options = {});

/// Type B multiple imputation: S completed copies of the data stacked into
/// nS rows, each weighted 1/S, fitted once. Draws come from draw_uniforms on
/// `rng`, so a stream in the same state reproduces the Monte Carlo PEEE draws.
FitResult mib_fit(const ObservationTable& table, const Formula& analysis, Family family,
                  const IncompleteSpec& spec, int draws, RngStream& rng, const GlmOptions& options = {});

struct BootstrapResult {
    /// Successful replicates only, in replicate order.
    Eigen::MatrixXd replicate_estimates;
    Eigen::VectorXd se;
    int B = 0;
    int failures = 0;
    std::vector<int> failed_replicates;
};

using Estimator = std::function<Eigen::VectorXd(const ObservationTable&)>;

struct BootstrapOptions {
    int threads = 1;
    /// Fewer successful replicates than this fraction of B is an error.
    double min_success_fraction = 0.95;
};

/// Resamples subjects with replacement and reruns `estimator` on each
/// replicate. Replicate b draws from rng.derive(b).
BootstrapResult bootstrap_variance(const ObservationTable& table, const Estimator& estimator, int B,
                                   const RngStream& rng, const BootstrapOptions& options = {});

}  // namespace peee
