#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace peee {

/// B-spline basis of order m (degree m-1) on [lo, hi] with N internal knots.
///
/// Boundary knots are repeated m times, giving N + m basis functions that
/// sum to one everywhere on [lo, hi]. Arguments outside the interval are
/// clamped to it.
class SplineBasis {
public:
    SplineBasis(int order, std::vector<double> internal_knots, double lo, double hi);

    /// Internal knots at the k/(N+1) sample quantiles of `values` and
    /// boundary knots at their min and max.
    static SplineBasis from_quantiles(std::span<const double> values, int n_internal, int order);

    int order() const noexcept { return order_; }
    const std::vector<double>& internal_knots() const noexcept { return internal_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    const std::vector<double>& knots() const noexcept { return knots_; }
    int dimension() const noexcept { return static_cast<int>(internal_.size()) + order_; }

    /// Writes the basis values at x into `out` (length dimension()).
    void eval(double x, std::span<double> out) const;

private:
    int order_;
    std::vector<double> internal_;
    double lo_;
    double hi_;
    std::vector<double> knots_;
};

/// len(x) x (N + m) matrix of basis values.
Eigen::MatrixXd eval_basis(const SplineBasis& basis, std::span<const double> x);

/// Type-7 (linear interpolation) sample quantile of unsorted data.
double sample_quantile(std::vector<double> values, double p);

}  // namespace peee
