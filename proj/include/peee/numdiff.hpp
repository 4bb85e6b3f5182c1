#pragma once

#include "peee/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>

namespace peee {

/// Largest x with 1 - x != 1 in double precision (2^-53).
inline constexpr double kNegEpsilon = std::numeric_limits<double>::epsilon() / 2.0;

struct JacobianConfig {
    /// Relative step; the step for coordinate j is eps * max(|x_j|, 1).
    double eps = std::sqrt(kNegEpsilon);
    /// Central differences instead of the default forward differences.
    bool central = false;
};

class JacobianError : public NumericError {
public:
    JacobianError(const std::string& what, Eigen::Index column)
        : NumericError(what), column_(column) {}
    Eigen::Index column() const noexcept { return column_; }

private:
    Eigen::Index column_;
};

using VectorFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Finite-difference Jacobian of f at x0, one column per coordinate. Each
/// column is divided by the realized floating-point step rather than the
/// nominal one.
Eigen::MatrixXd jacobian_fd(const VectorFunction& f, const Eigen::VectorXd& x0,
                            const JacobianConfig& config = {});

}  // namespace peee
