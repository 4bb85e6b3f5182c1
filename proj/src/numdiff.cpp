#include "peee/numdiff.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace peee {

namespace {

Eigen::VectorXd evaluate(const VectorFunction& f, const Eigen::VectorXd& x, Eigen::Index column) {
    Eigen::VectorXd value;
    try {
        value = f(x);
    } catch (const std::exception& e) {
        throw JacobianError(fmt::format("function evaluation failed for column {}: {}", column, e.what()),
                            column);
    }
    if (!value.allFinite())
        throw JacobianError(fmt::format("function returned non-finite values for column {}", column), column);
    return value;
}

}  // namespace

Eigen::MatrixXd jacobian_fd(const VectorFunction& f, const Eigen::VectorXd& x0, const JacobianConfig& config) {
    if (!(config.eps > 0.0))
        throw ConfigError("jacobian step scale must be positive");
    const Eigen::VectorXd f0 = evaluate(f, x0, -1);
    Eigen::MatrixXd jac(f0.size(), x0.size());
    for (Eigen::Index j = 0; j < x0.size(); ++j) {
        const double h = config.eps * std::max(std::abs(x0(j)), 1.0);
        Eigen::VectorXd xp = x0;
        xp(j) = x0(j) + h;
        const Eigen::VectorXd fp = evaluate(f, xp, j);
        if (fp.size() != f0.size())
            throw JacobianError(fmt::format("function output size changed at column {}", j), j);
        if (config.central) {
            Eigen::VectorXd xm = x0;
            xm(j) = x0(j) - h;
            const Eigen::VectorXd fm = evaluate(f, xm, j);
            jac.col(j) = (fp - fm) / (xp(j) - xm(j));
        } else {
            jac.col(j) = (fp - f0) / (xp(j) - x0(j));
        }
    }
    return jac;
}

}  // namespace peee
