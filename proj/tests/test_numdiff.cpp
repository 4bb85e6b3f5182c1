#include "peee/numdiff.hpp"

#include <doctest.h>

#include <cmath>

using namespace peee;

TEST_CASE("exact on affine maps") {
    Eigen::MatrixXd a(3, 2);
    a << 1.5, -2.0, 0.25, 4.0, -7.0, 0.0;
    const auto f = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(a * x); };
    Eigen::VectorXd x0(2);
    x0 << 1.0, 2.0;
    CHECK((jacobian_fd(f, x0) - a).cwiseAbs().maxCoeff() <= 1e-6);
    JacobianConfig central;
    central.central = true;
    CHECK((jacobian_fd(f, x0, central) - a).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("step rule and accuracy on a smooth map") {
    const auto f = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd y(2);
        y << std::sin(x(0)) * x(1), std::exp(0.5 * x(0));
        return y;
    };
    Eigen::VectorXd x0(2);
    x0 << 0.3, 2.0;
    Eigen::MatrixXd exact(2, 2);
    exact << std::cos(0.3) * 2.0, std::sin(0.3), 0.5 * std::exp(0.15), 0.0;
    CHECK((jacobian_fd(f, x0) - exact).cwiseAbs().maxCoeff() < 1e-6);
    JacobianConfig central;
    central.central = true;
    CHECK((jacobian_fd(f, x0, central) - exact).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(JacobianConfig{}.eps == doctest::Approx(std::sqrt(std::ldexp(1.0, -53))));
}

TEST_CASE("failures name the column") {
    const auto f = [](const Eigen::VectorXd& x) {
        if (x(1) > 1.0)
            throw NumericError("boom");
        return Eigen::VectorXd(x);
    };
    Eigen::VectorXd x0(2);
    x0 << 0.0, 1.0;
    try {
        jacobian_fd(f, x0);
        FAIL("expected JacobianError");
    } catch (const JacobianError& e) {
        CHECK(e.column() == 1);
    }
    const auto g = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array().log()); };
    Eigen::VectorXd z(1);
    z << 0.0;
    CHECK_THROWS_AS(jacobian_fd(g, z), JacobianError);
    JacobianConfig bad;
    bad.eps = 0.0;
    CHECK_THROWS_AS(jacobian_fd(g, x0, bad), ConfigError);
}
