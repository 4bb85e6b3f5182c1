#include "peee/glm.hpp"

#include "peee/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace peee {

namespace {

void check_inputs(const DesignMatrix& design, const Eigen::VectorXd& response,
                  const Eigen::VectorXd& weights) {
    if (response.size() != design.rows() || weights.size() != design.rows())
        throw ConfigError(fmt::format("design has {} rows but response/weights have {}/{}",
                                      design.rows(), response.size(), weights.size()));
    if ((weights.array() < 0.0).any() || !weights.allFinite())
        throw ConfigError("weights must be finite and non-negative");
    if (!(weights.sum() > 0.0))
        throw ConfigError("all weights are zero");
}

std::string column_label(const DesignMatrix& design, Eigen::Index j) {
    if (static_cast<std::size_t>(j) < design.column_names.size())
        return design.column_names[static_cast<std::size_t>(j)];
    return fmt::format("column {}", j);
}

// Rank check on the positively weighted rows; names the dependent columns.
void check_rank(const DesignMatrix& design, const Eigen::VectorXd& weights) {
    const Eigen::Index p = design.cols();
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i)
        if (weights(i) > 0.0)
            ++kept;
    if (kept < p)
        throw SingularDesignError(
            fmt::format("only {} positively weighted rows for {} coefficients", kept, p));
    Eigen::MatrixXd scaled(kept, p);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i)
        if (weights(i) > 0.0)
            scaled.row(r++) = std::sqrt(weights(i)) * design.values.row(i);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    if (qr.rank() < p) {
        std::string names;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < p; ++k) {
            if (!names.empty())
                names += ", ";
            names += column_label(design, perm(k));
        }
        throw SingularDesignError(fmt::format("design is rank deficient ({} of {}); dependent: {}",
                                              qr.rank(), p, names));
    }
}

Eigen::MatrixXd symmetric_inverse(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array() <= 0.0).any())
        throw SingularDesignError(fmt::format("{} is not positive definite", what));
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    return 0.5 * (inv + inv.transpose());
}

double expit(double eta) {
    if (eta >= 0) {
        const double e = std::exp(-eta);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double log1pexp(double eta) {
    return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double logistic_deviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (w(i) == 0.0)
            continue;
        // -log-likelihood of y in [0,1]: log(1+e^eta) - y*eta
        dev += w(i) * (log1pexp(eta(i)) - y(i) * eta(i));
    }
    return 2.0 * dev;
}

bool step_converged(const Eigen::VectorXd& step, const Eigen::VectorXd& theta, double tol) {
    for (Eigen::Index j = 0; j < step.size(); ++j)
        if (std::abs(step(j)) >= tol * std::max(1.0, std::abs(theta(j))))
            return false;
    return true;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

}  // namespace

std::string_view to_string(Family family) noexcept {
    return family == Family::linear ? "linear" : "logistic";
}

Family parse_family(std::string_view text) {
    if (text == "linear" || text == "gaussian")
        return Family::linear;
    if (text == "logistic" || text == "binomial")
        return Family::logistic;
    throw ConfigError(fmt::format("unknown family '{}'", text));
}

Eigen::MatrixXd score_rows(Family family, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& weights, const Eigen::VectorXd& theta,
                           const MomentCorrection* correction) {
    const Eigen::VectorXd eta = x * theta;
    Eigen::VectorXd resid(eta.size());
    if (family == Family::linear) {
        resid = y - eta;
    } else {
        for (Eigen::Index i = 0; i < eta.size(); ++i)
            resid(i) = y(i) - expit(eta(i));
    }
    Eigen::MatrixXd s = x.array().colwise() * (weights.array() * resid.array());
    if (correction && correction->column >= 0) {
        if (family != Family::linear)
            throw ConfigError("second-moment substitution requires the linear family");
        // E[(y - x'theta) x_c] picks up -Var(x_c) theta_c.
        s.col(correction->column).array() -=
            weights.array() * correction->variance.array() * theta(correction->column);
    }
    return s;
}

FitResult fit_weighted_linear(const DesignMatrix& design, const Eigen::VectorXd& response,
                              const Eigen::VectorXd& weights, const MomentCorrection* correction) {
    check_inputs(design, response, weights);
    check_rank(design, weights);
    const Eigen::MatrixXd& x = design.values;
    const Eigen::Index p = x.cols();

    Eigen::MatrixXd xtwx = x.transpose() * (x.array().colwise() * weights.array()).matrix();
    const Eigen::VectorXd xtwy = x.transpose() * (weights.array() * response.array()).matrix();
    double extra_sse_factor = 0.0;
    if (correction && correction->column >= 0) {
        if (correction->variance.size() != x.rows())
            throw ConfigError("moment correction has the wrong length");
        extra_sse_factor = weights.dot(correction->variance);
        xtwx(correction->column, correction->column) += extra_sse_factor;
    }

    FitResult fit;
    fit.family = Family::linear;
    fit.column_names = design.column_names;
    fit.bread = symmetric_inverse(xtwx, "weighted cross-product matrix");
    fit.coefficients = fit.bread * xtwy;
    // One refinement step against round-off in the explicit inverse.
    fit.coefficients += fit.bread * (xtwy - xtwx * fit.coefficients);

    const Eigen::VectorXd resid = response - x * fit.coefficients;
    double sse = (weights.array() * resid.array().square()).sum();
    if (correction && correction->column >= 0)
        sse += extra_sse_factor * fit.coefficients(correction->column) * fit.coefficients(correction->column);
    fit.deviance = sse;
    const double dof = weights.sum() - static_cast<double>(p);
    fit.sigma2 = dof > 0 ? sse / dof : std::numeric_limits<double>::quiet_NaN();
    fit.naive_vcov = (dof > 0 ? fit.sigma2 : 0.0) * fit.bread;
    fit.scores = score_rows(Family::linear, x, response, weights, fit.coefficients, correction);
    fit.converged = true;
    fit.iterations = 1;
    fit.deviance_trace = {sse};
    return fit;
}

FitResult fit_weighted_logistic(const DesignMatrix& design, const Eigen::VectorXd& response,
                                const Eigen::VectorXd& weights, const GlmOptions& options) {
    check_inputs(design, response, weights);
    for (Eigen::Index i = 0; i < response.size(); ++i)
        if (!(response(i) == 0.0 || response(i) == 1.0))
            throw ConfigError(fmt::format("logistic response must be 0/1; row {} has {}", i + 1, response(i)));
    check_rank(design, weights);
    const Eigen::MatrixXd& x = design.values;
    const Eigen::Index p = x.cols();

    FitResult fit;
    fit.family = Family::logistic;
    fit.column_names = design.column_names;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = x * theta;
    double dev = logistic_deviance(eta, response, weights);
    fit.deviance_trace.push_back(dev);

    Eigen::MatrixXd info(p, p);
    Eigen::VectorXd mu(eta.size());
    Eigen::VectorXd v(eta.size());
    for (int iter = 1; iter <= options.max_iter; ++iter) {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            mu(i) = expit(eta(i));
            v(i) = weights(i) * mu(i) * (1.0 - mu(i));
        }
        const Eigen::VectorXd grad = x.transpose() * (weights.array() * (response - mu).array()).matrix();
        info.noalias() = x.transpose() * (x.array().colwise() * v.array()).matrix();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
            throw SingularDesignError("logistic information matrix is singular (possible separation)");
        Eigen::VectorXd step = ldlt.solve(grad);

        Eigen::VectorXd candidate = theta + step;
        Eigen::VectorXd cand_eta = x * candidate;
        double cand_dev = logistic_deviance(cand_eta, response, weights);
        int halvings = 0;
        while (!(cand_dev <= dev + 1e-12 * (1.0 + std::abs(dev))) && halvings < 30) {
            step *= 0.5;
            candidate = theta + step;
            cand_eta = x * candidate;
            cand_dev = logistic_deviance(cand_eta, response, weights);
            ++halvings;
        }
        theta = candidate;
        eta = cand_eta;
        dev = cand_dev;
        fit.deviance_trace.push_back(dev);
        fit.iterations = iter;
        if (step_converged(step, theta, options.tolerance)) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged)
        throw ConvergenceError(
            fmt::format("logistic fit did not converge in {} iterations", options.max_iter), to_std(theta));

    fit.coefficients = theta;
    fit.deviance = dev;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        mu(i) = expit(eta(i));
        v(i) = weights(i) * mu(i) * (1.0 - mu(i));
    }
    info.noalias() = x.transpose() * (x.array().colwise() * v.array()).matrix();
    fit.bread = symmetric_inverse(info, "logistic information matrix");
    fit.naive_vcov = fit.bread;
    fit.scores = score_rows(Family::logistic, x, response, weights, theta);
    fit.separation = (theta.array().abs() > options.separation_bound).any();
    return fit;
}

FitResult fit_weighted(Family family, const DesignMatrix& design, const Eigen::VectorXd& response,
                       const Eigen::VectorXd& weights, const MomentCorrection* correction,
                       const GlmOptions& options) {
    if (family == Family::linear)
        return fit_weighted_linear(design, response, weights, correction);
    if (correction && correction->column >= 0)
        throw ConfigError("second-moment substitution requires the linear family");
    return fit_weighted_logistic(design, response, weights, options);
}

Eigen::MatrixXd robust_covariance(const FitResult& fit) {
    const Eigen::MatrixXd meat = fit.scores.transpose() * fit.scores;
    Eigen::MatrixXd v = fit.bread * meat * fit.bread;
    return 0.5 * (v + v.transpose());
}

// ---------------------------------------------------------------------------
// Multinomial logit

Eigen::VectorXd MultinomFit::flatten() const {
    Eigen::VectorXd flat(coefficients.size());
    const Eigen::Index q = coefficients.cols();
    for (Eigen::Index k = 0; k < coefficients.rows(); ++k)
        flat.segment(k * q, q) = coefficients.row(k).transpose();
    return flat;
}

Eigen::MatrixXd MultinomFit::unflatten(const Eigen::VectorXd& flat, int levels) {
    const Eigen::Index blocks = levels - 1;
    const Eigen::Index q = flat.size() / blocks;
    Eigen::MatrixXd coef(blocks, q);
    for (Eigen::Index k = 0; k < blocks; ++k)
        coef.row(k) = flat.segment(k * q, q).transpose();
    return coef;
}

Eigen::MatrixXd predict_multinomial(const Eigen::MatrixXd& coefficients, const Eigen::MatrixXd& design) {
    const Eigen::Index n = design.rows();
    const Eigen::Index blocks = coefficients.rows();
    Eigen::MatrixXd probs(n, blocks + 1);
    probs.col(0).setZero();
    probs.rightCols(blocks) = design * coefficients.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = probs.row(i).maxCoeff();
        double total = 0.0;
        for (Eigen::Index k = 0; k <= blocks; ++k) {
            probs(i, k) = std::exp(probs(i, k) - mx);
            total += probs(i, k);
        }
        probs.row(i) /= total;
    }
    return probs;
}

Eigen::MatrixXd predict_multinomial(const MultinomFit& fit, const DesignMatrix& design) {
    return predict_multinomial(fit.coefficients, design.values);
}

namespace {

double multinomial_loglik(const Eigen::MatrixXd& probs, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (w(i) > 0.0)
            ll += w(i) * std::log(probs(i, static_cast<Eigen::Index>(y(i)) - 1));
    return ll;
}

}  // namespace

MultinomFit fit_multinomial_logit(const DesignMatrix& design, const Eigen::VectorXd& response,
                                  const Eigen::VectorXd& weights, int levels, const GlmOptions& options) {
    check_inputs(design, response, weights);
    if (levels < 2)
        throw ConfigError("multinomial model needs at least 2 levels");
    const Eigen::MatrixXd& x = design.values;
    const Eigen::Index n = x.rows();
    const Eigen::Index q = x.cols();
    const Eigen::Index blocks = levels - 1;
    const Eigen::Index dim = blocks * q;

    Eigen::VectorXd level_weight = Eigen::VectorXd::Zero(levels);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double code = response(i);
        if (code != std::floor(code) || code < 1 || code > levels)
            throw ConfigError(fmt::format("row {}: level code {} outside 1..{}", i + 1, code, levels));
        level_weight(static_cast<Eigen::Index>(code) - 1) += weights(i);
    }
    for (int k = 0; k < levels; ++k)
        if (!(level_weight(k) > 0.0))
            throw DegenerateLevelError(
                fmt::format("level {} has no positively weighted rows", k + 1));
    check_rank(design, weights);

    // Start from the intercept-only MLE.
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index k = 0; k < blocks; ++k)
        theta(k * q) = std::log(level_weight(k + 1) / level_weight(0));

    MultinomFit fit;
    fit.levels = levels;
    Eigen::MatrixXd probs = predict_multinomial(MultinomFit::unflatten(theta, levels), x);
    double ll = multinomial_loglik(probs, response, weights);

    Eigen::MatrixXd info(dim, dim);
    const auto information = [&](const Eigen::MatrixXd& pr) {
        for (Eigen::Index k = 0; k < blocks; ++k) {
            for (Eigen::Index l = k; l < blocks; ++l) {
                Eigen::VectorXd c(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    c(i) = weights(i) * pr(i, k + 1) * ((k == l ? 1.0 : 0.0) - pr(i, l + 1));
                const Eigen::MatrixXd block = x.transpose() * (x.array().colwise() * c.array()).matrix();
                info.block(k * q, l * q, q, q) = block;
                if (l != k)
                    info.block(l * q, k * q, q, q) = block.transpose();
            }
        }
    };

    for (int iter = 1; iter <= options.max_iter; ++iter) {
        Eigen::VectorXd grad(dim);
        for (Eigen::Index k = 0; k < blocks; ++k) {
            Eigen::VectorXd r(n);
            for (Eigen::Index i = 0; i < n; ++i)
                r(i) = weights(i) * ((response(i) == static_cast<double>(k + 2) ? 1.0 : 0.0) - probs(i, k + 1));
            grad.segment(k * q, q) = x.transpose() * r;
        }
        information(probs);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
            throw SingularDesignError("multinomial information matrix is singular");
        Eigen::VectorXd step = ldlt.solve(grad);

        Eigen::VectorXd candidate = theta + step;
        Eigen::MatrixXd cand_probs = predict_multinomial(MultinomFit::unflatten(candidate, levels), x);
        double cand_ll = multinomial_loglik(cand_probs, response, weights);
        int halvings = 0;
        while (!(cand_ll >= ll - 1e-12 * (1.0 + std::abs(ll))) && halvings < 30) {
            step *= 0.5;
            candidate = theta + step;
            cand_probs = predict_multinomial(MultinomFit::unflatten(candidate, levels), x);
            cand_ll = multinomial_loglik(cand_probs, response, weights);
            ++halvings;
        }
        theta = candidate;
        probs = std::move(cand_probs);
        ll = cand_ll;
        fit.iterations = iter;
        if (step_converged(step, theta, options.tolerance)) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged)
        throw ConvergenceError(
            fmt::format("multinomial fit did not converge in {} iterations", options.max_iter), to_std(theta));

    fit.coefficients = MultinomFit::unflatten(theta, levels);
    fit.loglik = ll;
    information(probs);
    fit.vcov = symmetric_inverse(info, "multinomial information matrix");
    return fit;
}

Eigen::MatrixXd multinomial_score_contributions(const Eigen::MatrixXd& coefficients,
                                                const Eigen::MatrixXd& design,
                                                const Eigen::VectorXd& response,
                                                std::span<const std::uint8_t> complete_flag) {
    const Eigen::Index n = design.rows();
    const Eigen::Index q = design.cols();
    const Eigen::Index blocks = coefficients.rows();
    if (response.size() != n || static_cast<Eigen::Index>(complete_flag.size()) != n)
        throw ConfigError("score contribution inputs have mismatched lengths");
    const Eigen::MatrixXd probs = predict_multinomial(coefficients, design);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, blocks * q);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!complete_flag[static_cast<std::size_t>(i)])
            continue;
        for (Eigen::Index k = 0; k < blocks; ++k) {
            const double indicator = response(i) == static_cast<double>(k + 2) ? 1.0 : 0.0;
            u.block(i, k * q, 1, q) = (indicator - probs(i, k + 1)) * design.row(i);
        }
    }
    return u;
}

Eigen::MatrixXd multinomial_score_contributions(const MultinomFit& fit, const DesignMatrix& design,
                                                const Eigen::VectorXd& response,
                                                std::span<const std::uint8_t> complete_flag) {
    return multinomial_score_contributions(fit.coefficients, design.values, response, complete_flag);
}

}  // namespace peee
