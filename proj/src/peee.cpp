#include "peee/peee.hpp"

#include "peee/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace peee {

Eigen::VectorXd analysis_response(const DesignBuilder& builder, Family family, std::span<const std::size_t> rows,
                                  const Overrides& overrides) {
    Eigen::VectorXd y = builder.response(rows, overrides);
    const Column& col = builder.table().column(builder.formula().response);
    if (col.categorical()) {
        if (family != Family::logistic || col.level_count() != 2)
            throw ConfigError(fmt::format("categorical response '{}' needs the logistic family and 2 levels",
                                          col.name));
        y.array() -= 1.0;
    }
    return y;
}

namespace {

MomentPlan choose_plan(const PeeeFit& fit) {
    const std::string& target = fit.gamma_fit.incomplete_column;
    if (fit.analysis.response == target) {
        if (fit.family != Family::linear)
            throw ConfigError("linear-moment regime with a missing response needs the linear family");
        if (fit.spec.plan == MomentPlan::mean_and_square)
            throw ConfigError("second-moment plan applies to a missing covariate, not the response");
        return MomentPlan::mean;
    }
    int uses = 0;
    for (const auto& t : fit.analysis.terms) {
        if (t.column != target)
            continue;
        if (t.kind != TermKind::numeric)
            throw ConfigError(fmt::format("linear-moment regime: '{}' must enter the analysis model linearly", target));
        ++uses;
    }
    if (uses == 0)
        return MomentPlan::mean;
    if (fit.family != Family::linear)
        throw ConfigError("linear-moment regime: a missing covariate in a logistic model enters nonlinearly; "
                          "use the discrete or Monte Carlo regime");
    if (fit.spec.plan == MomentPlan::mean)
        throw ConfigError("a missing covariate in a linear model needs its second moment (mean_and_square plan)");
    return MomentPlan::mean_and_square;
}

struct StageTwo {
    DesignMatrix design;
    Eigen::VectorXd response;
    Eigen::VectorXd weights;
    MomentCorrection correction;
};

StageTwo stage_two(const PeeeFit& fit) {
    StageTwo s;
    const auto rows = fit.augmented.source_rows();
    const Overrides ov = fit.augmented.overrides();
    s.design = fit.builder->build(rows, ov);
    s.response = analysis_response(*fit.builder, fit.family, rows, ov);
    s.weights = fit.augmented.weights();
    s.correction.column = fit.moment_column;
    if (fit.moment_column >= 0)
        s.correction.variance = fit.augmented.second_moment_variance();
    return s;
}

}  // namespace

PeeeFit peee_fit(std::shared_ptr<const ObservationTable> table, const Formula& analysis, Family family,
                 const IncompleteSpec& spec, RngStream& rng, const PeeeOptions& options) {
    PeeeFit fit;
    fit.family = family;
    fit.analysis = analysis;
    fit.spec = spec;
    fit.options = options;
    fit.table = table;
    fit.regime = spec.regime;
    fit.n_subjects = table->rows();

    const std::string& target = spec.model.response;
    if (analysis.response != target && !analysis.uses(target))
        throw ConfigError(fmt::format("incomplete column '{}' is not used by the analysis model", target));
    if (spec.regime == Regime::discrete && spec.kind != GammaKind::multinomial)
        throw ConfigError("discrete regime needs the multinomial incomplete-variable model");
    if (spec.regime == Regime::linear_moment && spec.kind == GammaKind::multinomial)
        throw ConfigError("linear-moment regime needs a linear incomplete-variable model");
    if (spec.regime == Regime::monte_carlo && spec.draws < 1)
        throw ConfigError("Monte Carlo regime needs draws >= 1");

    fit.builder = std::make_shared<const DesignBuilder>(analysis, table);
    fit.gamma_fit = fit_gamma(table, spec.model, spec.kind, options.glm);
    fit.n_incomplete = table->incomplete_rows().size();

    switch (spec.regime) {
    case Regime::linear_moment: {
        const MomentPlan plan = choose_plan(fit);
        fit.augmented = augment_linear_moment(*table, fit.gamma_fit, plan);
        if (plan == MomentPlan::mean_and_square)
            fit.moment_column = fit.builder->columns_of(target).front();
        break;
    }
    case Regime::discrete:
        fit.augmented = augment_discrete(*table, fit.gamma_fit);
        break;
    case Regime::monte_carlo:
        if (spec.kind == GammaKind::multinomial && !spec.force_monte_carlo)
            throw ConfigError("Monte Carlo augmentation of a discrete variable: use the discrete regime (or force)");
        fit.uniforms = draw_uniforms(rng, fit.n_incomplete, spec.draws);
        fit.augmented = augment_monte_carlo(*table, fit.gamma_fit, fit.uniforms, spec.force_monte_carlo);
        break;
    }

    const StageTwo s = stage_two(fit);
    fit.analysis_fit = fit_weighted(family, s.design, s.response, s.weights,
                                    fit.moment_column >= 0 ? &s.correction : nullptr, options.glm);
    fit.theta_hat = fit.analysis_fit.coefficients;
    return fit;
}

PeeeFit peee_fit(std::shared_ptr<const ObservationTable> table, const Formula& analysis, Family family,
                 const IncompleteSpec& spec, const PeeeOptions& options) {
    if (spec.regime == Regime::monte_carlo && !spec.seed)
        throw ConfigError("Monte Carlo regime needs a seed");
    RngStream rng(spec.seed.value_or(0));
    return peee_fit(std::move(table), analysis, family, spec, rng, options);
}

PeeeFit peee_fit(const ObservationTable& table, const Formula& analysis, Family family, const IncompleteSpec& spec,
                 const PeeeOptions& options) {
    return peee_fit(std::make_shared<const ObservationTable>(table), analysis, family, spec, options);
}

Eigen::MatrixXd collapse_subject_scores(const FitResult& analysis_fit, const AugmentedTable& augmented) {
    if (analysis_fit.scores.rows() != static_cast<Eigen::Index>(augmented.size()))
        throw ConfigError(fmt::format("{} score rows for {} pseudo-records", analysis_fit.scores.rows(),
                                      augmented.size()));
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(augmented.n_subjects),
                                                analysis_fit.scores.cols());
    for (std::size_t r = 0; r < augmented.size(); ++r)
        out.row(static_cast<Eigen::Index>(augmented.rows[r].source_row)) +=
            analysis_fit.scores.row(static_cast<Eigen::Index>(r));
    return out;
}

Eigen::VectorXd incomplete_score_mean(const PeeeFit& fit, const Eigen::VectorXd& gamma) {
    const Eigen::Index d = fit.theta_hat.size();
    if (fit.n_incomplete == 0)
        return Eigen::VectorXd::Zero(d);
    const GammaFit& g = fit.gamma_fit;
    const std::vector<std::size_t> missing = fit.table->incomplete_rows();

    std::vector<std::size_t> rows;
    std::vector<double> values;
    std::vector<double> weights;
    std::vector<double> variance;
    switch (fit.regime) {
    case Regime::linear_moment: {
        const Eigen::VectorXd mu = g.means(gamma, missing);
        const double var = fit.moment_column >= 0 ? g.variance(gamma) : 0.0;
        for (std::size_t k = 0; k < missing.size(); ++k) {
            rows.push_back(missing[k]);
            values.push_back(mu(static_cast<Eigen::Index>(k)));
            weights.push_back(1.0);
            variance.push_back(var);
        }
        break;
    }
    case Regime::discrete: {
        const Eigen::MatrixXd p = g.probabilities(gamma, missing);
        for (std::size_t k = 0; k < missing.size(); ++k)
            for (int level = 1; level <= g.levels; ++level) {
                rows.push_back(missing[k]);
                values.push_back(level);
                weights.push_back(p(static_cast<Eigen::Index>(k), level - 1));
                variance.push_back(0.0);
            }
        break;
    }
    case Regime::monte_carlo: {
        if (fit.uniforms.rows() != static_cast<Eigen::Index>(missing.size()))
            throw StateError("Monte Carlo fit has no retained uniforms");
        const double w = 1.0 / static_cast<double>(fit.uniforms.cols());
        for (std::size_t k = 0; k < missing.size(); ++k)
            for (Eigen::Index j = 0; j < fit.uniforms.cols(); ++j) {
                rows.push_back(missing[k]);
                values.push_back(g.inverse_cdf(gamma, missing[k], fit.uniforms(static_cast<Eigen::Index>(k), j)));
                weights.push_back(w);
                variance.push_back(0.0);
            }
        break;
    }
    }

    Overrides ov;
    ov[g.incomplete_column] = values;
    const DesignMatrix x = fit.builder->build(rows, ov);
    const Eigen::VectorXd y = analysis_response(*fit.builder, fit.family, rows, ov);
    const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    MomentCorrection corr;
    corr.column = fit.moment_column;
    corr.variance = Eigen::Map<const Eigen::VectorXd>(variance.data(), static_cast<Eigen::Index>(variance.size()));
    const Eigen::MatrixXd s =
        score_rows(fit.family, x.values, y, w, fit.theta_hat, fit.moment_column >= 0 ? &corr : nullptr);
    return s.colwise().sum().transpose() / static_cast<double>(fit.n_subjects);
}

Eigen::MatrixXd compute_g_hat(const PeeeFit& fit) {
    if (fit.regime == Regime::monte_carlo)
        throw ConfigError("G-hat applies to the linear-moment and discrete regimes; use compute_h_hat");
    if (fit.n_incomplete == 0)
        return Eigen::MatrixXd::Zero(fit.theta_hat.size(), fit.gamma_fit.dimension());
    return jacobian_fd([&](const Eigen::VectorXd& g) { return incomplete_score_mean(fit, g); },
                       fit.gamma_fit.gamma, fit.options.jacobian);
}

Eigen::MatrixXd compute_h_hat(const PeeeFit& fit) {
    if (fit.regime != Regime::monte_carlo)
        throw ConfigError("H-hat applies to the Monte Carlo regime only");
    if (fit.gamma_fit.kind == GammaKind::multinomial)
        throw ConfigError("H-hat needs a continuous conditional; discrete draws are not differentiable in gamma");
    if (fit.n_incomplete == 0)
        return Eigen::MatrixXd::Zero(fit.theta_hat.size(), fit.gamma_fit.dimension());
    if (fit.uniforms.size() == 0)
        throw StateError("Monte Carlo fit has no retained uniforms");
    return jacobian_fd([&](const Eigen::VectorXd& g) { return incomplete_score_mean(fit, g); },
                       fit.gamma_fit.gamma, fit.options.jacobian);
}

SandwichComponents sandwich_components(const PeeeFit& fit) {
    const auto n = static_cast<double>(fit.n_subjects);
    SandwichComponents parts;
    parts.psi_dot_inv = n * fit.analysis_fit.bread;
    parts.subject_scores = collapse_subject_scores(fit.analysis_fit, fit.augmented);
    parts.gamma_information_inverse = n * fit.gamma_fit.bread;
    parts.gamma_scores = fit.gamma_fit.scores;
    parts.omega_hat = parts.gamma_scores * parts.gamma_information_inverse.transpose();
    if (fit.n_incomplete == 0)
        parts.correction = Eigen::MatrixXd::Zero(fit.theta_hat.size(), fit.gamma_fit.dimension());
    else
        parts.correction = fit.regime == Regime::monte_carlo ? compute_h_hat(fit) : compute_g_hat(fit);
    return parts;
}

Eigen::MatrixXd assemble_sandwich(const SandwichComponents& parts, bool include_correction) {
    const auto n = static_cast<double>(parts.subject_scores.rows());
    Eigen::MatrixXd c = parts.subject_scores;
    if (include_correction)
        c += parts.omega_hat * parts.correction.transpose();
    const Eigen::MatrixXd meat = c.transpose() * c / n;
    Eigen::MatrixXd v = parts.psi_dot_inv * meat * parts.psi_dot_inv / n;
    return 0.5 * (v + v.transpose());
}

Eigen::MatrixXd variance_closed_form(const PeeeFit& fit) {
    if (fit.regime == Regime::monte_carlo)
        throw ConfigError("closed-form variance for Monte Carlo fits: use variance_closed_form_mc");
    if (fit.n_incomplete == 0)
        return robust_covariance(fit.analysis_fit);
    return assemble_sandwich(sandwich_components(fit));
}

Eigen::MatrixXd variance_closed_form_mc(const PeeeFit& fit) {
    if (fit.regime != Regime::monte_carlo)
        throw ConfigError("variance_closed_form_mc needs a Monte Carlo fit");
    if (fit.n_incomplete == 0)
        return robust_covariance(fit.analysis_fit);
    return assemble_sandwich(sandwich_components(fit));
}

Eigen::MatrixXd peee_variance(const PeeeFit& fit) {
    return fit.regime == Regime::monte_carlo ? variance_closed_form_mc(fit) : variance_closed_form(fit);
}

}  // namespace peee
