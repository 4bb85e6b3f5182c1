#include "peee/augment.hpp"

#include "peee/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace peee {

std::string_view to_string(GammaKind kind) noexcept {
    switch (kind) {
    case GammaKind::multinomial: return "multinomial";
    case GammaKind::linear_mean: return "linear_mean";
    case GammaKind::linear_mean_variance: return "linear_mean_variance";
    }
    return "?";
}

std::string_view to_string(Regime regime) noexcept {
    switch (regime) {
    case Regime::linear_moment: return "linear_moment";
    case Regime::discrete: return "discrete";
    case Regime::monte_carlo: return "monte_carlo";
    }
    return "?";
}

GammaKind parse_gamma_kind(std::string_view text) {
    if (text == "multinomial")
        return GammaKind::multinomial;
    if (text == "linear_mean" || text == "linear-mean")
        return GammaKind::linear_mean;
    if (text == "linear_mean_variance" || text == "linear-mean-variance" || text == "gaussian")
        return GammaKind::linear_mean_variance;
    throw ConfigError(fmt::format("unknown incomplete-model kind '{}'", text));
}

Regime parse_regime(std::string_view text) {
    if (text == "linear_moment" || text == "linear-moment" || text == "linear")
        return Regime::linear_moment;
    if (text == "discrete")
        return Regime::discrete;
    if (text == "monte_carlo" || text == "monte-carlo" || text == "mc")
        return Regime::monte_carlo;
    throw ConfigError(fmt::format("unknown regime '{}'", text));
}

Eigen::Index GammaFit::mean_dimension() const noexcept {
    return kind == GammaKind::linear_mean_variance ? gamma.size() - 1 : gamma.size();
}

Eigen::MatrixXd GammaFit::probabilities(const Eigen::VectorXd& g, std::span<const std::size_t> rows) const {
    if (kind != GammaKind::multinomial)
        throw ConfigError("class probabilities require a multinomial incomplete-variable model");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), design.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
        x.row(static_cast<Eigen::Index>(r)) = design.row(static_cast<Eigen::Index>(rows[r]));
    return predict_multinomial(MultinomFit::unflatten(g, levels), x);
}

Eigen::VectorXd GammaFit::means(const Eigen::VectorXd& g, std::span<const std::size_t> rows) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    if (kind == GammaKind::multinomial) {
        const Eigen::MatrixXd p = probabilities(g, rows);
        const Eigen::VectorXd codes = Eigen::VectorXd::LinSpaced(levels, 1.0, static_cast<double>(levels));
        return p * codes;
    }
    const auto beta = g.head(mean_dimension());
    for (std::size_t r = 0; r < rows.size(); ++r)
        out(static_cast<Eigen::Index>(r)) = design.row(static_cast<Eigen::Index>(rows[r])).dot(beta);
    return out;
}

double GammaFit::variance(const Eigen::VectorXd& g) const {
    if (kind != GammaKind::linear_mean_variance)
        throw ConfigError(fmt::format("incomplete-model kind '{}' carries no variance parameter", to_string(kind)));
    return g(g.size() - 1);
}

double GammaFit::inverse_cdf(const Eigen::VectorXd& g, std::size_t row, double u) const {
    if (!(u > 0.0 && u < 1.0))
        throw NumericError(fmt::format("uniform {} outside (0,1)", u));
    if (kind == GammaKind::multinomial) {
        const std::size_t r[] = {row};
        const Eigen::MatrixXd p = probabilities(g, r);
        return discrete_inverse_cdf({p.data(), static_cast<std::size_t>(p.size())}, u);
    }
    if (kind == GammaKind::linear_mean)
        throw ConfigError("Monte Carlo draws need a full conditional distribution; use linear_mean_variance");
    const double var = variance(g);
    if (!(var >= 0.0))
        throw NumericError(fmt::format("conditional variance {} is negative", var));
    const double mean = design.row(static_cast<Eigen::Index>(row)).dot(g.head(mean_dimension()));
    return mean + std::sqrt(var) * normal_quantile(u);
}

GammaFit fit_gamma(std::shared_ptr<const ObservationTable> table, const Formula& incomplete_model, GammaKind kind,
                   const GlmOptions& options) {
    const std::string& target = incomplete_model.response;
    if (!table->incomplete_column().empty() && table->incomplete_column() != target)
        throw ConfigError(fmt::format("incomplete-variable model response '{}' is not the incomplete column '{}'",
                                      target, table->incomplete_column()));
    if (incomplete_model.uses(target))
        throw ConfigError(fmt::format("incomplete-variable model uses '{}' on both sides", target));
    const Column& col = table->column(target);
    if (kind == GammaKind::multinomial && !col.categorical())
        throw ConfigError(fmt::format("multinomial model needs a categorical column; '{}' is numeric", target));
    if (kind != GammaKind::multinomial && col.categorical())
        throw ConfigError(fmt::format("linear model needs a numeric column; '{}' is categorical", target));

    GammaFit g;
    g.kind = kind;
    g.incomplete_column = target;
    g.builder = std::make_shared<const DesignBuilder>(incomplete_model, table);
    const DesignMatrix full = g.builder->build();
    g.design = full.values;

    const std::vector<std::size_t> complete = table->complete_rows();
    g.n_complete = complete.size();
    const std::size_t n = table->rows();
    const auto q = full.cols();
    const DesignMatrix dc = g.builder->build(complete);
    const Eigen::VectorXd yc = g.builder->response(complete);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(complete.size()));

    if (kind == GammaKind::multinomial) {
        g.levels = col.level_count();
        const MultinomFit mf = fit_multinomial_logit(dc, yc, ones, g.levels, options);
        g.gamma = mf.flatten();
        g.vcov = mf.vcov;
        g.bread = mf.vcov;
        g.iterations = mf.iterations;
        g.converged = mf.converged;
        std::vector<std::uint8_t> flag(n);
        for (std::size_t i = 0; i < n; ++i)
            flag[i] = table->observed(i) ? 1 : 0;
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            y(static_cast<Eigen::Index>(i)) = flag[i] ? col.values[i] : 1.0;
        g.scores = multinomial_score_contributions(mf.coefficients, g.design, y, flag);
        return g;
    }

    const FitResult lf = fit_weighted_linear(dc, yc, ones);
    const Eigen::VectorXd resid = yc - dc.values * lf.coefficients;
    g.eta2 = resid.squaredNorm() / static_cast<double>(complete.size());
    g.iterations = 1;
    g.converged = true;
    const bool with_var = kind == GammaKind::linear_mean_variance;
    const Eigen::Index dim = q + (with_var ? 1 : 0);
    g.gamma.resize(dim);
    g.gamma.head(q) = lf.coefficients;
    g.bread = Eigen::MatrixXd::Zero(dim, dim);
    g.bread.topLeftCorner(q, q) = lf.bread;
    if (with_var) {
        g.gamma(q) = g.eta2;
        g.bread(q, q) = 1.0 / static_cast<double>(complete.size());
    }
    g.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), dim);
    for (std::size_t r = 0; r < complete.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(complete[r]);
        const double e = resid(static_cast<Eigen::Index>(r));
        g.scores.row(i).head(q) = e * g.design.row(i);
        if (with_var)
            g.scores(i, q) = e * e - g.eta2;
    }
    const Eigen::MatrixXd meat = g.scores.transpose() * g.scores;
    g.vcov = g.bread * meat * g.bread;
    g.vcov = 0.5 * (g.vcov + g.vcov.transpose());
    return g;
}

GammaFit fit_gamma(const ObservationTable& table, const Formula& incomplete_model, GammaKind kind,
                   const GlmOptions& options) {
    return fit_gamma(std::make_shared<const ObservationTable>(table), incomplete_model, kind, options);
}

std::vector<std::size_t> AugmentedTable::source_rows() const {
    std::vector<std::size_t> out(rows.size());
    std::transform(rows.begin(), rows.end(), out.begin(), [](const PseudoRecord& r) { return r.source_row; });
    return out;
}

Eigen::VectorXd AugmentedTable::weights() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        w(static_cast<Eigen::Index>(r)) = rows[r].weight;
    return w;
}

Overrides AugmentedTable::overrides() const {
    Overrides out;
    if (incomplete_column.empty())
        return out;
    auto& v = out[incomplete_column];
    v.reserve(rows.size());
    for (const auto& r : rows)
        v.push_back(r.value);
    return out;
}

Eigen::VectorXd AugmentedTable::second_moment_variance() const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
    if (!carries_second_moment)
        return out;
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (!rows[r].observed)
            out(static_cast<Eigen::Index>(r)) = rows[r].second_moment - rows[r].value * rows[r].value;
    return out;
}

namespace {

void check_same_table(const ObservationTable& table, const GammaFit& gamma_fit) {
    if (static_cast<Eigen::Index>(table.rows()) != gamma_fit.design.rows())
        throw ConfigError(fmt::format("table has {} rows but the incomplete-variable model was fitted on {}",
                                      table.rows(), gamma_fit.design.rows()));
    if (!table.incomplete_column().empty() && table.incomplete_column() != gamma_fit.incomplete_column)
        throw ConfigError("incomplete-variable model targets a different column than the table");
}

AugmentedTable start(const ObservationTable& table, const GammaFit& gamma_fit, Regime regime) {
    check_same_table(table, gamma_fit);
    AugmentedTable out;
    out.regime = regime;
    out.incomplete_column = gamma_fit.incomplete_column;
    out.n_subjects = table.rows();
    out.levels = gamma_fit.levels;
    return out;
}

PseudoRecord observed_record(const ObservationTable& table, const Column& col, std::size_t i) {
    PseudoRecord r;
    r.source_row = i;
    r.subject_id = table.subject_ids()[i];
    r.observed = true;
    r.value = col.values[i];
    r.weight = 1.0;
    return r;
}

}  // namespace

AugmentedTable augment_linear_moment(const ObservationTable& table, const GammaFit& gamma_fit, MomentPlan plan) {
    AugmentedTable out = start(table, gamma_fit, Regime::linear_moment);
    if (gamma_fit.kind == GammaKind::multinomial)
        throw ConfigError("linear-moment augmentation needs a linear incomplete-variable model");
    if (plan == MomentPlan::mean_and_square && gamma_fit.kind != GammaKind::linear_mean_variance)
        throw ConfigError("second-moment plan needs the linear_mean_variance kind (no variance estimate)");
    out.carries_second_moment = plan == MomentPlan::mean_and_square;
    const Column& col = table.column(gamma_fit.incomplete_column);
    const std::vector<std::size_t> missing = table.incomplete_rows();
    const Eigen::VectorXd mu = gamma_fit.means(gamma_fit.gamma, missing);
    const double var = out.carries_second_moment ? gamma_fit.variance(gamma_fit.gamma) : 0.0;
    out.rows.reserve(table.rows());
    std::size_t k = 0;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        if (table.observed(i)) {
            out.rows.push_back(observed_record(table, col, i));
            if (out.carries_second_moment)
                out.rows.back().second_moment = col.values[i] * col.values[i];
            continue;
        }
        PseudoRecord r;
        r.source_row = i;
        r.subject_id = table.subject_ids()[i];
        r.observed = false;
        r.value = mu(static_cast<Eigen::Index>(k++));
        if (out.carries_second_moment)
            r.second_moment = r.value * r.value + var;
        out.rows.push_back(r);
    }
    return out;
}

AugmentedTable augment_discrete(const ObservationTable& table, const GammaFit& gamma_fit) {
    AugmentedTable out = start(table, gamma_fit, Regime::discrete);
    if (gamma_fit.kind != GammaKind::multinomial)
        throw ConfigError("discrete augmentation needs a multinomial incomplete-variable model");
    const Column& col = table.column(gamma_fit.incomplete_column);
    if (col.level_count() != gamma_fit.levels)
        throw ConfigError(fmt::format("column '{}' has {} levels but the model has {}", col.name,
                                      col.level_count(), gamma_fit.levels));
    const std::vector<std::size_t> missing = table.incomplete_rows();
    const Eigen::MatrixXd probs = gamma_fit.probabilities(gamma_fit.gamma, missing);
    if (!probs.allFinite())
        throw NumericError("predicted class probabilities are not finite");
    out.rows.reserve(table.rows() + missing.size() * static_cast<std::size_t>(gamma_fit.levels - 1));
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        if (table.observed(i)) {
            out.rows.push_back(observed_record(table, col, i));
            continue;
        }
        for (int level = 1; level <= gamma_fit.levels; ++level) {
            PseudoRecord r;
            r.source_row = i;
            r.subject_id = table.subject_ids()[i];
            r.observed = false;
            r.value = level;
            r.weight = probs(k, level - 1);
            r.draw = level - 1;
            out.rows.push_back(r);
        }
        ++k;
    }
    return out;
}

Eigen::MatrixXd draw_uniforms(RngStream& rng, std::size_t incomplete_subjects, int draws) {
    if (draws < 1)
        throw ConfigError(fmt::format("number of draws must be >= 1, got {}", draws));
    Eigen::MatrixXd u(static_cast<Eigen::Index>(incomplete_subjects), draws);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index j = 0; j < u.cols(); ++j)
            u(i, j) = rng.uniform();
    return u;
}

AugmentedTable augment_monte_carlo(const ObservationTable& table, const GammaFit& gamma_fit, int draws,
                                   RngStream& rng, bool force) {
    if (gamma_fit.kind == GammaKind::multinomial && !force)
        throw ConfigError("Monte Carlo augmentation of a discrete variable: use the discrete regime (or force)");
    if (gamma_fit.kind == GammaKind::linear_mean)
        throw ConfigError("Monte Carlo draws need a full conditional distribution; use linear_mean_variance");
    return augment_monte_carlo(table, gamma_fit, draw_uniforms(rng, table.incomplete_rows().size(), draws), force);
}

AugmentedTable augment_monte_carlo(const ObservationTable& table, const GammaFit& gamma_fit,
                                   const Eigen::MatrixXd& uniforms, bool force) {
    AugmentedTable out = start(table, gamma_fit, Regime::monte_carlo);
    if (gamma_fit.kind == GammaKind::multinomial && !force)
        throw ConfigError("Monte Carlo augmentation of a discrete variable: use the discrete regime (or force)");
    if (gamma_fit.kind == GammaKind::linear_mean)
        throw ConfigError("Monte Carlo draws need a full conditional distribution; use linear_mean_variance");
    const std::vector<std::size_t> missing = table.incomplete_rows();
    if (uniforms.rows() != static_cast<Eigen::Index>(missing.size()) || uniforms.cols() < 1)
        throw ConfigError(fmt::format("uniform matrix is {}x{} but {} subjects are incomplete", uniforms.rows(),
                                      uniforms.cols(), missing.size()));
    const int s = static_cast<int>(uniforms.cols());
    out.draws = s;
    const Column& col = table.column(gamma_fit.incomplete_column);
    out.rows.reserve(table.rows() + missing.size() * static_cast<std::size_t>(s - 1));
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        if (table.observed(i)) {
            out.rows.push_back(observed_record(table, col, i));
            continue;
        }
        for (int j = 0; j < s; ++j) {
            PseudoRecord r;
            r.source_row = i;
            r.subject_id = table.subject_ids()[i];
            r.observed = false;
            r.uniform = uniforms(k, j);
            r.value = gamma_fit.inverse_cdf(gamma_fit.gamma, i, r.uniform);
            r.weight = 1.0 / s;
            r.draw = j;
            out.rows.push_back(r);
        }
        ++k;
    }
    return out;
}

int discrete_inverse_cdf(std::span<const double> probabilities, double u) {
    if (probabilities.empty())
        throw ConfigError("empty probability vector");
    double cum = 0.0;
    for (std::size_t k = 0; k < probabilities.size(); ++k) {
        cum += probabilities[k];
        if (u <= cum)
            return static_cast<int>(k) + 1;
    }
    return static_cast<int>(probabilities.size());
}

}  // namespace peee
