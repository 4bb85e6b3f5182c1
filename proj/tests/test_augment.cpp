#include "oracles.hpp"

#include "peee/augment.hpp"
#include "peee/error.hpp"
#include "peee/simstudy.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace peee;

namespace {

std::map<std::int64_t, double> weight_sums(const AugmentedTable& a) {
    std::map<std::int64_t, double> s;
    for (const auto& r : a.rows)
        s[r.subject_id] += r.weight;
    return s;
}

ObservationTable sim1_table(std::size_t n, double eta, std::uint64_t seed) {
    RngStream rng(seed);
    return gen_sim1({n, eta}, rng);
}

ObservationTable sim2_table(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    return gen_sim2({n, Scenario::log}, rng);
}

// n rows, the first m with z2 masked.
ObservationTable masked_prefix(std::size_t n, std::size_t m) {
    const ObservationTable base = sim1_table(n, -60.0, 9);
    std::vector<Column> cols = base.columns();
    for (auto& c : cols)
        if (c.name == "z2")
            for (std::size_t i = 0; i < m; ++i) {
                c.values[i] = std::nan("");
                c.missing[i] = 1;
            }
    return ObservationTable(base.subject_ids(), cols, "z2");
}

}  // namespace

TEST_CASE("linear-mean fit is least squares on complete rows") {
    const auto t = sim2_table(400, 1);
    const GammaFit g = fit_gamma(t, parse_formula("y ~ z1 + z2 + a"), GammaKind::linear_mean_variance);
    const auto rows = t.complete_rows();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 4);
    Eigen::VectorXd y(x.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = rows[r];
        x.row(static_cast<Eigen::Index>(r)) << 1.0, t.column("z1").values[i], t.column("z2").values[i], t.column("a").values[i];
        y(static_cast<Eigen::Index>(r)) = t.column("y").values[i];
    }
    const Eigen::VectorXd beta = oracle::wls(x, y, Eigen::VectorXd::Ones(x.rows()));
    CHECK((g.gamma.head(4) - beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(g.eta2 == doctest::Approx((y - x * beta).squaredNorm() / static_cast<double>(rows.size())));
    CHECK(g.gamma(4) == g.eta2);
    CHECK(g.scores.colwise().sum().cwiseAbs().maxCoeff() < 1e-8);
    for (auto i : t.incomplete_rows())
        CHECK(g.scores.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(oracle::symmetric_psd(g.vcov));
    CHECK(g.n_complete == rows.size());
}

TEST_CASE("multinomial gamma has (K-1) x q coefficients") {
    const auto t = sim1_table(600, -1.1, 2);
    const GammaFit g = fit_gamma(t, parse_formula("z2 ~ z1 + y + a"), GammaKind::multinomial);
    CHECK(g.levels == 3);
    CHECK(g.dimension() == 2 * 4);
    CHECK(g.scores.colwise().sum().cwiseAbs().maxCoeff() < 1e-7);
    CHECK(oracle::symmetric_psd(g.vcov));
    CHECK(g.bread == g.vcov);
}

TEST_CASE("incomplete-model configuration errors") {
    const auto t = sim1_table(300, -1.1, 3);
    CHECK_THROWS_AS(fit_gamma(t, parse_formula("z2 ~ z1 + y + a"), GammaKind::linear_mean), ConfigError);
    CHECK_THROWS_AS(fit_gamma(t, parse_formula("z1 ~ y + a"), GammaKind::linear_mean), ConfigError);
    const auto t2 = sim2_table(300, 3);
    CHECK_THROWS_AS(fit_gamma(t2, parse_formula("y ~ z1 + a"), GammaKind::multinomial), ConfigError);
}

TEST_CASE("discrete layout: one subject with probabilities (0.5, 0.3, 0.2)") {
    Column y{"y", ColumnRole::response, ColumnKind::numeric, {1, 0, 1, 0, 1}, {0, 0, 0, 0, 0}, {}};
    Column g{"g", ColumnRole::covariate, ColumnKind::categorical, {1, 2, 3, 1, std::nan("")}, {0, 0, 0, 0, 1}, {"a", "b", "c"}};
    const ObservationTable t({1, 2, 3, 4, 5}, {y, g}, "g");
    GammaFit fit;
    fit.kind = GammaKind::multinomial;
    fit.incomplete_column = "g";
    fit.levels = 3;
    fit.design = Eigen::MatrixXd::Ones(5, 1);
    fit.gamma.resize(2);
    fit.gamma << std::log(0.3 / 0.5), std::log(0.2 / 0.5);
    const AugmentedTable a = augment_discrete(t, fit);
    REQUIRE(a.size() == 4 + 3);
    CHECK(a.rows[4].weight == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(a.rows[5].weight == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(a.rows[6].weight == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(a.rows[5].value == 2.0);
    CHECK(a.rows[6].subject_id == 5);
    for (int i = 0; i < 4; ++i)
        CHECK(a.rows[static_cast<std::size_t>(i)].weight == 1.0);
    const double p[] = {0.5, 0.3, 0.2};
    CHECK(discrete_inverse_cdf(p, 0.6) == 2);
    CHECK(discrete_inverse_cdf(p, 0.1) == 1);
    CHECK(discrete_inverse_cdf(p, 0.95) == 3);
}

TEST_CASE("discrete augmentation counts and weights") {
    const auto t = masked_prefix(10, 4);
    // Ten rows are too few to fit; evaluate the layout with a fixed gamma.
    GammaFit fit;
    fit.kind = GammaKind::multinomial;
    fit.incomplete_column = "z2";
    fit.levels = 3;
    fit.design = Eigen::MatrixXd::Ones(10, 2);
    fit.design.col(1) = Eigen::Map<const Eigen::VectorXd>(t.column("z1").values.data(), 10);
    fit.gamma.resize(4);
    fit.gamma << 0.1, -0.4, -0.3, 0.9;
    const AugmentedTable a = augment_discrete(t, fit);
    CHECK(a.size() == 6 + 12);
    for (const auto& [id, s] : weight_sums(a))
        CHECK(std::abs(s - 1.0) <= 1e-12);
    const Eigen::MatrixXd p = predict_multinomial(MultinomFit::unflatten(fit.gamma, 3), fit.design);
    std::size_t r = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        if (t.observed(i)) {
            ++r;
            continue;
        }
        for (int k = 0; k < 3; ++k)
            CHECK(a.rows[r++].weight == p(static_cast<Eigen::Index>(i), k));
    }
}

TEST_CASE("linear-moment substitution") {
    const auto t = sim2_table(300, 4);
    const GammaFit g = fit_gamma(t, parse_formula("y ~ z1 + z2 + a"), GammaKind::linear_mean_variance);
    const AugmentedTable a = augment_linear_moment(t, g, MomentPlan::mean_and_square);
    CHECK(a.size() == t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto& r = a.rows[i];
        CHECK(r.weight == 1.0);
        if (t.observed(i)) {
            CHECK(r.value == t.column("y").values[i]);
            continue;
        }
        const double mean = g.gamma(0) + g.gamma(1) * t.column("z1").values[i] + g.gamma(2) * t.column("z2").values[i] +
                            g.gamma(3) * t.column("a").values[i];
        CHECK(r.value == doctest::Approx(mean).epsilon(1e-13));
        CHECK(r.second_moment == doctest::Approx(mean * mean + g.eta2).epsilon(1e-13));
    }
    const GammaFit mean_only = fit_gamma(t, parse_formula("y ~ z1 + z2 + a"), GammaKind::linear_mean);
    CHECK_THROWS_AS(augment_linear_moment(t, mean_only, MomentPlan::mean_and_square), ConfigError);
}

TEST_CASE("no missing rows: augmentation is the identity") {
    const auto t = sim2_table(200, 5).select_rows(sim2_table(200, 5).complete_rows(), false);
    const ObservationTable complete(t.subject_ids(), t.columns(), "y");
    const GammaFit g = fit_gamma(complete, parse_formula("y ~ z1 + z2 + a"), GammaKind::linear_mean_variance);
    RngStream rng(1);
    for (const AugmentedTable& a : {augment_linear_moment(complete, g), augment_monte_carlo(complete, g, 5, rng)}) {
        REQUIRE(a.size() == complete.rows());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.rows[i].weight == 1.0);
            CHECK(a.rows[i].value == complete.column("y").values[i]);
        }
    }
    const auto s = masked_prefix(300, 0);
    const GammaFit m = fit_gamma(s, parse_formula("z2 ~ z1 + y + a"), GammaKind::multinomial);
    CHECK(augment_discrete(s, m).size() == 300);
}

TEST_CASE("Monte Carlo stacking: n + m(S-1) rows, weight 1/S, reproducible") {
    const auto base = sim2_table(100, 6);
    std::vector<Column> cols = base.columns();
    for (auto& c : cols)
        if (c.name == "y")
            for (std::size_t i = 0; i < 100; ++i) {
                const bool mask = i % 5 < 2;
                if (mask) {
                    c.values[i] = std::nan("");
                } else if (c.missing[i]) {
                    c.values[i] = 1.0;
                }
                c.missing[i] = mask ? 1 : 0;
            }
    const ObservationTable t(base.subject_ids(), cols, "y");
    REQUIRE(t.incomplete_rows().size() == 40);
    const GammaFit g = fit_gamma(t, parse_formula("y ~ z1 + z2 + a"), GammaKind::linear_mean_variance);
    RngStream r1(42), r2(42);
    const AugmentedTable a = augment_monte_carlo(t, g, 5, r1);
    const AugmentedTable b = augment_monte_carlo(t, g, 5, r2);
    CHECK(a.size() == 260);
    CHECK(a.draws == 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.rows[i].value == b.rows[i].value);
        if (!a.rows[i].observed) {
            CHECK(a.rows[i].weight == 0.2);
            CHECK(a.rows[i].uniform > 0.0);
            CHECK(a.rows[i].value ==
                  doctest::Approx(g.means(g.gamma, std::vector<std::size_t>{a.rows[i].source_row})(0) +
                                  std::sqrt(g.eta2) * normal_quantile(a.rows[i].uniform)));
        }
    }
    for (const auto& [id, s] : weight_sums(a))
        CHECK(std::abs(s - 1.0) <= 1e-12);
    RngStream r3(42);
    CHECK(augment_monte_carlo(t, g, 1, r3).size() == 100);
}

TEST_CASE("Monte Carlo regime refusals") {
    const auto t = sim1_table(400, -1.1, 7);
    const GammaFit g = fit_gamma(t, parse_formula("z2 ~ z1 + y + a"), GammaKind::multinomial);
    RngStream rng(1);
    CHECK_THROWS_AS(augment_monte_carlo(t, g, 5, rng), ConfigError);
    const AugmentedTable forced = augment_monte_carlo(t, g, 5, rng, true);
    CHECK(forced.size() == t.rows() + 4 * t.incomplete_rows().size());
    const auto t2 = sim2_table(300, 7);
    const GammaFit lm = fit_gamma(t2, parse_formula("y ~ z1 + z2 + a"), GammaKind::linear_mean);
    CHECK_THROWS_AS(augment_monte_carlo(t2, lm, 5, rng), ConfigError);
    CHECK_THROWS_AS(augment_discrete(t2, lm), ConfigError);
}

TEST_CASE("augmented subject ids are the originals with multiplicity") {
    const auto t = sim1_table(500, -0.2, 8);
    const GammaFit g = fit_gamma(t, parse_formula("z2 ~ z1 + y + a"), GammaKind::multinomial);
    const AugmentedTable a = augment_discrete(t, g);
    std::map<std::int64_t, int> count;
    for (const auto& r : a.rows)
        ++count[r.subject_id];
    CHECK(count.size() == t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i)
        CHECK(count[t.subject_ids()[i]] == (t.observed(i) ? 1 : 3));
}
