#include "cli.hpp"

#include "peee/augment.hpp"
#include "peee/baselines.hpp"
#include "peee/numdiff.hpp"
#include "peee/peee.hpp"
#include "peee/simstudy.hpp"
#include "peee/splines.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace peee;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

bool symmetric_psd(const Eigen::MatrixXd& v) {
    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        return false;
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(v).eigenvalues().minCoeff() >= -1e-10 * scale;
}

IncompleteSpec sim1_spec() {
    IncompleteSpec s;
    s.model = parse_formula("z2 ~ z1 + y + a");
    s.kind = GammaKind::multinomial;
    s.regime = Regime::discrete;
    return s;
}

IncompleteSpec sim2_spec(Regime regime, int draws = 0, std::uint64_t seed = 0) {
    IncompleteSpec s;
    s.model = parse_formula("y ~ z1 + z2 + a");
    s.kind = GammaKind::linear_mean_variance;
    s.regime = regime;
    s.draws = draws;
    if (regime == Regime::monte_carlo)
        s.seed = seed;
    return s;
}

Outcome exact_reductions() {
    RngStream r1(1), r2(2);
    const auto t1 = gen_sim1({2000, -60.0}, r1);
    const auto raw = gen_sim2({2000, Scenario::log}, r2);
    const auto t2 = raw.select_rows(raw.complete_rows(), false);
    if (!t1.incomplete_rows().empty() || !t2.incomplete_rows().empty())
        return {false, "fixtures unexpectedly contain missing values"};
    const Formula f1 = parse_formula("y ~ z1 + cat(z2)");
    const Formula f2 = parse_formula("y ~ z1 + z2");
    const PeeeFit p1 = peee_fit(t1, f1, Family::logistic, sim1_spec());
    const PeeeFit p2 = peee_fit(t2, f2, Family::linear, sim2_spec(Regime::linear_moment));
    const FitResult d1 = complete_case_fit(t1, f1, Family::logistic);
    const FitResult d2 = complete_case_fit(t2, f2, Family::linear);
    const double e = std::max({max_rel(p1.theta_hat, d1.coefficients), max_rel(p2.theta_hat, d2.coefficients),
                               max_rel(variance_closed_form(p1), robust_covariance(d1)),
                               max_rel(variance_closed_form(p2), robust_covariance(d2))});
    return {e <= 1e-10, fmt::format("max relative error {:.2e}", e)};
}

Outcome mc_mib_identity() {
    RngStream rng(3);
    const auto t = gen_sim2({2000, Scenario::log}, rng);
    const Formula f = parse_formula("y ~ z1 + z2");
    const int S = 10;
    const PeeeFit p = peee_fit(t, f, Family::linear, sim2_spec(Regime::monte_carlo, S, 99));
    RngStream draws(99);
    const FitResult m = mib_fit(t, f, Family::linear, sim2_spec(Regime::monte_carlo, S, 99), S, draws);
    const std::size_t n = t.rows();
    const std::size_t miss = t.incomplete_rows().size();
    const double e = max_rel(p.theta_hat, m.coefficients);
    const bool rows_ok = p.augmented.size() == n + miss * (S - 1) &&
                         m.scores.rows() == static_cast<Eigen::Index>(n * S);
    return {e <= 1e-12 && rows_ok,
            fmt::format("relative difference {:.2e}; PEEE rows {} = n+m(S-1) = {}; MI-B rows {} = nS = {}", e,
                        p.augmented.size(), n + miss * (S - 1), m.scores.rows(), n * S)};
}

Outcome table1() {
    StudyDesign d;
    d.n = 1000;
    d.eta = -1.1;
    const StudyReport r = run_study(d, {parse_method("PEEE")}, 300, 3, 1);
    Outcome o;
    const auto& m = r.methods[0];
    if (m.failures > 0)
        o.pass = false;
    for (const auto& c : m.coefficients) {
        const double ratio = c.ase / c.mcsd;
        const bool ok = std::abs(c.bias_pct) < 5.0 && ratio >= 0.85 && ratio <= 1.15 && c.cp >= 0.92 && c.cp <= 0.98;
        o.pass = o.pass && ok;
        o.detail += fmt::format("{} bias {:.2f}% ASE/MCSD {:.3f} CP {:.3f}; ", c.name, c.bias_pct, ratio, c.cp);
    }
    o.detail += fmt::format("failures {}", m.failures);
    return o;
}

Outcome table4() {
    StudyDesign d;
    d.n = 5000;
    d.eta = -0.2;
    const StudyReport r = run_study(d, {parse_method("PEEE")}, 300, 4, 1);
    const auto& c = r.methods[0].coefficients[2];
    const bool ok = c.mcsd >= 0.085 && c.mcsd <= 0.12 && c.cp >= 0.92 && c.cp <= 0.98;
    return {ok, fmt::format("{} MCSD {:.4f} CP {:.3f}", c.name, c.mcsd, c.cp)};
}

Outcome misspecification() {
    StudyDesign d;
    d.kind = DesignKind::sim2;
    d.n = 5000;
    d.scenario = Scenario::cos;
    const StudyReport r = run_study(d, {parse_method("PEEE"), parse_method("PEEE-flex")}, 200, 5, 1);
    const auto& lin = r.methods[0].coefficients[0];
    Outcome o;
    o.pass = lin.cp < 0.2 && std::abs(lin.bias_pct) > 25.0;
    o.detail = fmt::format("linear model beta0 bias {:.1f}% CP {:.3f}; flexible CP", lin.bias_pct, lin.cp);
    for (const auto& c : r.methods[1].coefficients) {
        o.pass = o.pass && c.cp >= 0.92 && c.cp <= 0.98;
        o.detail += fmt::format(" {} {:.3f}", c.name, c.cp);
    }
    return o;
}

Outcome bootstrap_oracle() {
    RngStream rng(6);
    const auto t = gen_sim1({2000, -1.1}, rng);
    const Formula f = parse_formula("y ~ z1 + cat(z2)");
    const PeeeFit p = peee_fit(t, f, Family::logistic, sim1_spec());
    const Eigen::VectorXd cf = variance_closed_form(p).diagonal().cwiseSqrt();
    const BootstrapResult b = bootstrap_variance(
        t, [&](const ObservationTable& s) { return Eigen::VectorXd(peee_fit(s, f, Family::logistic, sim1_spec()).theta_hat); },
        200, RngStream(7));
    Outcome o;
    for (Eigen::Index j = 0; j < cf.size(); ++j) {
        const double rel = std::abs(cf(j) / b.se(j) - 1.0);
        o.pass = o.pass && rel <= 0.15;
        o.detail += fmt::format("{} {:.4f} vs {:.4f} ({:+.1f}%); ", p.analysis_fit.column_names[static_cast<std::size_t>(j)],
                                cf(j), b.se(j), 100.0 * (cf(j) / b.se(j) - 1.0));
    }
    o.detail += fmt::format("bootstrap failures {}", b.failures);
    return o;
}

Outcome timing() {
    cli::BenchConfig c;
    c.grid = {10000};
    c.trials = 3;
    c.B = 100;
    c.seed = 1;
    const cli::BenchReport r = cli::cmd_bench(c);
    const auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v)
            s += x;
        return s / static_cast<double>(v.size());
    };
    const double cf = mean(r.rows[0].closed_form_seconds);
    const double bs = mean(r.rows[0].bootstrap_seconds);
    return {bs / cf >= 10.0, fmt::format("closed form {:.4f} s, bootstrap {:.3f} s, speedup {:.1f}x", cf, bs, bs / cf)};
}

Outcome kernels() {
    Outcome o;
    const auto note = [&](bool ok, const std::string& what) {
        o.pass = o.pass && ok;
        o.detail += fmt::format("{} {}; ", what, ok ? "ok" : "FAILED");
    };

    Eigen::MatrixXd a(3, 2);
    a << 1.5, -2.0, 0.25, 4.0, -7.0, 0.0;
    Eigen::VectorXd x0(2);
    x0 << 0.4, -1.2;
    const Eigen::MatrixXd jac = jacobian_fd([&](const Eigen::VectorXd& x) { return Eigen::VectorXd(a * x); }, x0);
    note((jac - a).cwiseAbs().maxCoeff() <= 1e-6, "fdjac affine");

    const SplineBasis basis(4, {1.0, 2.0, 3.0}, 0.0, 5.0);
    std::vector<double> grid(1001);
    for (int k = 0; k <= 1000; ++k)
        grid[static_cast<std::size_t>(k)] = 5.0 * k / 1000.0;
    const double pou = (eval_basis(basis, grid).rowwise().sum().array() - 1.0).abs().maxCoeff();
    note(pou <= 1e-10, "spline partition of unity");

    RngStream rng(8);
    const auto t = gen_sim1({3000, -0.2}, rng);
    const Formula f = parse_formula("y ~ z1 + cat(z2)");
    const PeeeFit p = peee_fit(t, f, Family::logistic, sim1_spec());
    const Eigen::MatrixXd probs = p.gamma_fit.probabilities(p.gamma_fit.gamma, t.incomplete_rows());
    note((probs.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12, "multinomial probabilities");

    std::map<std::int64_t, double> wsum;
    for (const auto& r : p.augmented.rows)
        wsum[r.subject_id] += r.weight;
    double werr = 0.0;
    for (const auto& [id, s] : wsum)
        werr = std::max(werr, std::abs(s - 1.0));
    note(werr <= 1e-12, "augmentation weights");

    const Eigen::MatrixXd c = collapse_subject_scores(p.analysis_fit, p.augmented);
    note(c.colwise().sum().cwiseAbs().maxCoeff() <= 1e-6 * static_cast<double>(t.rows()), "collapsed scores");

    RngStream rng2(9);
    const auto t2 = gen_sim2({3000, Scenario::log}, rng2);
    const Formula f2 = parse_formula("y ~ z1 + z2");
    const PeeeFit lm = peee_fit(t2, f2, Family::linear, sim2_spec(Regime::linear_moment));
    const PeeeFit mc = peee_fit(t2, f2, Family::linear, sim2_spec(Regime::monte_carlo, 5, 1));
    const SandwichComponents parts = sandwich_components(p);
    bool psd = symmetric_psd(variance_closed_form(p)) && symmetric_psd(assemble_sandwich(parts, false)) &&
               symmetric_psd(variance_closed_form(lm)) && symmetric_psd(variance_closed_form_mc(mc)) &&
               symmetric_psd(robust_covariance(complete_case_fit(t, f, Family::logistic))) &&
               symmetric_psd(p.gamma_fit.vcov) && symmetric_psd(lm.gamma_fit.vcov);
    note(psd, "sandwich outputs symmetric PSD");
    return o;
}

std::string run_to_file(std::vector<std::string> args, const std::filesystem::path& out) {
    args.insert(args.begin(), "peee");
    args.push_back("--output");
    args.push_back(out.string());
    std::vector<const char*> argv;
    for (const auto& s : args)
        argv.push_back(s.c_str());
    std::ostringstream sink, err;
    if (cli::run(static_cast<int>(argv.size()), argv.data(), sink, err) != 0)
        throw std::runtime_error("command failed: " + err.str());
    std::ifstream f(out, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

Outcome determinism() {
    const auto dir = std::filesystem::temp_directory_path() / "peee_acceptance";
    std::filesystem::create_directories(dir);
    const std::vector<std::string> sim = {"simulate", "--design", "sim2", "--n", "500", "--scenario", "sin",
                                          "--methods", "CC,PEEE,PEEE-flex,MIB(3),MCPEEE(5)", "--replications", "8",
                                          "--bootstrap-b", "10", "--seed", "42", "--threads", "2"};
    const std::vector<std::string> sim1 = {"simulate", "--design", "sim1", "--n", "800", "--methods", "CC,PEEE,MIB(5)",
                                           "--replications", "8", "--bootstrap-b", "10", "--seed", "42"};
    const std::vector<std::string> bench = {"bench", "--grid", "500,1000", "--trials", "2", "--B", "10", "--seed", "42"};
    bool ok = true;
    std::string detail;
    for (const auto* args : {&sim, &sim1, &bench}) {
        const std::string a = run_to_file(*args, dir / "a.json");
        const std::string b = run_to_file(*args, dir / "b.json");
        ok = ok && a == b && !a.empty();
        detail += fmt::format("{} {} bytes {}; ", (*args)[0] == "bench" ? "bench" : (*args)[2],
                              a.size(), a == b ? "identical" : "DIFFER");
    }
    return {ok, detail};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"exact reductions with no missing data", exact_reductions},
        {"Monte Carlo PEEE equals type B imputation", mc_mib_identity},
        {"sim1 n=1000 eta=-1.1, 300 replications", table1},
        {"sim1 n=5000 eta=-0.2, 300 replications", table4},
        {"sim2 cos scenario, linear vs spline imputation", misspecification},
        {"closed-form SE vs bootstrap B=200", bootstrap_oracle},
        {"closed form at least 10x faster than bootstrap at n=10000", timing},
        {"numerical kernels", kernels},
        {"byte-identical simulate and bench output", determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << fmt::format("criterion {}: {}  {}  [{}]", k + 1, o.pass ? "PASS" : "FAIL", criteria[k].first,
                                 o.detail)
                  << std::endl;
    }
    std::cout << fmt::format("{} of {} criteria passed", criteria.size() - static_cast<std::size_t>(failed),
                             criteria.size())
              << std::endl;
    return failed == 0 ? 0 : 1;
}
