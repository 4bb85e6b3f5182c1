#include "cli.hpp"

#include "peee/error.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace peee::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : text) {
        if (c == '(')
            ++depth;
        if (c == ')')
            --depth;
        if (c == ',' && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty())
        out.push_back(cur);
    return out;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError(fmt::format("cannot write '{}'", path));
    f << text;
}

Formula parse_option_formula(const std::string& text, std::string_view option) {
    try {
        return parse_formula(text);
    } catch (const ParseError& e) {
        throw ConfigError(fmt::format("{}: {}", option, e.what()));
    }
}

}  // namespace

nlohmann::json environment_stamp() {
    return {{"program", "peee"}, {"version", "0.1.0"}, {"compiler", __VERSION__}};
}

nlohmann::json cmd_fit(const FitConfig& config) {
    const auto start = Clock::now();
    const Formula analysis = parse_option_formula(config.formula, "--formula");
    const Family family = parse_family(config.family);
    std::optional<Formula> model;
    if (!config.incomplete_model.empty())
        model = parse_option_formula(config.incomplete_model, "--incomplete-model");
    std::string incomplete = config.incomplete;
    if (incomplete.empty() && model)
        incomplete = model->response;
    if (model && model->response != incomplete)
        throw ConfigError(fmt::format("incomplete-variable model response '{}' differs from --incomplete '{}'",
                                      model->response, incomplete));

    TableSchema schema;
    schema.id_column = config.id_column;
    schema.delimiter = config.delimiter;
    schema.incomplete_column = incomplete;
    schema.roles[analysis.response] = ColumnRole::response;
    for (const auto& a : config.auxiliary)
        schema.roles[a] = ColumnRole::auxiliary;
    schema.categorical.insert(config.categorical.begin(), config.categorical.end());
    const auto table = std::make_shared<const ObservationTable>(load_csv(config.data_path, schema));
    const MissingnessSummary summary = missingness_summary(*table);

    nlohmann::json report;
    report["environment"] = environment_stamp();
    report["config"] = {{"data", config.data_path},
                        {"formula", analysis.text()},
                        {"family", std::string(to_string(family))},
                        {"incomplete", incomplete},
                        {"incomplete_model", model ? model->text() : ""},
                        {"kind", config.kind},
                        {"regime", config.regime},
                        {"draws", config.draws},
                        {"variance", config.variance},
                        {"B", config.B},
                        {"seed", config.seed ? nlohmann::json(*config.seed) : nlohmann::json(nullptr)}};
    report["missingness"] = {{"n", summary.n}, {"m", summary.m}, {"rate", summary.rate}};

    const bool bootstrap = config.variance == "bootstrap";
    if (!bootstrap && config.variance != "closed-form")
        throw ConfigError(fmt::format("unknown variance method '{}'", config.variance));
    if (bootstrap && !config.seed)
        throw ConfigError("bootstrap variance needs --seed");

    Eigen::VectorXd theta;
    Eigen::MatrixXd vcov;
    std::vector<std::string> names;
    if (!model) {
        if (summary.m > 0)
            throw ConfigError("data contain missing values; give --incomplete-model");
        const DesignBuilder builder(analysis, table);
        const auto rows = table->complete_rows();
        const FitResult f = fit_weighted(family, builder.build(rows), analysis_response(builder, family, rows),
                                         Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows.size())));
        theta = f.coefficients;
        names = f.column_names;
        vcov = robust_covariance(f);
        report["augmentation"] = "none (complete data)";
        if (bootstrap) {
            const auto est = [&](const ObservationTable& t) { return Eigen::VectorXd(complete_case_fit(t, analysis, family).coefficients); };
            const BootstrapResult b =
                bootstrap_variance(*table, est, config.B, RngStream(*config.seed).derive(1), {config.threads});
            vcov = b.se.array().square().matrix().asDiagonal();
            report["bootstrap_failures"] = b.failures;
        }
    } else {
        IncompleteSpec spec;
        spec.model = *model;
        spec.kind = parse_gamma_kind(config.kind);
        spec.regime = parse_regime(config.regime);
        spec.draws = config.draws;
        spec.seed = config.seed;
        if (spec.regime == Regime::monte_carlo && !config.seed)
            throw ConfigError("Monte Carlo regime needs --seed");
        const PeeeFit fit = peee_fit(table, analysis, family, spec);
        theta = fit.theta_hat;
        names = fit.analysis_fit.column_names;
        if (summary.m == 0)
            report["augmentation"] = "none (complete data)";
        else
            report["augmentation"] = {{"regime", std::string(to_string(fit.regime))},
                                      {"records", fit.augmented.size()},
                                      {"draws", fit.augmented.draws}};
        const GammaFit& g = fit.gamma_fit;
        nlohmann::json gj = {{"kind", std::string(to_string(g.kind))},
                             {"formula", model->text()},
                             {"n_complete", g.n_complete},
                             {"converged", g.converged},
                             {"iterations", g.iterations},
                             {"gamma", to_std(g.gamma)},
                             {"se", to_std(g.vcov.diagonal().cwiseMax(0.0).cwiseSqrt())}};
        if (g.kind != GammaKind::multinomial)
            gj["eta2"] = g.eta2;
        report["incomplete_model"] = gj;
        if (bootstrap) {
            const auto est = [&](const ObservationTable& t) {
                return Eigen::VectorXd(peee_fit(t, analysis, family, spec).theta_hat);
            };
            const BootstrapResult b =
                bootstrap_variance(*table, est, config.B, RngStream(*config.seed).derive(1), {config.threads});
            vcov = b.se.array().square().matrix().asDiagonal();
            report["bootstrap_failures"] = b.failures;
        } else {
            vcov = peee_variance(fit);
        }
    }

    nlohmann::json coefs = nlohmann::json::array();
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double est = theta(j);
        const double se = std::sqrt(std::max(vcov(j, j), 0.0));
        const double z = est / se;
        const double lo = est - 1.96 * se;
        const double hi = est + 1.96 * se;
        nlohmann::json c = {{"name", names[static_cast<std::size_t>(j)]},
                            {"estimate", est},
                            {"se", se},
                            {"ci_low", lo},
                            {"ci_high", hi},
                            {"p_value", std::erfc(std::abs(z) / std::sqrt(2.0))}};
        if (family == Family::logistic) {
            c["odds_ratio"] = std::exp(est);
            c["or_ci_low"] = std::exp(lo);
            c["or_ci_high"] = std::exp(hi);
        }
        coefs.push_back(c);
    }
    report["coefficients"] = coefs;
    report["timing_seconds"] = seconds_since(start);
    return report;
}

std::string format_fit(const nlohmann::json& r) {
    std::string out;
    const auto& miss = r["missingness"];
    out += fmt::format("{}  ({})\n", r["config"]["formula"].get<std::string>(),
                       r["config"]["family"].get<std::string>());
    out += fmt::format("n = {}, missing = {} ({:.1f}%)\n", miss["n"].get<std::size_t>(), miss["m"].get<std::size_t>(),
                       100.0 * miss["rate"].get<double>());
    if (r["augmentation"].is_string())
        out += fmt::format("augmentation: {}\n", r["augmentation"].get<std::string>());
    else
        out += fmt::format("augmentation: {} ({} records)\n", r["augmentation"]["regime"].get<std::string>(),
                           r["augmentation"]["records"].get<std::size_t>());
    const bool logistic = r["config"]["family"] == "logistic";
    out += "\n";
    if (logistic)
        out += fmt::format("{:<20}{:>10}{:>9}{:>9}{:>20}{:>10}\n", "term", "estimate", "se", "OR", "95% CI", "p");
    else
        out += fmt::format("{:<20}{:>10}{:>9}{:>22}{:>10}\n", "term", "estimate", "se", "95% CI", "p");
    for (const auto& c : r["coefficients"]) {
        if (logistic)
            out += fmt::format("{:<20}{:>10.4f}{:>9.4f}{:>9.3f}{:>20}{:>10.4f}\n", c["name"].get<std::string>(),
                               c["estimate"].get<double>(), c["se"].get<double>(), c["odds_ratio"].get<double>(),
                               fmt::format("({:.3f}, {:.3f})", c["or_ci_low"].get<double>(),
                                           c["or_ci_high"].get<double>()),
                               c["p_value"].get<double>());
        else
            out += fmt::format("{:<20}{:>10.4f}{:>9.4f}{:>22}{:>10.4f}\n", c["name"].get<std::string>(),
                               c["estimate"].get<double>(), c["se"].get<double>(),
                               fmt::format("({:.4f}, {:.4f})", c["ci_low"].get<double>(), c["ci_high"].get<double>()),
                               c["p_value"].get<double>());
    }
    out += fmt::format("\ntime: {:.3f} s\n", r["timing_seconds"].get<double>());
    return out;
}

StudyReport cmd_simulate(const SimulateConfig& config) {
    std::vector<MethodSpec> methods;
    for (const auto& m : config.methods)
        methods.push_back(parse_method(m));
    return run_study(config.design, methods, config.replications, config.seed, config.threads);
}

BenchReport cmd_bench(const BenchConfig& config) {
    if (config.grid.empty())
        throw ConfigError("bench grid is empty");
    if (config.trials < 1)
        throw ConfigError("bench needs trials >= 1");
    BenchReport report;
    report.config = config;
    const RngStream master(config.seed);
    const Formula analysis = parse_formula("y ~ z1 + cat(z2)");
    IncompleteSpec spec;
    spec.model = parse_formula("z2 ~ z1 + y + a");
    spec.kind = GammaKind::multinomial;
    spec.regime = Regime::discrete;
    for (std::size_t g = 0; g < config.grid.size(); ++g) {
        BenchRow row;
        row.n = config.grid[g];
        RngStream data_rng = master.derive(g);
        const auto table = std::make_shared<const ObservationTable>(gen_sim1({row.n, config.eta}, data_rng));
        for (int t = 0; t < config.trials; ++t) {
            auto start = Clock::now();
            const PeeeFit fit = peee_fit(table, analysis, Family::logistic, spec);
            const Eigen::MatrixXd v = variance_closed_form(fit);
            row.closed_form_seconds.push_back(seconds_since(start));
            row.closed_form_se = v.diagonal().cwiseSqrt();

            start = Clock::now();
            const auto est = [&](const ObservationTable& d) {
                return Eigen::VectorXd(peee_fit(d, analysis, Family::logistic, spec).theta_hat);
            };
            const BootstrapResult b = bootstrap_variance(*table, est, config.B, master.derive(1000 + g),
                                                         {config.threads});
            row.bootstrap_seconds.push_back(seconds_since(start));
            row.bootstrap_se = b.se;
            row.bootstrap_failures = b.failures;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace

nlohmann::json to_json(const BenchReport& report) {
    nlohmann::json j;
    j["environment"] = environment_stamp();
    j["config"] = {{"grid", report.config.grid}, {"eta", report.config.eta}, {"trials", report.config.trials},
                   {"B", report.config.B},       {"seed", report.config.seed}, {"threads", report.config.threads}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"n", r.n},
                        {"closed_form_se", to_std(r.closed_form_se)},
                        {"bootstrap_se", to_std(r.bootstrap_se)},
                        {"bootstrap_failures", r.bootstrap_failures}});
    j["results"] = rows;
    return j;
}

nlohmann::json timings_json(const BenchReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        const auto [cm, cs] = mean_sd(r.closed_form_seconds);
        const auto [bm, bs] = mean_sd(r.bootstrap_seconds);
        rows.push_back({{"n", r.n},
                        {"closed_form_mean", cm},
                        {"closed_form_sd", cs},
                        {"bootstrap_mean", bm},
                        {"bootstrap_sd", bs},
                        {"speedup", bm / cm}});
    }
    return rows;
}

std::string format_bench(const BenchReport& report) {
    std::string out = fmt::format("Closed-form variance vs bootstrap (B={}), sim1 eta={}, {} trial(s)\n",
                                  report.config.B, report.config.eta, report.config.trials);
    out += fmt::format("{:>8}{:>14}{:>10}{:>14}{:>10}{:>10}\n", "n", "closed mean", "sd", "boot mean", "sd",
                       "speedup");
    for (const auto& r : report.rows) {
        const auto [cm, cs] = mean_sd(r.closed_form_seconds);
        const auto [bm, bs] = mean_sd(r.bootstrap_seconds);
        out += fmt::format("{:>8}{:>14.4f}{:>10.4f}{:>14.4f}{:>10.4f}{:>10.1f}\n", r.n, cm, cs, bm, bs, bm / cm);
    }
    return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pseudo-expected estimating equations for data missing at random"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Config file; [simulate] and [bench] sections hold key = value options");

    FitConfig fit;
    std::string fit_output;
    std::string categorical, auxiliary;
    std::string delimiter = ",";
    std::uint64_t fit_seed = 0;
    auto* fit_cmd = app.add_subcommand("fit", "Fit an analysis model to a CSV file");
    fit_cmd->add_option("--data", fit.data_path, "Input CSV")->required();
    fit_cmd->add_option("--formula", fit.formula, "Analysis formula, e.g. 'y ~ x + cat(g)'")->required();
    fit_cmd->add_option("--family", fit.family, "logistic or linear");
    fit_cmd->add_option("--id", fit.id_column, "Subject id column");
    fit_cmd->add_option("--categorical", categorical, "Comma-separated categorical columns");
    fit_cmd->add_option("--auxiliary", auxiliary, "Comma-separated auxiliary columns");
    fit_cmd->add_option("--incomplete", fit.incomplete, "Column with missing values");
    fit_cmd->add_option("--incomplete-model", fit.incomplete_model, "Formula for the incomplete variable");
    fit_cmd->add_option("--kind", fit.kind, "multinomial, linear_mean or linear_mean_variance");
    fit_cmd->add_option("--regime", fit.regime, "discrete, linear_moment or monte_carlo");
    fit_cmd->add_option("--draws", fit.draws, "Draws per incomplete subject (monte_carlo)");
    fit_cmd->add_option("--variance", fit.variance, "closed-form or bootstrap");
    fit_cmd->add_option("--B", fit.B, "Bootstrap replications");
    auto* fit_seed_opt = fit_cmd->add_option("--seed", fit_seed, "Random seed");
    fit_cmd->add_option("--threads", fit.threads, "Bootstrap worker threads");
    fit_cmd->add_option("--delimiter", delimiter, "Field delimiter (',' or 'tab')");
    fit_cmd->add_option("--output", fit_output, "Write the JSON report here");

    SimulateConfig sim;
    std::string design = "sim1", scenario = "log", methods = "PEEE";
    std::string sim_output, sim_table, sim_timings;
    std::size_t sim_n = 1000;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study");
    sim_cmd->add_option("--design", design, "sim1 or sim2");
    sim_cmd->add_option("--n", sim_n, "Sample size");
    sim_cmd->add_option("--eta", sim.design.eta, "Missingness intercept (sim1)");
    sim_cmd->add_option("--scenario", scenario, "h(A) scenario (sim2)");
    sim_cmd->add_option("--methods", methods, "Comma-separated methods, e.g. 'PEEE,MIB(5)'");
    sim_cmd->add_option("--replications", sim.replications, "Replications");
    sim_cmd->add_option("--bootstrap-b", sim.design.bootstrap_b, "Bootstrap replications for MIB SEs");
    sim_cmd->add_option("--seed", sim.seed, "Master seed");
    sim_cmd->add_option("--threads", sim.threads, "Worker threads");
    sim_cmd->add_option("--output", sim_output, "JSON report path");
    sim_cmd->add_option("--table", sim_table, "Text table path");
    sim_cmd->add_option("--timings", sim_timings, "Timing JSON path");

    BenchConfig bench;
    std::string grid = "1000,5000,10000";
    std::string bench_output, bench_table, bench_timings;
    auto* bench_cmd = app.add_subcommand("bench", "Time closed-form variance against the bootstrap");
    bench_cmd->add_option("--grid", grid, "Comma-separated sample sizes");
    bench_cmd->add_option("--eta", bench.eta, "Missingness intercept");
    bench_cmd->add_option("--trials", bench.trials, "Timing trials per sample size");
    bench_cmd->add_option("--B", bench.B, "Bootstrap replications");
    bench_cmd->add_option("--seed", bench.seed, "Seed");
    bench_cmd->add_option("--threads", bench.threads, "Bootstrap worker threads");
    bench_cmd->add_option("--output", bench_output, "JSON report path");
    bench_cmd->add_option("--table", bench_table, "Text table path");
    bench_cmd->add_option("--timings", bench_timings, "Timing JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return ok;
        }
        err << "error: " << e.what() << "\n";
        return usage;
    }

    try {
        if (*fit_cmd) {
            fit.categorical = split_list(categorical);
            fit.auxiliary = split_list(auxiliary);
            if (delimiter == "tab" || delimiter == "\\t")
                fit.delimiter = '\t';
            else if (delimiter.size() == 1)
                fit.delimiter = delimiter[0];
            else
                throw ConfigError(fmt::format("bad delimiter '{}'", delimiter));
            if (*fit_seed_opt)
                fit.seed = fit_seed;
            const nlohmann::json report = cmd_fit(fit);
            if (!fit_output.empty())
                write_text(fit_output, report.dump(2) + "\n");
            out << format_fit(report);
        } else if (*sim_cmd) {
            sim.design.kind = parse_design(design);
            sim.design.scenario = parse_scenario(scenario);
            sim.design.n = sim_n;
            sim.methods = split_list(methods);
            const StudyReport report = cmd_simulate(sim);
            nlohmann::json j = to_json(report);
            j["environment"] = environment_stamp();
            if (!sim_output.empty())
                write_text(sim_output, j.dump(2) + "\n");
            if (!sim_timings.empty())
                write_text(sim_timings, timings_json(report).dump(2) + "\n");
            const std::string table = format_table(report);
            if (!sim_table.empty())
                write_text(sim_table, table);
            out << table;
        } else if (*bench_cmd) {
            bench.grid.clear();
            for (const auto& g : split_list(grid))
                bench.grid.push_back(static_cast<std::size_t>(std::stoull(g)));
            const BenchReport report = cmd_bench(bench);
            if (!bench_output.empty())
                write_text(bench_output, to_json(report).dump(2) + "\n");
            if (!bench_timings.empty())
                write_text(bench_timings, timings_json(report).dump(2) + "\n");
            const std::string table = format_bench(report);
            if (!bench_table.empty())
                write_text(bench_table, table);
            out << table;
        }
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return usage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return data;
    } catch (const SchemaError& e) {
        err << "data error: " << e.what() << "\n";
        return data;
    } catch (const MissingDataError& e) {
        err << "data error: " << e.what() << "\n";
        return data;
    } catch (const NumericError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return numerical;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << "\n";
        return usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    }
    return ok;
}

}  // namespace peee::cli
