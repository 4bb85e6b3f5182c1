#include "peee/simstudy.hpp"

#include "peee/error.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fmt/format.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <optional>
#include <regex>
#include <thread>

namespace peee {

namespace {

double expit(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

constexpr double kAuxUpper = 5.0;

}  // namespace

std::string_view to_string(Scenario scenario) noexcept {
    switch (scenario) {
    case Scenario::log: return "log";
    case Scenario::exp_decay: return "exp-decay";
    case Scenario::steep_logistic: return "steep-logistic";
    case Scenario::log_gamma: return "log-gamma";
    case Scenario::sin: return "sin";
    case Scenario::cos: return "cos";
    }
    return "?";
}

Scenario parse_scenario(std::string_view text) {
    for (Scenario s : {Scenario::log, Scenario::exp_decay, Scenario::steep_logistic, Scenario::log_gamma,
                       Scenario::sin, Scenario::cos})
        if (to_string(s) == text)
            return s;
    throw ConfigError(fmt::format("unknown scenario '{}'", text));
}

std::string_view to_string(DesignKind kind) noexcept {
    return kind == DesignKind::sim1 ? "sim1" : "sim2";
}

DesignKind parse_design(std::string_view text) {
    if (text == "sim1")
        return DesignKind::sim1;
    if (text == "sim2")
        return DesignKind::sim2;
    throw ConfigError(fmt::format("unknown design '{}'", text));
}

double h_function(Scenario scenario, double a) {
    switch (scenario) {
    case Scenario::log: return std::log(a + 0.5);
    case Scenario::exp_decay: return std::exp(-a);
    case Scenario::steep_logistic: return 1.0 / (1.0 + std::exp(-5.0 * (a - 2.5)));
    case Scenario::log_gamma: return std::lgamma(a);
    case Scenario::sin: return std::sin(a);
    case Scenario::cos: return std::cos(a);
    }
    return 0.0;
}

double expected_h(Scenario scenario) {
    const double u = kAuxUpper;
    switch (scenario) {
    case Scenario::log: {
        const auto antiderivative = [](double x) { return x * std::log(x) - x; };
        return (antiderivative(u + 0.5) - antiderivative(0.5)) / u;
    }
    case Scenario::exp_decay: return (1.0 - std::exp(-u)) / u;
    case Scenario::steep_logistic: return 0.5;
    case Scenario::log_gamma: {
        boost::math::quadrature::tanh_sinh<double> integrator;
        return integrator.integrate([](double a) { return std::lgamma(a); }, 0.0, u) / u;
    }
    case Scenario::sin: return (1.0 - std::cos(u)) / u;
    case Scenario::cos: return std::sin(u) / u;
    }
    return 0.0;
}

ObservationTable gen_sim1(const Sim1Config& config, RngStream& rng) {
    if (config.n < 1)
        throw ConfigError("sample size must be >= 1");
    const std::size_t n = config.n;
    const Eigen::VectorXd beta = sim1_truth();
    Column y{"y", ColumnRole::response, ColumnKind::numeric, {}, {}, {}};
    Column z1{"z1", ColumnRole::covariate, ColumnKind::numeric, {}, {}, {}};
    Column z2{"z2", ColumnRole::covariate, ColumnKind::categorical, {}, {}, {"1", "2", "3"}};
    Column a{"a", ColumnRole::auxiliary, ColumnKind::numeric, {}, {}, {}};
    for (Column* c : {&y, &z1, &z2, &a}) {
        c->values.resize(n);
        c->missing.assign(n, 0);
    }
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = static_cast<std::int64_t>(i) + 1;
        const double x1 = rng.normal();
        const double u = rng.uniform();
        const int x2 = u < 0.5 ? 1 : (u < 0.8 ? 2 : 3);
        const double lin = beta(0) + beta(1) * x1 + beta(2) * (x2 == 2) + beta(3) * (x2 == 3);
        const double yi = rng.bernoulli(expit(lin)) ? 1.0 : 0.0;
        const double ai = std::log(1.5) + (x2 == 2) - (x2 == 3) - yi + rng.normal();
        const bool masked = rng.bernoulli(expit(config.eta + ai));
        y.values[i] = yi;
        z1.values[i] = x1;
        a.values[i] = ai;
        z2.values[i] = masked ? std::numeric_limits<double>::quiet_NaN() : x2;
        z2.missing[i] = masked ? 1 : 0;
    }
    return ObservationTable(std::move(ids), {std::move(y), std::move(z1), std::move(z2), std::move(a)}, "z2");
}

ObservationTable gen_sim2(const Sim2Config& config, RngStream& rng) {
    if (config.n < 1)
        throw ConfigError("sample size must be >= 1");
    const std::size_t n = config.n;
    Column y{"y", ColumnRole::response, ColumnKind::numeric, {}, {}, {}};
    Column z1{"z1", ColumnRole::covariate, ColumnKind::numeric, {}, {}, {}};
    Column z2{"z2", ColumnRole::covariate, ColumnKind::numeric, {}, {}, {}};
    Column a{"a", ColumnRole::auxiliary, ColumnKind::numeric, {}, {}, {}};
    for (Column* c : {&y, &z1, &z2, &a}) {
        c->values.resize(n);
        c->missing.assign(n, 0);
    }
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = static_cast<std::int64_t>(i) + 1;
        const double ai = rng.uniform(0.0, kAuxUpper);
        const double x1 = rng.normal();
        const double x2 = rng.bernoulli(0.4) ? 1.0 : 0.0;
        const double yi = 1.0 + x1 + x2 + h_function(config.scenario, ai) + rng.student_t(3);
        const bool observed = rng.bernoulli(expit(-4.5 + x1 + x2 + 2.0 * ai));
        a.values[i] = ai;
        z1.values[i] = x1;
        z2.values[i] = x2;
        y.values[i] = observed ? yi : std::numeric_limits<double>::quiet_NaN();
        y.missing[i] = observed ? 0 : 1;
    }
    return ObservationTable(std::move(ids), {std::move(y), std::move(z1), std::move(z2), std::move(a)}, "y");
}

Eigen::VectorXd sim1_truth() {
    Eigen::VectorXd b(4);
    b << -0.2, 0.5, -0.75, 0.25;
    return b;
}

Eigen::VectorXd sim2_truth(Scenario scenario) {
    Eigen::VectorXd b(3);
    b << 1.0 + expected_h(scenario), 1.0, 1.0;
    return b;
}

MethodSpec parse_method(std::string_view text) {
    static const std::regex pattern(R"(^(CC|PEEE|PEEE-flex|MIB|MIB-flex|MCPEEE)(?:\((\d+)\))?$)");
    std::cmatch m;
    const std::string s(text);
    if (!std::regex_match(s.c_str(), m, pattern))
        throw ConfigError(fmt::format("unknown method '{}'", text));
    const std::string name = m[1].str();
    MethodSpec spec;
    spec.label = s;
    const bool needs_draws = name == "MIB" || name == "MIB-flex" || name == "MCPEEE";
    if (needs_draws != m[2].matched)
        throw ConfigError(needs_draws ? fmt::format("method '{}' needs a draw count, e.g. {}(10)", s, name)
                                      : fmt::format("method '{}' takes no draw count", name));
    if (m[2].matched) {
        spec.draws = std::stoi(m[2].str());
        if (spec.draws < 1)
            throw ConfigError(fmt::format("method '{}': draw count must be >= 1", s));
    }
    if (name == "CC")
        spec.kind = MethodKind::cc;
    else if (name == "PEEE")
        spec.kind = MethodKind::peee;
    else if (name == "PEEE-flex")
        spec.kind = MethodKind::peee_flex;
    else if (name == "MIB")
        spec.kind = MethodKind::mib;
    else if (name == "MIB-flex")
        spec.kind = MethodKind::mib_flex;
    else
        spec.kind = MethodKind::mcpeee;
    return spec;
}

Formula analysis_formula(const StudyDesign& design) {
    return parse_formula(design.kind == DesignKind::sim1 ? "y ~ z1 + cat(z2)" : "y ~ z1 + z2");
}

Family analysis_family(const StudyDesign& design) {
    return design.kind == DesignKind::sim1 ? Family::logistic : Family::linear;
}

std::vector<std::string> coefficient_names(const StudyDesign& design) {
    if (design.kind == DesignKind::sim1)
        return {"(Intercept)", "z1", "z2=2", "z2=3"};
    return {"(Intercept)", "z1", "z2"};
}

Eigen::VectorXd study_truth(const StudyDesign& design) {
    return design.kind == DesignKind::sim1 ? sim1_truth() : sim2_truth(design.scenario);
}

ObservationTable generate(const StudyDesign& design, RngStream& rng) {
    if (design.kind == DesignKind::sim1)
        return gen_sim1({design.n, design.eta}, rng);
    return gen_sim2({design.n, design.scenario}, rng);
}

namespace {

void check_method(const StudyDesign& design, const MethodSpec& method) {
    if (design.kind != DesignKind::sim1)
        return;
    if (method.kind == MethodKind::peee_flex || method.kind == MethodKind::mib_flex)
        throw ConfigError(fmt::format("method '{}' is defined for sim2 only", method.label));
    if (method.kind == MethodKind::mcpeee)
        throw ConfigError("MCPEEE needs a continuous incomplete variable; sim1 uses the exact discrete regime");
}

IncompleteSpec incomplete_spec(const StudyDesign& design, const MethodSpec& method) {
    IncompleteSpec spec;
    if (design.kind == DesignKind::sim1) {
        spec.model = parse_formula("z2 ~ z1 + y + a");
        spec.kind = GammaKind::multinomial;
        spec.regime = Regime::discrete;
        return spec;
    }
    const bool flex = method.kind == MethodKind::peee_flex || method.kind == MethodKind::mib_flex;
    spec.model = parse_formula(flex ? "y ~ z1 + z2 + bs(a,3,4)" : "y ~ z1 + z2 + a");
    switch (method.kind) {
    case MethodKind::peee:
    case MethodKind::peee_flex:
        spec.kind = GammaKind::linear_mean;
        spec.regime = Regime::linear_moment;
        break;
    default:
        spec.kind = GammaKind::linear_mean_variance;
        spec.regime = Regime::monte_carlo;
        spec.draws = method.draws;
        break;
    }
    return spec;
}

Eigen::VectorXd diag_se(const Eigen::MatrixXd& v) {
    return v.diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace

MethodOutcome run_method(const StudyDesign& design, const MethodSpec& method, const ObservationTable& data,
                         const RngStream& rng) {
    check_method(design, method);
    const Formula analysis = analysis_formula(design);
    const Family family = analysis_family(design);
    MethodOutcome out;
    switch (method.kind) {
    case MethodKind::cc: {
        const FitResult f = complete_case_fit(data, analysis, family);
        out.estimate = f.coefficients;
        out.se = diag_se(f.naive_vcov);
        break;
    }
    case MethodKind::peee:
    case MethodKind::peee_flex:
    case MethodKind::mcpeee: {
        RngStream stream = rng.derive(0);
        const PeeeFit f = peee_fit(std::make_shared<const ObservationTable>(data), analysis, family,
                                   incomplete_spec(design, method), stream);
        out.estimate = f.theta_hat;
        out.se = diag_se(peee_variance(f));
        break;
    }
    case MethodKind::mib:
    case MethodKind::mib_flex: {
        const IncompleteSpec spec = incomplete_spec(design, method);
        const RngStream draw_seed = rng.derive(0);
        const auto estimator = [&](const ObservationTable& t) {
            RngStream s = draw_seed;
            return Eigen::VectorXd(mib_fit(t, analysis, family, spec, method.draws, s).coefficients);
        };
        out.estimate = estimator(data);
        if (design.bootstrap_b >= 2)
            out.se = bootstrap_variance(data, estimator, design.bootstrap_b, rng.derive(1)).se;
        else
            out.se = Eigen::VectorXd::Constant(out.estimate.size(), std::numeric_limits<double>::quiet_NaN());
        break;
    }
    }
    return out;
}

namespace {

struct ReplicationRecord {
    std::vector<std::optional<MethodOutcome>> outcomes;
    std::vector<std::string> errors;
    std::vector<double> seconds;
};

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2)
        return std::numeric_limits<double>::quiet_NaN();
    double mean = 0.0;
    for (double x : v)
        mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

StudyReport run_study(const StudyDesign& design, const std::vector<MethodSpec>& methods, int replications,
                      std::uint64_t master_seed, int threads) {
    if (replications < 2)
        throw ConfigError(fmt::format("replications must be >= 2, got {}", replications));
    if (methods.empty())
        throw ConfigError("no methods requested");
    for (const auto& m : methods)
        check_method(design, m);

    const RngStream master(master_seed);
    std::vector<ReplicationRecord> records(static_cast<std::size_t>(replications));
    std::atomic<int> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    const auto worker = [&] {
        while (true) {
            const int r = next.fetch_add(1);
            if (r >= replications)
                return;
            try {
                const RngStream rep = master.derive(static_cast<std::uint64_t>(r));
                RngStream data_rng = rep.derive(0);
                const ObservationTable data = generate(design, data_rng);
                ReplicationRecord& rec = records[static_cast<std::size_t>(r)];
                rec.outcomes.resize(methods.size());
                rec.errors.resize(methods.size());
                rec.seconds.assign(methods.size(), std::numeric_limits<double>::quiet_NaN());
                for (std::size_t k = 0; k < methods.size(); ++k) {
                    const auto start = std::chrono::steady_clock::now();
                    try {
                        rec.outcomes[k] = run_method(design, methods[k], data, rep.derive(k + 1));
                    } catch (const NumericError& e) {
                        rec.errors[k] = e.what();
                    } catch (const MissingDataError& e) {
                        rec.errors[k] = e.what();
                    }
                    rec.seconds[k] =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                }
            } catch (...) {
                std::lock_guard lock(fatal_mutex);
                if (!fatal)
                    fatal = std::current_exception();
                next.store(replications);
            }
        }
    };
    const int pool_size = std::max(1, std::min(threads, replications));
    if (pool_size == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < pool_size; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (fatal)
        std::rethrow_exception(fatal);

    StudyReport report;
    report.design = design;
    report.replications = replications;
    report.seed = master_seed;
    report.threads = threads;
    const Eigen::VectorXd truth = study_truth(design);
    const std::vector<std::string> names = coefficient_names(design);

    std::vector<Eigen::VectorXd> variances(methods.size());
    for (std::size_t k = 0; k < methods.size(); ++k) {
        MethodReport mr;
        mr.label = methods[k].label;
        std::vector<Eigen::VectorXd> est;
        std::vector<Eigen::VectorXd> se;
        std::vector<double> secs;
        for (const auto& rec : records) {
            secs.push_back(rec.seconds[k]);
            if (rec.outcomes[k]) {
                est.push_back(rec.outcomes[k]->estimate);
                se.push_back(rec.outcomes[k]->se);
            } else if (mr.failure_messages.size() < 5) {
                mr.failure_messages.push_back(rec.errors[k]);
            }
        }
        mr.successes = static_cast<int>(est.size());
        mr.failures = replications - mr.successes;
        double tsum = 0.0;
        for (double s : secs)
            tsum += s;
        mr.time_mean = tsum / static_cast<double>(secs.size());
        mr.time_sd = sample_sd(secs);
        variances[k] = Eigen::VectorXd::Constant(truth.size(), std::numeric_limits<double>::quiet_NaN());
        for (Eigen::Index j = 0; j < truth.size(); ++j) {
            CoefficientMetrics c;
            c.name = names[static_cast<std::size_t>(j)];
            c.truth = truth(j);
            std::vector<double> ej;
            double se_sum = 0.0;
            int covered = 0;
            for (std::size_t r = 0; r < est.size(); ++r) {
                const double e = est[r](j);
                const double s = se[r](j);
                ej.push_back(e);
                se_sum += s;
                if (std::abs(e - c.truth) <= 1.96 * s)
                    ++covered;
            }
            const double nan = std::numeric_limits<double>::quiet_NaN();
            if (ej.empty()) {
                c.mean = c.bias_pct = c.mcsd = c.ase = c.cp = c.re = nan;
                mr.coefficients.push_back(c);
                continue;
            }
            double mean = 0.0;
            for (double e : ej)
                mean += e;
            mean /= static_cast<double>(ej.size());
            c.mean = mean;
            c.bias_absolute = c.truth == 0.0;
            c.bias_pct = c.bias_absolute ? mean - c.truth : 100.0 * (mean - c.truth) / std::abs(c.truth);
            c.mcsd = sample_sd(ej);
            c.ase = se_sum / static_cast<double>(ej.size());
            c.cp = std::isnan(c.ase) ? nan : static_cast<double>(covered) / static_cast<double>(ej.size());
            variances[k](j) = c.mcsd * c.mcsd;
            mr.coefficients.push_back(c);
        }
        report.methods.push_back(std::move(mr));
    }

    std::size_t ref = 0;
    for (std::size_t k = 0; k < methods.size(); ++k)
        if (methods[k].kind == MethodKind::peee) {
            ref = k;
            break;
        }
    report.reference = methods[ref].label;
    for (std::size_t k = 0; k < methods.size(); ++k)
        for (std::size_t j = 0; j < report.methods[k].coefficients.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            report.methods[k].coefficients[j].re = k == ref ? 1.0 : variances[k](jj) / variances[ref](jj);
        }
    return report;
}

nlohmann::json to_json(const StudyReport& report) {
    nlohmann::json j;
    nlohmann::json d;
    d["design"] = std::string(to_string(report.design.kind));
    d["n"] = report.design.n;
    if (report.design.kind == DesignKind::sim1)
        d["eta"] = report.design.eta;
    else
        d["scenario"] = std::string(to_string(report.design.scenario));
    d["bootstrap_b"] = report.design.bootstrap_b;
    j["design"] = d;
    j["replications"] = report.replications;
    j["seed"] = report.seed;
    j["threads"] = report.threads;
    j["reference"] = report.reference;
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : report.methods) {
        nlohmann::json mj;
        mj["method"] = m.label;
        mj["successes"] = m.successes;
        mj["failures"] = m.failures;
        mj["failure_messages"] = m.failure_messages;
        nlohmann::json coefs = nlohmann::json::array();
        for (const auto& c : m.coefficients) {
            coefs.push_back({{"name", c.name},
                             {"truth", c.truth},
                             {"mean", c.mean},
                             {"bias_pct", c.bias_pct},
                             {"bias_absolute", c.bias_absolute},
                             {"mcsd", c.mcsd},
                             {"ase", c.ase},
                             {"cp", c.cp},
                             {"re", c.re}});
        }
        mj["coefficients"] = coefs;
        methods.push_back(mj);
    }
    j["methods"] = methods;
    return j;
}

nlohmann::json timings_json(const StudyReport& report) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : report.methods)
        j.push_back({{"method", m.label}, {"mean_seconds", m.time_mean}, {"sd_seconds", m.time_sd}});
    return j;
}

std::string format_table(const StudyReport& report) {
    std::string out;
    if (report.design.kind == DesignKind::sim1)
        out += fmt::format("sim1  n={}  eta={}  replications={}  seed={}\n", report.design.n, report.design.eta,
                           report.replications, report.seed);
    else
        out += fmt::format("sim2  n={}  scenario={}  replications={}  seed={}\n", report.design.n,
                           to_string(report.design.scenario), report.replications, report.seed);
    out += fmt::format("{:<14}{:<14}{:>10}{:>9}{:>9}{:>8}{:>8}\n", "Method", "beta", "Bias(%)", "MCSD", "ASE", "CP",
                       "RE");
    for (const auto& m : report.methods) {
        bool first = true;
        for (const auto& c : m.coefficients) {
            out += fmt::format("{:<14}{:<14}{:>10.3f}{:>9.3f}{:>9.3f}{:>8.3f}{:>8.3f}\n", first ? m.label : "",
                               c.name, c.bias_pct, c.mcsd, c.ase, c.cp, c.re);
            first = false;
        }
        if (m.failures > 0)
            out += fmt::format("{:<14}{} of {} replications failed\n", "", m.failures, report.replications);
    }
    out += "\nTiming (seconds per replication)\n";
    out += fmt::format("{:<14}{:>10}{:>10}\n", "Method", "mean", "sd");
    for (const auto& m : report.methods)
        out += fmt::format("{:<14}{:>10.4f}{:>10.4f}\n", m.label, m.time_mean, m.time_sd);
    return out;
}

}  // namespace peee
