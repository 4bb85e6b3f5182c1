#pragma once

#include "peee/baselines.hpp"
#include "peee/peee.hpp"
#include "peee/random.hpp"
#include "peee/tabular.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace peee {

enum class Scenario { log, exp_decay, steep_logistic, log_gamma, sin, cos };

std::string_view to_string(Scenario scenario) noexcept;
Scenario parse_scenario(std::string_view text);

/// h(A) for the misspecification scenarios.
double h_function(Scenario scenario, double a);
/// E[h(A)] for A ~ U[0, 5].
double expected_h(Scenario scenario);

struct Sim1Config {
    std::size_t n = 1000;
    double eta = -1.1;
};

struct Sim2Config {
    std::size_t n = 5000;
    Scenario scenario = Scenario::log;
};

/// Columns y (response, 0/1), z1, z2 (categorical, levels 1..3, incomplete), a (auxiliary).
ObservationTable gen_sim1(const Sim1Config& config, RngStream& rng);
/// Columns y (response, incomplete), z1, z2 (0/1), a (auxiliary).
ObservationTable gen_sim2(const Sim2Config& config, RngStream& rng);

/// (beta0, beta1, beta2, beta3) of the logistic model for y.
Eigen::VectorXd sim1_truth();
/// (1 + E[h(A)], 1, 1).
Eigen::VectorXd sim2_truth(Scenario scenario);

enum class DesignKind { sim1, sim2 };

struct StudyDesign {
    DesignKind kind = DesignKind::sim1;
    std::size_t n = 1000;
    double eta = -1.1;
    Scenario scenario = Scenario::log;
    /// Bootstrap replications for the standard errors of type B imputation; 0 skips them.
    int bootstrap_b = 100;
};

enum class MethodKind { cc, peee, peee_flex, mib, mib_flex, mcpeee };

struct MethodSpec {
    MethodKind kind = MethodKind::peee;
    int draws = 0;
    std::string label;
};

/// "CC", "PEEE", "PEEE-flex", "MIB(S)", "MIB-flex(S)", "MCPEEE(S)".
MethodSpec parse_method(std::string_view text);

struct MethodOutcome {
    Eigen::VectorXd estimate;
    /// NaN entries when the method reports no standard error.
    Eigen::VectorXd se;
};

/// Runs one method on one data set. `rng` feeds any draws the method needs.
MethodOutcome run_method(const StudyDesign& design, const MethodSpec& method, const ObservationTable& data,
                         const RngStream& rng);

/// Analysis formula, family and coefficient names for the design.
Formula analysis_formula(const StudyDesign& design);
Family analysis_family(const StudyDesign& design);
Eigen::VectorXd study_truth(const StudyDesign& design);
std::vector<std::string> coefficient_names(const StudyDesign& design);
ObservationTable generate(const StudyDesign& design, RngStream& rng);

struct CoefficientMetrics {
    std::string name;
    double truth = 0.0;
    double mean = 0.0;
    /// 100 (mean - truth) / |truth|; absolute bias when the truth is zero.
    double bias_pct = 0.0;
    bool bias_absolute = false;
    double mcsd = 0.0;
    double ase = 0.0;
    double cp = 0.0;
    double re = 0.0;
};

struct MethodReport {
    std::string label;
    int successes = 0;
    int failures = 0;
    std::vector<std::string> failure_messages;
    std::vector<CoefficientMetrics> coefficients;
    double time_mean = 0.0;
    double time_sd = 0.0;
};

struct StudyReport {
    StudyDesign design;
    int replications = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string reference;
    std::vector<MethodReport> methods;
};

StudyReport run_study(const StudyDesign& design, const std::vector<MethodSpec>& methods, int replications,
                      std::uint64_t master_seed, int threads = 1);

/// Every field except timings.
nlohmann::json to_json(const StudyReport& report);
nlohmann::json timings_json(const StudyReport& report);
/// Aligned text table in the Method / beta / Bias / MCSD / ASE / CP / RE layout.
std::string format_table(const StudyReport& report);

std::string_view to_string(DesignKind kind) noexcept;
DesignKind parse_design(std::string_view text);

}  // namespace peee
