#pragma once

#include "peee/simstudy.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace peee::cli {

enum ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

struct FitConfig {
    std::string data_path;
    std::string formula;
    std::string family = "logistic";
    std::string id_column;
    std::vector<std::string> categorical;
    std::vector<std::string> auxiliary;
    std::string incomplete;
    std::string incomplete_model;
    std::string kind = "multinomial";
    std::string regime = "discrete";
    int draws = 0;
    std::string variance = "closed-form";
    int B = 100;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    char delimiter = ',';
};

/// Fit report: coefficients with SEs, Wald CIs, p-values and odds ratios
/// (logistic), missingness summary and first-stage diagnostics.
nlohmann::json cmd_fit(const FitConfig& config);
std::string format_fit(const nlohmann::json& report);

struct SimulateConfig {
    StudyDesign design;
    std::vector<std::string> methods;
    int replications = 300;
    std::uint64_t seed = 1;
    int threads = 1;
};

StudyReport cmd_simulate(const SimulateConfig& config);

struct BenchConfig {
    std::vector<std::size_t> grid = {1000, 5000, 10000};
    double eta = -1.1;
    int trials = 3;
    int B = 100;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct BenchRow {
    std::size_t n = 0;
    Eigen::VectorXd closed_form_se;
    Eigen::VectorXd bootstrap_se;
    int bootstrap_failures = 0;
    std::vector<double> closed_form_seconds;
    std::vector<double> bootstrap_seconds;
};

struct BenchReport {
    BenchConfig config;
    std::vector<BenchRow> rows;
};

BenchReport cmd_bench(const BenchConfig& config);
/// Everything except timings.
nlohmann::json to_json(const BenchReport& report);
nlohmann::json timings_json(const BenchReport& report);
std::string format_bench(const BenchReport& report);

nlohmann::json environment_stamp();

/// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace peee::cli
