#pragma once

#include "perfrl/optimizer.hpp"
#include "perfrl/perf_env.hpp"
#include "perfrl/policy_eval.hpp"
#include "perfrl/theory.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace perfrl {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes of the CLI commands.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2, kExitViolations = 3 };

struct EnvConfig {
    std::string rule = "affine_mix"; // fixed | affine_mix | interpolated
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    double gamma = 0.0;
    std::optional<std::vector<double>> rho;
    std::optional<std::vector<double>> kernel; // flat, s' fastest
    std::optional<Table> reward;
    std::uint64_t random_seed = 0; // for kernel/reward tables not given explicitly
    double kappa = 0.0;
    std::optional<SensitivityConstants> constants;
    std::size_t estimate_pairs = 0;   // 0 disables sampled estimation
    std::size_t estimate_samples = 0;
};

struct TheoryRequest {
    double target_eps = 0.0;
    double fail_prob = 0.0;
};

struct AlgorithmConfig {
    std::string run = "zfw"; // zfw | retraining
    FwConfig zfw;
    bool has_zfw = false; // zfw block given explicitly
    std::optional<TheoryRequest> theory;
    RetrainingConfig retraining{100, 200, 0.01, false};
    std::optional<Table> init; // uniform when absent
};

struct CheckConfig {
    std::vector<std::string> suites; // dominance | lower_bound | prop2 | po_gap
    std::size_t pairs = 50;
    std::size_t policies = 100;
    std::optional<double> debug_mu; // replaces mu; negative control only
};

struct OutputConfig {
    std::string dir = ".";
    std::string prefix = "perfrl";
    bool record_timing = false;
};

struct ExperimentConfig {
    EnvConfig env;
    RegCoefficient reg;
    AlgorithmConfig algorithm;
    CheckConfig checks;
    std::uint64_t seed = 0;
    OutputConfig output;
    nlohmann::json raw; // the document as read, echoed into outputs
};

/// Validates a parsed document. Throws ConfigError naming the offending field
/// path (e.g. "env.gamma"); unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

PerformativeEnv build_env(const EnvConfig& cfg);
Policy initial_policy(const ExperimentConfig& cfg);

/// Declared constants when present, otherwise the certified bounds.
SensitivityConstants constants_for(const ExperimentConfig& cfg, const PerformativeEnv& env);

/// FwConfig for the run: the explicit zfw block, or the theory schedule.
FwConfig resolve_fw_config(const ExperimentConfig& cfg, const PerformativeEnv& env);

/// Decimal notation with 12 significant digits, no exponent.
std::string format_number(double x);

inline constexpr const char* kTraceHeader = "iter,v_reg,v_unreg,fw_gap,min_mass,elapsed_ms";

void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& trace);
/// Parses a trace; throws ConfigError naming the column on a schema mismatch.
std::vector<IterationRecord> read_trace_csv(std::istream& in);

nlohmann::json to_json(const TheoryConstants& tc);
nlohmann::json to_json(const TheorySchedule& ts);
nlohmann::json to_json(const SensitivityConstants& sc);
nlohmann::json to_json(const ViolationReport& report);
nlohmann::json to_json(const Policy& pi);

struct CommandOptions {
    std::string config_path;
    std::optional<std::string> out_dir;
};

int cmd_run(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_constants(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_check(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_compare(const CommandOptions& opts, std::ostream& out, std::ostream& err);

} // namespace perfrl
