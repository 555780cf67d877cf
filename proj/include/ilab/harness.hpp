#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/bounds.hpp"
#include "ilab/estimators.hpp"
#include "ilab/predictor.hpp"
#include "ilab/process.hpp"

namespace ilab {

// Malformed or unknown configuration; the message names the offending key.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct BoundCheck {
    std::string id;
    std::map<std::string, double> params;  // T (and M for meta bounds) are filled in per horizon when absent
};

// kl_vs_reference scores KL(reference || predictor) on shared rollouts.
enum class ExcessKind { kl, loss_vs_omniscient, loss_vs_rate, kl_vs_reference };

struct ScenarioConfig {
    std::string scenario_id;
    ProcessSpec process;
    PredictorKind predictor;
    std::optional<PredictorKind> reference;
    std::vector<int> horizons;
    int replicates = 2;
    std::uint64_t master_seed = 0;
    std::string output_dir = "out";
    std::vector<BoundCheck> bounds;
    ExcessKind excess = ExcessKind::kl;
    double se_multiplier = 3.0;
};

constexpr int kConfigVersion = 1;

ScenarioConfig parse_scenario(const nlohmann::json& j);
ProcessSpec parse_process(const nlohmann::json& j);
PredictorKind parse_predictor(const nlohmann::json& j);
// A built-in scenario name or a path to a JSON file.
ScenarioConfig load_scenario(const std::string& name_or_path);
std::vector<std::string> builtin_scenario_names();
nlohmann::json builtin_scenario(const std::string& name);  // throws ConfigError for unknown names

struct VerificationRow {
    std::string scenario_id;
    int horizon = 0;
    std::string bound_id;
    Side side = Side::upper;
    double empirical = 0.0;
    double std_err = 0.0;
    double bound = 0.0;
    bool pass = false;
    double margin = 0.0;  // positive when passing
};

struct ScenarioResult {
    std::string scenario_id;
    ErrorCurve curve;
    std::vector<int> curve_horizons;  // as configured (per task for meta processes)
    std::vector<BoundReport> bounds;
    std::vector<VerificationRow> rows;
    bool passed = true;
};

// Pure given the config; threads only changes wall time.
ScenarioResult run_scenario(const ScenarioConfig& config, int threads = 1);

enum class Format { csv, json };
std::string fmt_double(double v);  // 17 significant digits
std::string curve_csv(const ScenarioResult& r);
std::string bounds_csv(const std::vector<BoundReport>& b);
std::string verification_csv(const std::vector<VerificationRow>& rows);
std::string scaling_csv(const ScalingSweep& s);
nlohmann::json result_json(const ScenarioResult& r);
nlohmann::json bound_json(const BoundReport& b);
nlohmann::json scaling_json(const ScalingSweep& s);

// Temp file in the same directory, then rename.
void write_atomic(const std::string& path, const std::string& content);
// Writes <dir>/<scenario_id>/{curve,bounds,verification}.<ext>.
void write_outputs(const ScenarioResult& r, const std::string& dir, Format f);

struct SuiteResult {
    std::vector<ScenarioResult> results;
    std::vector<std::string> failures;
    std::vector<std::string> warnings;
    bool passed = true;
};
// Manifest: {"version": 1, "scenarios": [name | path | inline config, ...]}.
nlohmann::json load_manifest(const std::string& name_or_path);
SuiteResult verify_suite(const nlohmann::json& manifest, int threads, std::optional<std::uint64_t> seed,
                         const std::optional<std::string>& out_dir, Format f);

}  // namespace ilab
