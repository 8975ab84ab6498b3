#pragma once

// Experiment registry, configuration and result output.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lobtree/brw_stats.hpp"
#include "lobtree/limit_verify.hpp"

namespace lobtree {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitConfig = 2, kExitInconclusive = 3 };

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string experiment;
    double lambda = 1.0;
    std::string j_pmf = "-1:0.3,1:0.7";
    std::optional<std::int64_t> n;
    std::optional<double> t;
    std::optional<double> horizon;
    std::optional<std::uint64_t> replicas;
    std::uint64_t seed = 1;
    std::vector<std::int64_t> u_list;
    std::vector<double> y_list;  ///< integral values for label_count
    std::vector<double> eps_list;
    std::vector<std::int64_t> m_list;
    std::vector<std::int64_t> n_list;
    std::vector<std::int64_t> p_list;
    std::vector<std::int64_t> kappa_list;
    std::vector<std::int64_t> a_list;
    std::string condition;
    std::size_t node_cap = 10'000'000;
    std::uint64_t rejection_budget = 10'000'000;
    std::string out;
    std::string format = "csv";
    unsigned threads = 1;
    /// Overrides of the experiment's registered thresholds.
    std::map<std::string, double> thresholds;
};

struct ExperimentInfo {
    std::string name;
    std::string anchor;
    std::string description;
    std::uint64_t default_replicas = 0;
    std::map<std::string, double> thresholds;
};

const std::vector<ExperimentInfo>& registry();
const ExperimentInfo* find_experiment(const std::string& name);
/// One line per experiment: name, anchor, default thresholds.
std::string list_experiments();

/// Applies `key=value` (flag name without dashes, or threshold.<name>).
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Reads `key=value` lines; blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

/// Validates the pmf, the experiment name, replicas and format. Throws ConfigError.
void validate(const ExperimentConfig& cfg);

struct RunOutcome {
    int exit_code = kExitPass;
    std::string experiment;
    std::vector<StatReport> stats;
    std::vector<TestResult> tests;
    std::vector<std::string> verdicts;
    std::vector<std::string> errors;
};

/// Runs the named experiment. Throws ConfigError for invalid configs.
RunOutcome run(const ExperimentConfig& cfg);

/// CSV body: a `#` comment line with version and timestamp, the header, rows.
std::string to_csv(const RunOutcome& outcome, const ExperimentConfig& cfg, const std::string& timestamp);
std::string to_json(const RunOutcome& outcome, const ExperimentConfig& cfg, const std::string& timestamp);

/// Full CLI: parse, run, write artifacts. Returns the exit code.
int cli_main(int argc, char** argv);

}  // namespace lobtree
