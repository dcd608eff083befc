#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "dsde/toml.hpp"

namespace dsde::experiment {

inline constexpr const char* kVersion = "1.0.0";

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
  bool dump_trajectories = false;
};

struct RunOutcome {
  nlohmann::json report;
  bool ok = false;  // exit-code contract: all PASS/FAIL analyses passed
};

// Throws with a descriptive message when the config is structurally bad
// (missing seed, unknown model/drift/analysis, absent parameter blocks).
void validate_config(const toml::Table& cfg);

// Runs the configured analyses in dependency order (simulate -> weights ->
// measures -> bounds) and writes report.json plus tables/*.csv to the output
// directory.
RunOutcome run_experiment(const toml::Table& cfg, const std::string& config_text,
                          const CliOverrides& ov);

// Invariant-measure pipeline at each spectral truncation level, with
// cross-level consistency checks on the first mode.
RunOutcome galerkin_sweep(const toml::Table& cfg, const std::string& config_text,
                          const CliOverrides& ov);

}  // namespace dsde::experiment
