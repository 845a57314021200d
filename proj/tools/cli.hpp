#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tsflow::cli {

enum ExitCode : int { kOk = 0, kConfig = 1, kReportedFailure = 2, kAuditFailure = 3 };

/// Settings for `run` and `replay` after merging defaults, the YAML file,
/// TSFLOW_* environment variables and flags, in that order.
struct CliConfig {
  std::filesystem::path task;
  std::filesystem::path banks = "banks";
  std::filesystem::path out = "out";
  std::string planner = "scripted";
  std::uint64_t seed = 0;
  std::size_t k = 2;
  int warmup = 3;
  int opt = 10;
  int debug_retries = 2;
  std::size_t parallel = 0;
  std::size_t case_neighbors = 5;
  std::size_t context_budget = 16000;
  std::string llm_mode = "live";
  std::filesystem::path transcript;
  bool strict_sequence = false;
  std::filesystem::path prompts;
  std::int64_t native_timeout_ms = 120000;
};

/// Keys accepted in the config file and as TSFLOW_<KEY> variables.
const std::vector<std::string>& config_keys();

/// Applies one key. Throws Error(ConfigError) on unknown keys or bad values.
void apply_setting(CliConfig& config, const std::string& key, const std::string& value);

/// Reads a flat YAML map of scalars. Nested maps, lists, anchors and aliases
/// are rejected along with unknown keys.
void apply_yaml_file(CliConfig& config, const std::filesystem::path& file);

/// Applies TSFLOW_<KEY> for every known key found in `env`.
void apply_env(CliConfig& config, const std::map<std::string, std::string>& env);

std::map<std::string, std::string> process_env();

/// Entry point shared by the binary and the tests. `env` stands in for the
/// process environment.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env);

}  // namespace tsflow::cli
