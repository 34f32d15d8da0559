#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mlq {

/// Subcommands accepted by run_experiment.
const std::vector<std::string>& subcommands();

/// Checks keys, required model constants and per-operation ranges. Throws
/// ConfigError naming the key or the violated constraint.
void validate_config(const std::string& subcommand, const nlohmann::json& config);

// Column table; cells are JSON numbers or strings.
struct DataTable {
  std::vector<std::string> header;
  std::vector<std::vector<nlohmann::json>> rows;
  std::string csv() const;
  nlohmann::json json() const;
};

struct RunOutput {
  nlohmann::json report;  // no timestamp
  DataTable data;
};

RunOutput run_experiment(const std::string& subcommand, const nlohmann::json& config, std::uint64_t seed,
                         int threads);

/// First 16 hex digits of sha256 over (subcommand, config, seed). The thread
/// count is not part of the key.
std::string run_id(const std::string& subcommand, const nlohmann::json& config, std::uint64_t seed);

/// Runs and writes <out>/<subcommand>-<run_id>/ with config.json, report.json,
/// data.csv or data.json, and manifest.json (sha256 per artifact, report hashed
/// without its timestamp). Returns the directory.
std::string write_run(const std::string& out, const std::string& subcommand, const nlohmann::json& config,
                      std::uint64_t seed, int threads, const std::string& format);

struct ReplayResult {
  bool identical = false;
  std::vector<std::string> diverged;  // artifact names
};

/// Re-executes the run stored in `dir` and compares artifact hashes against
/// the manifest and the files on disk. Throws ConfigError on missing artifacts.
ReplayResult replay_run(const std::string& dir, int threads);

struct SmokeCase {
  std::string subcommand;
  nlohmann::json config;
  std::uint64_t seed = 0;
};

/// A small valid configuration for every subcommand.
std::vector<SmokeCase> smoke_configs();

}  // namespace mlq
