#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mirrorlab/config.hpp"

namespace mirrorlab {

/// Code version recorded in every output header.
std::string_view code_version();

struct ExperimentResult {
  std::vector<std::string> files;  // written, relative to out_dir, in order
  std::string headline;            // one-line human summary
  double runtime_seconds = 0.0;
  bool ok = true;                  // false when an experiment-level check fails
};

/// Runs the configured experiment and writes its files into cfg.out_dir.
/// Every file except timing.json is a pure function of the configuration
/// (threads and out_dir excluded) and the code version.
///
/// Throws ConfigError on invalid input, IoError when a file cannot be
/// written and TrialFailure when a trial raises.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// `#`-prefixed metadata lines that open every CSV file.
std::string csv_header(const ExperimentConfig& cfg);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& contents);

/// Trial seed used by trial `trial_id` of this configuration.
std::uint64_t trial_seed(const ExperimentConfig& cfg, std::int64_t trial_id);

/// Re-runs one walk from its trial seed and prints the trajectory CSV
/// (and, for `emit = env`, the environment dump) to `os`.
void replay_walk(const ExperimentConfig& cfg, std::uint64_t seed, std::ostream& os);

}  // namespace mirrorlab
