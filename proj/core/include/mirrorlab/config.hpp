#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mirrorlab/errors.hpp"
#include "mirrorlab/walks.hpp"

namespace mirrorlab {

enum class Experiment { kWalk, kVariance, kDiffusion, kCouple, kDiagnose, kAudit, kBallprob, kOracle, kSweep };

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view name);

struct ExperimentConfig {
  Experiment experiment = Experiment::kDiffusion;
  int d = 2;
  double p = 0.1;
  std::int64_t p_num = 1;   // oracle
  std::int64_t p_den = 10;  // oracle
  std::int64_t steps = 1000;
  std::int64_t trials = 100;
  std::uint64_t seed = 1;
  SampleSchedule sample;
  int threads = 0;          // 0 = auto
  std::string out_dir = "out";

  // walk
  WalkKind kind = WalkKind::kCoupled;
  std::string emit = "csv";  // csv | env
  // variance
  std::int64_t max_lag = 50;
  std::vector<std::int64_t> times;  // empty: the sample schedule
  // diagnose
  bool exact_heavy = false;
  bool all_windows = true;
  // ballprob
  std::int64_t segment = 4;
  std::vector<std::int64_t> segments = {4, 16, 64};
  std::vector<std::int64_t> radii = {1, 2, 4};
  // oracle
  std::string mode = "rational";
  // sweep
  Experiment sweep_experiment = Experiment::kDiffusion;
  std::vector<int> d_grid;
  std::vector<double> p_grid;
  std::vector<std::int64_t> steps_grid;
};

struct ConfigViolation {
  std::string key;
  int line = 0;  // 0: command line or default
  std::string message;
};

/// Thrown with every violation found, not just the first.
class ConfigParseError : public ConfigError {
 public:
  explicit ConfigParseError(std::vector<ConfigViolation> violations);
  const std::vector<ConfigViolation>& violations() const { return violations_; }

 private:
  std::vector<ConfigViolation> violations_;
};

/// Parses `key = value` lines (`#` starts a comment) over the defaults, then
/// applies `overrides` in order, then validates ranges.
ExperimentConfig parse_config(std::string_view text,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Same as parse_config on the file contents. Unreadable files raise ConfigError.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Range checks; throws ConfigParseError listing all violations.
void validate_config(const ExperimentConfig& cfg);

/// Canonical `key = value` lines in a fixed order. Parsing them back yields
/// the same configuration.
std::vector<std::string> config_lines(const ExperimentConfig& cfg);

/// FNV-1a over the canonical lines, ignoring threads and out_dir.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace mirrorlab
