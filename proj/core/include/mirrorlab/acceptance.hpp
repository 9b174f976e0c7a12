#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mirrorlab {

inline constexpr int kCriterionCount = 13;

enum class Verdict { kPass, kFail, kWarn };

std::string_view to_string(Verdict v);

struct CriterionOutcome {
  int id = 0;
  std::string title;
  Verdict verdict = Verdict::kFail;
  std::string detail;    // one-line numbers behind the verdict
  std::string artifact;  // full deterministic report, compared by the determinism check
  double seconds = 0.0;
};

struct AcceptanceOptions {
  int threads = 0;                       // 0: MIRRORLAB_THREADS or hardware concurrency
  std::uint64_t seed = 20240611;         // master seed; each criterion derives its own
  std::string scratch_dir;               // empty: a directory under the system temp path
};

std::string_view criterion_title(int id);

/// Runs one criterion (1-based). Exceptions inside a criterion become a
/// failing outcome whose detail carries the message.
CriterionOutcome run_criterion(int id, const AcceptanceOptions& opts);

/// "PASS  5  diffusion constant ...  | detail  (1.2 s)"
std::string format_outcome(const CriterionOutcome& o);

/// True unless some outcome failed; warnings pass.
bool acceptance_passed(std::span<const CriterionOutcome> outcomes);

/// Per-coordinate driving-walk variance by direct summation,
/// (t + 2 sum_{0 <= s' < s <= t-1} rho^(s - s')) / d.
double driving_variance_double_sum(int dim, double p, std::int64_t t);

}  // namespace mirrorlab
