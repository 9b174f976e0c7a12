#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mirrorlab {

/// Thread count: MIRRORLAB_THREADS if set, else `requested`, else the
/// hardware concurrency. Always at least 1.
int resolve_threads(int requested);

/// Raised by run_trials when a trial throws; carries the lowest failing id.
class TrialFailure : public std::runtime_error {
 public:
  TrialFailure(std::int64_t trial_id, bool invariant, const std::string& what)
      : std::runtime_error(what), trial_id_(trial_id), invariant_(invariant) {}
  std::int64_t trial_id() const { return trial_id_; }
  /// True when the underlying error was an InvariantError.
  bool invariant() const { return invariant_; }

 private:
  std::int64_t trial_id_;
  bool invariant_;
};

namespace detail {
bool is_invariant_error(const std::exception& e);
}

/**
 * Runs fn(trial_id) for trial_id in [0, trials) on a worker pool and returns
 * the results indexed by trial id, so any reduction done afterwards in index
 * order is independent of scheduling.
 */
template <typename Result, typename Fn>
std::vector<Result> run_trials(std::int64_t trials, int threads, Fn&& fn) {
  std::vector<Result> results(static_cast<std::size_t>(trials));
  std::atomic<std::int64_t> next{0};
  std::mutex failure_mutex;
  std::optional<TrialFailure> failure;

  auto worker = [&] {
    while (true) {
      const std::int64_t id = next.fetch_add(1);
      if (id >= trials) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure && failure->trial_id() < id) return;
      }
      try {
        results[static_cast<std::size_t>(id)] = fn(id);
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure || id < failure->trial_id()) {
          failure.emplace(id, detail::is_invariant_error(e), e.what());
        }
      }
    }
  };

  const int n = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::int64_t>(trials, 1))));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  if (failure) throw *failure;
  return results;
}

}  // namespace mirrorlab
