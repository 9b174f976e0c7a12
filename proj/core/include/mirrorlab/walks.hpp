#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "mirrorlab/environment.hpp"
#include "mirrorlab/lattice.hpp"
#include "mirrorlab/rng.hpp"

namespace mirrorlab {

/// How the driven walk chose its matching at the arrival site.
enum class Rule : std::uint8_t {
  kNoMirror = 0,  // fresh site, no discovery at this time: identity
  kRevisit = 1,   // site seen earlier in this generation: stored matching
  kAgree = 2,     // fresh, velocities agree: driving matching
  kBlocked = 3,   // fresh, driving exit is the reverse of the driven velocity
  kSwap = 4,      // fresh, velocities disagree: rule4_transform
};

/// Randomness of one driving step: whether t is a discovery time and the
/// matching drawn (identity when not a discovery).
struct DrivingDraw {
  bool in_T = false;
  std::uint32_t matching = 0;
};

/// Bernoulli(p) discovery flag, then a uniform member of M_d if set.
DrivingDraw draw_driving(const MirrorFamily& family, double p, CounterRng& rng);

struct DrivenChoice {
  std::uint32_t matching = 0;
  Rule rule = Rule::kNoMirror;
};

/**
 * The coupling case analysis for one driven step. `v_prev` and `vt_prev` are
 * the driven and driving velocities at time t-1, `stored` the matching of the
 * arrival site if it was visited before in this generation.
 *
 * Swap and blocked cases only arise at discovery times; at a fresh site with
 * no discovery the driven walk sees the identity, exactly like the quenched
 * environment does with probability 1 - p.
 */
DrivenChoice resolve_driven_matching(const MirrorFamily& family, Direction v_prev,
                                     Direction vt_prev, std::optional<std::uint32_t> stored,
                                     const DrivingDraw& draw);

/// Non-backtracking driving walk.
struct DrivingState {
  Site x;
  Direction v = Direction::e1();
  std::int64_t t = 0;
  bool in_T_now = false;
  std::uint32_t m_now = 0;
};

/// x' = x + v (pre-update velocity), v' = draw(v).
void advance_driving(DrivingState& s, const DrivingDraw& draw, const MirrorFamily& family);
DrivingState step_driving(DrivingState s, double p, const MirrorFamily& family, CounterRng& rng);

struct StepRecord {
  std::int64_t t = 0;
  Site x;                  // walk position at t
  Direction v;             // walk velocity at t (after the arrival-site matching)
  Site xt;                 // driving position (coupled and driving walks)
  Direction vt;            // driving velocity
  bool in_T = false;       // t is a discovery time
  bool fresh = false;      // arrival site first visited at t in this generation
  Rule rule = Rule::kNoMirror;
  bool closed = false;     // back at the generation origin with the start velocity
};

/// Regeneration times tau_reg^i, strictly increasing.
class RegenerationLog {
 public:
  void push(std::int64_t t);
  std::span<const std::int64_t> times() const { return times_; }
  /// Last regeneration time <= t, or 0 before the first.
  std::int64_t alpha(std::int64_t t) const;

 private:
  std::vector<std::int64_t> times_;
};

struct WalkStart {
  Site origin;
  Direction v0 = Direction::e1();   // walk
  Direction vt0 = Direction::e1();  // driving walk
};

/// Lorentz walk in a lazily sampled quenched environment.
class QuenchedWalk {
 public:
  QuenchedWalk(const MirrorFamily& family, double p, WalkStart start, bool regenerate,
               CounterRng& rng);

  StepRecord step(CounterRng& rng);

  const Site& x() const { return x_; }
  Direction v() const { return v_; }
  std::int64_t t() const { return t_; }
  const EnvironmentRecord& env() const { return env_; }
  const RegenerationLog& regenerations() const { return log_; }
  bool origin_in_T() const { return origin_in_T_; }

 private:
  const MirrorFamily* family_;
  double p_;
  WalkStart start_;
  bool regenerate_;
  EnvironmentRecord env_;
  RegenerationLog log_;
  Site x_;
  Direction v_;
  std::int64_t t_ = 0;
  bool origin_in_T_ = false;
};

/// Driving walk and the walk it drives, advanced together.
class CoupledWalk {
 public:
  /// `origin_draw` supplies m(0) and whether 0 is a discovery time.
  CoupledWalk(const MirrorFamily& family, double p, WalkStart start, bool regenerate,
              const DrivingDraw& origin_draw);

  /// One step of both walks from the same driving randomness. On closing with
  /// regeneration enabled the environment is reset, and the draw of the
  /// closing step becomes the new generation's origin matching.
  StepRecord step(const DrivingDraw& draw);
  StepRecord step(CounterRng& rng) { return step(draw_driving(*family_, p_, rng)); }

  const Site& x() const { return x_; }
  Direction v() const { return v_; }
  const DrivingState& driving() const { return driving_; }
  std::int64_t t() const { return driving_.t; }
  const EnvironmentRecord& env() const { return env_; }
  const RegenerationLog& regenerations() const { return log_; }
  bool agree_now() const { return v_ == driving_.v; }

 private:
  const MirrorFamily* family_;
  double p_;
  WalkStart start_;
  bool regenerate_;
  EnvironmentRecord env_;
  RegenerationLog log_;
  DrivingState driving_;
  Site x_;
  Direction v_;
};

enum class WalkKind { kQuenched, kDriving, kCoupled, kRegenerated };

std::string_view to_string(WalkKind kind);
WalkKind parse_walk_kind(std::string_view name);

/// Sample times: powers of two (plus 0), a fixed stride, or an explicit list.
/// The horizon is always included.
struct SampleSchedule {
  enum class Kind { kPowersOfTwo, kStride, kExplicit };
  Kind kind = Kind::kPowersOfTwo;
  std::int64_t stride = 1;
  std::vector<std::int64_t> times;

  std::vector<std::int64_t> resolve(std::int64_t horizon) const;
};

struct WalkConfig {
  int dim = 2;
  double p = 0.1;
  std::int64_t steps = 1;
  WalkKind kind = WalkKind::kCoupled;
  WalkStart start;
  SampleSchedule schedule;
  /// Stop at the first closing (non-regenerating kinds only).
  bool stop_at_closing = false;
};

struct TrajectorySummary {
  std::vector<std::int64_t> sample_times;
  std::vector<Site> samples;
  std::int64_t horizon = 0;  // last simulated time
  RegenerationLog regenerations;
  std::optional<std::int64_t> first_closing;
  std::int64_t discoveries = 0;         // |T ∩ [1, horizon]|
  bool tracks_driving = true;           // X(t) = X~(t) for every t <= horizon
  bool origin_in_T = false;             // 0 is a discovery time
  Direction final_velocity;
};

/// Validates dimension, probability and horizon; throws ConfigError.
void validate_walk_config(const WalkConfig& cfg);

namespace detail {

struct WalkRunner {
  const MirrorFamily& family;
  const WalkConfig& cfg;
  CounterRng& rng;
  std::vector<std::int64_t> times;
  std::size_t next_sample = 0;
  TrajectorySummary out;

  WalkRunner(const MirrorFamily& f, const WalkConfig& c, CounterRng& r)
      : family(f), cfg(c), rng(r), times(c.schedule.resolve(c.steps)) {
    out.sample_times.reserve(times.size());
    out.samples.reserve(times.size());
  }

  void sample(std::int64_t t, const Site& x) {
    while (next_sample < times.size() && times[next_sample] <= t) {
      if (times[next_sample] == t) {
        out.sample_times.push_back(t);
        out.samples.push_back(x);
      }
      ++next_sample;
    }
  }

  void account(const StepRecord& rec) {
    out.horizon = rec.t;
    out.discoveries += rec.in_T ? 1 : 0;
    out.final_velocity = rec.v;
    if (rec.closed && !out.first_closing) out.first_closing = rec.t;
    sample(rec.t, rec.x);
  }
};

}  // namespace detail

/**
 * Runs one trajectory of the configured kind up to `cfg.steps`, calling
 * `on_step(record)` after every step and `on_finish(env)` once at the end
 * (env is null for the driving walk). Regenerated runs reset the environment
 * at each closing and keep going from the origin with the start velocity.
 */
template <typename OnStep, typename OnFinish>
TrajectorySummary run_walk(const WalkConfig& cfg, CounterRng& rng, OnStep&& on_step,
                           OnFinish&& on_finish) {
  validate_walk_config(cfg);
  const MirrorFamily& family = mirror_family(cfg.dim);
  detail::WalkRunner run(family, cfg, rng);
  run.sample(0, cfg.start.origin);
  run.out.final_velocity = cfg.start.v0;

  switch (cfg.kind) {
    case WalkKind::kQuenched: {
      QuenchedWalk walk(family, cfg.p, cfg.start, false, rng);
      run.out.tracks_driving = false;
      run.out.origin_in_T = walk.origin_in_T();
      for (std::int64_t t = 1; t <= cfg.steps; ++t) {
        const StepRecord rec = walk.step(rng);
        run.account(rec);
        on_step(rec);
        if (rec.closed && cfg.stop_at_closing) break;
      }
      on_finish(&walk.env());
      break;
    }
    case WalkKind::kDriving: {
      DrivingState s;
      s.x = cfg.start.origin;
      s.v = cfg.start.vt0;
      for (std::int64_t t = 1; t <= cfg.steps; ++t) {
        const DrivingDraw draw = draw_driving(family, cfg.p, rng);
        advance_driving(s, draw, family);
        StepRecord rec;
        rec.t = s.t;
        rec.x = rec.xt = s.x;
        rec.v = rec.vt = s.v;
        rec.in_T = draw.in_T;
        rec.fresh = true;
        rec.rule = draw.in_T ? Rule::kAgree : Rule::kNoMirror;
        run.account(rec);
        on_step(rec);
      }
      on_finish(static_cast<const EnvironmentRecord*>(nullptr));
      break;
    }
    case WalkKind::kCoupled:
    case WalkKind::kRegenerated: {
      const bool regenerate = cfg.kind == WalkKind::kRegenerated;
      const DrivingDraw origin = draw_driving(family, cfg.p, rng);
      run.out.origin_in_T = origin.in_T;
      CoupledWalk walk(family, cfg.p, cfg.start, regenerate, origin);
      for (std::int64_t t = 1; t <= cfg.steps; ++t) {
        const StepRecord rec = walk.step(rng);
        run.account(rec);
        if (run.out.tracks_driving && rec.x != rec.xt) run.out.tracks_driving = false;
        on_step(rec);
        if (rec.closed && cfg.stop_at_closing && !regenerate) break;
      }
      run.out.regenerations = walk.regenerations();
      on_finish(&walk.env());
      break;
    }
  }
  return std::move(run.out);
}

template <typename OnStep>
TrajectorySummary run_walk(const WalkConfig& cfg, CounterRng& rng, OnStep&& on_step) {
  return run_walk(cfg, rng, std::forward<OnStep>(on_step), [](const EnvironmentRecord*) {});
}

inline TrajectorySummary run_walk(const WalkConfig& cfg, CounterRng& rng) {
  return run_walk(cfg, rng, [](const StepRecord&) {});
}

/// Full per-step record of one trajectory, t = 0 .. horizon. Entry 0 holds
/// the start state; its in_T is the origin's discovery flag.
struct Trajectory {
  int dim = 2;
  double p = 0.0;
  WalkKind kind = WalkKind::kCoupled;
  std::vector<StepRecord> steps;
  RegenerationLog regenerations;

  std::int64_t horizon() const { return static_cast<std::int64_t>(steps.size()) - 1; }
};

/// Runs a quenched, coupled or regenerated walk and keeps every step.
Trajectory record_trajectory(const WalkConfig& cfg, CounterRng& rng);

/// A walk in a fixed environment: `planted` lists sites with their matching
/// (family index); every other site carries the identity. First visits to
/// planted sites are discovery times. Used to build hand-made test cases.
Trajectory planted_trajectory(int dim, double p,
                              std::span<const std::pair<Site, std::uint32_t>> planted,
                              WalkStart start, std::int64_t steps);

/// Positions X(0..t) of one walk.
using PathSeries = std::vector<Site>;

/// X_c(s) = X_1(s) for s <= t_1 and X_1(t_1) + X_2(s - t_1) afterwards.
PathSeries concatenate_walks(const PathSeries& first, const PathSeries& second);

/// Uniformly random signed permutation of the axes (an isometry of Z^d).
class SignedPermutation {
 public:
  static SignedPermutation identity(int dim);
  static SignedPermutation random(int dim, CounterRng& rng);

  Site apply(const Site& x) const;
  Direction apply(Direction v) const;

 private:
  int dim_ = 0;
  std::array<std::uint8_t, kMaxDim> perm_{};
  std::array<std::int8_t, kMaxDim> sign_{};
};

struct ConcatenationRun {
  PathSeries walk;          // W of length t1 + t2, start e1
  PathSeries concatenated;  // X_c from W1*, W2* under the shared driving walk
  std::int64_t max_distance = 0;  // max_t ||X(t) - X_c(t)||_inf
};

/// Drives W, W1* (first t1 steps) and W2* (time-shifted by t1) from one
/// driving walk; W1* and W2* start in uniform random directions.
ConcatenationRun shared_driving_concatenation(int dim, double p, std::int64_t t1,
                                              std::int64_t t2, CounterRng& rng);

}  // namespace mirrorlab
