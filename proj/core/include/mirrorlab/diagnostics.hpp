#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mirrorlab/environment.hpp"
#include "mirrorlab/lattice.hpp"
#include "mirrorlab/walks.hpp"

namespace mirrorlab {

/// t_* = floor((1/p) ln^3(1/p)), natural log. Throws ConfigError unless 0 < p < 1.
std::int64_t kinetic_scale(double p);

/// True iff some y in `mirrors` and direction u != +-v_prev satisfy
/// y + r u = x for an integer r in [0, 2 t_*].
bool s_membership(const Site& x, Direction v_prev, const MirrorIndex& mirrors, int dim,
                  std::int64_t t_star);

/// Heavy-block threshold p^1.9 r^2.
double heavy_threshold(double p, double r);

/// Exact check over every radius r >= 1/p of the block centred at `center`:
/// |B(center, r) ∩ sites| >= scale * p^1.9 r^2. Slow (sorts all distances).
bool exact_heavy_at(std::span<const Site> sites, const Site& center, double p, double scale = 1.0);

/// Dyadic detector: radii r_k = 2^k ceil(1/p) up to the farthest mirror, flagging
/// box_count >= p^1.9 r_k^2 / slack. With slack = 4 it never misses an exact
/// heavy block at the same centre, and every flag is an exact heavy block for
/// the threshold divided by 4.
bool dyadic_heavy_at(const MirrorIndex& mirrors, const Site& center, double p, double slack = 4.0);

/// Exhaustive search over all centres in Z^d and all radii r >= 1/p. Cost grows
/// like |sites|^(d+1) per radius; intended for small oracle instances.
bool exact_heavy_block_exists(std::span<const Site> sites, int dim, double p);

struct RelaxedStatus {
  bool locally_relaxed = false;
  bool relaxed = false;
};

/// Locally relaxed: no s in [1, t_*] with x + s v in M. Relaxed additionally
/// needs no heavy block centred at x (dyadic detector, or exact when `exact`).
RelaxedStatus relaxed_status(const Site& x, Direction v, const MirrorIndex& mirrors, double p,
                             std::int64_t t_star, bool exact = false);

/**
 * Per-time quantities of a recorded trajectory that the stopping times and the
 * sparsity audit share. M(t) here is the origin plus X(s) for every discovery
 * time s since the last regeneration, revisits included.
 */
struct TrajectoryAnalysis {
  std::int64_t t_star = 0;
  std::vector<std::uint8_t> in_S;
  std::vector<std::uint8_t> in_T;
  std::vector<std::int64_t> s_prefix;  // s_prefix[t] = |S ∩ [0, t)|
  std::vector<std::int64_t> t_prefix;  // t_prefix[t] = |T ∩ [0, t)|
  std::optional<std::int64_t> tau_few;

  struct MirrorEvent {
    Site x;
    std::int64_t t = 0;           // time the site entered M
    std::int64_t generation = 0;  // regeneration time that opened its generation
  };
  std::vector<MirrorEvent> mirror_events;  // insertion order

  std::int64_t count_S(std::int64_t a, std::int64_t b) const {
    return s_prefix[static_cast<std::size_t>(b + 1)] - s_prefix[static_cast<std::size_t>(a)];
  }
  std::int64_t count_T(std::int64_t a, std::int64_t b) const {
    return t_prefix[static_cast<std::size_t>(b + 1)] - t_prefix[static_cast<std::size_t>(a)];
  }
};

TrajectoryAnalysis analyze_trajectory(const Trajectory& traj);

/// |M(a) ∩ B_r(X(a))| by direct scan of the mirror events.
std::int64_t history_ball_count(const Trajectory& traj, const TrajectoryAnalysis& an,
                                std::int64_t a, std::int64_t r);

struct SparsityAudit {
  bool audited = false;  // false when the tau_few guard fails
  std::int64_t lhs = 0;  // |S ∩ [a, b]|
  std::int64_t rhs = 0;  // 2 (|M(a) ∩ B_{b-a+2t_*}(X(a))| + |T ∩ [a, b]|)^2
  bool ok = true;
};

SparsityAudit sparsity_audit(const Trajectory& traj, const TrajectoryAnalysis& an,
                             std::int64_t a, std::int64_t b);

struct SparsitySweep {
  std::int64_t windows = 0;     // windows [a, b] covered, 0 <= a <= b <= horizon
  std::int64_t exact_checks = 0;
  std::int64_t violations = 0;
  std::optional<std::pair<std::int64_t, std::int64_t>> first_violation;
};

/// Checks the sparsity inequality on every window [a, b] with a < tau_few.
/// Windows are settled in bulk with monotone bounds; the exact ball count is
/// evaluated only where the bounds cannot decide.
SparsitySweep audit_all_windows(const Trajectory& traj, const TrajectoryAnalysis& an);

struct SparsitySample {
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t s_count = 0;
  std::int64_t bound = 0;
};

struct StoppingTimeReport {
  std::int64_t horizon = 0;
  std::int64_t t_star = 0;
  std::optional<std::int64_t> tau_int;
  std::vector<std::int64_t> tau_clo_list;
  std::optional<std::int64_t> tau_few;
  std::optional<std::int64_t> tau_many;
  std::optional<std::int64_t> tau_hea_approx;
  std::optional<std::int64_t> tau_rel;
  std::int64_t s_hits = 0;  // |S ∩ T ∩ [0, horizon]|
  std::vector<SparsitySample> s_size_samples;
};

struct RelaxationPoint {
  std::int64_t t = 0;
  bool locally_relaxed = false;
  bool relaxed = false;
  double window_density = 0.0;  // |R ∩ [t - t_*, t]| / t_*
};

struct DiagnosticsOptions {
  bool relaxation = true;         // needed for tau_rel and the trace
  bool exact_heavy = false;       // slow all-radii scan for relaxedness
  std::vector<std::int64_t> trace_times;  // empty: powers of two and the horizon
};

struct DiagnosticsResult {
  StoppingTimeReport report;
  std::vector<RelaxationPoint> trace;
};

DiagnosticsResult detect_stopping_times(const Trajectory& traj, const TrajectoryAnalysis& an,
                                        const DiagnosticsOptions& options = {});

/// tau_int from the step stream: first t >= 1 revisiting X(s), s in the same
/// generation, with s in {0} ∪ T or t in T.
std::optional<std::int64_t> tau_int(const Trajectory& traj);

/// tau_many: first t >= 1/p with |T ∩ [t - 1/p, t]| >= ln^3(1/p).
std::optional<std::int64_t> tau_many(std::span<const std::uint8_t> in_T, double p);

/// tau_few: first t >= t_* with V constant on [t - t_*, t].
std::optional<std::int64_t> tau_few(const Trajectory& traj, std::int64_t t_star);

/// First t' > t0 with X(t') = X(s) for some s in [alpha(t'), t0] and
/// t' in T or s in T ∪ {alpha(t')}.
std::optional<std::int64_t> tau_hit(const Trajectory& traj, std::int64_t t0);

/// Invariants holding before the first self-interaction: X = X~ and V = V~
/// for t < tau_int, and no closing before tau_int.
struct InteractionCheck {
  bool agreement_ok = true;
  bool closing_ok = true;
  std::optional<std::int64_t> tau_int;
  std::optional<std::int64_t> first_disagreement;
};
InteractionCheck check_pre_interaction(const Trajectory& traj);

struct VisitCounts {
  std::vector<std::int64_t> zetas;        // zeta_0 = 0, zeta_1, ...
  std::optional<std::int64_t> tau_visit;  // zeta_{j_*}, j_* = floor(ln^3(1/p))
  double gap = 0.0;                       // p^(1 - 4 eps) side^2, eps = 0.01
};

/// Visits to the block {x : ||x - center||_inf <= side / 2} spaced by more than
/// the gap. Throws ConfigError when side < ceil(1/p).
VisitCounts visit_counter(const Trajectory& traj, double p, const Site& center,
                          std::int64_t side);

}  // namespace mirrorlab
