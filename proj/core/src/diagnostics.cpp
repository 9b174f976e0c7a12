#include "mirrorlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <absl/container/flat_hash_map.h>

#include "mirrorlab/errors.hpp"

namespace mirrorlab {

namespace {

double log_inv(double p) { return std::log(1.0 / p); }

std::size_t idx(std::int64_t t) { return static_cast<std::size_t>(t); }

// Replays M(t) forward in time. Call advance(0), advance(1), ... in order.
class MirrorReplay {
 public:
  explicit MirrorReplay(const Trajectory& traj)
      : traj_(traj), index_(traj.dim, kinetic_cell_side(traj.p)),
        regen_(traj.regenerations.times()) {}

  // Returns the number of sites that entered M at time t (0, 1 or 2).
  template <typename OnInsert>
  int advance(std::int64_t t, OnInsert&& on_insert) {
    int inserted = 0;
    const StepRecord& rec = traj_.steps[idx(t)];
    if (t == 0 || (next_ < regen_.size() && regen_[next_] == t)) {
      if (t != 0) ++next_;
      generation_ = t;
      index_.clear();
      index_.insert(rec.x);
      on_insert(rec.x, t, generation_);
      ++inserted;
    }
    if (rec.in_T && index_.insert(rec.x)) {
      on_insert(rec.x, t, generation_);
      ++inserted;
    }
    return inserted;
  }
  int advance(std::int64_t t) {
    return advance(t, [](const Site&, std::int64_t, std::int64_t) {});
  }

  const MirrorIndex& mirrors() const { return index_; }
  std::int64_t generation() const { return generation_; }

 private:
  const Trajectory& traj_;
  MirrorIndex index_;
  std::span<const std::int64_t> regen_;
  std::size_t next_ = 0;
  std::int64_t generation_ = 0;
};

std::vector<std::int64_t> prefix_counts(const std::vector<std::uint8_t>& flags) {
  std::vector<std::int64_t> out(flags.size() + 1, 0);
  for (std::size_t i = 0; i < flags.size(); ++i) out[i + 1] = out[i] + flags[i];
  return out;
}

}  // namespace

std::int64_t kinetic_scale(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ConfigError("kinetic_scale: p must lie in (0, 1), got " + std::to_string(p));
  }
  const double l = log_inv(p);
  return static_cast<std::int64_t>(std::floor(l * l * l / p));
}

bool s_membership(const Site& x, Direction v_prev, const MirrorIndex& mirrors, int dim,
                  std::int64_t t_star) {
  for (int code = 0; code < 2 * dim; ++code) {
    const Direction u(static_cast<std::uint8_t>(code));
    if (u.axis() == v_prev.axis()) continue;
    if (mirrors.ray_query(x, u, 2 * t_star)) return true;
  }
  return false;
}

double heavy_threshold(double p, double r) { return std::pow(p, 1.9) * r * r; }

bool exact_heavy_at(std::span<const Site> sites, const Site& center, double p, double scale) {
  std::vector<std::int64_t> dist;
  dist.reserve(sites.size());
  for (const auto& y : sites) dist.push_back(linf_distance(y, center));
  std::sort(dist.begin(), dist.end());
  // On [d_i, d_{i+1}) the count is i + 1; the threshold is smallest at the left end.
  const double r_min = 1.0 / p;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (i + 1 < dist.size() && dist[i + 1] == dist[i]) continue;
    const double r = std::max(static_cast<double>(dist[i]), r_min);
    if (static_cast<double>(i + 1) >= scale * heavy_threshold(p, r)) return true;
  }
  return false;
}

bool dyadic_heavy_at(const MirrorIndex& mirrors, const Site& center, double p, double slack) {
  const std::int64_t extent = mirrors.max_distance(center);
  if (extent < 0) return false;
  const auto total = static_cast<std::int64_t>(mirrors.size());
  for (std::int64_t r = kinetic_cell_side(p);; r *= 2) {
    const std::int64_t count = r >= extent ? total : mirrors.box_count(center, r);
    if (static_cast<double>(count) >= heavy_threshold(p, static_cast<double>(r)) / slack) {
      return true;
    }
    if (r >= extent) return false;
  }
}

bool exact_heavy_block_exists(std::span<const Site> sites, int dim, double p) {
  if (sites.empty()) return false;
  std::int64_t span_max = 0;
  for (const auto& a : sites) {
    for (const auto& b : sites) span_max = std::max(span_max, linf_distance(a, b));
  }
  const auto r_lo = static_cast<std::int64_t>(std::floor(1.0 / p));
  const auto n = sites.size();
  // A box of half-width R can be slid until each lower face touches a member.
  for (std::int64_t R = r_lo; R <= std::max(r_lo, span_max); ++R) {
    const double r = std::max(static_cast<double>(R), 1.0 / p);
    const double need = heavy_threshold(p, r);
    if (static_cast<double>(n) < need) continue;
    std::vector<std::size_t> pick(static_cast<std::size_t>(dim), 0);
    while (true) {
      Site c;
      for (int j = 0; j < dim; ++j) {
        const auto k = static_cast<std::size_t>(j);
        c.coords[k] = sites[pick[k]].coords[k] + R;
      }
      std::int64_t count = 0;
      for (const auto& y : sites) count += linf_distance(y, c) <= R ? 1 : 0;
      if (static_cast<double>(count) >= need) return true;
      int j = 0;
      for (; j < dim; ++j) {
        const auto k = static_cast<std::size_t>(j);
        if (++pick[k] < n) break;
        pick[k] = 0;
      }
      if (j == dim) break;
    }
  }
  return false;
}

RelaxedStatus relaxed_status(const Site& x, Direction v, const MirrorIndex& mirrors, double p,
                             std::int64_t t_star, bool exact) {
  RelaxedStatus out;
  // Mirror at x + s v, s in [1, t_*]: a ray from x + v backwards along -v.
  Site ahead = x;
  ahead += v;
  out.locally_relaxed = !mirrors.ray_query(ahead, -v, t_star - 1).has_value();
  if (!out.locally_relaxed) return out;
  const bool heavy =
      exact ? exact_heavy_at(mirrors.sites(), x, p) : dyadic_heavy_at(mirrors, x, p);
  out.relaxed = !heavy;
  return out;
}

TrajectoryAnalysis analyze_trajectory(const Trajectory& traj) {
  TrajectoryAnalysis an;
  an.t_star = kinetic_scale(traj.p);
  const std::int64_t horizon = traj.horizon();
  const auto n = idx(horizon + 1);
  an.in_S.assign(n, 0);
  an.in_T.assign(n, 0);

  MirrorReplay replay(traj);
  for (std::int64_t t = 0; t <= horizon; ++t) {
    const StepRecord& rec = traj.steps[idx(t)];
    if (t >= 1) {
      const Direction v_prev = traj.steps[idx(t - 1)].v;
      an.in_S[idx(t)] = s_membership(rec.x, v_prev, replay.mirrors(), traj.dim, an.t_star) ? 1 : 0;
    }
    an.in_T[idx(t)] = rec.in_T ? 1 : 0;
    replay.advance(t, [&](const Site& x, std::int64_t when, std::int64_t gen) {
      an.mirror_events.push_back({x, when, gen});
    });
  }
  an.s_prefix = prefix_counts(an.in_S);
  an.t_prefix = prefix_counts(an.in_T);
  an.tau_few = tau_few(traj, an.t_star);
  return an;
}

std::int64_t history_ball_count(const Trajectory& traj, const TrajectoryAnalysis& an,
                                std::int64_t a, std::int64_t r) {
  const std::int64_t gen = traj.regenerations.alpha(a);
  const Site& center = traj.steps[idx(a)].x;
  std::int64_t count = 0;
  for (const auto& ev : an.mirror_events) {
    if (ev.t > a) break;
    if (ev.generation == gen && linf_distance(ev.x, center) <= r) ++count;
  }
  return count;
}

SparsityAudit sparsity_audit(const Trajectory& traj, const TrajectoryAnalysis& an,
                             std::int64_t a, std::int64_t b) {
  if (a < 0 || b < a || b > traj.horizon()) {
    throw UsageError("sparsity_audit: window out of range");
  }
  SparsityAudit out;
  if (an.tau_few && *an.tau_few <= a) return out;
  out.audited = true;
  out.lhs = an.count_S(a, b);
  const std::int64_t k = history_ball_count(traj, an, a, b - a + 2 * an.t_star);
  const std::int64_t n = an.count_T(a, b);
  out.rhs = 2 * (k + n) * (k + n);
  out.ok = out.lhs <= out.rhs;
  return out;
}

SparsitySweep audit_all_windows(const Trajectory& traj, const TrajectoryAnalysis& an) {
  SparsitySweep out;
  const std::int64_t horizon = traj.horizon();
  const std::int64_t last_a = an.tau_few ? std::min(horizon, *an.tau_few - 1) : horizon;

  std::vector<std::int64_t> s_times;
  for (std::int64_t t = 0; t <= horizon; ++t) {
    if (an.in_S[idx(t)]) s_times.push_back(t);
  }

  // lhs only grows at S times and rhs is non-decreasing in b, so for each a it
  // suffices to test b running over the S times in [a, horizon].
  MirrorReplay replay(traj);
  auto rhs = [](std::int64_t k, std::int64_t n) { return 2 * (k + n) * (k + n); };
  for (std::int64_t a = 0; a <= last_a; ++a) {
    replay.advance(a);
    out.windows += horizon - a + 1;
    const std::int64_t remaining = an.count_S(a, horizon);
    if (remaining == 0) continue;
    const Site& xa = traj.steps[idx(a)].x;
    std::optional<std::int64_t> k0;
    std::int64_t k = 0;
    for (auto it = std::lower_bound(s_times.begin(), s_times.end(), a); it != s_times.end(); ++it) {
      const std::int64_t b = *it;
      ++k;
      const std::int64_t n = an.count_T(a, b);
      if (rhs(0, n) >= remaining) break;
      if (rhs(0, n) >= k) continue;
      if (!k0) k0 = replay.mirrors().box_count(xa, 2 * an.t_star);
      if (rhs(*k0, n) >= remaining) break;
      if (rhs(*k0, n) >= k) continue;
      ++out.exact_checks;
      const std::int64_t kb = replay.mirrors().box_count(xa, b - a + 2 * an.t_star);
      if (rhs(kb, n) < k) {
        ++out.violations;
        if (!out.first_violation) out.first_violation = std::make_pair(a, b);
      }
    }
  }
  return out;
}

std::optional<std::int64_t> tau_int(const Trajectory& traj) {
  // site -> whether some visit in this generation was at a time in {alpha} ∪ T
  absl::flat_hash_map<Site, bool> seen;
  const auto regen = traj.regenerations.times();
  std::size_t next = 0;
  for (std::int64_t t = 0; t <= traj.horizon(); ++t) {
    const StepRecord& rec = traj.steps[idx(t)];
    if (t > 0) {
      if (auto it = seen.find(rec.x); it != seen.end() && (it->second || rec.in_T)) return t;
    }
    const bool regen_now = t == 0 || (next < regen.size() && regen[next] == t);
    if (regen_now) {
      if (t != 0) ++next;
      seen.clear();
    }
    seen[rec.x] |= regen_now || rec.in_T;
  }
  return std::nullopt;
}

std::optional<std::int64_t> tau_many(std::span<const std::uint8_t> in_T, double p) {
  const double l = log_inv(p);
  const double need = l * l * l;
  const double w = 1.0 / p;
  const auto start = static_cast<std::int64_t>(std::ceil(w));
  std::int64_t count = 0;
  std::int64_t lo = 0;  // window [lo, t], lo = ceil(t - 1/p)
  const auto horizon = static_cast<std::int64_t>(in_T.size()) - 1;
  for (std::int64_t t = 0; t <= horizon; ++t) {
    count += in_T[idx(t)];
    const auto new_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(t - w)));
    while (lo < new_lo) count -= in_T[idx(lo++)];
    if (t >= start && static_cast<double>(count) >= need) return t;
  }
  return std::nullopt;
}

std::optional<std::int64_t> tau_few(const Trajectory& traj, std::int64_t t_star) {
  std::int64_t run_start = 0;  // V constant on [run_start, t]
  for (std::int64_t t = 0; t <= traj.horizon(); ++t) {
    if (t > 0 && traj.steps[idx(t)].v != traj.steps[idx(t - 1)].v) run_start = t;
    if (t >= t_star && t - run_start >= t_star) return t;
  }
  return std::nullopt;
}

std::optional<std::int64_t> tau_hit(const Trajectory& traj, std::int64_t t0) {
  if (t0 < 0 || t0 > traj.horizon()) throw UsageError("tau_hit: t0 outside the horizon");
  const std::int64_t gen = traj.regenerations.alpha(t0);
  absl::flat_hash_map<Site, bool> seen;  // site -> visited at some s in T ∪ {alpha}
  for (std::int64_t s = gen; s <= t0; ++s) {
    const StepRecord& rec = traj.steps[idx(s)];
    seen[rec.x] |= rec.in_T || s == gen;
  }
  for (std::int64_t t = t0 + 1; t <= traj.horizon(); ++t) {
    if (traj.regenerations.alpha(t) != gen) return std::nullopt;
    const StepRecord& rec = traj.steps[idx(t)];
    if (auto it = seen.find(rec.x); it != seen.end() && (it->second || rec.in_T)) return t;
  }
  return std::nullopt;
}

InteractionCheck check_pre_interaction(const Trajectory& traj) {
  InteractionCheck out;
  out.tau_int = tau_int(traj);
  const std::int64_t limit = out.tau_int ? *out.tau_int - 1 : traj.horizon();
  for (std::int64_t t = 0; t <= limit; ++t) {
    const StepRecord& rec = traj.steps[idx(t)];
    if (rec.x != rec.xt || rec.v != rec.vt) {
      out.agreement_ok = false;
      out.first_disagreement = t;
      break;
    }
  }
  for (std::int64_t t = 1; t <= traj.horizon(); ++t) {
    if (traj.steps[idx(t)].closed) {
      out.closing_ok = out.tau_int.has_value() && *out.tau_int <= t;
      break;
    }
  }
  return out;
}

DiagnosticsResult detect_stopping_times(const Trajectory& traj, const TrajectoryAnalysis& an,
                                        const DiagnosticsOptions& options) {
  DiagnosticsResult out;
  StoppingTimeReport& rep = out.report;
  const std::int64_t horizon = traj.horizon();
  rep.horizon = horizon;
  rep.t_star = an.t_star;
  rep.tau_int = tau_int(traj);
  for (std::int64_t t = 1; t <= horizon; ++t) {
    if (traj.steps[idx(t)].closed) rep.tau_clo_list.push_back(t);
  }
  rep.tau_few = an.tau_few;
  rep.tau_many = tau_many(an.in_T, traj.p);
  for (std::int64_t t = 0; t <= horizon; ++t) {
    rep.s_hits += (an.in_S[idx(t)] && an.in_T[idx(t)]) ? 1 : 0;
  }

  std::vector<std::int64_t> trace_times = options.trace_times;
  if (trace_times.empty()) trace_times = SampleSchedule{}.resolve(horizon);
  std::sort(trace_times.begin(), trace_times.end());
  trace_times.erase(std::unique(trace_times.begin(), trace_times.end()), trace_times.end());

  std::vector<std::uint8_t> in_R(idx(horizon + 1), 0);
  std::vector<RelaxedStatus> status_at(idx(horizon + 1));
  MirrorReplay replay(traj);
  for (std::int64_t t = 0; t <= horizon; ++t) {
    std::vector<Site> fresh;
    replay.advance(t, [&](const Site& x, std::int64_t, std::int64_t) { fresh.push_back(x); });
    if (!rep.tau_hea_approx) {
      for (const auto& y : fresh) {
        // Any heavy block created now contains y, so B(y, 2r) covers it.
        if (dyadic_heavy_at(replay.mirrors(), y, traj.p, 16.0)) {
          rep.tau_hea_approx = t;
          break;
        }
      }
    }
    if (options.relaxation && t >= 1) {
      const StepRecord& rec = traj.steps[idx(t)];
      status_at[idx(t)] =
          relaxed_status(rec.x, rec.v, replay.mirrors(), traj.p, an.t_star, options.exact_heavy);
      in_R[idx(t)] = status_at[idx(t)].relaxed ? 1 : 0;
    }
  }

  if (options.relaxation) {
    const auto r_prefix = prefix_counts(in_R);
    auto window = [&](std::int64_t t) {
      const std::int64_t lo = std::max<std::int64_t>(0, t - an.t_star);
      return r_prefix[idx(t + 1)] - r_prefix[idx(lo)];
    };
    for (std::int64_t t = an.t_star + 1; t <= horizon; ++t) {
      if (static_cast<double>(window(t)) <= 0.9 * static_cast<double>(an.t_star)) {
        rep.tau_rel = t;
        break;
      }
    }
    for (std::int64_t t : trace_times) {
      if (t < 0 || t > horizon) continue;
      RelaxationPoint pt;
      pt.t = t;
      pt.locally_relaxed = status_at[idx(t)].locally_relaxed;
      pt.relaxed = status_at[idx(t)].relaxed;
      pt.window_density =
          an.t_star > 0 ? static_cast<double>(window(t)) / static_cast<double>(an.t_star) : 0.0;
      out.trace.push_back(pt);
    }
  }

  for (std::int64_t t : trace_times) {
    if (t < 0 || t > horizon) continue;
    const SparsityAudit audit = sparsity_audit(traj, an, 0, t);
    if (!audit.audited) break;
    rep.s_size_samples.push_back({0, t, audit.lhs, audit.rhs});
  }
  return out;
}

VisitCounts visit_counter(const Trajectory& traj, double p, const Site& center,
                          std::int64_t side) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("visit_counter: p must lie in (0, 1)");
  if (side < kinetic_cell_side(p)) {
    throw ConfigError("visit_counter: block side must be at least ceil(1/p)");
  }
  constexpr double kEps = 0.01;
  VisitCounts out;
  out.gap = std::pow(p, 1.0 - 4.0 * kEps) * static_cast<double>(side) * static_cast<double>(side);
  const double l = log_inv(p);
  const auto j_star = static_cast<std::size_t>(std::floor(l * l * l));
  const std::int64_t half = side / 2;
  out.zetas.push_back(0);
  for (std::int64_t t = 1; t <= traj.horizon(); ++t) {
    if (static_cast<double>(t - out.zetas.back()) <= out.gap) continue;
    if (linf_distance(traj.steps[idx(t)].x, center) <= half) out.zetas.push_back(t);
  }
  if (j_star < out.zetas.size()) out.tau_visit = out.zetas[j_star];
  return out;
}

}  // namespace mirrorlab
