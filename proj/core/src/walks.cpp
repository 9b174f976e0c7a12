#include "mirrorlab/walks.hpp"

#include <algorithm>
#include <string>

#include "mirrorlab/errors.hpp"

namespace mirrorlab {

DrivingDraw draw_driving(const MirrorFamily& family, double p, CounterRng& rng) {
  DrivingDraw d;
  d.in_T = rng.bernoulli(p);
  d.matching = d.in_T ? sample_matching_index(family, rng) : family.identity_index();
  return d;
}

DrivenChoice resolve_driven_matching(const MirrorFamily& family, Direction v_prev,
                                     Direction vt_prev, std::optional<std::uint32_t> stored,
                                     const DrivingDraw& draw) {
  if (stored) return {*stored, Rule::kRevisit};
  if (!draw.in_T) return {family.identity_index(), Rule::kNoMirror};
  if (v_prev == vt_prev) return {draw.matching, Rule::kAgree};
  const Matching& base = family[draw.matching];
  if (!in_swap_domain(base, v_prev, vt_prev)) return {draw.matching, Rule::kBlocked};
  return {family.require_index(rule4_transform(base, v_prev, vt_prev)), Rule::kSwap};
}

void advance_driving(DrivingState& s, const DrivingDraw& draw, const MirrorFamily& family) {
  s.x += s.v;
  s.v = family[draw.matching](s.v);
  ++s.t;
  s.in_T_now = draw.in_T;
  s.m_now = draw.matching;
}

DrivingState step_driving(DrivingState s, double p, const MirrorFamily& family, CounterRng& rng) {
  advance_driving(s, draw_driving(family, p, rng), family);
  return s;
}

void RegenerationLog::push(std::int64_t t) {
  if (!times_.empty() && t <= times_.back()) {
    throw InvariantError("regeneration times must increase");
  }
  times_.push_back(t);
}

std::int64_t RegenerationLog::alpha(std::int64_t t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  return it == times_.begin() ? 0 : *std::prev(it);
}

QuenchedWalk::QuenchedWalk(const MirrorFamily& family, double p, WalkStart start,
                           bool regenerate, CounterRng& rng)
    : family_(&family),
      p_(p),
      start_(start),
      regenerate_(regenerate),
      env_(family.dim(), p, start.origin),
      x_(start.origin),
      v_(start.v0) {
  visit_quenched(env_, x_, 0, p_, family, rng);
  origin_in_T_ = env_.find(x_)->in_T;
}

StepRecord QuenchedWalk::step(CounterRng& rng) {
  StepRecord rec;
  rec.t = ++t_;
  x_ += v_;
  const SiteRecord* stored = env_.find(x_);
  rec.fresh = stored == nullptr;
  const std::uint32_t m = stored ? stored->matching : visit_quenched(env_, x_, t_, p_, *family_, rng);
  if (rec.fresh) {
    rec.in_T = env_.find(x_)->in_T;
    rec.rule = rec.in_T ? Rule::kAgree : Rule::kNoMirror;
  } else {
    rec.rule = Rule::kRevisit;
  }
  v_ = (*family_)[m](v_);
  rec.x = rec.xt = x_;
  rec.v = rec.vt = v_;
  rec.closed = x_ == start_.origin && v_ == start_.v0;
  if (rec.closed && regenerate_) {
    log_.push(t_);
    env_.reset();
    visit_quenched(env_, x_, t_, p_, *family_, rng);
  }
  return rec;
}

CoupledWalk::CoupledWalk(const MirrorFamily& family, double p, WalkStart start, bool regenerate,
                         const DrivingDraw& origin_draw)
    : family_(&family),
      p_(p),
      start_(start),
      regenerate_(regenerate),
      env_(family.dim(), p, start.origin),
      x_(start.origin),
      v_(start.v0) {
  driving_.x = start.origin;
  driving_.v = start.vt0;
  driving_.in_T_now = origin_draw.in_T;
  driving_.m_now = origin_draw.matching;
  env_.record_discovery(start.origin, origin_draw.matching, 0, origin_draw.in_T);
}

StepRecord CoupledWalk::step(const DrivingDraw& draw) {
  const Direction v_prev = v_;
  const Direction vt_prev = driving_.v;
  advance_driving(driving_, draw, *family_);
  x_ += v_prev;

  StepRecord rec;
  rec.t = driving_.t;
  rec.in_T = draw.in_T;
  std::optional<std::uint32_t> stored;
  if (const SiteRecord* r = env_.find(x_)) stored = r->matching;
  const DrivenChoice choice = resolve_driven_matching(*family_, v_prev, vt_prev, stored, draw);
  rec.fresh = !stored.has_value();
  rec.rule = choice.rule;
  if (rec.fresh) env_.record_discovery(x_, choice.matching, rec.t, draw.in_T);
  v_ = (*family_)[choice.matching](v_prev);

  rec.x = x_;
  rec.v = v_;
  rec.xt = driving_.x;
  rec.vt = driving_.v;
  rec.closed = x_ == start_.origin && v_ == start_.v0;
  if (rec.closed && regenerate_) {
    log_.push(rec.t);
    env_.reset();
    env_.record_discovery(start_.origin, draw.matching, rec.t, draw.in_T);
  }
  return rec;
}

std::string_view to_string(WalkKind kind) {
  switch (kind) {
    case WalkKind::kQuenched: return "quenched";
    case WalkKind::kDriving: return "driving";
    case WalkKind::kCoupled: return "coupled";
    case WalkKind::kRegenerated: return "regenerated";
  }
  return "?";
}

WalkKind parse_walk_kind(std::string_view name) {
  if (name == "quenched") return WalkKind::kQuenched;
  if (name == "driving") return WalkKind::kDriving;
  if (name == "coupled") return WalkKind::kCoupled;
  if (name == "regenerated") return WalkKind::kRegenerated;
  throw ConfigError("unknown walk kind '" + std::string(name) + "'");
}

std::vector<std::int64_t> SampleSchedule::resolve(std::int64_t horizon) const {
  std::vector<std::int64_t> out;
  switch (kind) {
    case Kind::kPowersOfTwo:
      out.push_back(0);
      for (std::int64_t t = 1; t < horizon; t *= 2) out.push_back(t);
      break;
    case Kind::kStride:
      if (stride < 1) throw ConfigError("sample stride must be positive");
      for (std::int64_t t = 0; t < horizon; t += stride) out.push_back(t);
      break;
    case Kind::kExplicit:
      for (auto t : times) {
        if (t >= 0 && t <= horizon) out.push_back(t);
      }
      break;
  }
  out.push_back(horizon);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void validate_walk_config(const WalkConfig& cfg) {
  if (cfg.dim < kMinDim || cfg.dim > kMaxDim) {
    throw ConfigError("dimension must lie in [2, 8], got " + std::to_string(cfg.dim));
  }
  if (!(cfg.p >= 0.0 && cfg.p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
  if (cfg.steps < 1) throw ConfigError("horizon must be at least 1");
  if (cfg.start.v0.axis() >= cfg.dim || cfg.start.vt0.axis() >= cfg.dim) {
    throw ConfigError("start velocity outside the lattice dimension");
  }
}

Trajectory record_trajectory(const WalkConfig& cfg, CounterRng& rng) {
  if (cfg.kind == WalkKind::kDriving) {
    throw ConfigError("record_trajectory needs a mirror walk, not the driving walk");
  }
  Trajectory traj;
  traj.dim = cfg.dim;
  traj.p = cfg.p;
  traj.kind = cfg.kind;
  traj.steps.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  StepRecord start;
  start.x = start.xt = cfg.start.origin;
  start.v = cfg.start.v0;
  start.vt = cfg.start.vt0;
  start.fresh = true;
  traj.steps.push_back(start);

  auto summary = run_walk(cfg, rng, [&](const StepRecord& rec) { traj.steps.push_back(rec); });
  traj.steps[0].in_T = summary.origin_in_T;
  traj.regenerations = summary.regenerations;
  return traj;
}

Trajectory planted_trajectory(int dim, double p,
                              std::span<const std::pair<Site, std::uint32_t>> planted,
                              WalkStart start, std::int64_t steps) {
  const MirrorFamily& family = mirror_family(dim);
  absl::flat_hash_map<Site, std::uint32_t> env;
  for (const auto& [x, m] : planted) {
    if (m >= family.size()) throw ConfigError("planted_trajectory: matching index out of range");
    env[x] = m;
  }
  absl::flat_hash_set<Site> visited{start.origin};
  Trajectory traj;
  traj.dim = dim;
  traj.p = p;
  traj.kind = WalkKind::kQuenched;
  StepRecord rec;
  rec.x = rec.xt = start.origin;
  rec.v = rec.vt = start.v0;
  rec.in_T = env.contains(start.origin);
  rec.fresh = true;
  traj.steps.push_back(rec);
  for (std::int64_t t = 1; t <= steps; ++t) {
    rec.t = t;
    rec.x += rec.v;
    rec.fresh = visited.insert(rec.x).second;
    const auto it = env.find(rec.x);
    rec.in_T = rec.fresh && it != env.end();
    rec.rule = rec.fresh ? (rec.in_T ? Rule::kAgree : Rule::kNoMirror) : Rule::kRevisit;
    if (it != env.end()) rec.v = family[it->second](rec.v);
    rec.xt = rec.x;
    rec.vt = rec.v;
    rec.closed = rec.x == start.origin && rec.v == start.v0;
    traj.steps.push_back(rec);
  }
  return traj;
}

PathSeries concatenate_walks(const PathSeries& first, const PathSeries& second) {
  if (first.empty() || second.empty()) throw UsageError("concatenate_walks: empty path");
  PathSeries out = first;
  const Site anchor = first.back();
  const Site base = second.front();
  for (std::size_t s = 1; s < second.size(); ++s) out.push_back(anchor + (second[s] - base));
  return out;
}

SignedPermutation SignedPermutation::identity(int dim) {
  SignedPermutation g;
  g.dim_ = dim;
  for (int j = 0; j < dim; ++j) {
    g.perm_[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(j);
    g.sign_[static_cast<std::size_t>(j)] = 1;
  }
  return g;
}

SignedPermutation SignedPermutation::random(int dim, CounterRng& rng) {
  SignedPermutation g = identity(dim);
  // Fisher-Yates, then independent signs.
  for (int j = dim - 1; j > 0; --j) {
    const auto k = rng.uniform_index(static_cast<std::uint64_t>(j) + 1);
    std::swap(g.perm_[static_cast<std::size_t>(j)], g.perm_[k]);
  }
  for (int j = 0; j < dim; ++j) {
    g.sign_[static_cast<std::size_t>(j)] = rng.bernoulli(0.5) ? 1 : -1;
  }
  return g;
}

Site SignedPermutation::apply(const Site& x) const {
  Site y;
  for (int j = 0; j < dim_; ++j) {
    const auto k = static_cast<std::size_t>(j);
    y.coords[perm_[k]] = sign_[k] * x.coords[k];
  }
  return y;
}

Direction SignedPermutation::apply(Direction v) const {
  const auto k = static_cast<std::size_t>(v.axis());
  return Direction::from_axis(perm_[k], sign_[k] * v.sign());
}

namespace {

PathSeries drive_from_tape(const MirrorFamily& family, double p, WalkStart start,
                           const DrivingDraw& origin_draw, std::span<const DrivingDraw> tape) {
  CoupledWalk walk(family, p, start, true, origin_draw);
  PathSeries path;
  path.reserve(tape.size() + 1);
  path.push_back(start.origin);
  for (const auto& draw : tape) path.push_back(walk.step(draw).x);
  return path;
}

Direction uniform_direction(int dim, CounterRng& rng) {
  return Direction(static_cast<std::uint8_t>(rng.uniform_index(static_cast<std::uint64_t>(2 * dim))));
}

}  // namespace

ConcatenationRun shared_driving_concatenation(int dim, double p, std::int64_t t1,
                                              std::int64_t t2, CounterRng& rng) {
  if (t1 < 0 || t2 < 0) throw ConfigError("concatenation lengths must be nonnegative");
  const MirrorFamily& family = mirror_family(dim);
  const auto total = static_cast<std::size_t>(t1 + t2);
  std::vector<DrivingDraw> tape(total);
  for (auto& d : tape) d = draw_driving(family, p, rng);

  // Driving velocity at t1, the start of the second segment's driving walk.
  DrivingState driving;
  for (std::int64_t s = 0; s < t1; ++s) advance_driving(driving, tape[static_cast<std::size_t>(s)], family);

  WalkStart whole;
  WalkStart first;
  first.v0 = uniform_direction(dim, rng);
  WalkStart second;
  second.v0 = uniform_direction(dim, rng);
  second.vt0 = driving.v;
  const DrivingDraw o_whole = draw_driving(family, p, rng);
  const DrivingDraw o_first = draw_driving(family, p, rng);
  const DrivingDraw o_second = draw_driving(family, p, rng);

  const std::span<const DrivingDraw> all(tape);
  ConcatenationRun run;
  run.walk = drive_from_tape(family, p, whole, o_whole, all);
  run.concatenated =
      concatenate_walks(drive_from_tape(family, p, first, o_first, all.first(static_cast<std::size_t>(t1))),
                        drive_from_tape(family, p, second, o_second, all.subspan(static_cast<std::size_t>(t1))));
  for (std::size_t s = 0; s < run.walk.size(); ++s) {
    run.max_distance = std::max(run.max_distance, linf_distance(run.walk[s], run.concatenated[s]));
  }
  return run;
}

}  // namespace mirrorlab
