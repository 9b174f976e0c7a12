#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "mirrorlab/errors.hpp"
#include "mirrorlab/rng.hpp"
#include "mirrorlab/walks.hpp"

using namespace mirrorlab;

namespace {

Site site(std::initializer_list<std::int64_t> c) {
  Site s;
  std::size_t i = 0;
  for (auto v : c) s.coords[i++] = v;
  return s;
}

Direction dir(int axis, int sign) { return Direction::from_axis(axis, sign); }

std::uint32_t index_where(int dim, auto pred) {
  const MirrorFamily& fam = mirror_family(dim);
  for (std::uint32_t i = 0; i < fam.size(); ++i) {
    if (pred(fam[i])) return i;
  }
  FAIL("no matching member");
  return 0;
}

WalkConfig config(int dim, double p, std::int64_t steps, WalkKind kind) {
  WalkConfig c;
  c.dim = dim;
  c.p = p;
  c.steps = steps;
  c.kind = kind;
  return c;
}

std::vector<StepRecord> collect(const WalkConfig& cfg, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<StepRecord> out;
  run_walk(cfg, rng, [&](const StepRecord& r) { out.push_back(r); });
  return out;
}

}  // namespace

TEST_CASE("p = 0 walks are straight lines") {
  for (WalkKind kind : {WalkKind::kQuenched, WalkKind::kDriving, WalkKind::kCoupled}) {
    const auto steps = collect(config(3, 0.0, 50, kind), 1);
    REQUIRE(steps.size() == 50);
    for (const auto& r : steps) {
      CHECK(r.x == site({r.t, 0, 0}));
      CHECK(r.v == Direction::e1());
    }
  }
}

TEST_CASE("every walk kind is non-backtracking") {
  for (WalkKind kind : {WalkKind::kQuenched, WalkKind::kDriving, WalkKind::kCoupled, WalkKind::kRegenerated}) {
    for (int d : {2, 3, 4}) {
      CounterRng rng(derive_trial_seed(9, static_cast<std::uint64_t>(d)));
      const auto cfg = config(d, 0.4, 3000, kind);
      Direction prev = cfg.start.v0;
      Direction prev_t = cfg.start.vt0;
      bool ok = true;
      run_walk(cfg, rng, [&](const StepRecord& r) {
        ok = ok && r.v != -prev && r.vt != -prev_t;
        prev = r.v;
        prev_t = r.vt;
      });
      CHECK(ok);
    }
  }
}

TEST_CASE("driving turn rate is p(2d-2)/(2d-1) (statistical)") {
  const MirrorFamily& fam = mirror_family(3);
  CounterRng rng(12);
  DrivingState s;
  const int n = 1000000;
  int turns = 0;
  for (int i = 0; i < n; ++i) {
    const Direction before = s.v;
    s = step_driving(s, 0.1, fam, rng);
    turns += s.v != before ? 1 : 0;
  }
  const double rate = static_cast<double>(turns) / n;
  CHECK(std::abs(rate - 0.08) <= 4 * std::sqrt(0.08 * 0.92 / n));
  CHECK(s.t == n);
}

TEST_CASE("driving position uses the pre-update velocity") {
  const MirrorFamily& fam = mirror_family(2);
  DrivingState s;
  const std::uint32_t up = index_where(2, [](const Matching& m) { return m(dir(0, 1)) == dir(1, 1); });
  advance_driving(s, DrivingDraw{true, up}, fam);
  CHECK(s.x == site({1, 0}));
  CHECK(s.v == dir(1, 1));
  CHECK(s.in_T_now);
  advance_driving(s, DrivingDraw{false, fam.identity_index()}, fam);
  CHECK(s.x == site({1, 1}));
}

TEST_CASE("a planted diagonal mirror turns the quenched walk") {
  const std::uint32_t slash = index_where(2, [](const Matching& m) { return m(dir(0, 1)) == dir(1, 1); });
  const std::vector<std::pair<Site, std::uint32_t>> planted = {{site({1, 0}), slash}};
  const Trajectory tr = planted_trajectory(2, 1.0, planted, WalkStart{}, 3);
  CHECK(tr.steps[1].x == site({1, 0}));
  CHECK(tr.steps[1].v == dir(1, 1));
  CHECK(tr.steps[1].in_T);
  CHECK(tr.steps[3].x == site({1, 2}));
  CHECK_FALSE(tr.steps[2].in_T);
}

TEST_CASE("a quenched walk replays bit for bit against its dumped environment") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cfg = config(2, 0.35, 400, WalkKind::kQuenched);
    CounterRng rng(seed);
    std::vector<StepRecord> steps;
    std::string dump;
    run_walk(
        cfg, rng, [&](const StepRecord& r) { steps.push_back(r); },
        [&](const EnvironmentRecord* env) {
          std::ostringstream os;
          env->dump(os);
          dump = os.str();
        });
    std::vector<std::pair<Site, std::uint32_t>> planted;
    std::istringstream in(dump);
    std::int64_t x1, x2, first, in_t, gen;
    std::uint32_t m;
    while (in >> x1 >> x2 >> m >> first >> in_t >> gen) planted.emplace_back(site({x1, x2}), m);
    const Trajectory replay = planted_trajectory(2, 0.35, planted, cfg.start, cfg.steps);
    bool same = true;
    for (const auto& r : steps) {
      const auto& q = replay.steps[static_cast<std::size_t>(r.t)];
      same = same && q.x == r.x && q.v == r.v;
    }
    CHECK(same);
  }
}

TEST_CASE("revisits with the same incoming velocity leave the same way") {
  const auto cfg = config(2, 0.5, 5000, WalkKind::kQuenched);
  const auto steps = collect(cfg, 4);
  std::map<std::pair<Site, Direction>, Direction> seen;
  Direction prev = cfg.start.v0;
  bool ok = true;
  for (const auto& r : steps) {
    auto [it, inserted] = seen.try_emplace({r.x, prev}, r.v);
    if (!inserted) ok = ok && it->second == r.v;
    prev = r.v;
  }
  CHECK(ok);
}

TEST_CASE("coupled walk follows the driving walk until the first non-fresh step") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto steps = collect(config(3, 0.3, 300, WalkKind::kCoupled), seed);
    for (const auto& r : steps) {
      if (!r.fresh) break;
      REQUIRE(r.x == r.xt);
      REQUIRE(r.v == r.vt);
    }
  }
}

TEST_CASE("rule-4 steps re-couple the velocities; rule-3 steps do not") {
  int swaps = 0, blocked = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    for (const auto& r : collect(config(2, 0.6, 400, WalkKind::kCoupled), seed)) {
      if (r.rule == Rule::kSwap) {
        ++swaps;
        CHECK(r.v == r.vt);
        CHECK(r.in_T);
      }
      if (r.rule == Rule::kBlocked) {
        ++blocked;
        CHECK(r.in_T);
      }
      if (r.rule == Rule::kRevisit) CHECK_FALSE(r.fresh);
      if (r.rule == Rule::kNoMirror) CHECK_FALSE(r.in_T);
    }
  }
  CHECK(swaps > 0);
  CHECK(blocked > 0);
}

TEST_CASE("resolve_driven_matching case analysis") {
  const MirrorFamily& fam = mirror_family(2);
  const Direction e1 = dir(0, 1), e2 = dir(1, 1);
  const std::uint32_t any = 1;
  CHECK(resolve_driven_matching(fam, e1, e2, 2u, DrivingDraw{true, any}).rule == Rule::kRevisit);
  CHECK(resolve_driven_matching(fam, e1, e2, 2u, DrivingDraw{true, any}).matching == 2u);
  CHECK(resolve_driven_matching(fam, e1, e1, std::nullopt, DrivingDraw{true, any}).rule == Rule::kAgree);
  CHECK(resolve_driven_matching(fam, e1, e2, std::nullopt, DrivingDraw{false, fam.identity_index()}).rule ==
        Rule::kNoMirror);
  // Driving exit -e: blocked keeps the driving matching.
  const std::uint32_t back = index_where(2, [&](const Matching& m) { return m(e2) == -e1; });
  const auto blocked = resolve_driven_matching(fam, e1, e2, std::nullopt, DrivingDraw{true, back});
  CHECK(blocked.rule == Rule::kBlocked);
  CHECK(blocked.matching == back);
  const auto swapped = resolve_driven_matching(fam, e1, e2, std::nullopt, DrivingDraw{true, fam.identity_index()});
  CHECK(swapped.rule == Rule::kSwap);
  CHECK(fam[swapped.matching](e1) == e2);
}

TEST_CASE("regeneration returns to the generation origin with the start velocity") {
  int closings = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto cfg = config(2, 0.5, 2000, WalkKind::kRegenerated);
    CounterRng rng(seed);
    std::vector<std::int64_t> closed_at;
    const auto summary = run_walk(cfg, rng, [&](const StepRecord& r) {
      if (r.closed) {
        CHECK(r.x == cfg.start.origin);
        CHECK(r.v == cfg.start.v0);
        closed_at.push_back(r.t);
      }
    });
    const auto regen = summary.regenerations.times();
    CHECK(std::vector<std::int64_t>(regen.begin(), regen.end()) == closed_at);
    CHECK(std::is_sorted(regen.begin(), regen.end()));
    closings += static_cast<int>(regen.size());
    if (!regen.empty()) {
      CHECK(summary.regenerations.alpha(regen.front() - 1) == 0);
      CHECK(summary.regenerations.alpha(regen.front()) == regen.front());
      CHECK(summary.regenerations.alpha(regen.back() + 5) == regen.back());
    }
  }
  CHECK(closings > 0);
}

TEST_CASE("without a closing the regenerated walk equals the plain coupled walk") {
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = collect(config(3, 0.1, 500, WalkKind::kCoupled), seed);
    const auto b = collect(config(3, 0.1, 500, WalkKind::kRegenerated), seed);
    bool closed = false;
    for (const auto& r : a) closed = closed || r.closed;
    if (closed) continue;
    ++compared;
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i].x == b[i].x && a[i].v == b[i].v;
    CHECK(same);
  }
  CHECK(compared > 50);
}

TEST_CASE("stop_at_closing halts the plain walks") {
  auto cfg = config(2, 0.5, 100000, WalkKind::kQuenched);
  cfg.stop_at_closing = true;
  CounterRng rng(3);
  const auto s = run_walk(cfg, rng);
  if (s.first_closing) CHECK(s.horizon == *s.first_closing);
}

TEST_CASE("sample schedules") {
  SampleSchedule pow2;
  CHECK(pow2.resolve(10) == std::vector<std::int64_t>{0, 1, 2, 4, 8, 10});
  CHECK(pow2.resolve(8) == std::vector<std::int64_t>{0, 1, 2, 4, 8});
  SampleSchedule stride{SampleSchedule::Kind::kStride, 3, {}};
  CHECK(stride.resolve(7) == std::vector<std::int64_t>{0, 3, 6, 7});
  SampleSchedule list{SampleSchedule::Kind::kExplicit, 1, {5, 2, 2}};
  CHECK(list.resolve(6) == std::vector<std::int64_t>{2, 5, 6});

  const auto cfg = config(2, 0.2, 10, WalkKind::kCoupled);
  CounterRng rng(1);
  const auto s = run_walk(cfg, rng);
  CHECK(s.sample_times == std::vector<std::int64_t>{0, 1, 2, 4, 8, 10});
  CHECK(s.samples.front() == Site::origin());
}

TEST_CASE("walk configuration validation") {
  CHECK_THROWS_AS(validate_walk_config(config(1, 0.1, 10, WalkKind::kCoupled)), ConfigError);
  CHECK_THROWS_AS(validate_walk_config(config(9, 0.1, 10, WalkKind::kCoupled)), ConfigError);
  CHECK_THROWS_AS(validate_walk_config(config(2, 1.5, 10, WalkKind::kCoupled)), ConfigError);
  CHECK_THROWS_AS(validate_walk_config(config(2, 0.1, 0, WalkKind::kCoupled)), ConfigError);
  CHECK(parse_walk_kind("regenerated") == WalkKind::kRegenerated);
  CHECK(to_string(WalkKind::kQuenched) == "quenched");
  CHECK_THROWS_AS(parse_walk_kind("teleport"), ConfigError);
}

TEST_CASE("record_trajectory matches the streamed run") {
  const auto cfg = config(3, 0.2, 300, WalkKind::kRegenerated);
  CounterRng a(77), b(77);
  const Trajectory tr = record_trajectory(cfg, a);
  const auto steps = collect(cfg, 77);
  REQUIRE(tr.horizon() == 300);
  CHECK(tr.steps[0].x == Site::origin());
  for (const auto& r : steps) CHECK(tr.steps[static_cast<std::size_t>(r.t)].x == r.x);
  (void)b;
}

TEST_CASE("concatenation") {
  PathSeries line;
  for (int t = 0; t <= 6; ++t) line.push_back(site({t, 0}));
  CHECK(concatenate_walks(line, PathSeries{Site::origin()}) == line);
  const PathSeries head(line.begin(), line.begin() + 4);
  const PathSeries tail(line.begin(), line.begin() + 4);
  const PathSeries c = concatenate_walks(head, tail);
  REQUIRE(c.size() == 7);
  for (int t = 0; t <= 6; ++t) CHECK(c[static_cast<std::size_t>(t)] == site({t, 0}));

  CounterRng rng(5);
  const ConcatenationRun run = shared_driving_concatenation(3, 0.1, 200, 300, rng);
  CHECK(run.walk.size() == 501);
  CHECK(run.concatenated.size() == 501);
  CHECK(run.max_distance >= 0);
  CHECK(run.max_distance <= 1000);
}

TEST_CASE("signed permutations are isometries and hit every map") {
  CounterRng rng(6);
  std::set<std::vector<std::int64_t>> images;
  const Site probe = site({1, 2, 3});
  for (int i = 0; i < 5000; ++i) {
    const SignedPermutation g = SignedPermutation::random(3, rng);
    const Site y = g.apply(probe);
    CHECK(squared_l2_norm(y) == 14);
    CHECK(g.apply(Direction::e1()).axis() >= 0);
    images.insert({y.coords[0], y.coords[1], y.coords[2]});
    Site x = probe;
    x += Direction::e1();
    CHECK(g.apply(x) == g.apply(probe) + g.apply(Direction::e1()));
  }
  CHECK(images.size() == 48);
  CHECK(SignedPermutation::identity(3).apply(probe) == probe);
}

TEST_CASE("quenched and coupled endpoint laws agree (chi-square, statistical)") {
  const int n = 40000;
  std::map<std::pair<std::int64_t, std::int64_t>, std::array<std::int64_t, 2>> hist;
  for (int k = 0; k < 2; ++k) {
    const auto cfg = config(2, 0.3, 30, k == 0 ? WalkKind::kQuenched : WalkKind::kCoupled);
    for (int i = 0; i < n; ++i) {
      CounterRng rng(derive_trial_seed(1000 + static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)));
      const auto s = run_walk(cfg, rng);
      const Site& x = s.samples.back();
      ++hist[{x.coords[0], x.coords[1]}][static_cast<std::size_t>(k)];
    }
  }
  // Pool sparse cells so every bin carries at least 10 observations in total.
  std::vector<std::array<std::int64_t, 2>> bins;
  std::array<std::int64_t, 2> pool{0, 0};
  for (const auto& [key, c] : hist) {
    if (c[0] + c[1] >= 10) {
      bins.push_back(c);
    } else {
      pool[0] += c[0];
      pool[1] += c[1];
    }
  }
  if (pool[0] + pool[1] > 0) bins.push_back(pool);
  double chi2 = 0.0;
  for (const auto& b : bins) {
    const double diff = static_cast<double>(b[0] - b[1]);
    chi2 += diff * diff / static_cast<double>(b[0] + b[1]);
  }
  const boost::math::chi_squared dist(static_cast<double>(bins.size() - 1));
  CHECK(chi2 < boost::math::quantile(dist, 0.999));
}
