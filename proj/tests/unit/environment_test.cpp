#include <doctest.h>

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "mirrorlab/environment.hpp"
#include "mirrorlab/errors.hpp"
#include "mirrorlab/lattice.hpp"
#include "mirrorlab/rng.hpp"

using namespace mirrorlab;

namespace {

Site site(std::initializer_list<std::int64_t> c) {
  Site s;
  std::size_t i = 0;
  for (auto v : c) s.coords[i++] = v;
  return s;
}

// Linear-scan oracles.
std::optional<std::int64_t> scan_ray(const std::vector<Site>& ms, const Site& x, Direction u,
                                     std::int64_t max_r) {
  std::optional<std::int64_t> best;
  for (const auto& y : ms) {
    for (std::int64_t r = 0; r <= max_r; ++r) {
      if (y.shifted(u, r) == x) {
        if (!best || r < *best) best = r;
        break;
      }
    }
  }
  return best;
}

std::int64_t scan_box(const std::vector<Site>& ms, const Site& c, std::int64_t r) {
  std::int64_t n = 0;
  for (const auto& y : ms) n += linf_distance(y, c) <= r ? 1 : 0;
  return n;
}

Site random_site(CounterRng& rng, int dim, std::int64_t spread) {
  Site s;
  for (int j = 0; j < dim; ++j) {
    s.coords[static_cast<std::size_t>(j)] =
        static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(2 * spread + 1))) - spread;
  }
  return s;
}

}  // namespace

TEST_CASE("kinetic cell side") {
  CHECK(kinetic_cell_side(0.1) == 10);
  CHECK(kinetic_cell_side(0.3) == 4);
  CHECK(kinetic_cell_side(1.0) == 1);
  CHECK(kinetic_cell_side(0.0) == 1024);
}

TEST_CASE("ray and box queries on the origin alone") {
  MirrorIndex idx(3, 10);
  idx.insert(Site::origin());
  const Site x = site({5, 0, 0});
  CHECK(idx.ray_query(x, Direction::e1(), 10) == 5);
  CHECK_FALSE(idx.ray_query(x, Direction::e1(), 4).has_value());
  CHECK_FALSE(idx.ray_query(x, -Direction::e1(), 10).has_value());
  CHECK(idx.ray_query(Site::origin(), Direction::from_axis(2, -1), 0) == 0);
  CHECK(idx.box_count(Site::origin(), 0) == 1);
  CHECK(idx.box_count(x, 4) == 0);
  CHECK(idx.box_count(x, 5) == 1);
  CHECK(idx.max_distance(x) == 5);
  CHECK_FALSE(idx.insert(Site::origin()));
}

TEST_CASE("ray and box queries agree with linear scans on random sets") {
  CounterRng rng(2024);
  for (int instance = 0; instance < 1000; ++instance) {
    const int dim = 2 + static_cast<int>(rng.uniform_index(3));
    const std::int64_t spread = 3 + static_cast<std::int64_t>(rng.uniform_index(30));
    const std::int64_t cell = 1 + static_cast<std::int64_t>(rng.uniform_index(12));
    const std::size_t n = 1 + rng.uniform_index(instance < 20 ? 1000 : 120);
    MirrorIndex idx(dim, cell);
    std::vector<Site> ms;
    for (std::size_t i = 0; i < n; ++i) {
      const Site s = random_site(rng, dim, spread);
      if (idx.insert(s)) ms.push_back(s);
    }
    REQUIRE(idx.size() == ms.size());
    for (int q = 0; q < 8; ++q) {
      const Site x = random_site(rng, dim, spread + 2);
      const Direction u(static_cast<std::uint8_t>(rng.uniform_index(static_cast<std::uint64_t>(2 * dim))));
      const auto max_r = static_cast<std::int64_t>(rng.uniform_index(2 * spread + 4));
      CHECK(idx.ray_query(x, u, max_r) == scan_ray(ms, x, u, max_r));
      const auto r = static_cast<std::int64_t>(rng.uniform_index(2 * spread));
      CHECK(idx.box_count(x, r) == scan_box(ms, x, r));
      std::int64_t far = -1;
      for (const auto& y : ms) far = std::max(far, linf_distance(x, y));
      CHECK(idx.max_distance(x) == far);
    }
    if (instance % 50 == 0) CHECK(idx.audit());
  }
}

TEST_CASE("record_discovery maintains M") {
  EnvironmentRecord env(2, 0.1);
  CHECK(env.mirrors().size() == 1);
  CHECK(env.mirrors().contains(Site::origin()));

  env.record_discovery(site({1, 0}), 0, 1, false);
  CHECK(env.visited_count() == 1);
  CHECK(env.mirrors().size() == 1);

  env.record_discovery(site({2, 0}), 1, 2, true);
  CHECK(env.visited_count() == 2);
  CHECK(env.mirrors().size() == 2);
  CHECK(env.find(site({2, 0}))->first_visit == 2);
  CHECK(env.find(site({2, 0}))->in_T);

  CHECK_THROWS_AS(env.record_discovery(site({2, 0}), 1, 3, true), InvariantError);
  CHECK(env.mirrors().audit());

  std::ostringstream os;
  env.dump(os);
  CHECK(os.str() == "1\t0\t0\t1\t0\t0\n2\t0\t1\t2\t1\t0\n");
}

TEST_CASE("reset clears the generation and re-inserts the origin") {
  EnvironmentRecord env(3, 0.2);
  for (int i = 1; i <= 20; ++i) env.record_discovery(site({i, 0, 0}), 0, i, i % 2 == 0);
  const auto g = env.generation();
  env.reset();
  CHECK(env.generation() == g + 1);
  for (int i = 1; i <= 20; ++i) CHECK_FALSE(env.is_visited(site({i, 0, 0})));
  CHECK(env.mirrors().size() == 1);
  CHECK(env.box_count(Site::origin(), 1000000) == 1);
  env.reset();
  CHECK(env.generation() == g + 2);
}

TEST_CASE("visit_quenched at p = 0 is always the identity") {
  const MirrorFamily& fam = mirror_family(2);
  EnvironmentRecord env(2, 0.0);
  CounterRng rng(1);
  for (int i = 1; i <= 100; ++i) {
    CHECK(visit_quenched(env, site({i, 0}), i, 0.0, fam, rng) == fam.identity_index());
  }
  CHECK(env.mirrors().size() == 1);
}

TEST_CASE("visit_quenched at p = 1 is uniform on M_2 (statistical)") {
  const MirrorFamily& fam = mirror_family(2);
  EnvironmentRecord env(2, 1.0);
  CounterRng rng(3);
  const int n = 100000;
  int identity = 0;
  for (int i = 0; i < n; ++i) {
    identity += visit_quenched(env, site({i, 7}), i, 1.0, fam, rng) == fam.identity_index() ? 1 : 0;
  }
  const double freq = static_cast<double>(identity) / n;
  CHECK(std::abs(freq - 1.0 / 3) <= 4 * std::sqrt((1.0 / 3) * (2.0 / 3) / n));
  CHECK(env.mirrors().size() == static_cast<std::size_t>(n + 1));
}

TEST_CASE("revisits return the stored matching without drawing") {
  const MirrorFamily& fam = mirror_family(3);
  EnvironmentRecord env(3, 0.7);
  CounterRng rng(11);
  const Site x = site({4, -2, 1});
  const auto first = visit_quenched(env, x, 1, 0.7, fam, rng);
  const auto counter = rng.counter();
  for (int i = 0; i < 100; ++i) CHECK(visit_quenched(env, x, 2 + i, 0.7, fam, rng) == first);
  CHECK(rng.counter() == counter);
  CHECK(env.visited_count() <= 2);
}

TEST_CASE("net identity probability is 1 - p + p/|M| (statistical)") {
  const MirrorFamily& fam = mirror_family(2);
  const double p = 0.4;
  EnvironmentRecord env(2, p);
  CounterRng rng(8);
  const int n = 100000;
  int identity = 0;
  for (int i = 0; i < n; ++i) identity += visit_quenched(env, site({i, 0}), i, p, fam, rng) == fam.identity_index();
  const double target = 1 - p + p / 3;
  CHECK(std::abs(static_cast<double>(identity) / n - target) <= 4 * std::sqrt(target * (1 - target) / n));
}

TEST_CASE("environments across a reset are independent (statistical)") {
  const MirrorFamily& fam = mirror_family(2);
  const double p = 0.5;
  EnvironmentRecord env(2, p);
  CounterRng rng(21);
  const Site x = site({3, 3});
  const int n = 10000;
  double sa = 0, sb = 0, sab = 0;
  for (int i = 0; i < n; ++i) {
    const double a = visit_quenched(env, x, 1, p, fam, rng) != fam.identity_index();
    env.reset();
    const double b = visit_quenched(env, x, 1, p, fam, rng) != fam.identity_index();
    env.reset();
    sa += a;
    sb += b;
    sab += a * b;
  }
  const double ma = sa / n, mb = sb / n;
  const double cov = sab / n - ma * mb;
  // Under independence cov has standard deviation about sqrt(var_a var_b / n).
  const double sd = std::sqrt(ma * (1 - ma) * mb * (1 - mb) / n);
  CHECK(std::abs(cov) <= 4 * sd);
}
