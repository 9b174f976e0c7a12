#include <doctest.h>

#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

#include "mirrorlab/errors.hpp"
#include "mirrorlab/exact_oracle.hpp"
#include "mirrorlab/rng.hpp"
#include "mirrorlab/walks.hpp"

using namespace mirrorlab;

namespace {

Rational frac(int a, int b) { return Rational(a) / Rational(b); }

Site site(std::initializer_list<std::int64_t> c) {
  Site s;
  std::size_t i = 0;
  for (auto v : c) s.coords[i++] = v;
  return s;
}

}  // namespace

TEST_CASE("exact laws have mass exactly one") {
  for (int t = 1; t <= 5; ++t) {
    CHECK(exact_law_quenched(2, frac(3, 10), t).mass() == 1);
    CHECK(exact_law_driven(2, frac(3, 10), t).mass() == 1);
    CHECK(exact_law_driving(2, frac(3, 10), t).mass() == 1);
  }
  CHECK(exact_law_quenched(3, frac(1, 5), 3).mass() == 1);
}

TEST_CASE("p = 0 gives a point mass on the straight line") {
  const auto law = exact_law_quenched(3, Rational(0), 4);
  REQUIRE(law.entries.size() == 1);
  const auto& [key, w] = *law.entries.begin();
  CHECK(key.first == site({4, 0, 0}));
  CHECK(key.second == Direction::e1());
  CHECK(w == 1);
}

TEST_CASE("one-step law at d = 2") {
  // X(1) = e1; V(1) is the origin matching applied to e1: the identity with
  // weight 1 - p + p/3, each mirror turning e1 to +-e2 with weight p/3.
  const Rational p = frac(3, 10);
  const auto law = exact_law_quenched(2, p, 1);
  std::map<std::pair<Site, Direction>, Rational> want;
  want[{site({1, 0}), Direction::e1()}] = 1 - p + p / 3;
  want[{site({1, 0}), Direction::from_axis(1, 1)}] = p / 3;
  want[{site({1, 0}), Direction::from_axis(1, -1)}] = p / 3;
  CHECK(law.entries == want);
}

TEST_CASE("total variation") {
  const auto a = exact_law_quenched(2, frac(1, 4), 3);
  CHECK(total_variation(a, a) == 0);

  LawTable<Rational> x, y;
  x.horizon = y.horizon = 1;
  x.entries[{site({1, 0}), Direction::e1()}] = 1;
  y.entries[{site({0, 1}), Direction::from_axis(1, 1)}] = 1;
  CHECK(total_variation(x, y) == 1);

  y.horizon = 2;
  CHECK_THROWS_AS(total_variation(x, y), UsageError);
  y.horizon = 1;
  y.dim = 3;
  CHECK_THROWS_AS(total_variation(x, y), UsageError);
}

TEST_CASE("quenched and driven laws agree") {
  for (int t = 1; t <= 4; ++t) {
    const auto c = compare_quenched_driven(2, 3, 10, t, OracleMode::kRational);
    CHECK(c.exact_zero);
    CHECK(c.tv == 0.0);
    CHECK(c.quenched_support == c.driven_support);
  }
  const auto f = compare_quenched_driven(2, 3, 10, 5, OracleMode::kFloat);
  CHECK(f.tv <= 1e-12);
  CHECK(f.quenched_mass == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("driving law moments match the exact variance") {
  for (int d : {2, 3}) {
    const Rational p = d == 2 ? frac(3, 10) : frac(1, 5);
    for (int t = 1; t <= (d == 2 ? 6 : 4); ++t) {
      const auto law = exact_law_driving(d, p, t);
      for (int axis = 0; axis < d; ++axis) {
        const auto [m1, m2] = axis_moments(law, axis);
        CHECK(m1 == 0);
        CHECK(m2 == driving_variance_rational(d, p, t));
      }
    }
  }
  CHECK(driving_variance_rational(3, frac(1, 7), 1) == frac(1, 3));
}

TEST_CASE("horizon cap and parameter checks") {
  CHECK(oracle_horizon_cap(2) == 8);
  CHECK(oracle_horizon_cap(3) == 5);
  CHECK_THROWS_AS(exact_law_quenched(2, frac(1, 2), 9), ConfigError);
  CHECK_THROWS_AS(exact_law_quenched(4, frac(1, 2), 2), ConfigError);
  CHECK_THROWS_AS(exact_law_driven(2, frac(3, 2), 2), ConfigError);
  CHECK_THROWS_AS(compare_quenched_driven(3, 1, 5, 6, OracleMode::kRational), ConfigError);
}

TEST_CASE("simulated quenched walks follow the exact law (statistical)") {
  const int t = 5;
  const double p = 0.3;
  const auto law = exact_law_quenched(2, 0.3, t);
  WalkConfig cfg;
  cfg.dim = 2;
  cfg.p = p;
  cfg.steps = t;
  cfg.kind = WalkKind::kQuenched;
  cfg.schedule.kind = SampleSchedule::Kind::kExplicit;
  cfg.schedule.times = {t};

  // Final positions only; velocities are not part of the summary.
  std::map<Site, double> expected;
  for (const auto& [key, w] : law.entries) expected[key.first] += w;
  std::map<Site, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    CounterRng rng(derive_trial_seed(77, static_cast<std::uint64_t>(i)));
    const auto s = run_walk(cfg, rng);
    ++counts[s.samples.back()];
  }
  double chi2 = 0;
  int cells = 0;
  double pooled_e = 0, pooled_o = 0;
  for (const auto& [x, prob] : expected) {
    const double e = prob * n;
    const double o = counts.count(x) ? counts[x] : 0;
    if (e < 5) {
      pooled_e += e;
      pooled_o += o;
      continue;
    }
    chi2 += (o - e) * (o - e) / e;
    ++cells;
  }
  if (pooled_e > 0) {
    chi2 += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
    ++cells;
  }
  for (const auto& [x, c] : counts) CHECK(expected.count(x) == 1);
  boost::math::chi_squared dist(cells - 1);
  CHECK(chi2 <= boost::math::quantile(dist, 0.999));
}
