#include <doctest.h>

#include <cmath>
#include <vector>

#include "mirrorlab/analytics.hpp"
#include "mirrorlab/errors.hpp"
#include "mirrorlab/rng.hpp"
#include "mirrorlab/walks.hpp"

using namespace mirrorlab;

namespace {

// Direct summation: (t + 2 sum_{0 <= s' < s <= t-1} rho^(s - s')) / d.
double double_sum_variance(int d, double p, std::int64_t t) {
  const double rho = 1.0 - p * (2.0 * d - 2.0) / (2.0 * d - 1.0);
  double sum = 0.0;
  for (std::int64_t s = 0; s < t; ++s) {
    for (std::int64_t sp = 0; sp < s; ++sp) sum += std::pow(rho, static_cast<double>(s - sp));
  }
  return (static_cast<double>(t) + 2.0 * sum) / d;
}

MonteCarlo mc(std::int64_t trials, std::uint64_t seed, int threads = 1) { return {trials, seed, threads}; }

Site site(std::initializer_list<std::int64_t> c) {
  Site s;
  std::size_t i = 0;
  for (auto v : c) s.coords[i++] = v;
  return s;
}

}  // namespace

TEST_CASE("moments: streaming, merging and standard error") {
  Moments a, b, all;
  const std::vector<double> xs = {1, 4, 2, 8, 5, 7, 3, 3, 9};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    (i < 4 ? a : b).add(xs[i]);
    all.add(xs[i]);
  }
  a.merge(b);
  CHECK(a.n() == all.n());
  CHECK(a.mean() == doctest::Approx(all.mean()).epsilon(1e-14));
  CHECK(a.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  CHECK(all.variance() == doctest::Approx(ss / (xs.size() - 1)));

  // Delete-one jackknife of the mean, computed literally.
  double jk_mean = 0;
  std::vector<double> loo;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    loo.push_back((mean * xs.size() - xs[i]) / (xs.size() - 1));
    jk_mean += loo.back();
  }
  jk_mean /= xs.size();
  double jk = 0;
  for (double v : loo) jk += (v - jk_mean) * (v - jk_mean);
  jk *= static_cast<double>(xs.size() - 1) / xs.size();
  CHECK(all.std_error() == doctest::Approx(std::sqrt(jk)).epsilon(1e-12));

  Moments same;
  for (int i = 0; i < 10; ++i) same.add(2.5);
  CHECK(same.std_error() == 0.0);
  CHECK(EstimateWithCI{1.0, 0.1, 10}.within(1.35, 4));
  CHECK_FALSE(EstimateWithCI{1.0, 0.1, 10}.within(1.5, 4));
}

TEST_CASE("driving variance closed form against direct summation") {
  double worst = 0;
  for (int d : {2, 3, 4}) {
    for (double p : {0.5, 0.1, 0.01}) {
      for (std::int64_t t = 1; t <= 200; ++t) {
        const double want = double_sum_variance(d, p, t);
        worst = std::max(worst, std::abs(driving_variance_closed_form(d, p, t) - want) / want);
      }
      CHECK(driving_variance_closed_form(d, p, 1) == doctest::Approx(1.0 / d).epsilon(1e-12));
    }
  }
  CHECK(worst <= 1e-10);
  CHECK(driving_variance_closed_form(3, 0.0, 7) == doctest::Approx(49.0 / 3));
  CHECK(driving_variance_closed_form(3, 0.2, 0) == 0.0);
}

TEST_CASE("driving variance approaches its diffusive constant") {
  const int d = 4;
  const double target = (2.0 * d - 1) / (d * (d - 1.0));
  CHECK(target == doctest::Approx(7.0 / 12));
  for (double p : {0.1, 0.05, 0.02}) {
    const std::int64_t t = static_cast<std::int64_t>(1000 / p);
    const double v = p * driving_variance_closed_form(d, p, t) / static_cast<double>(t);
    CHECK(std::abs(v - target) <= 2.0 * (p + 1.0 / (p * static_cast<double>(t))));
  }
}

TEST_CASE("formula constants") {
  CHECK(driving_rho(3, 0.1) == doctest::Approx(0.92));
  CHECK(driving_rho(2, 1.0) == doctest::Approx(1.0 / 3));
  CHECK(diffusion_target(4) == doctest::Approx(7.0 / 3));
  CHECK(diffusion_target(3) == doctest::Approx(2.5));
  CHECK(markov_coupling_reference(0.02, 50) == doctest::Approx(0.1992));
  CHECK(markov_coupling_reference(0.0, 50) == 0.0);
  CHECK(velocity_dot(Direction::e1(), Direction::e1()) == 1);
  CHECK(velocity_dot(Direction::e1(), -Direction::e1()) == -1);
  CHECK(velocity_dot(Direction::e1(), Direction::from_axis(1, 1)) == 0);
}

TEST_CASE("Markov reference is 2p E(1 + Bin(T, p))^2") {
  for (double p : {0.02, 0.1, 0.3}) {
    for (std::int64_t T : {1, 10, 50}) {
      // Binomial pmf by recursion.
      double pmf = std::pow(1 - p, static_cast<double>(T));
      double e = 0;
      for (std::int64_t k = 0; k <= T; ++k) {
        e += pmf * (1.0 + k) * (1.0 + k);
        pmf *= (T - k) / (k + 1.0) * p / (1 - p);
      }
      CHECK(markov_coupling_reference(p, T) == doctest::Approx(2 * p * e).epsilon(1e-12));
    }
  }
}

TEST_CASE("msd estimate") {
  std::vector<TrajectorySummary> runs(3);
  for (auto& r : runs) {
    r.sample_times = {0, 5};
    r.samples = {Site::origin(), site({3, 4})};
  }
  const MsdSeries s = msd_estimate(runs, 2);
  CHECK(s.msd[1].mean() == 25.0);
  CHECK(s.msd[1].std_error() == 0.0);
  CHECK(s.coord_mean[1][0].mean() == 3.0);
  CHECK(s.coord_second[1][1].mean() == 16.0);
  CHECK_THROWS_AS(msd_estimate(std::span<const TrajectorySummary>(runs.data(), 1), 2), UsageError);
  runs[2].sample_times = {0, 6};
  CHECK_THROWS_AS(msd_estimate(runs, 2), UsageError);
}

TEST_CASE("p = 0 is ballistic") {
  const std::vector<std::int64_t> times = {1, 10, 100};
  const MsdSeries s = driving_msd(3, 0.0, times, mc(20, 1));
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK(s.msd[i].mean() == static_cast<double>(times[i] * times[i]));
  }
  const CouplingEstimate c = coupling_agreement(3, 0.0, 100, mc(50, 2));
  CHECK(c.agreement.value == 1.0);
}

TEST_CASE("driving msd matches the closed form (statistical, 3 SE)") {
  const std::vector<std::int64_t> times = {1, 5, 20, 80, 300};
  const MsdSeries s = driving_msd(3, 0.1, times, mc(40000, 17, 2));
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double cf = 3 * driving_variance_closed_form(3, 0.1, times[i]);
    CHECK(std::abs(s.msd[i].mean() - cf) <= 3 * s.msd[i].std_error() + 1e-12);
  }
}

TEST_CASE("velocity autocorrelation (statistical)") {
  const auto ac = driving_autocorrelation(3, 0.1, 10, mc(100000, 5));
  CHECK(ac[0].value == 1.0);
  CHECK(ac[10].within(std::pow(0.92, 10), 4));
  CHECK(std::pow(0.92, 10) == doctest::Approx(0.4344).epsilon(1e-4));
  const auto ac1 = driving_autocorrelation(2, 1.0, 1, mc(100000, 6));
  CHECK(ac1[1].within(1.0 / 3, 4));

  std::vector<VelocitySeries> one = {{Direction::e1(), Direction::e1(), -Direction::e1()}};
  const auto tiny = velocity_autocorrelation(one, 2);
  CHECK(tiny[1].value == 1.0);
  CHECK(tiny[2].value == -1.0);
}

TEST_CASE("estimators are deterministic across thread counts") {
  const DiffusionEstimate a = diffusion_constant_estimate(3, 0.1, 300, mc(200, 9, 1));
  const DiffusionEstimate b = diffusion_constant_estimate(3, 0.1, 300, mc(200, 9, 4));
  CHECK(a.estimate.value == b.estimate.value);
  CHECK(a.estimate.std_error == b.estimate.std_error);
  const auto ca = coupling_agreement(3, 0.2, 100, mc(300, 4, 1));
  const auto cb = coupling_agreement(3, 0.2, 100, mc(300, 4, 3));
  CHECK(ca.agreement.value == cb.agreement.value);
}

TEST_CASE("re-coupling rate (statistical)") {
  const RecouplingEstimate r = recoupling_rate(3, 0.3, 400, mc(3000, 12, 2));
  REQUIRE(r.rate.n > 100);
  CHECK(r.reference == doctest::Approx(0.8));
  CHECK(r.rate.value >= r.reference - 4 * r.rate.std_error);
}

TEST_CASE("isotropic endpoints have symmetric moments (statistical)") {
  const MsdSeries s = isotropic_endpoint(3, 0.2, 200, mc(6000, 8, 2));
  const auto& m = s.coord_mean.back();
  const auto& q = s.coord_second.back();
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(m[j].mean()) <= 4 * m[j].std_error());
    for (int k = 0; k < j; ++k) {
      CHECK(std::abs(q[j].mean() - q[k].mean()) <= 4 * std::hypot(q[j].std_error(), q[k].std_error()));
    }
  }
}

TEST_CASE("closing probability") {
  const ClosingEstimate c = closing_probability(2, 0.5, 2000, mc(300, 3));
  CHECK(c.reference == doctest::Approx(std::cbrt(0.5)));
  CHECK(c.closed.value > 0.0);
  CHECK(c.closed.value <= 1.0);
}

TEST_CASE("H1/H2 audit is vacuous where the bounds exceed one") {
  WalkConfig cfg;
  cfg.dim = 2;
  cfg.p = 0.1;
  cfg.steps = 64;
  cfg.kind = WalkKind::kRegenerated;
  std::vector<TrajectorySummary> runs;
  for (int i = 0; i < 200; ++i) {
    CounterRng rng(derive_trial_seed(1, static_cast<std::uint64_t>(i)));
    runs.push_back(run_walk(cfg, rng));
  }
  const AuditTable a = h1_h2_audit(runs, 2, 0.1);
  REQUIRE_FALSE(a.h2.empty());
  for (const auto& r : a.h2) {
    // The threshold exceeds t - s for every pair at this horizon.
    CHECK(r.vacuous);
    CHECK(r.hits == 0);
    CHECK_FALSE(r.flagged);
  }
  for (const auto& r : a.h1) {
    if (r.bound >= 1.0) CHECK(r.vacuous);
    CHECK(r.empirical <= 1.0);
  }
  CHECK(a.flagged == 0);
}

TEST_CASE("ball probability profile") {
  std::vector<Site> pts = {site({0, 0}), site({1, 0}), site({5, 5}), site({-3, 2})};
  const std::vector<std::int64_t> huge = {1000};
  const auto rows = ball_probability_profile(pts, 2, 1, huge);
  CHECK(rows[0].sup_probability == 1.0);

  const std::vector<std::int64_t> radii = {1, 2, 3};
  const auto base = ball_probability_profile(pts, 2, 4, radii);
  std::vector<Site> shifted;
  for (const auto& x : pts) shifted.push_back(x + site({7, -11}));
  const auto moved = ball_probability_profile(shifted, 2, 4, std::vector<std::int64_t>{1});
  CHECK(moved[0].sup_probability == base[0].sup_probability);
  CHECK(base[0].reference == doctest::Approx(1.0 / 4));
  CHECK(base[0].ratio == doctest::Approx(base[0].sup_probability / base[0].reference));
  CHECK_THROWS_AS(ball_probability_profile(std::vector<Site>{}, 2, 4, radii), UsageError);
  CHECK_THROWS_AS(ball_probability_profile(pts, 2, 4, std::vector<std::int64_t>{0}), UsageError);
}

TEST_CASE("segment sums are reproducible") {
  const auto a = segment_sum_endpoints(3, 0.5, 4, 8, mc(500, 2, 1));
  const auto b = segment_sum_endpoints(3, 0.5, 4, 8, mc(500, 2, 3));
  CHECK(a == b);
  for (const auto& x : a) CHECK(linf_norm(x) <= 32);
}
