#include "mirrorlab/analytics.hpp"

#include <algorithm>
#include <cmath>

#include <absl/container/flat_hash_map.h>
#include <boost/math/distributions/binomial.hpp>

#include "mirrorlab/errors.hpp"
#include "mirrorlab/parallel.hpp"
#include "mirrorlab/rng.hpp"

namespace mirrorlab {

namespace {

constexpr double kEps = 0.01;

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

CounterRng trial_rng(const MonteCarlo& mc, std::int64_t id) {
  return CounterRng(derive_trial_seed(mc.master_seed, static_cast<std::uint64_t>(id)));
}

// W*: the whole sampled path composed with a uniform signed axis permutation.
TrajectorySummary isotropized(TrajectorySummary run, int dim, CounterRng& rng) {
  const SignedPermutation g = SignedPermutation::random(dim, rng);
  for (auto& x : run.samples) x = g.apply(x);
  run.final_velocity = g.apply(run.final_velocity);
  return run;
}

void check_trials(const MonteCarlo& mc) {
  if (mc.trials < 1) throw ConfigError("trials must be at least 1");
}

double binomial_upper_tail(std::int64_t n, double q, std::int64_t hits) {
  if (hits <= 0) return 1.0;
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return 1.0;
  boost::math::binomial_distribution<double> dist(static_cast<double>(n), q);
  return boost::math::cdf(boost::math::complement(dist, static_cast<double>(hits - 1)));
}

EstimateWithCI bernoulli_estimate(std::int64_t hits, std::int64_t n) {
  Moments m;
  for (std::int64_t i = 0; i < n; ++i) m.add(i < hits ? 1.0 : 0.0);
  return m.estimate();
}

}  // namespace

bool EstimateWithCI::within(double target, double k) const {
  return std::abs(value - target) <= k * std_error;
}

void Moments::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void Moments::merge(const Moments& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double delta = other.mean_ - mean_;
  const double n = na + nb;
  mean_ += delta * nb / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  n_ += other.n_;
}

double Moments::variance() const {
  return n_ < 2 ? 0.0 : std::max(0.0, m2_ / static_cast<double>(n_ - 1));
}

double Moments::std_error() const {
  return n_ < 2 ? 0.0 : std::sqrt(variance() / static_cast<double>(n_));
}

double driving_rho(int dim, double p) {
  return 1.0 - p * (2.0 * dim - 2.0) / (2.0 * dim - 1.0);
}

double driving_variance_closed_form(int dim, double p, std::int64_t t) {
  if (dim < 2) throw ConfigError("driving_variance_closed_form: d must be at least 2");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("driving_variance_closed_form: p outside [0, 1]");
  if (t < 0) throw ConfigError("driving_variance_closed_form: negative time");
  const double tt = static_cast<double>(t);
  if (p == 0.0) return tt * tt / dim;
  const double rho = driving_rho(dim, p);
  const double q = 1.0 - rho;
  // 1 - rho^t without cancellation for small q.
  const double one_minus_pow = -std::expm1(tt * std::log1p(-q));
  return ((1.0 + rho) / q * tt - 2.0 * rho * one_minus_pow / (q * q)) / dim;
}

double diffusion_target(int dim) { return (2.0 * dim - 1.0) / (dim - 1.0); }

double markov_coupling_reference(double p, std::int64_t horizon) {
  const double T = static_cast<double>(horizon);
  return 2.0 * p * (1.0 + 3.0 * p * T - p * p * T + p * p * T * T);
}

int velocity_dot(Direction a, Direction b) {
  return a.axis() == b.axis() ? a.sign() * b.sign() : 0;
}

MsdSeries msd_estimate(std::span<const TrajectorySummary> runs, int dim) {
  if (runs.size() < 2) throw UsageError("msd_estimate: need at least 2 trials");
  MsdSeries out;
  out.dim = dim;
  out.times = runs.front().sample_times;
  const std::size_t k = out.times.size();
  out.msd.assign(k, {});
  out.coord_mean.assign(k, std::vector<Moments>(sz(dim)));
  out.coord_second.assign(k, std::vector<Moments>(sz(dim)));
  for (const auto& run : runs) {
    if (run.sample_times != out.times) throw UsageError("msd_estimate: sample times differ");
    for (std::size_t i = 0; i < k; ++i) {
      const Site& x = run.samples[i];
      out.msd[i].add(static_cast<double>(squared_l2_norm(x)));
      for (int j = 0; j < dim; ++j) {
        const double c = static_cast<double>(x.coords[sz(j)]);
        out.coord_mean[i][sz(j)].add(c);
        out.coord_second[i][sz(j)].add(c * c);
      }
    }
  }
  out.trials = static_cast<std::int64_t>(runs.size());
  return out;
}

std::vector<EstimateWithCI> velocity_autocorrelation(std::span<const VelocitySeries> series,
                                                     std::int64_t max_lag) {
  std::vector<Moments> acc(sz(max_lag + 1));
  for (const auto& s : series) {
    if (static_cast<std::int64_t>(s.size()) <= max_lag) {
      throw UsageError("velocity_autocorrelation: series shorter than max_lag + 1");
    }
    for (std::int64_t k = 0; k <= max_lag; ++k) {
      acc[sz(k)].add(velocity_dot(s[0], s[sz(k)]));
    }
  }
  std::vector<EstimateWithCI> out;
  out.reserve(acc.size());
  for (const auto& m : acc) out.push_back(m.estimate());
  return out;
}

MsdSeries driving_msd(int dim, double p, std::span<const std::int64_t> times,
                      const MonteCarlo& mc, std::vector<TrajectorySummary>* runs_out) {
  check_trials(mc);
  WalkConfig cfg;
  cfg.dim = dim;
  cfg.p = p;
  cfg.kind = WalkKind::kDriving;
  cfg.steps = times.empty() ? 1 : *std::max_element(times.begin(), times.end());
  cfg.schedule.kind = SampleSchedule::Kind::kExplicit;
  cfg.schedule.times.assign(times.begin(), times.end());
  validate_walk_config(cfg);
  auto runs = run_trials<TrajectorySummary>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    return isotropized(run_walk(cfg, rng), dim, rng);
  });
  MsdSeries out = msd_estimate(runs, dim);
  if (runs_out) *runs_out = std::move(runs);
  return out;
}

std::vector<EstimateWithCI> driving_autocorrelation(int dim, double p, std::int64_t max_lag,
                                                    const MonteCarlo& mc) {
  check_trials(mc);
  if (max_lag < 0) throw ConfigError("max_lag must be non-negative");
  const MirrorFamily& family = mirror_family(dim);
  auto series = run_trials<VelocitySeries>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    DrivingState s;  // V(0) . V(k) is invariant under signed permutations
    VelocitySeries v{s.v};
    v.reserve(sz(max_lag + 1));
    for (std::int64_t t = 1; t <= max_lag; ++t) {
      s = step_driving(s, p, family, rng);
      v.push_back(s.v);
    }
    return v;
  });
  return velocity_autocorrelation(series, max_lag);
}

DiffusionEstimate diffusion_constant_estimate(int dim, double p, std::int64_t horizon,
                                              const MonteCarlo& mc,
                                              std::vector<TrajectorySummary>* runs_out) {
  check_trials(mc);
  WalkConfig cfg;
  cfg.dim = dim;
  cfg.p = p;
  cfg.steps = horizon;
  cfg.kind = WalkKind::kRegenerated;
  validate_walk_config(cfg);
  auto runs = run_trials<TrajectorySummary>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    return run_walk(cfg, rng);
  });
  DiffusionEstimate out;
  out.target = diffusion_target(dim);
  const double scale = p / static_cast<double>(horizon);
  Moments all;
  Moments open;
  for (const auto& run : runs) {
    const double v = scale * static_cast<double>(squared_l2_norm(run.samples.back()));
    all.add(v);
    if (run.first_closing) {
      ++out.closed_trials;
    } else {
      open.add(v);
    }
  }
  out.estimate = all.estimate();
  out.unregenerated = open.estimate();
  if (runs.size() >= 2) out.series = msd_estimate(runs, dim);
  if (runs_out) *runs_out = std::move(runs);
  return out;
}

MsdSeries isotropic_endpoint(int dim, double p, std::int64_t horizon, const MonteCarlo& mc) {
  check_trials(mc);
  WalkConfig cfg;
  cfg.dim = dim;
  cfg.p = p;
  cfg.steps = horizon;
  cfg.kind = WalkKind::kRegenerated;
  cfg.schedule.kind = SampleSchedule::Kind::kExplicit;
  cfg.schedule.times = {horizon};
  validate_walk_config(cfg);
  auto runs = run_trials<TrajectorySummary>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    return isotropized(run_walk(cfg, rng), dim, rng);
  });
  return msd_estimate(runs, dim);
}

CouplingEstimate coupling_agreement(int dim, double p, std::int64_t horizon,
                                    const MonteCarlo& mc, std::vector<std::uint8_t>* agree_out) {
  check_trials(mc);
  WalkConfig cfg;
  cfg.dim = dim;
  cfg.p = p;
  cfg.steps = horizon;
  cfg.kind = WalkKind::kCoupled;
  cfg.schedule.kind = SampleSchedule::Kind::kExplicit;
  validate_walk_config(cfg);
  auto agree = run_trials<std::uint8_t>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    return static_cast<std::uint8_t>(run_walk(cfg, rng).tracks_driving ? 1 : 0);
  });
  std::int64_t hits = 0;
  for (auto a : agree) hits += a;
  CouplingEstimate out;
  out.agreement = bernoulli_estimate(hits, mc.trials);
  out.disagreement = bernoulli_estimate(mc.trials - hits, mc.trials);
  out.markov_reference = markov_coupling_reference(p, horizon);
  if (agree_out) *agree_out = std::move(agree);
  return out;
}

RecouplingEstimate recoupling_rate(int dim, double p, std::int64_t horizon, const MonteCarlo& mc) {
  check_trials(mc);
  WalkConfig cfg;
  cfg.dim = dim;
  cfg.p = p;
  cfg.steps = horizon;
  cfg.kind = WalkKind::kCoupled;
  cfg.schedule.kind = SampleSchedule::Kind::kExplicit;
  validate_walk_config(cfg);
  struct Counts {
    std::int64_t events = 0;
    std::int64_t recoupled = 0;
  };
  auto counts = run_trials<Counts>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    Counts c;
    bool apart = cfg.start.v0 != cfg.start.vt0;
    run_walk(cfg, rng, [&](const StepRecord& rec) {
      if (apart && rec.fresh && rec.in_T) {
        ++c.events;
        c.recoupled += rec.v == rec.vt ? 1 : 0;
      }
      apart = rec.v != rec.vt;
    });
    return c;
  });
  Counts total;
  for (const auto& c : counts) {
    total.events += c.events;
    total.recoupled += c.recoupled;
  }
  RecouplingEstimate out;
  out.rate = bernoulli_estimate(total.recoupled, total.events);
  out.reference = (2.0 * dim - 2.0) / (2.0 * dim - 1.0);
  return out;
}

ClosingEstimate closing_probability(int dim, double p, std::int64_t horizon,
                                    const MonteCarlo& mc) {
  check_trials(mc);
  WalkConfig cfg;
  cfg.dim = dim;
  cfg.p = p;
  cfg.steps = horizon;
  cfg.kind = WalkKind::kQuenched;
  cfg.stop_at_closing = true;
  cfg.schedule.kind = SampleSchedule::Kind::kExplicit;
  validate_walk_config(cfg);
  auto closed = run_trials<std::uint8_t>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    return static_cast<std::uint8_t>(run_walk(cfg, rng).first_closing ? 1 : 0);
  });
  std::int64_t hits = 0;
  for (auto c : closed) hits += c;
  ClosingEstimate out;
  out.closed = bernoulli_estimate(hits, mc.trials);
  out.reference = std::cbrt(p);
  return out;
}

AuditTable h1_h2_audit(std::span<const TrajectorySummary> runs, int dim, double p, double alpha) {
  if (runs.empty()) throw UsageError("h1_h2_audit: no runs");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("h1_h2_audit: p must lie in (0, 1)");
  const auto& times = runs.front().sample_times;
  for (const auto& r : runs) {
    if (r.sample_times != times) throw UsageError("h1_h2_audit: sample times differ");
  }
  AuditTable out;
  out.alpha = alpha;
  const auto n = static_cast<std::int64_t>(runs.size());
  const std::int64_t half = kinetic_cell_side(p);
  const std::int64_t side = 2 * half;
  const auto radius = static_cast<std::int64_t>(std::floor(1.0 / p));
  const double l = std::log(1.0 / p);

  for (std::size_t i = 0; i < times.size(); ++i) {
    const std::int64_t t = times[i];
    if (t < 1) continue;
    const double td = static_cast<double>(t);
    const double bound = std::pow(p * td, -dim / 2.0) * std::pow(p, -kEps) *
                         std::exp(std::cbrt(std::log(td)));
    absl::flat_hash_map<Site, std::vector<Site>> cells;
    for (const auto& r : runs) {
      Site c;
      for (int j = 0; j < dim; ++j) {
        const std::int64_t x = r.samples[i].coords[sz(j)];
        c.coords[sz(j)] = (x >= 0 ? x : x - side + 1) / side;
      }
      cells[c].push_back(r.samples[i]);
    }
    std::vector<Site> keys;
    keys.reserve(cells.size());
    for (const auto& [c, _] : cells) keys.push_back(c);
    std::sort(keys.begin(), keys.end());
    for (const Site& c : keys) {
      H1Row row;
      row.t = t;
      for (int j = 0; j < dim; ++j) row.center.coords[sz(j)] = c.coords[sz(j)] * side + half;
      // The ball may reach one site into the neighbouring cells.
      std::array<int, kMaxDim> off{};
      while (true) {
        Site nb = c;
        for (int j = 0; j < dim; ++j) nb.coords[sz(j)] += off[sz(j)] - 1;
        if (auto it = cells.find(nb); it != cells.end()) {
          for (const auto& y : it->second) row.hits += linf_distance(y, row.center) <= radius ? 1 : 0;
        }
        int j = 0;
        for (; j < dim; ++j) {
          if (++off[sz(j)] <= 2) break;
          off[sz(j)] = 0;
        }
        if (j == dim) break;
      }
      row.n = n;
      row.empirical = static_cast<double>(row.hits) / static_cast<double>(n);
      row.bound = bound;
      row.vacuous = bound >= 1.0;
      out.h1.push_back(row);
    }
  }

  const double h2_bound = std::exp(-2.0 * l * l);
  for (std::size_t a = 0; a < times.size(); ++a) {
    for (std::size_t b = a + 1; b < times.size(); ++b) {
      H2Row row;
      row.s = times[a];
      row.t = times[b];
      const double gap = static_cast<double>(row.t - row.s);
      row.threshold = std::pow(l, 8) * std::sqrt(gap / p);
      row.bound = h2_bound;
      row.vacuous = row.threshold > gap;
      row.n = n;
      for (const auto& r : runs) {
        const double d2 = static_cast<double>(squared_l2_norm(r.samples[b] - r.samples[a]));
        row.hits += std::sqrt(d2) >= row.threshold ? 1 : 0;
      }
      row.empirical = static_cast<double>(row.hits) / static_cast<double>(n);
      out.h2.push_back(row);
    }
  }

  for (const auto& r : out.h1) out.tests += r.vacuous ? 0 : 1;
  for (const auto& r : out.h2) out.tests += r.vacuous ? 0 : 1;
  const double level = alpha / static_cast<double>(std::max<std::int64_t>(1, out.tests));
  auto judge = [&](auto& row) {
    if (row.vacuous) return;
    row.tail = binomial_upper_tail(row.n, row.bound, row.hits);
    row.flagged = row.tail < level;
    out.flagged += row.flagged ? 1 : 0;
  };
  for (auto& r : out.h1) judge(r);
  for (auto& r : out.h2) judge(r);
  return out;
}

std::vector<BallProbabilityRow> ball_probability_profile(std::span<const Site> endpoints,
                                                         int dim, std::int64_t n,
                                                         std::span<const std::int64_t> radii) {
  if (endpoints.empty()) throw UsageError("ball_probability_profile: no samples");
  if (n < 1) throw UsageError("ball_probability_profile: n must be positive");
  std::vector<BallProbabilityRow> out;
  for (std::int64_t r : radii) {
    if (r < 1) throw UsageError("ball_probability_profile: radius must be at least 1");
    absl::flat_hash_map<Site, std::int64_t> counts;
    for (const Site& y : endpoints) {
      std::array<std::int64_t, kMaxDim> lo{};
      std::array<std::int64_t, kMaxDim> hi{};
      for (int j = 0; j < dim; ++j) {
        const std::int64_t c = y.coords[sz(j)];
        lo[sz(j)] = static_cast<std::int64_t>(std::ceil(static_cast<double>(c - r) / static_cast<double>(r)));
        hi[sz(j)] = static_cast<std::int64_t>(std::floor(static_cast<double>(c + r) / static_cast<double>(r)));
      }
      Site z;
      std::array<std::int64_t, kMaxDim> k = lo;
      while (true) {
        for (int j = 0; j < dim; ++j) z.coords[sz(j)] = k[sz(j)] * r;
        ++counts[z];
        int j = 0;
        for (; j < dim; ++j) {
          if (++k[sz(j)] <= hi[sz(j)]) break;
          k[sz(j)] = lo[sz(j)];
        }
        if (j == dim) break;
      }
    }
    std::int64_t best = 0;
    for (const auto& [z, c] : counts) best = std::max(best, c);
    BallProbabilityRow row;
    row.r = r;
    row.sup_probability = static_cast<double>(best) / static_cast<double>(endpoints.size());
    row.reference = std::pow(static_cast<double>(r), dim) * std::pow(static_cast<double>(n), -dim / 2.0);
    row.ratio = row.sup_probability / row.reference;
    out.push_back(row);
  }
  return out;
}

std::vector<Site> segment_sum_endpoints(int dim, double p, std::int64_t segment, std::int64_t n,
                                        const MonteCarlo& mc) {
  check_trials(mc);
  if (segment < 1 || n < 1) throw ConfigError("segment length and count must be positive");
  const MirrorFamily& family = mirror_family(dim);
  return run_trials<Site>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng = trial_rng(mc, id);
    Site sum;
    for (std::int64_t k = 0; k < n; ++k) {
      DrivingState s;
      for (std::int64_t t = 0; t < segment; ++t) s = step_driving(s, p, family, rng);
      sum = sum + SignedPermutation::random(dim, rng).apply(s.x);
    }
    return sum;
  });
}

}  // namespace mirrorlab
