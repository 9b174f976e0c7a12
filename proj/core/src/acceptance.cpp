#include "mirrorlab/acceptance.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "mirrorlab/analytics.hpp"
#include "mirrorlab/config.hpp"
#include "mirrorlab/diagnostics.hpp"
#include "mirrorlab/errors.hpp"
#include "mirrorlab/exact_oracle.hpp"
#include "mirrorlab/experiments.hpp"
#include "mirrorlab/lattice.hpp"
#include "mirrorlab/parallel.hpp"
#include "mirrorlab/rng.hpp"
#include "mirrorlab/walks.hpp"

namespace mirrorlab {

namespace {

// Pinned tolerances.
constexpr double kSe = 4.0;                   // statistical checks: 4 standard errors
constexpr double kVarianceRelTol = 1e-10;     // closed form vs direct summation
constexpr double kDiffusionTol = 0.25;        // |(p/T) E|X(T)|^2 - 7/3|
constexpr double kBallRatioSoftLimit = 20.0;  // anti-concentration, warning only
constexpr double kMatchingBudgetSeconds = 10.0;
constexpr double kOracleBudgetSeconds = 120.0;

constexpr std::array<std::string_view, kCriterionCount> kTitles = {
    "matching algebra",
    "quenched/driven law equality (exact)",
    "driving variance",
    "velocity autocorrelation",
    "diffusion constant",
    "coupling disagreement",
    "sparsity inequality",
    "pre-interaction invariants",
    "closing probability",
    "re-coupling rate",
    "isotropy and zero mean",
    "determinism across thread counts",
    "anti-concentration profile",
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string f(double v) { return format_double(v); }

MonteCarlo mc_for(const AcceptanceOptions& opts, int id, std::int64_t trials) {
  return {trials, derive_trial_seed(opts.seed, static_cast<std::uint64_t>(id)),
          resolve_threads(opts.threads)};
}

struct Report {
  bool ok = true;
  bool warn = false;
  std::string detail;
  std::ostringstream artifact;

  void require(bool cond) { ok = ok && cond; }
};

// 1 -------------------------------------------------------------------------
void matching_algebra(Report& r, const AcceptanceOptions&) {
  const auto t0 = Clock::now();
  constexpr std::array<std::uint64_t, 4> expected = {3, 15, 105, 945};
  std::int64_t transforms = 0;
  for (int d = 2; d <= 5; ++d) {
    const MirrorFamily fam = enumerate_matchings(d);
    const bool size_ok = fam.size() == expected[static_cast<std::size_t>(d - 2)];
    bool valid = true;
    for (const auto& m : fam.members()) valid = valid && validate_matching(m);
    r.require(size_ok && valid);
    r.artifact << "d=" << d << " size=" << fam.size() << " valid=" << valid << '\n';
    if (d > 4) continue;
    bool involution = true;
    const int nd = 2 * d;
    for (int a = 0; a < nd; ++a) {
      for (int b = 0; b < nd; ++b) {
        if (a == b) continue;
        const Direction e(static_cast<std::uint8_t>(a));
        const Direction et(static_cast<std::uint8_t>(b));
        for (const auto& m : fam.members()) {
          if (!in_swap_domain(m, e, et)) continue;
          const Matching t = rule4_transform(m, e, et);
          ++transforms;
          involution = involution && validate_matching(t) && in_swap_domain(t, e, et) &&
                       rule4_transform(t, e, et) == m && t(e) == m(et);
        }
      }
    }
    r.require(involution);
    r.artifact << "d=" << d << " rule4 involution=" << involution << '\n';
  }
  const double secs = seconds_since(t0);
  r.require(secs < kMatchingBudgetSeconds);
  r.detail = "sizes 3/15/105/945, " + std::to_string(transforms) + " transforms checked, " +
             f(std::round(secs * 1000) / 1000) + " s (budget 10 s)";
}

// 2 -------------------------------------------------------------------------
void law_equality(Report& r, const AcceptanceOptions&) {
  const auto t0 = Clock::now();
  struct Case { int d; std::int64_t num, den, tmax; };
  constexpr std::array<Case, 2> cases = {{{2, 3, 10, 6}, {3, 1, 5, 4}}};
  int checked = 0;
  for (const auto& c : cases) {
    for (std::int64_t t = 1; t <= c.tmax; ++t) {
      const auto cmp = compare_quenched_driven(c.d, c.num, c.den, t, OracleMode::kRational);
      r.require(cmp.exact_zero);
      r.artifact << "d=" << c.d << " p=" << c.num << '/' << c.den << " t=" << t
                 << " tv=" << f(cmp.tv) << " exact_zero=" << cmp.exact_zero
                 << " support=" << cmp.quenched_support << '/' << cmp.driven_support << '\n';
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  r.require(secs < kOracleBudgetSeconds);
  r.detail = std::to_string(checked) + " horizons with TV exactly 0, " +
             f(std::round(secs * 100) / 100) + " s (budget 120 s)";
}

// 3 -------------------------------------------------------------------------
void driving_variance(Report& r, const AcceptanceOptions& opts) {
  double worst_rel = 0.0;
  for (int d : {2, 3, 4}) {
    for (double p : {0.5, 0.1, 0.01}) {
      for (std::int64_t t = 1; t <= 200; ++t) {
        const double oracle = driving_variance_double_sum(d, p, t);
        const double cf = driving_variance_closed_form(d, p, t);
        worst_rel = std::max(worst_rel, std::abs(cf - oracle) / std::abs(oracle));
      }
    }
  }
  r.require(worst_rel <= kVarianceRelTol);
  r.artifact << "closed form max relative error " << f(worst_rel) << '\n';

  bool unit_ok = true;
  for (int d = 2; d <= 5; ++d) {
    for (auto [num, den] : {std::pair{1, 10}, std::pair{1, 2}, std::pair{3, 7}}) {
      unit_ok = unit_ok && driving_variance_rational(d, Rational(num, den), 1) == Rational(1, d);
    }
  }
  r.require(unit_ok);
  r.artifact << "sigma_1^2 = 1/d exactly: " << unit_ok << '\n';

  const std::vector<std::int64_t> times = {10, 100, 1000};
  const MsdSeries s = driving_msd(3, 0.1, times, mc_for(opts, 3, 100000));
  std::string mc;
  double worst_z = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double est = s.msd[i].mean() / 3;
    const double se = s.msd[i].std_error() / 3;
    const double cf = driving_variance_closed_form(3, 0.1, times[i]);
    const double z = std::abs(est - cf) / se;
    worst_z = std::max(worst_z, z);
    r.require(z <= kSe);
    r.artifact << "t=" << times[i] << " estimate=" << f(est) << " se=" << f(se)
               << " closed_form=" << f(cf) << '\n';
  }
  r.detail = "max rel err " + f(worst_rel) + " (tol 1e-10), sigma_1^2=1/d " +
             (unit_ok ? "exact" : "WRONG") + ", MC max |z| " + f(worst_z) + " (tol 4)";
}

// 4 -------------------------------------------------------------------------
void autocorrelation(Report& r, const AcceptanceOptions& opts) {
  double worst_z = 0.0;
  int tests = 0;
  int id = 0;
  for (int d : {2, 3, 4}) {
    for (double p : {0.1, 0.5}) {
      auto mc = mc_for(opts, 4, 100000);
      mc.master_seed = derive_trial_seed(mc.master_seed, static_cast<std::uint64_t>(id++));
      const auto ac = driving_autocorrelation(d, p, 50, mc);
      const double rho = driving_rho(d, p);
      for (std::size_t k = 0; k < ac.size(); ++k) {
        const double target = std::pow(rho, static_cast<double>(k));
        const bool ok = ac[k].within(target, kSe);
        r.require(ok);
        if (ac[k].std_error > 0) worst_z = std::max(worst_z, std::abs(ac[k].value - target) / ac[k].std_error);
        ++tests;
      }
      r.artifact << "d=" << d << " p=" << f(p) << " lag50=" << f(ac.back().value) << '\n';
    }
  }
  r.detail = std::to_string(tests) + " lags, max |z| " + f(worst_z) + " (tol 4)";
}

// 5 -------------------------------------------------------------------------
void diffusion(Report& r, const AcceptanceOptions& opts) {
  const DiffusionEstimate e = diffusion_constant_estimate(4, 0.05, 4000, mc_for(opts, 5, 20000));
  const double gap = std::abs(e.estimate.value - e.target);
  r.require(gap <= kDiffusionTol);
  r.detail = "estimate " + f(e.estimate.value) + " +- " + f(e.estimate.std_error) + ", target " +
             f(e.target) + ", gap " + f(gap) + " (tol 0.25)";
  r.artifact << r.detail << '\n';
}

// 6 -------------------------------------------------------------------------
void coupling(Report& r, const AcceptanceOptions& opts) {
  const CouplingEstimate c = coupling_agreement(3, 0.02, 50, mc_for(opts, 6, 100000));
  const double limit = c.markov_reference + kSe * c.disagreement.std_error;
  r.require(c.disagreement.value <= limit);
  r.detail = "disagreement " + f(c.disagreement.value) + " <= " + f(c.markov_reference) +
             " + 4 SE = " + f(limit);
  r.artifact << r.detail << '\n';
}

// 7 -------------------------------------------------------------------------
void sparsity(Report& r, const AcceptanceOptions& opts) {
  WalkConfig wc;
  wc.dim = 3;
  wc.p = 0.05;
  wc.steps = 10000;
  wc.kind = WalkKind::kCoupled;
  const auto mc = mc_for(opts, 7, 1000);
  const auto sweeps = run_trials<SparsitySweep>(mc.trials, mc.threads, [&](std::int64_t id) {
    CounterRng rng(derive_trial_seed(mc.master_seed, static_cast<std::uint64_t>(id)));
    const Trajectory traj = record_trajectory(wc, rng);
    return audit_all_windows(traj, analyze_trajectory(traj));
  });
  std::int64_t windows = 0, exact = 0, violations = 0;
  for (const auto& s : sweeps) {
    windows += s.windows;
    exact += s.exact_checks;
    violations += s.violations;
  }
  r.require(violations == 0);
  r.detail = std::to_string(windows) + " windows (" + std::to_string(exact) +
             " exact ball counts), " + std::to_string(violations) + " violations";
  r.artifact << r.detail << '\n';
}

// 8 -------------------------------------------------------------------------
void pre_interaction(Report& r, const AcceptanceOptions& opts) {
  std::int64_t trajectories = 0, failures = 0, interacted = 0;
  std::uint64_t stream = 0;
  for (int d : {2, 3, 4}) {
    for (double p : {0.1, 0.05}) {
      for (WalkKind kind : {WalkKind::kCoupled, WalkKind::kRegenerated}) {
        WalkConfig wc;
        wc.dim = d;
        wc.p = p;
        wc.steps = 5000;
        wc.kind = kind;
        auto mc = mc_for(opts, 8, 500);
        mc.master_seed = derive_trial_seed(mc.master_seed, stream++);
        const auto checks = run_trials<InteractionCheck>(mc.trials, mc.threads, [&](std::int64_t id) {
          CounterRng rng(derive_trial_seed(mc.master_seed, static_cast<std::uint64_t>(id)));
          return check_pre_interaction(record_trajectory(wc, rng));
        });
        for (const auto& c : checks) {
          ++trajectories;
          failures += (c.agreement_ok && c.closing_ok) ? 0 : 1;
          interacted += c.tau_int ? 1 : 0;
        }
      }
    }
  }
  r.require(failures == 0);
  r.detail = std::to_string(trajectories) + " coupled trajectories (" +
             std::to_string(interacted) + " reached tau_int), " + std::to_string(failures) +
             " violations";
  r.artifact << r.detail << '\n';
}

// 9 -------------------------------------------------------------------------
void closing(Report& r, const AcceptanceOptions& opts) {
  const ClosingEstimate c = closing_probability(4, 0.05, 100000, mc_for(opts, 9, 1000));
  const double limit = c.reference + kSe * c.closed.std_error;
  r.require(c.closed.value <= limit);
  r.detail = "P(closed) " + f(c.closed.value) + " <= p^(1/3) + 4 SE = " + f(limit);
  r.artifact << r.detail << '\n';
}

// 10 ------------------------------------------------------------------------
void recoupling(Report& r, const AcceptanceOptions& opts) {
  const RecouplingEstimate e = recoupling_rate(4, 0.05, 2000, mc_for(opts, 10, 10000));
  const double floor = e.reference - kSe * e.rate.std_error;
  r.require(e.rate.n > 0 && e.rate.value >= floor);
  r.detail = "rate " + f(e.rate.value) + " over " + std::to_string(e.rate.n) + " events >= " +
             f(e.reference) + " - 4 SE = " + f(floor);
  r.artifact << r.detail << '\n';
}

// 11 ------------------------------------------------------------------------
void isotropy(Report& r, const AcceptanceOptions& opts) {
  const MsdSeries s = isotropic_endpoint(4, 0.05, 2000, mc_for(opts, 11, 10000));
  const auto& mean = s.coord_mean.back();
  const auto& second = s.coord_second.back();
  double worst_mean = 0.0, worst_pair = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double z = std::abs(mean[j].mean()) / mean[j].std_error();
    worst_mean = std::max(worst_mean, z);
    r.require(z <= kSe);
    r.artifact << "axis " << j + 1 << " mean=" << f(mean[j].mean())
               << " second=" << f(second[j].mean()) << '\n';
    for (int k = 0; k < j; ++k) {
      const double se = std::hypot(second[j].std_error(), second[k].std_error());
      const double zp = std::abs(second[j].mean() - second[k].mean()) / se;
      worst_pair = std::max(worst_pair, zp);
      r.require(zp <= kSe);
    }
  }
  r.detail = "max |z| of means " + f(worst_mean) + ", of second-moment pairs " + f(worst_pair) +
             " (tol 4)";
}

// 13 ------------------------------------------------------------------------
void anti_concentration(Report& r, const AcceptanceOptions& opts) {
  const std::vector<std::int64_t> radii = {1, 2, 4};
  double worst = 0.0;
  std::uint64_t stream = 0;
  for (std::int64_t n : {4, 16, 64}) {
    auto mc = mc_for(opts, 13, 200000);
    mc.master_seed = derive_trial_seed(mc.master_seed, stream++);
    const auto ends = segment_sum_endpoints(4, 0.5, 4, n, mc);
    for (const auto& row : ball_probability_profile(ends, 4, n, radii)) {
      worst = std::max(worst, row.ratio);
      r.artifact << "n=" << n << " r=" << row.r << " sup=" << f(row.sup_probability)
                 << " ratio=" << f(row.ratio) << '\n';
    }
  }
  r.warn = worst > kBallRatioSoftLimit;
  r.detail = "max ratio " + f(worst) + " (soft limit 20" + (r.warn ? ", exceeded" : "") + ")";
}

// 12 ------------------------------------------------------------------------
std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void determinism(Report& r, const AcceptanceOptions& opts) {
  namespace fs = std::filesystem;
  const fs::path root = opts.scratch_dir.empty()
                            ? fs::temp_directory_path() / ("mirrorlab-check-" + std::to_string(::getpid()))
                            : fs::path(opts.scratch_dir);
  constexpr std::array<int, 2> thread_counts = {1, 8};
  std::array<std::vector<std::string>, 2> artifacts;
  std::array<std::vector<std::pair<std::string, std::string>>, 2> files;
  for (std::size_t k = 0; k < thread_counts.size(); ++k) {
    AcceptanceOptions o = opts;
    o.threads = thread_counts[k];
    for (int id = 1; id <= 3; ++id) artifacts[k].push_back(run_criterion(id, o).artifact);

    ExperimentConfig cfg;
    cfg.experiment = Experiment::kDiffusion;
    cfg.d = 3;
    cfg.p = 0.1;
    cfg.steps = 1000;
    cfg.trials = 100;
    cfg.seed = derive_trial_seed(opts.seed, 12);
    cfg.threads = thread_counts[k];
    cfg.out_dir = (root / ("threads-" + std::to_string(thread_counts[k]))).string();
    for (const auto& name : run_experiment(cfg).files) {
      if (name == "timing.json") continue;
      files[k].emplace_back(name, read_file(fs::path(cfg.out_dir) / name));
    }
  }
  std::error_code ec;
  fs::remove_all(root, ec);

  int mismatches = 0;
  for (std::size_t i = 0; i < artifacts[0].size(); ++i) {
    if (artifacts[0][i] != artifacts[1][i]) {
      ++mismatches;
      r.artifact << "criterion " << i + 1 << " differs\n";
    }
  }
  if (files[0] != files[1]) {
    ++mismatches;
    r.artifact << "diffusion outputs differ\n";
  }
  r.require(mismatches == 0);
  r.detail = "criteria 1-3 and " + std::to_string(files[0].size()) +
             " diffusion files at threads 1 and 8: " +
             (mismatches == 0 ? "byte-identical" : std::to_string(mismatches) + " mismatches");
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "PASS";
    case Verdict::kWarn: return "WARN";
    case Verdict::kFail: return "FAIL";
  }
  return "FAIL";
}

std::string_view criterion_title(int id) {
  if (id < 1 || id > kCriterionCount) throw UsageError("no acceptance criterion " + std::to_string(id));
  return kTitles[static_cast<std::size_t>(id - 1)];
}

CriterionOutcome run_criterion(int id, const AcceptanceOptions& opts) {
  using Fn = void (*)(Report&, const AcceptanceOptions&);
  static constexpr std::array<Fn, kCriterionCount> fns = {
      matching_algebra, law_equality, driving_variance, autocorrelation, diffusion,
      coupling,         sparsity,     pre_interaction,  closing,         recoupling,
      isotropy,         determinism,  anti_concentration};
  CriterionOutcome out;
  out.id = id;
  out.title = std::string(criterion_title(id));
  const auto t0 = Clock::now();
  Report r;
  try {
    fns[static_cast<std::size_t>(id - 1)](r, opts);
    out.verdict = !r.ok ? Verdict::kFail : r.warn ? Verdict::kWarn : Verdict::kPass;
    out.detail = r.detail;
  } catch (const std::exception& e) {
    out.verdict = Verdict::kFail;
    out.detail = std::string("error: ") + e.what();
  }
  out.artifact = r.artifact.str();
  out.seconds = seconds_since(t0);
  return out;
}

std::string format_outcome(const CriterionOutcome& o) {
  std::ostringstream os;
  os << to_string(o.verdict) << ' ';
  os.width(2);
  os << o.id << "  " << o.title << " | " << o.detail << "  (";
  os.precision(3);
  os << o.seconds << " s)";
  return os.str();
}

bool acceptance_passed(std::span<const CriterionOutcome> outcomes) {
  return std::none_of(outcomes.begin(), outcomes.end(),
                      [](const CriterionOutcome& o) { return o.verdict == Verdict::kFail; });
}

double driving_variance_double_sum(int dim, double p, std::int64_t t) {
  const double rho = driving_rho(dim, p);
  double cross = 0.0;
  for (std::int64_t s = 1; s <= t - 1; ++s) {
    double term = 1.0;
    for (std::int64_t sp = s - 1; sp >= 0; --sp) {
      term *= rho;  // rho^(s - sp)
      cross += term;
    }
  }
  return (static_cast<double>(t) + 2.0 * cross) / dim;
}

}  // namespace mirrorlab
