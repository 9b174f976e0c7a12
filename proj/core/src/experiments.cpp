#include "mirrorlab/experiments.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mirrorlab/analytics.hpp"
#include "mirrorlab/diagnostics.hpp"
#include "mirrorlab/exact_oracle.hpp"
#include "mirrorlab/parallel.hpp"
#include "mirrorlab/rng.hpp"

#ifndef MIRRORLAB_VERSION
#define MIRRORLAB_VERSION "0.0.0"
#endif

namespace mirrorlab {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

std::string fmt(double v) { return format_double(v); }

std::string opt(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : ""; }

json opt_json(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

MonteCarlo monte_carlo(const ExperimentConfig& cfg) {
  return {cfg.trials, cfg.seed, resolve_threads(cfg.threads)};
}

bool echoed(const std::string& line) {
  return !line.starts_with("threads ") && !line.starts_with("out_dir ");
}

json base_summary(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = to_string(cfg.experiment);
  j["code_version"] = code_version();
  j["log_base"] = "e";
  j["master_seed"] = cfg.seed;
  j["config_hash"] = hex64(config_hash(cfg));
  json c = json::object();
  for (const auto& line : config_lines(cfg)) {
    if (!echoed(line)) continue;
    const auto eq = line.find(" = ");
    c[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = std::move(c);
  return j;
}

class Outputs {
 public:
  explicit Outputs(const ExperimentConfig& cfg) : dir_(cfg.out_dir), header_(csv_header(cfg)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  void csv(const std::string& name, const std::string& body) { raw(name, header_ + body); }
  void json_file(const std::string& name, const json& j) { raw(name, j.dump(2) + "\n"); }
  void raw(const std::string& name, const std::string& contents) {
    write_file_atomic((dir_ / name).string(), contents);
    files.push_back(name);
  }

  std::vector<std::string> files;

 private:
  fs::path dir_;
  std::string header_;
};

WalkConfig walk_config(const ExperimentConfig& cfg, WalkKind kind) {
  WalkConfig wc;
  wc.dim = cfg.d;
  wc.p = cfg.p;
  wc.steps = cfg.steps;
  wc.kind = kind;
  wc.schedule = cfg.sample;
  return wc;
}

void append_step(std::string& out, const StepRecord& r, int dim) {
  out += std::to_string(r.t);
  for (int j = 0; j < dim; ++j) {
    out += ',';
    out += std::to_string(r.x.coords[static_cast<std::size_t>(j)]);
  }
  out += ',' + std::to_string(r.v.axis() + 1) + ',' + std::to_string(r.v.sign()) + ',' +
         (r.in_T ? "1" : "0") + ',' + (r.fresh ? "1" : "0") + ',' +
         std::to_string(static_cast<int>(r.rule)) + '\n';
}

std::string step_columns(int dim) {
  std::string s = "t";
  for (int j = 1; j <= dim; ++j) s += ",x" + std::to_string(j);
  return s + ",vaxis,vsign,in_T,fresh,rule\n";
}

std::string coord_columns(const char* prefix, int dim) {
  std::string s;
  for (int j = 1; j <= dim; ++j) s += std::string(",") + prefix + std::to_string(j);
  return s;
}

std::string coords(const Site& x, int dim) {
  std::string s;
  for (int j = 0; j < dim; ++j) s += ',' + std::to_string(x.coords[static_cast<std::size_t>(j)]);
  return s;
}

struct WalkTrace {
  TrajectorySummary summary;
  std::string rows;
  std::string env;
};

WalkTrace trace_walk(const WalkConfig& wc, CounterRng& rng, bool keep_rows, bool dump_env) {
  WalkTrace out;
  std::string body;
  out.summary = run_walk(
      wc, rng,
      [&](const StepRecord& rec) {
        if (keep_rows) append_step(body, rec, wc.dim);
      },
      [&](const EnvironmentRecord* env) {
        if (dump_env && env) {
          std::ostringstream os;
          env->dump(os);
          out.env = os.str();
        }
      });
  if (keep_rows) {
    StepRecord start;
    start.x = wc.start.origin;
    start.v = wc.kind == WalkKind::kDriving ? wc.start.vt0 : wc.start.v0;
    start.in_T = out.summary.origin_in_T;
    start.fresh = true;
    append_step(out.rows, start, wc.dim);
    out.rows += body;
  }
  return out;
}

WalkKind replay_kind(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::kDiffusion:
    case Experiment::kAudit:
      return WalkKind::kRegenerated;
    case Experiment::kCouple:
      return WalkKind::kCoupled;
    case Experiment::kVariance:
      return WalkKind::kDriving;
    default:
      return cfg.kind;
  }
}

// --- experiments -----------------------------------------------------------

ExperimentResult walk_experiment(const ExperimentConfig& cfg, Outputs& out) {
  const WalkConfig wc = walk_config(cfg, cfg.kind);
  validate_walk_config(wc);
  const bool env = cfg.emit == "env";
  auto traces = run_trials<WalkTrace>(cfg.trials, resolve_threads(cfg.threads), [&](std::int64_t id) {
    CounterRng rng(trial_seed(cfg, id));
    return trace_walk(wc, rng, id == 0, id == 0 && env);
  });

  std::string results = "trial_id,trial_seed,config_hash,horizon" + coord_columns("x", cfg.d) +
                        ",regenerations,first_closing,discoveries,tracks_driving\n";
  const std::string hash = hex64(config_hash(cfg));
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& s = traces[i].summary;
    results += std::to_string(i) + ',' + std::to_string(trial_seed(cfg, static_cast<std::int64_t>(i))) +
               ',' + hash + ',' + std::to_string(s.horizon) + coords(s.samples.back(), cfg.d) + ',' +
               std::to_string(s.regenerations.times().size()) + ',' + opt(s.first_closing) + ',' +
               std::to_string(s.discoveries) + ',' + (s.tracks_driving ? "1" : "0") + '\n';
  }
  out.csv("walk.csv", step_columns(cfg.d) + traces.front().rows);
  if (env) out.raw("env.tsv", traces.front().env);
  out.csv("results.csv", results);

  json j = base_summary(cfg);
  const auto& s0 = traces.front().summary;
  j["trial0"] = {{"horizon", s0.horizon},
                 {"squared_norm", squared_l2_norm(s0.samples.back())},
                 {"regenerations", s0.regenerations.times().size()},
                 {"first_closing", opt_json(s0.first_closing)}};
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "walk: " + std::to_string(cfg.trials) + " trajectories of " +
               std::to_string(cfg.steps) + " steps";
  return r;
}

ExperimentResult variance_experiment(const ExperimentConfig& cfg, Outputs& out) {
  const std::vector<std::int64_t> times =
      cfg.times.empty() ? cfg.sample.resolve(cfg.steps) : cfg.times;
  const MonteCarlo mc = monte_carlo(cfg);
  std::vector<TrajectorySummary> runs;
  const MsdSeries msd = cfg.trials >= 2 ? driving_msd(cfg.d, cfg.p, times, mc, &runs) : MsdSeries{};
  const auto ac = driving_autocorrelation(cfg.d, cfg.p, cfg.max_lag, mc);

  std::string var = "t,trials,per_coord_msd,std_error,closed_form,z_score\n";
  json rows = json::array();
  for (std::size_t i = 0; i < msd.times.size(); ++i) {
    const std::int64_t t = msd.times[i];
    const double est = msd.msd[i].mean() / cfg.d;
    const double se = msd.msd[i].std_error() / cfg.d;
    const double cf = driving_variance_closed_form(cfg.d, cfg.p, t);
    const double z = se > 0 ? (est - cf) / se : 0.0;
    var += std::to_string(t) + ',' + std::to_string(msd.trials) + ',' + fmt(est) + ',' + fmt(se) +
           ',' + fmt(cf) + ',' + fmt(z) + '\n';
    rows.push_back({{"t", t}, {"estimate", est}, {"std_error", se}, {"closed_form", cf}});
  }
  std::string acs = "lag,estimate,std_error,rho_power\n";
  const double rho = driving_rho(cfg.d, cfg.p);
  for (std::size_t k = 0; k < ac.size(); ++k) {
    acs += std::to_string(k) + ',' + fmt(ac[k].value) + ',' + fmt(ac[k].std_error) + ',' +
           fmt(std::pow(rho, static_cast<double>(k))) + '\n';
  }
  std::string results = "trial_id,trial_seed,config_hash";
  for (auto t : msd.times) results += ",r2_t" + std::to_string(t);
  results += '\n';
  const std::string hash = hex64(config_hash(cfg));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    results += std::to_string(i) + ',' +
               std::to_string(trial_seed(cfg, static_cast<std::int64_t>(i))) + ',' + hash;
    for (const auto& x : runs[i].samples) results += ',' + std::to_string(squared_l2_norm(x));
    results += '\n';
  }
  out.csv("variance.csv", var);
  out.csv("autocorr.csv", acs);
  out.csv("results.csv", results);
  json j = base_summary(cfg);
  j["rho"] = rho;
  j["variance"] = std::move(rows);
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "variance: " + std::to_string(msd.times.size()) + " sample times, " +
               std::to_string(ac.size()) + " lags";
  return r;
}

ExperimentResult diffusion_experiment(const ExperimentConfig& cfg, Outputs& out) {
  std::vector<TrajectorySummary> runs;
  const DiffusionEstimate est = diffusion_constant_estimate(cfg.d, cfg.p, cfg.steps, monte_carlo(cfg), &runs);
  const double gap = std::abs(est.estimate.value - est.target);
  out.csv("diffusion.csv", "d,p,T,trials,estimate,std_error,target,abs_gap\n" +
                               std::to_string(cfg.d) + ',' + fmt(cfg.p) + ',' +
                               std::to_string(cfg.steps) + ',' + std::to_string(cfg.trials) + ',' +
                               fmt(est.estimate.value) + ',' + fmt(est.estimate.std_error) + ',' +
                               fmt(est.target) + ',' + fmt(gap) + '\n');
  std::string msd = "t,msd,std_error,scaled\n";
  for (std::size_t i = 0; i < est.series.times.size(); ++i) {
    const auto t = est.series.times[i];
    const auto& m = est.series.msd[i];
    msd += std::to_string(t) + ',' + fmt(m.mean()) + ',' + fmt(m.std_error()) + ',' +
           fmt(t > 0 ? cfg.p * m.mean() / static_cast<double>(t) : 0.0) + '\n';
  }
  out.csv("msd.csv", msd);
  std::string results = "trial_id,trial_seed,config_hash,squared_norm,scaled,regenerations,first_closing\n";
  const std::string hash = hex64(config_hash(cfg));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto n2 = squared_l2_norm(runs[i].samples.back());
    results += std::to_string(i) + ',' +
               std::to_string(trial_seed(cfg, static_cast<std::int64_t>(i))) + ',' + hash + ',' +
               std::to_string(n2) + ',' +
               fmt(cfg.p * static_cast<double>(n2) / static_cast<double>(cfg.steps)) + ',' +
               std::to_string(runs[i].regenerations.times().size()) + ',' +
               opt(runs[i].first_closing) + '\n';
  }
  out.csv("results.csv", results);
  json j = base_summary(cfg);
  j["estimate"] = est.estimate.value;
  j["std_error"] = est.estimate.std_error;
  j["target"] = est.target;
  j["abs_gap"] = gap;
  j["unregenerated_estimate"] = est.unregenerated.value;
  j["unregenerated_std_error"] = est.unregenerated.std_error;
  j["unregenerated_trials"] = est.unregenerated.n;
  j["closed_trials"] = est.closed_trials;
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "diffusion: estimate " + fmt(est.estimate.value) + " +- " +
               fmt(est.estimate.std_error) + ", target " + fmt(est.target);
  return r;
}

ExperimentResult couple_experiment(const ExperimentConfig& cfg, Outputs& out) {
  const MonteCarlo mc = monte_carlo(cfg);
  std::vector<std::uint8_t> agree;
  const CouplingEstimate c = coupling_agreement(cfg.d, cfg.p, cfg.steps, mc, &agree);
  const RecouplingEstimate rc = recoupling_rate(cfg.d, cfg.p, cfg.steps, mc);
  out.csv("couple.csv",
          "d,p,T,trials,agreement,agreement_se,disagreement,markov_reference,recoupling_rate,"
          "recoupling_se,recoupling_events,recoupling_reference\n" +
              std::to_string(cfg.d) + ',' + fmt(cfg.p) + ',' + std::to_string(cfg.steps) + ',' +
              std::to_string(cfg.trials) + ',' + fmt(c.agreement.value) + ',' +
              fmt(c.agreement.std_error) + ',' + fmt(c.disagreement.value) + ',' +
              fmt(c.markov_reference) + ',' + fmt(rc.rate.value) + ',' + fmt(rc.rate.std_error) +
              ',' + std::to_string(rc.rate.n) + ',' + fmt(rc.reference) + '\n');
  std::string results = "trial_id,trial_seed,config_hash,agree\n";
  const std::string hash = hex64(config_hash(cfg));
  for (std::size_t i = 0; i < agree.size(); ++i) {
    results += std::to_string(i) + ',' +
               std::to_string(trial_seed(cfg, static_cast<std::int64_t>(i))) + ',' + hash + ',' +
               std::to_string(agree[i]) + '\n';
  }
  out.csv("results.csv", results);
  json j = base_summary(cfg);
  j["agreement"] = c.agreement.value;
  j["std_error"] = c.agreement.std_error;
  j["disagreement"] = c.disagreement.value;
  j["markov_reference"] = c.markov_reference;
  j["recoupling_rate"] = rc.rate.value;
  j["recoupling_std_error"] = rc.rate.std_error;
  j["recoupling_reference"] = rc.reference;
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "couple: disagreement " + fmt(c.disagreement.value) + " +- " +
               fmt(c.disagreement.std_error) + ", Markov reference " + fmt(c.markov_reference);
  return r;
}

struct DiagnoseTrial {
  StoppingTimeReport report;
  std::vector<RelaxationPoint> trace;
  SparsitySweep sweep;
  bool pre_ok = true;
};

ExperimentResult diagnose_experiment(const ExperimentConfig& cfg, Outputs& out) {
  if (cfg.kind == WalkKind::kDriving) throw ConfigError("diagnose needs a mirror walk kind");
  const WalkConfig wc = walk_config(cfg, cfg.kind);
  validate_walk_config(wc);
  kinetic_scale(cfg.p);
  DiagnosticsOptions opts;
  opts.exact_heavy = cfg.exact_heavy;
  if (cfg.sample.kind != SampleSchedule::Kind::kPowersOfTwo) opts.trace_times = cfg.sample.resolve(cfg.steps);
  const bool coupled = cfg.kind != WalkKind::kQuenched;

  auto trials = run_trials<DiagnoseTrial>(cfg.trials, resolve_threads(cfg.threads), [&](std::int64_t id) {
    CounterRng rng(trial_seed(cfg, id));
    const Trajectory traj = record_trajectory(wc, rng);
    const TrajectoryAnalysis an = analyze_trajectory(traj);
    DiagnosticsResult d = detect_stopping_times(traj, an, opts);
    DiagnoseTrial t{std::move(d.report), std::move(d.trace), {}, true};
    if (cfg.all_windows) {
      t.sweep = audit_all_windows(traj, an);
      if (t.sweep.violations > 0) {
        throw InvariantError("sparsity inequality violated on window [" +
                             std::to_string(t.sweep.first_violation->first) + ", " +
                             std::to_string(t.sweep.first_violation->second) + "]");
      }
    }
    if (coupled) {
      const InteractionCheck ic = check_pre_interaction(traj);
      t.pre_ok = ic.agreement_ok && ic.closing_ok;
      if (!t.pre_ok) throw InvariantError("walks separated before the first self-interaction");
    }
    return t;
  });

  const std::string hash = hex64(config_hash(cfg));
  std::string st =
      "trial_id,trial_seed,config_hash,horizon,t_star,tau_int,tau_clo_first,closings,tau_few,"
      "tau_many,tau_hea_approx,tau_rel,s_hits,sparsity_windows,sparsity_exact_checks,"
      "sparsity_violations\n";
  std::string rel = "trial_id,t,locally_relaxed,relaxed,window_density\n";
  std::int64_t closings = 0;
  std::int64_t windows = 0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& r = trials[i].report;
    const auto& w = trials[i].sweep;
    st += std::to_string(i) + ',' + std::to_string(trial_seed(cfg, static_cast<std::int64_t>(i))) +
          ',' + hash + ',' + std::to_string(r.horizon) + ',' + std::to_string(r.t_star) + ',' +
          opt(r.tau_int) + ',' +
          (r.tau_clo_list.empty() ? "" : std::to_string(r.tau_clo_list.front())) + ',' +
          std::to_string(r.tau_clo_list.size()) + ',' + opt(r.tau_few) + ',' + opt(r.tau_many) +
          ',' + opt(r.tau_hea_approx) + ',' + opt(r.tau_rel) + ',' + std::to_string(r.s_hits) +
          ',' + std::to_string(w.windows) + ',' + std::to_string(w.exact_checks) + ',' +
          std::to_string(w.violations) + '\n';
    for (const auto& p : trials[i].trace) {
      rel += std::to_string(i) + ',' + std::to_string(p.t) + ',' + (p.locally_relaxed ? "1" : "0") +
             ',' + (p.relaxed ? "1" : "0") + ',' + fmt(p.window_density) + '\n';
    }
    closings += r.tau_clo_list.empty() ? 0 : 1;
    windows += w.windows;
  }
  out.csv("stopping_times.csv", st);
  out.csv("relaxation.csv", rel);
  out.csv("results.csv", st);
  json j = base_summary(cfg);
  j["t_star"] = kinetic_scale(cfg.p);
  j["trials_with_closing"] = closings;
  j["sparsity_windows"] = windows;
  j["sparsity_violations"] = 0;
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "diagnose: " + std::to_string(cfg.trials) + " trajectories, " +
               std::to_string(windows) + " sparsity windows, no violations";
  return r;
}

ExperimentResult audit_experiment(const ExperimentConfig& cfg, Outputs& out) {
  const WalkConfig wc = walk_config(cfg, WalkKind::kRegenerated);
  validate_walk_config(wc);
  auto runs = run_trials<TrajectorySummary>(cfg.trials, resolve_threads(cfg.threads), [&](std::int64_t id) {
    CounterRng rng(trial_seed(cfg, id));
    return run_walk(wc, rng);
  });
  const AuditTable a = h1_h2_audit(runs, cfg.d, cfg.p);
  std::string h1 = "t" + coord_columns("z", cfg.d) + ",hits,n,empirical,bound,vacuous,tail,flagged\n";
  for (const auto& r : a.h1) {
    h1 += std::to_string(r.t) + coords(r.center, cfg.d) + ',' + std::to_string(r.hits) + ',' +
          std::to_string(r.n) + ',' + fmt(r.empirical) + ',' + fmt(r.bound) + ',' +
          (r.vacuous ? "1" : "0") + ',' + fmt(r.tail) + ',' + (r.flagged ? "1" : "0") + '\n';
  }
  std::string h2 = "s,t,threshold,hits,n,empirical,bound,vacuous,tail,flagged\n";
  for (const auto& r : a.h2) {
    h2 += std::to_string(r.s) + ',' + std::to_string(r.t) + ',' + fmt(r.threshold) + ',' +
          std::to_string(r.hits) + ',' + std::to_string(r.n) + ',' + fmt(r.empirical) + ',' +
          fmt(r.bound) + ',' + (r.vacuous ? "1" : "0") + ',' + fmt(r.tail) + ',' +
          (r.flagged ? "1" : "0") + '\n';
  }
  std::string results = "trial_id,trial_seed,config_hash,squared_norm,regenerations\n";
  const std::string hash = hex64(config_hash(cfg));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    results += std::to_string(i) + ',' +
               std::to_string(trial_seed(cfg, static_cast<std::int64_t>(i))) + ',' + hash + ',' +
               std::to_string(squared_l2_norm(runs[i].samples.back())) + ',' +
               std::to_string(runs[i].regenerations.times().size()) + '\n';
  }
  out.csv("audit_h1.csv", h1);
  out.csv("audit_h2.csv", h2);
  out.csv("results.csv", results);
  json j = base_summary(cfg);
  j["alpha"] = a.alpha;
  j["tests"] = a.tests;
  j["flagged"] = a.flagged;
  j["h1_rows"] = a.h1.size();
  j["h2_rows"] = a.h2.size();
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "audit: " + std::to_string(a.tests) + " non-vacuous tests, " +
               std::to_string(a.flagged) + " flagged";
  return r;
}

ExperimentResult ballprob_experiment(const ExperimentConfig& cfg, Outputs& out) {
  std::string table = "n,r,samples,sup_probability,reference,ratio\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < cfg.segments.size(); ++i) {
    MonteCarlo mc = monte_carlo(cfg);
    mc.master_seed = derive_trial_seed(cfg.seed, i);
    const auto n = cfg.segments[i];
    const auto ends = segment_sum_endpoints(cfg.d, cfg.p, cfg.segment, n, mc);
    for (const auto& row : ball_probability_profile(ends, cfg.d, n, cfg.radii)) {
      table += std::to_string(n) + ',' + std::to_string(row.r) + ',' + std::to_string(ends.size()) +
               ',' + fmt(row.sup_probability) + ',' + fmt(row.reference) + ',' + fmt(row.ratio) + '\n';
      worst = std::max(worst, row.ratio);
    }
  }
  out.csv("ballprob.csv", table);
  out.csv("results.csv", table);
  json j = base_summary(cfg);
  j["max_ratio"] = worst;
  j["soft_limit"] = 20.0;
  j["warning"] = worst > 20.0;
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "ballprob: max ratio " + fmt(worst) + (worst > 20.0 ? " (above 20, warning)" : "");
  return r;
}

ExperimentResult oracle_experiment(const ExperimentConfig& cfg, Outputs& out) {
  const OracleMode mode = cfg.mode == "float" ? OracleMode::kFloat : OracleMode::kRational;
  const OracleComparison c = compare_quenched_driven(cfg.d, cfg.p_num, cfg.p_den, cfg.steps, mode);
  const bool ok = mode == OracleMode::kRational ? c.exact_zero : c.tv <= 1e-12;
  const std::string row = std::to_string(cfg.d) + ',' + std::to_string(cfg.p_num) + ',' +
                          std::to_string(cfg.p_den) + ',' + std::to_string(cfg.steps) + ',' + cfg.mode +
                          ',' + fmt(c.tv) + ',' + (c.exact_zero ? "1" : "0") + ',' +
                          std::to_string(c.quenched_support) + ',' + std::to_string(c.driven_support) +
                          '\n';
  const std::string cols = "d,p_num,p_den,t,mode,tv,exact_zero,quenched_support,driven_support\n";
  out.csv("oracle.csv", cols + row);
  out.csv("results.csv", "config_hash," + cols + hex64(config_hash(cfg)) + ',' + row);
  json j = base_summary(cfg);
  j["tv"] = c.tv;
  j["exact_zero"] = c.exact_zero;
  j["quenched_support"] = c.quenched_support;
  j["driven_support"] = c.driven_support;
  j["quenched_mass"] = c.quenched_mass;
  j["driven_mass"] = c.driven_mass;
  j["pass"] = ok;
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.ok = ok;
  r.headline = "oracle: TV = " + fmt(c.tv) + " (supports " + std::to_string(c.quenched_support) +
               " / " + std::to_string(c.driven_support) + ")" + (ok ? "" : " FAILED");
  return r;
}

struct SweepPoint {
  double estimate = 0.0;
  double std_error = 0.0;
  double target = 0.0;
  MsdSeries series;
};

SweepPoint sweep_point(Experiment e, int d, double p, std::int64_t T, const MonteCarlo& mc,
                       const SampleSchedule& sample) {
  SweepPoint out;
  switch (e) {
    case Experiment::kVariance: {
      const auto times = sample.resolve(T);
      out.series = driving_msd(d, p, times, mc);
      out.estimate = out.series.msd.back().mean() / d;
      out.std_error = out.series.msd.back().std_error() / d;
      out.target = driving_variance_closed_form(d, p, T);
      break;
    }
    case Experiment::kCouple: {
      const CouplingEstimate c = coupling_agreement(d, p, T, mc);
      out.estimate = c.disagreement.value;
      out.std_error = c.disagreement.std_error;
      out.target = c.markov_reference;
      break;
    }
    default: {
      const DiffusionEstimate de = diffusion_constant_estimate(d, p, T, mc);
      out.estimate = de.estimate.value;
      out.std_error = de.estimate.std_error;
      out.target = de.target;
      out.series = de.series;
      break;
    }
  }
  return out;
}

std::string gnuplot_script() {
  return "# gnuplot -p sweep.gp\n"
         "set datafile separator ','\n"
         "set multiplot layout 1,2\n"
         "set title 'gap to target vs p'\n"
         "set xlabel 'p'\nset ylabel '|estimate - target|'\nset logscale x\n"
         "plot 'sweep.csv' using 3:10 every ::1 with linespoints title 'abs gap'\n"
         "unset logscale x\n"
         "set title 'MSD vs t'\n"
         "set xlabel 't'\nset ylabel 'E|X(t)|^2'\nset logscale xy\n"
         "plot 'sweep_msd.csv' using 5:6 every ::1 with points title 'msd'\n"
         "unset multiplot\n";
}

ExperimentResult sweep_experiment(const ExperimentConfig& cfg, Outputs& out) {
  const std::vector<int> ds = cfg.d_grid.empty() ? std::vector<int>{cfg.d} : cfg.d_grid;
  const std::vector<double> ps = cfg.p_grid.empty() ? std::vector<double>{cfg.p} : cfg.p_grid;
  const std::vector<std::int64_t> Ts =
      cfg.steps_grid.empty() ? std::vector<std::int64_t>{cfg.steps} : cfg.steps_grid;
  const std::string hash = hex64(config_hash(cfg));
  std::string table = "point,d,p,T,trials,experiment,estimate,std_error,target,abs_gap,status\n";
  std::string msd = "point,d,p,T,t,msd,std_error\n";
  std::int64_t point = 0;
  std::int64_t failed = 0;
  for (int d : ds) {
    for (double p : ps) {
      for (std::int64_t T : Ts) {
        MonteCarlo mc = monte_carlo(cfg);
        // Point 0 keeps the master seed, so a one-point sweep reproduces a direct run.
        if (point > 0) mc.master_seed = derive_trial_seed(cfg.seed, static_cast<std::uint64_t>(point));
        const std::string prefix = std::to_string(point) + ',' + std::to_string(d) + ',' + fmt(p) +
                                   ',' + std::to_string(T) + ',' + std::to_string(cfg.trials) + ',' +
                                   std::string(to_string(cfg.sweep_experiment)) + ',';
        try {
          const SweepPoint sp = sweep_point(cfg.sweep_experiment, d, p, T, mc, cfg.sample);
          table += prefix + fmt(sp.estimate) + ',' + fmt(sp.std_error) + ',' + fmt(sp.target) + ',' +
                   fmt(std::abs(sp.estimate - sp.target)) + ",ok\n";
          for (std::size_t i = 0; i < sp.series.times.size(); ++i) {
            msd += std::to_string(point) + ',' + std::to_string(d) + ',' + fmt(p) + ',' +
                   std::to_string(T) + ',' + std::to_string(sp.series.times[i]) + ',' +
                   fmt(sp.series.msd[i].mean()) + ',' + fmt(sp.series.msd[i].std_error()) + '\n';
          }
        } catch (const TrialFailure&) {
          throw;
        } catch (const std::exception& e) {
          ++failed;
          std::string msg = e.what();
          for (auto& ch : msg) {
            if (ch == ',' || ch == '\n') ch = ';';
          }
          table += prefix + ",,,,error: " + msg + '\n';
        }
        ++point;
      }
    }
  }
  out.csv("sweep.csv", table);
  out.csv("sweep_msd.csv", msd);
  out.raw("sweep.gp", gnuplot_script());
  std::string results = "config_hash," + table.substr(0, table.find('\n') + 1);
  for (std::size_t pos = table.find('\n') + 1; pos < table.size();) {
    const auto nl = table.find('\n', pos);
    results += hash + ',' + table.substr(pos, nl - pos + 1);
    pos = nl + 1;
  }
  out.csv("results.csv", results);
  json j = base_summary(cfg);
  j["points"] = point;
  j["failed_points"] = failed;
  out.json_file("summary.json", j);
  ExperimentResult r;
  r.headline = "sweep: " + std::to_string(point) + " points, " + std::to_string(failed) + " failed";
  return r;
}

}  // namespace

std::string_view code_version() { return MIRRORLAB_VERSION; }

std::string csv_header(const ExperimentConfig& cfg) {
  std::string h = "# mirrorlab " + std::string(code_version()) + "\n";
  h += "# log_base = e\n";
  h += "# master_seed = " + std::to_string(cfg.seed) + "\n";
  h += "# config_hash = " + hex64(config_hash(cfg)) + "\n";
  for (const auto& line : config_lines(cfg)) {
    if (echoed(line)) h += "# " + line + "\n";
  }
  return h;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    f.flush();
    if (!f) throw IoError("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::int64_t trial_id) {
  return derive_trial_seed(cfg.seed, static_cast<std::uint64_t>(trial_id));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  Outputs out(cfg);
  ExperimentResult r;
  switch (cfg.experiment) {
    case Experiment::kWalk: r = walk_experiment(cfg, out); break;
    case Experiment::kVariance: r = variance_experiment(cfg, out); break;
    case Experiment::kDiffusion: r = diffusion_experiment(cfg, out); break;
    case Experiment::kCouple: r = couple_experiment(cfg, out); break;
    case Experiment::kDiagnose: r = diagnose_experiment(cfg, out); break;
    case Experiment::kAudit: r = audit_experiment(cfg, out); break;
    case Experiment::kBallprob: r = ballprob_experiment(cfg, out); break;
    case Experiment::kOracle: r = oracle_experiment(cfg, out); break;
    case Experiment::kSweep: r = sweep_experiment(cfg, out); break;
  }
  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json timing;
  timing["runtime_seconds"] = r.runtime_seconds;
  timing["threads"] = resolve_threads(cfg.threads);
  out.json_file("timing.json", timing);
  r.files = out.files;
  return r;
}

void replay_walk(const ExperimentConfig& cfg, std::uint64_t seed, std::ostream& os) {
  WalkConfig wc = walk_config(cfg, replay_kind(cfg));
  validate_walk_config(wc);
  CounterRng rng(seed);
  const bool env = cfg.emit == "env" && wc.kind != WalkKind::kDriving;
  const WalkTrace tr = trace_walk(wc, rng, true, env);
  os << csv_header(cfg) << "# replay_seed = " << seed << "\n" << step_columns(cfg.d) << tr.rows;
  if (env) os << "# environment\n" << tr.env;
}

}  // namespace mirrorlab
