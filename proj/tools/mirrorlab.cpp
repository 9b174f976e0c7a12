// Command line front end: one subcommand per experiment plus `mirrors` and `check`.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mirrorlab/acceptance.hpp"
#include "mirrorlab/config.hpp"
#include "mirrorlab/errors.hpp"
#include "mirrorlab/experiments.hpp"
#include "mirrorlab/lattice.hpp"
#include "mirrorlab/parallel.hpp"

namespace {

using namespace mirrorlab;

enum ExitCode { kOk = 0, kCheckFailed = 1, kIoOrConfig = 2, kInvariant = 3 };

// Options that map one-to-one onto configuration keys. Values stay strings so
// the config parser does all type and range checking in one place.
struct KeyOption {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

struct ExperimentCommand {
  Experiment experiment;
  CLI::App* app = nullptr;
  std::vector<std::unique_ptr<KeyOption>> keys;
  std::string config_path;
  std::optional<std::uint64_t> replay;
  std::string emit_path;  // walk only
  bool env = false;       // walk only

  void add(const std::string& flags, const std::string& key, const std::string& help) {
    auto k = std::make_unique<KeyOption>();
    k->key = key;
    k->option = app->add_option(flags, k->value, help);
    keys.push_back(std::move(k));
  }
  void add_flag(const std::string& flags, const std::string& key, const std::string& help) {
    auto k = std::make_unique<KeyOption>();
    k->key = key;
    k->option = app->add_flag_callback(flags, [raw = k.get()] { raw->value = "true"; }, help);
    keys.push_back(std::move(k));
  }

  std::vector<std::pair<std::string, std::string>> overrides() const {
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("experiment", std::string(to_string(experiment)));
    for (const auto& k : keys) {
      if (k->option->count() > 0) out.emplace_back(k->key, k->value);
    }
    if (env) out.emplace_back("emit", "env");
    return out;
  }
};

ExperimentCommand& add_experiment(CLI::App& app, std::vector<std::unique_ptr<ExperimentCommand>>& cmds,
                                  Experiment e, const std::string& help) {
  auto cmd = std::make_unique<ExperimentCommand>();
  cmd->experiment = e;
  cmd->app = app.add_subcommand(std::string(to_string(e)), help);
  cmd->app->add_option("--config", cmd->config_path, "key = value file; flags override it");
  cmd->add("--d", "d", "lattice dimension (2..8)");
  if (e != Experiment::kOracle) cmd->add("--p", "p", "mirror density");
  cmd->add(e == Experiment::kOracle ? "--t,--steps" : "--steps,--T", "steps", "time horizon");
  if (e != Experiment::kOracle) {
    cmd->add("--trials", "trials", "independent trials");
    cmd->add("--sample", "sample", "sample times: pow2, stride:N or a comma list");
    cmd->add("--threads", "threads", "worker threads (0 = auto)");
  }
  cmd->add("--seed", "seed", "master seed");
  cmd->add("--out", "out_dir", "output directory");
  cmds.push_back(std::move(cmd));
  return *cmds.back();
}

int run_mirrors(int d, bool list) {
  const MirrorFamily& fam = mirror_family(d);
  std::cout << fam.size() << '\n';
  if (list) {
    for (const auto& m : fam.members()) std::cout << format_codes(m) << '\n';
  }
  return kOk;
}

int run_check(const AcceptanceOptions& opts, const std::vector<int>& only) {
  std::vector<int> ids = only;
  if (ids.empty()) {
    for (int i = 1; i <= kCriterionCount; ++i) ids.push_back(i);
  }
  std::vector<CriterionOutcome> outcomes;
  for (int id : ids) {
    outcomes.push_back(run_criterion(id, opts));
    std::cout << format_outcome(outcomes.back()) << std::endl;
  }
  const bool ok = acceptance_passed(outcomes);
  std::cout << (ok ? "acceptance: all criteria passed" : "acceptance: FAILED") << '\n';
  return ok ? kOk : kCheckFailed;
}

int run_command(const ExperimentCommand& cmd) {
  const auto overrides = cmd.overrides();
  const ExperimentConfig cfg = cmd.config_path.empty() ? parse_config("", overrides)
                                                       : load_config(cmd.config_path, overrides);
  if (cmd.replay) {
    replay_walk(cfg, *cmd.replay, std::cout);
    return kOk;
  }
  try {
    const ExperimentResult r = run_experiment(cfg);
    if (!cmd.emit_path.empty()) {
      std::error_code ec;
      std::filesystem::copy_file(std::filesystem::path(cfg.out_dir) / "walk.csv", cmd.emit_path,
                                 std::filesystem::copy_options::overwrite_existing, ec);
      if (ec) throw IoError("cannot write '" + cmd.emit_path + "': " + ec.message());
    }
    std::cout << r.headline << '\n';
    for (const auto& f : r.files) std::cout << "  " << cfg.out_dir << '/' << f << '\n';
    return r.ok ? kOk : kCheckFailed;
  } catch (const TrialFailure& e) {
    std::cerr << "error: trial " << e.trial_id() << " failed: " << e.what() << '\n'
              << "replay: mirrorlab " << to_string(cfg.experiment) << " ... --replay "
              << trial_seed(cfg, e.trial_id()) << '\n';
    return e.invariant() ? kInvariant : kIoOrConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mirrorlab: Lorentz mirror walks on Z^d"};
  app.require_subcommand(1);

  auto* mirrors = app.add_subcommand("mirrors", "count or list the admissible matchings M_d");
  int mirrors_d = 2;
  bool mirrors_list = false;
  mirrors->add_option("--d", mirrors_d, "dimension")->required()->check(CLI::Range(kMinDim, kMaxDim));
  mirrors->add_flag("--list", mirrors_list, "print one matching per line as direction codes");

  std::vector<std::unique_ptr<ExperimentCommand>> cmds;

  auto& walk = add_experiment(app, cmds, Experiment::kWalk, "simulate trajectories");
  walk.add("--kind", "kind", "quenched | driving | coupled | regenerated");
  walk.app->add_option("--emit", walk.emit_path, "also copy the trajectory CSV to this path");
  walk.app->add_flag("--env", walk.env, "dump the environment of trial 0 to env.tsv");

  auto& variance = add_experiment(app, cmds, Experiment::kVariance, "driving-walk variance and autocorrelation");
  variance.add("--max-lag", "max_lag", "largest autocorrelation lag");
  variance.add("--times", "times", "comma list of sample times");

  add_experiment(app, cmds, Experiment::kDiffusion, "diffusion constant of the regenerated walk");
  add_experiment(app, cmds, Experiment::kCouple, "coupling disagreement and re-coupling rate");

  auto& diagnose = add_experiment(app, cmds, Experiment::kDiagnose, "stopping times and trajectory audits");
  diagnose.add("--kind", "kind", "quenched | coupled | regenerated");
  diagnose.add_flag("--exact-heavy", "exact_heavy", "use the exact heavy-block search");
  diagnose.add("--all-windows", "all_windows", "audit the sparsity inequality on every window");

  add_experiment(app, cmds, Experiment::kAudit, "H1/H2 hypothesis audit");

  auto& ballprob = add_experiment(app, cmds, Experiment::kBallprob, "anti-concentration profile");
  ballprob.add("--segment", "segment", "steps per driving segment");
  ballprob.add("--segments", "segments", "comma list of segment counts n");
  ballprob.add("--radii", "radii", "comma list of radii");

  auto& oracle = add_experiment(app, cmds, Experiment::kOracle, "exact quenched vs driven law");
  oracle.add("--p-num", "p_num", "numerator of p");
  oracle.add("--p-den", "p_den", "denominator of p");
  oracle.add("--mode", "mode", "rational | float");

  auto& sweep = add_experiment(app, cmds, Experiment::kSweep, "grid sweep over d, p and T");
  sweep.add("--of", "sweep_experiment", "diffusion | variance | couple");
  sweep.add("--d-grid", "d_grid", "comma list of dimensions");
  sweep.add("--p-grid", "p_grid", "comma list of densities");
  sweep.add("--steps-grid,--T-grid", "steps_grid", "comma list of horizons");

  for (auto& c : cmds) {
    if (c->experiment == Experiment::kOracle || c->experiment == Experiment::kSweep) continue;
    c->app->add_option("--replay", c->replay, "re-run one trajectory from its trial seed and print it");
  }

  auto* check = app.add_subcommand("check", "run the acceptance suite");
  AcceptanceOptions check_opts;
  std::vector<int> check_only;
  check->add_option("--threads", check_opts.threads, "worker threads (0 = auto)");
  check->add_option("--seed", check_opts.seed, "master seed");
  check->add_option("--scratch", check_opts.scratch_dir, "scratch directory for the determinism check");
  check->add_option("--only", check_only, "criterion ids to run")->delimiter(',')->check(CLI::Range(1, kCriterionCount));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kIoOrConfig;
  }

  try {
    if (mirrors->parsed()) return run_mirrors(mirrors_d, mirrors_list);
    if (check->parsed()) return run_check(check_opts, check_only);
    for (const auto& c : cmds) {
      if (c->app->parsed()) return run_command(*c);
    }
  } catch (const ConfigParseError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& v : e.violations()) {
      std::cerr << "  " << v.key;
      if (v.line > 0) std::cerr << " (line " << v.line << ")";
      std::cerr << ": " << v.message << '\n';
    }
    return kIoOrConfig;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kIoOrConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoOrConfig;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoOrConfig;
  }
  return kOk;
}
