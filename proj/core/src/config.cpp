#include "mirrorlab/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mirrorlab {

namespace {

constexpr std::array<std::pair<Experiment, std::string_view>, 9> kExperimentNames{{
    {Experiment::kWalk, "walk"},
    {Experiment::kVariance, "variance"},
    {Experiment::kDiffusion, "diffusion"},
    {Experiment::kCouple, "couple"},
    {Experiment::kDiagnose, "diagnose"},
    {Experiment::kAudit, "audit"},
    {Experiment::kBallprob, "ballprob"},
    {Experiment::kOracle, "oracle"},
    {Experiment::kSweep, "sweep"},
}};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  s = trim(s);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

bool parse_real(std::string_view s, double& out) {
  s = trim(s);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

bool parse_bool(std::string_view s, bool& out) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    out = false;
    return true;
  }
  return false;
}

template <typename T, typename Parse>
bool parse_list(std::string_view s, std::vector<T>& out, Parse parse) {
  out.clear();
  s = trim(s);
  if (s.empty()) return true;
  while (true) {
    const auto comma = s.find(',');
    T v{};
    if (!parse(s.substr(0, comma), v)) return false;
    out.push_back(v);
    if (comma == std::string_view::npos) return true;
    s.remove_prefix(comma + 1);
  }
}

bool parse_schedule(std::string_view s, SampleSchedule& out) {
  s = trim(s);
  if (s == "pow2") {
    out = SampleSchedule{};
    return true;
  }
  if (s.starts_with("stride:")) {
    SampleSchedule sch;
    sch.kind = SampleSchedule::Kind::kStride;
    if (!parse_int(s.substr(7), sch.stride)) return false;
    out = sch;
    return true;
  }
  SampleSchedule sch;
  sch.kind = SampleSchedule::Kind::kExplicit;
  if (!parse_list<std::int64_t>(s, sch.times, parse_int<std::int64_t>)) return false;
  out = sch;
  return true;
}

std::string schedule_text(const SampleSchedule& s) {
  switch (s.kind) {
    case SampleSchedule::Kind::kPowersOfTwo:
      return "pow2";
    case SampleSchedule::Kind::kStride:
      return "stride:" + std::to_string(s.stride);
    case SampleSchedule::Kind::kExplicit:
      break;
  }
  std::string out;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s.times[i]);
  }
  return out;
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& v, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt(v[i]);
  }
  return out;
}

std::string int_text(std::int64_t v) { return std::to_string(v); }

// Returns an error message, empty on success.
using Setter = std::function<std::string(ExperimentConfig&, std::string_view)>;

template <typename Int>
Setter int_setter(Int ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, std::string_view v) -> std::string {
    return parse_int(v, c.*field) ? "" : "expected an integer, got '" + std::string(v) + "'";
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["experiment"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      try {
        c.experiment = parse_experiment(v);
        return "";
      } catch (const ConfigError& e) {
        return e.what();
      }
    };
    t["d"] = int_setter(&ExperimentConfig::d);
    t["p"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_real(v, c.p) ? "" : "expected a real number, got '" + std::string(v) + "'";
    };
    t["p_num"] = int_setter(&ExperimentConfig::p_num);
    t["p_den"] = int_setter(&ExperimentConfig::p_den);
    t["steps"] = int_setter(&ExperimentConfig::steps);
    t["trials"] = int_setter(&ExperimentConfig::trials);
    t["seed"] = int_setter(&ExperimentConfig::seed);
    t["threads"] = int_setter(&ExperimentConfig::threads);
    t["max_lag"] = int_setter(&ExperimentConfig::max_lag);
    t["segment"] = int_setter(&ExperimentConfig::segment);
    t["sample"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_schedule(v, c.sample) ? "" : "expected pow2, stride:N or a list of times";
    };
    t["out_dir"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      c.out_dir = std::string(trim(v));
      return c.out_dir.empty() ? "must not be empty" : "";
    };
    t["kind"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      try {
        c.kind = parse_walk_kind(trim(v));
        return "";
      } catch (const ConfigError& e) {
        return e.what();
      }
    };
    t["emit"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      c.emit = std::string(trim(v));
      return "";
    };
    t["mode"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      c.mode = std::string(trim(v));
      return "";
    };
    t["exact_heavy"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_bool(v, c.exact_heavy) ? "" : "expected a boolean";
    };
    t["all_windows"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_bool(v, c.all_windows) ? "" : "expected a boolean";
    };
    t["times"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_list<std::int64_t>(v, c.times, parse_int<std::int64_t>)
                 ? ""
                 : "expected a comma-separated list of integers";
    };
    t["segments"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_list<std::int64_t>(v, c.segments, parse_int<std::int64_t>)
                 ? ""
                 : "expected a comma-separated list of integers";
    };
    t["radii"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_list<std::int64_t>(v, c.radii, parse_int<std::int64_t>)
                 ? ""
                 : "expected a comma-separated list of integers";
    };
    t["sweep_experiment"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      try {
        c.sweep_experiment = parse_experiment(v);
        return "";
      } catch (const ConfigError& e) {
        return e.what();
      }
    };
    t["d_grid"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_list<int>(v, c.d_grid, parse_int<int>) ? ""
                                                         : "expected a comma-separated list of integers";
    };
    t["p_grid"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_list<double>(v, c.p_grid, parse_real) ? ""
                                                        : "expected a comma-separated list of reals";
    };
    t["steps_grid"] = [](ExperimentConfig& c, std::string_view v) -> std::string {
      return parse_list<std::int64_t>(v, c.steps_grid, parse_int<std::int64_t>)
                 ? ""
                 : "expected a comma-separated list of integers";
    };
    return t;
  }();
  return table;
}

std::string describe(const std::vector<ConfigViolation>& vs) {
  std::ostringstream os;
  os << "invalid configuration (" << vs.size() << (vs.size() == 1 ? " problem)" : " problems)");
  for (const auto& v : vs) {
    os << "\n  " << v.key;
    if (v.line > 0) os << " (line " << v.line << ")";
    os << ": " << v.message;
  }
  return os.str();
}

void check_ranges(const ExperimentConfig& c, const std::map<std::string, int, std::less<>>& lines,
                  std::vector<ConfigViolation>& out) {
  auto fail = [&](const std::string& key, std::string msg) {
    auto it = lines.find(key);
    out.push_back({key, it == lines.end() ? 0 : it->second, std::move(msg)});
  };
  if (c.d < kMinDim || c.d > kMaxDim) fail("d", "must lie in [2, 8], got " + std::to_string(c.d));
  if (!(c.p >= 0.0 && c.p <= 1.0)) fail("p", "must lie in [0, 1], got " + format_double(c.p));
  if (c.steps < 1) fail("steps", "must be at least 1");
  if (c.trials < 1) fail("trials", "must be at least 1");
  if (c.threads < 0) fail("threads", "must be non-negative");
  if (c.p_den <= 0) fail("p_den", "must be positive");
  if (c.p_num < 0 || c.p_num > c.p_den) fail("p_num", "must lie in [0, p_den]");
  if (c.max_lag < 0) fail("max_lag", "must be non-negative");
  if (c.segment < 1) fail("segment", "must be at least 1");
  for (auto n : c.segments) {
    if (n < 1) fail("segments", "entries must be at least 1");
  }
  if (c.segments.empty()) fail("segments", "must not be empty");
  for (auto r : c.radii) {
    if (r < 1) fail("radii", "entries must be at least 1");
  }
  if (c.radii.empty()) fail("radii", "must not be empty");
  for (auto t : c.times) {
    if (t < 0) fail("times", "entries must be non-negative");
  }
  if (c.sample.kind == SampleSchedule::Kind::kStride && c.sample.stride < 1) {
    fail("sample", "stride must be at least 1");
  }
  for (auto t : c.sample.times) {
    if (t < 0) fail("sample", "times must be non-negative");
  }
  if (c.emit != "csv" && c.emit != "env") fail("emit", "must be csv or env");
  if (c.mode != "rational" && c.mode != "float") fail("mode", "must be rational or float");
  if (c.experiment == Experiment::kWalk && c.kind == WalkKind::kDriving && c.emit == "env") {
    fail("emit", "the driving walk has no environment to dump");
  }
  for (int d : c.d_grid) {
    if (d < kMinDim || d > kMaxDim) fail("d_grid", "entries must lie in [2, 8]");
  }
  for (double p : c.p_grid) {
    if (!(p >= 0.0 && p <= 1.0)) fail("p_grid", "entries must lie in [0, 1]");
  }
  for (auto s : c.steps_grid) {
    if (s < 1) fail("steps_grid", "entries must be at least 1");
  }
  const auto e = c.sweep_experiment;
  if (e != Experiment::kDiffusion && e != Experiment::kVariance && e != Experiment::kCouple) {
    fail("sweep_experiment", "must be diffusion, variance or couple");
  }
  const double points = static_cast<double>(std::max<std::size_t>(1, c.d_grid.size())) *
                        static_cast<double>(std::max<std::size_t>(1, c.p_grid.size())) *
                        static_cast<double>(std::max<std::size_t>(1, c.steps_grid.size()));
  if (points > 1e4) fail("d_grid", "sweep grid has more than 10^4 points");
}

}  // namespace

std::string_view to_string(Experiment e) {
  for (const auto& [k, name] : kExperimentNames) {
    if (k == e) return name;
  }
  return "unknown";
}

Experiment parse_experiment(std::string_view name) {
  name = trim(name);
  for (const auto& [k, n] : kExperimentNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

ConfigParseError::ConfigParseError(std::vector<ConfigViolation> violations)
    : ConfigError(describe(violations)), violations_(std::move(violations)) {}

ExperimentConfig parse_config(std::string_view text,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  std::vector<ConfigViolation> errors;
  std::map<std::string, int, std::less<>> lines;
  const auto& table = setters();

  auto apply = [&](std::string_view key, std::string_view value, int line) {
    auto it = table.find(key);
    if (it == table.end()) {
      errors.push_back({std::string(key), line, "unknown key"});
      return;
    }
    lines[std::string(key)] = line;
    if (std::string msg = it->second(cfg, value); !msg.empty()) {
      errors.push_back({std::string(key), line, std::move(msg)});
    }
  };

  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back({std::string(line), line_no, "expected 'key = value'"});
      continue;
    }
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
  }
  for (const auto& [k, v] : overrides) apply(k, v, 0);

  check_ranges(cfg, lines, errors);
  if (!errors.empty()) throw ConfigParseError(std::move(errors));
  return cfg;
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

void validate_config(const ExperimentConfig& cfg) {
  std::vector<ConfigViolation> errors;
  check_ranges(cfg, {}, errors);
  if (!errors.empty()) throw ConfigParseError(std::move(errors));
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return ec == std::errc() ? std::string(buf.data(), ptr) : std::string("nan");
}

std::vector<std::string> config_lines(const ExperimentConfig& c) {
  std::vector<std::string> out;
  auto add = [&](const char* k, const std::string& v) { out.push_back(std::string(k) + " = " + v); };
  add("experiment", std::string(to_string(c.experiment)));
  add("d", std::to_string(c.d));
  add("p", format_double(c.p));
  add("p_num", std::to_string(c.p_num));
  add("p_den", std::to_string(c.p_den));
  add("steps", std::to_string(c.steps));
  add("trials", std::to_string(c.trials));
  add("seed", std::to_string(c.seed));
  add("sample", schedule_text(c.sample));
  add("threads", std::to_string(c.threads));
  add("out_dir", c.out_dir);
  add("kind", std::string(to_string(c.kind)));
  add("emit", c.emit);
  add("max_lag", std::to_string(c.max_lag));
  add("times", join(c.times, int_text));
  add("exact_heavy", c.exact_heavy ? "true" : "false");
  add("all_windows", c.all_windows ? "true" : "false");
  add("segment", std::to_string(c.segment));
  add("segments", join(c.segments, int_text));
  add("radii", join(c.radii, int_text));
  add("mode", c.mode);
  add("sweep_experiment", std::string(to_string(c.sweep_experiment)));
  add("d_grid", join(c.d_grid, [](int v) { return std::to_string(v); }));
  add("p_grid", join(c.p_grid, format_double));
  add("steps_grid", join(c.steps_grid, int_text));
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& line : config_lines(cfg)) {
    if (line.starts_with("threads ") || line.starts_with("out_dir ")) continue;
    for (unsigned char ch : line) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mirrorlab
