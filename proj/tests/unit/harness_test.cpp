#include <doctest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mirrorlab/config.hpp"
#include "mirrorlab/errors.hpp"
#include "mirrorlab/experiments.hpp"
#include "mirrorlab/parallel.hpp"
#include "mirrorlab/rng.hpp"

using namespace mirrorlab;
namespace fs = std::filesystem;

namespace {

// Reference SplitMix64, written out independently of the library.
std::uint64_t splitmix(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    out += line + '\n';
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mirrorlab-harness-" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("rng stream is SplitMix64 bit for bit") {
  for (std::uint64_t key : {0ULL, 1ULL, 42ULL, 0xDEADBEEFCAFEULL}) {
    CounterRng rng(key);
    std::uint64_t state = key;
    for (int i = 0; i < 1000; ++i) REQUIRE(rng() == splitmix(state));
    CHECK(rng.counter() == 1000);
  }
  // Seeking by counter reproduces the stream.
  CounterRng a(9), b(9, 500);
  for (int i = 0; i < 500; ++i) a();
  CHECK(a() == b());
  CounterRng u(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = u.uniform01();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  CounterRng one(5);
  const auto before = one.counter();
  one.bernoulli(0.0);
  CHECK(one.counter() == before + 1);
}

TEST_CASE("uniform_index stays in range and covers small ranges evenly") {
  CounterRng rng(17);
  std::vector<int> hist(7);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = rng.uniform_index(7);
    REQUIRE(k < 7);
    ++hist[k];
  }
  for (int c : hist) CHECK(std::abs(c - n / 7) <= 4 * std::sqrt(n / 7.0));
  CHECK(rng.uniform_index(1) == 0);
}

TEST_CASE("derived trial seeds do not collide and avalanche") {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(1 << 21);
  for (std::uint64_t i = 0; i < 1000000; ++i) seen.insert(derive_trial_seed(12345, i));
  CHECK(seen.size() == 1000000);

  double flipped = 0;
  int n = 0;
  CounterRng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t master = rng();
    const std::uint64_t id = rng() >> 20;
    const int bit = static_cast<int>(rng.uniform_index(64));
    flipped += std::popcount(derive_trial_seed(master, id) ^ derive_trial_seed(master ^ (1ULL << bit), id));
    ++n;
  }
  CHECK(flipped / n >= 20.0);
  CHECK(derive_trial_seed(7, 3) ==
        mix64(mix64(7ULL ^ (3ULL * 0xD1B54A32D192ED03ULL))));
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config("experiment = couple\n d = 3 # comment\np=0.02\nsteps = 50\n");
  CHECK(cfg.experiment == Experiment::kCouple);
  CHECK(cfg.d == 3);
  CHECK(cfg.p == 0.02);
  CHECK(cfg.steps == 50);

  const auto flags = parse_config("", {{"d", "4"}, {"trials", "7"}, {"sample", "stride:5"}});
  CHECK(flags.d == 4);
  CHECK(flags.trials == 7);
  CHECK(flags.sample.kind == SampleSchedule::Kind::kStride);
  CHECK(flags.sample.stride == 5);

  const auto over = parse_config("d = 3\n", {{"d", "5"}});
  CHECK(over.d == 5);
}

TEST_CASE("config violations name the key and line") {
  try {
    parse_config("d = 3\np = 1.5\n");
    FAIL("expected a ConfigParseError");
  } catch (const ConfigParseError& e) {
    REQUIRE(e.violations().size() == 1);
    CHECK(e.violations()[0].key == "p");
    CHECK(e.violations()[0].line == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_config("d = 1\nbogus = 3\ntrials = x\nno equals sign\n");
    FAIL("expected a ConfigParseError");
  } catch (const ConfigParseError& e) {
    std::vector<std::string> keys;
    for (const auto& v : e.violations()) keys.push_back(v.key);
    CHECK(e.violations().size() == 4);
    CHECK(std::find(keys.begin(), keys.end(), "d") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "bogus") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "trials") != keys.end());
  }
  CHECK_THROWS_AS(parse_config("experiment = nothing\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/mirrorlab.cfg"), ConfigError);
}

TEST_CASE("canonical lines round-trip and the hash ignores threads and out_dir") {
  auto cfg = parse_config("experiment = sweep\nd_grid = 2,3\np_grid = 0.1,0.05\nsample = 1,5,9\n");
  std::string text;
  for (const auto& l : config_lines(cfg)) text += l + "\n";
  const auto again = parse_config(text);
  CHECK(config_lines(again) == config_lines(cfg));
  CHECK(config_hash(again) == config_hash(cfg));

  auto other = cfg;
  other.threads = 13;
  other.out_dir = "/elsewhere";
  CHECK(config_hash(other) == config_hash(cfg));
  other.seed += 1;
  CHECK(config_hash(other) != config_hash(cfg));
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3)) == 1.0 / 3);
}

TEST_CASE("run_trials is indexed by trial id and reports the lowest failure") {
  auto square = [](std::int64_t i) { return i * i; };
  const auto a = run_trials<std::int64_t>(1000, 1, square);
  const auto b = run_trials<std::int64_t>(1000, 6, square);
  CHECK(a == b);
  CHECK(a[999] == 999 * 999);

  auto failing = [](std::int64_t i) -> int {
    if (i == 37 || i == 80) throw InvariantError("boom " + std::to_string(i));
    if (i == 90) throw std::runtime_error("other");
    return 0;
  };
  for (int threads : {1, 4}) {
    try {
      run_trials<int>(200, threads, failing);
      FAIL("expected TrialFailure");
    } catch (const TrialFailure& f) {
      CHECK(f.trial_id() == 37);
      CHECK(f.invariant());
      CHECK(std::string(f.what()) == "boom 37");
    }
  }
  try {
    run_trials<int>(100, 1, [](std::int64_t i) -> int {
      if (i == 5) throw ConfigError("bad");
      return 0;
    });
  } catch (const TrialFailure& f) {
    CHECK_FALSE(f.invariant());
  }
  CHECK(resolve_threads(3) >= 1);
}

TEST_CASE("experiment outputs are identical across thread counts") {
  for (const char* exp : {"diffusion", "couple", "walk", "diagnose"}) {
    std::vector<std::pair<std::string, std::string>> base = {
        {"experiment", exp}, {"d", "3"}, {"p", "0.1"}, {"steps", "300"}, {"trials", "40"}, {"seed", "99"}};
    auto one = base, eight = base;
    const auto d1 = scratch(std::string(exp) + "-1"), d8 = scratch(std::string(exp) + "-8");
    one.push_back({"threads", "1"});
    one.push_back({"out_dir", d1.string()});
    eight.push_back({"threads", "8"});
    eight.push_back({"out_dir", d8.string()});
    const auto r1 = run_experiment(parse_config("", one));
    const auto r8 = run_experiment(parse_config("", eight));
    REQUIRE(r1.files == r8.files);
    for (const auto& f : r1.files) {
      if (f == "timing.json") continue;
      CHECK_MESSAGE(slurp(d1 / f) == slurp(d8 / f), exp << "/" << f);
    }
    for (const auto& entry : fs::directory_iterator(d1)) {
      CHECK(entry.path().extension() != ".tmp");
    }
  }
}

TEST_CASE("csv files open with the metadata header") {
  const auto dir = scratch("header");
  const auto cfg = parse_config("", {{"experiment", "diffusion"}, {"d", "3"}, {"p", "0.2"},
                                     {"steps", "100"}, {"trials", "10"}, {"out_dir", dir.string()}});
  run_experiment(cfg);
  const std::string text = slurp(dir / "diffusion.csv");
  CHECK(text.rfind(csv_header(cfg), 0) == 0);
  CHECK(text.find("# log_base = e") != std::string::npos);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["target"].get<double>() == doctest::Approx(2.5));
  CHECK(summary["log_base"] == "e");
  CHECK(summary.contains("runtime_seconds") == false);
  const auto timing = nlohmann::json::parse(slurp(dir / "timing.json"));
  CHECK(timing.contains("runtime_seconds"));
}

TEST_CASE("a one-point sweep reproduces the plain experiment") {
  const auto ds = scratch("sweep"), dd = scratch("single");
  const std::vector<std::pair<std::string, std::string>> common = {
      {"d", "3"}, {"p", "0.1"}, {"steps", "200"}, {"trials", "30"}, {"seed", "5"}};
  auto sweep = common, single = common;
  sweep.insert(sweep.end(), {{"experiment", "sweep"}, {"d_grid", "3"}, {"p_grid", "0.1"},
                             {"steps_grid", "200"}, {"out_dir", ds.string()}});
  single.insert(single.end(), {{"experiment", "diffusion"}, {"out_dir", dd.string()}});
  run_experiment(parse_config("", sweep));
  run_experiment(parse_config("", single));
  const auto summary = nlohmann::json::parse(slurp(dd / "summary.json"));
  const std::string rows = strip_comments(slurp(ds / "sweep.csv"));
  CHECK(rows.find(format_double(summary["estimate"].get<double>())) != std::string::npos);
}

TEST_CASE("replay reproduces the first trajectory") {
  const auto dir = scratch("replay");
  const auto cfg = parse_config("", {{"experiment", "walk"}, {"kind", "quenched"}, {"d", "2"},
                                     {"p", "0.3"}, {"steps", "200"}, {"trials", "3"},
                                     {"seed", "11"}, {"out_dir", dir.string()}});
  run_experiment(cfg);
  std::ostringstream os;
  replay_walk(cfg, trial_seed(cfg, 0), os);
  CHECK(strip_comments(os.str()) == strip_comments(slurp(dir / "walk.csv")));
  CHECK(os.str().find("# replay_seed = " + std::to_string(trial_seed(cfg, 0))) != std::string::npos);
}

TEST_CASE("atomic writes and unwritable outputs") {
  const auto dir = scratch("atomic");
  fs::create_directories(dir);
  write_file_atomic((dir / "a.txt").string(), "first");
  write_file_atomic((dir / "a.txt").string(), "second");
  CHECK(slurp(dir / "a.txt") == "second");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  CHECK_THROWS_AS(write_file_atomic("/proc/mirrorlab/nope.txt", "x"), IoError);
  const auto cfg = parse_config("", {{"trials", "2"}, {"steps", "10"}, {"out_dir", "/proc/mirrorlab-out"}});
  CHECK_THROWS_AS(run_experiment(cfg), IoError);
}

TEST_CASE("oracle experiment") {
  const auto dir = scratch("oracle");
  const auto cfg = parse_config("", {{"experiment", "oracle"}, {"d", "2"}, {"p_num", "1"},
                                     {"p_den", "4"}, {"steps", "3"}, {"out_dir", dir.string()}});
  const auto r = run_experiment(cfg);
  CHECK(r.ok);
  CHECK(strip_comments(slurp(dir / "oracle.csv")).find(",1,") != std::string::npos);
}
