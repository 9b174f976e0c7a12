#include "mirrorlab/exact_oracle.hpp"

#include <algorithm>
#include <vector>

#include "mirrorlab/errors.hpp"
#include "mirrorlab/walks.hpp"

namespace mirrorlab {

namespace {

using Env = std::vector<std::pair<Site, std::uint32_t>>;  // sorted by site

struct State {
  Env env;
  Site x;
  std::uint8_t v = 0;
  std::uint8_t vt = 0;
  auto operator<=>(const State&) const = default;
};

std::optional<std::uint32_t> lookup(const Env& env, const Site& x) {
  auto it = std::lower_bound(env.begin(), env.end(), x,
                             [](const auto& e, const Site& s) { return e.first < s; });
  if (it != env.end() && it->first == x) return it->second;
  return std::nullopt;
}

Env with_site(const Env& env, const Site& x, std::uint32_t m) {
  Env out = env;
  auto it = std::lower_bound(out.begin(), out.end(), x,
                             [](const auto& e, const Site& s) { return e.first < s; });
  out.insert(it, {x, m});
  return out;
}

template <typename Num>
void check_args(int dim, const Num& p, std::int64_t t) {
  if (dim != 2 && dim != 3) throw ConfigError("exact oracle supports d = 2 and d = 3 only");
  if (t < 0 || t > oracle_horizon_cap(dim)) {
    throw ConfigError("exact oracle horizon must lie in [0, " +
                      std::to_string(oracle_horizon_cap(dim)) + "] for d = " + std::to_string(dim));
  }
  if (p < 0 || p > 1) throw ConfigError("exact oracle: p must lie in [0, 1]");
}

// Site law: the identity with weight 1 - p, every matching with weight p/|M_d|.
template <typename Num>
std::vector<std::pair<std::uint32_t, Num>> site_law(const MirrorFamily& family, const Num& p) {
  const Num q = p / Num(static_cast<long long>(family.size()));
  std::vector<std::pair<std::uint32_t, Num>> out;
  for (std::uint32_t i = 0; i < family.size(); ++i) {
    Num w = q;
    if (i == family.identity_index()) w += Num(1) - p;
    if (w != 0) out.emplace_back(i, w);
  }
  return out;
}

// Driving draws with their weights; the non-discovery branch carries the identity.
template <typename Num>
std::vector<std::pair<DrivingDraw, Num>> draw_law(const MirrorFamily& family, const Num& p) {
  std::vector<std::pair<DrivingDraw, Num>> out;
  if (p != 1) out.push_back({DrivingDraw{false, family.identity_index()}, Num(1) - p});
  if (p != 0) {
    const Num q = p / Num(static_cast<long long>(family.size()));
    for (std::uint32_t i = 0; i < family.size(); ++i) out.push_back({DrivingDraw{true, i}, q});
  }
  return out;
}

template <typename Num>
LawTable<Num> collect(int dim, std::int64_t t, const std::map<State, Num>& layer) {
  LawTable<Num> law;
  law.dim = dim;
  law.horizon = t;
  for (const auto& [s, w] : layer) law.entries[{s.x, Direction(s.v)}] += w;
  return law;
}

}  // namespace

std::int64_t oracle_horizon_cap(int dim) { return dim == 2 ? 8 : dim == 3 ? 5 : 0; }

template <typename Num>
LawTable<Num> exact_law_quenched(int dim, const Num& p, std::int64_t t) {
  check_args(dim, p, t);
  const MirrorFamily& family = mirror_family(dim);
  const auto choices = site_law(family, p);
  std::map<State, Num> layer;
  for (const auto& [m, w] : choices) {
    State s;
    s.env = {{Site::origin(), m}};
    s.v = Direction::e1().code();
    layer[s] += w;
  }
  for (std::int64_t step = 1; step <= t; ++step) {
    std::map<State, Num> next;
    for (const auto& [s, w] : layer) {
      const Direction v(s.v);
      Site x = s.x;
      x += v;
      if (auto m = lookup(s.env, x)) {
        State n{s.env, x, family[*m](v).code(), 0};
        next[n] += w;
        continue;
      }
      for (const auto& [m, wm] : choices) {
        State n{with_site(s.env, x, m), x, family[m](v).code(), 0};
        next[n] += w * wm;
      }
    }
    layer = std::move(next);
  }
  return collect(dim, t, layer);
}

template <typename Num>
LawTable<Num> exact_law_driven(int dim, const Num& p, std::int64_t t) {
  check_args(dim, p, t);
  const MirrorFamily& family = mirror_family(dim);
  const auto draws = draw_law(family, p);
  std::map<State, Num> layer;
  for (const auto& [d, w] : draws) {
    State s;
    s.env = {{Site::origin(), d.matching}};
    s.v = s.vt = Direction::e1().code();
    layer[s] += w;
  }
  for (std::int64_t step = 1; step <= t; ++step) {
    std::map<State, Num> next;
    for (const auto& [s, w] : layer) {
      const Direction v(s.v);
      const Direction vt(s.vt);
      Site x = s.x;
      x += v;
      const auto stored = lookup(s.env, x);
      for (const auto& [d, wd] : draws) {
        const DrivenChoice c = resolve_driven_matching(family, v, vt, stored, d);
        State n{stored ? s.env : with_site(s.env, x, c.matching), x, family[c.matching](v).code(),
                family[d.matching](vt).code()};
        next[n] += w * wd;
      }
    }
    layer = std::move(next);
  }
  return collect(dim, t, layer);
}

template <typename Num>
LawTable<Num> exact_law_driving(int dim, const Num& p, std::int64_t t) {
  check_args(dim, p, t);
  const MirrorFamily& family = mirror_family(dim);
  const auto draws = draw_law(family, p);
  std::map<std::pair<Site, Direction>, Num> layer;
  for (int c = 0; c < 2 * dim; ++c) {
    layer[{Site::origin(), Direction(static_cast<std::uint8_t>(c))}] =
        Num(1) / Num(static_cast<long long>(2 * dim));
  }
  for (std::int64_t step = 1; step <= t; ++step) {
    std::map<std::pair<Site, Direction>, Num> next;
    for (const auto& [key, w] : layer) {
      Site x = key.first;
      x += key.second;
      for (const auto& [d, wd] : draws) next[{x, family[d.matching](key.second)}] += w * wd;
    }
    layer = std::move(next);
  }
  LawTable<Num> law;
  law.dim = dim;
  law.horizon = t;
  law.entries = std::move(layer);
  return law;
}

template <typename Num>
Num total_variation(const LawTable<Num>& a, const LawTable<Num>& b) {
  if (a.dim != b.dim || a.horizon != b.horizon) {
    throw UsageError("total_variation: tables differ in dimension or horizon");
  }
  Num sum = 0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  auto absdiff = [](const Num& x, const Num& y) { return x > y ? Num(x - y) : Num(y - x); };
  while (ia != a.entries.end() || ib != b.entries.end()) {
    if (ib == b.entries.end() || (ia != a.entries.end() && ia->first < ib->first)) {
      sum += absdiff(ia->second, Num(0));
      ++ia;
    } else if (ia == a.entries.end() || ib->first < ia->first) {
      sum += absdiff(ib->second, Num(0));
      ++ib;
    } else {
      sum += absdiff(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return sum / 2;
}

template <typename Num>
std::pair<Num, Num> axis_moments(const LawTable<Num>& law, int axis) {
  Num mean = 0;
  Num second = 0;
  for (const auto& [key, w] : law.entries) {
    const Num c(static_cast<long long>(key.first.coords[static_cast<std::size_t>(axis)]));
    mean += w * c;
    second += w * c * c;
  }
  return {mean, second};
}

Rational driving_variance_rational(int dim, const Rational& p, std::int64_t t) {
  const Rational tt(static_cast<long long>(t));
  const Rational d(dim);
  if (p == 0) return tt * tt / d;
  const Rational rho = Rational(1) - p * Rational(2 * dim - 2) / Rational(2 * dim - 1);
  const Rational q = Rational(1) - rho;
  Rational pow = 1;
  for (std::int64_t i = 0; i < t; ++i) pow *= rho;
  return ((Rational(1) + rho) / q * tt - Rational(2) * rho * (Rational(1) - pow) / (q * q)) / d;
}

OracleComparison compare_quenched_driven(int dim, std::int64_t p_num, std::int64_t p_den,
                                         std::int64_t t, OracleMode mode) {
  if (p_den <= 0 || p_num < 0 || p_num > p_den) {
    throw ConfigError("oracle: need 0 <= p_num <= p_den and p_den > 0");
  }
  OracleComparison out;
  if (mode == OracleMode::kRational) {
    const Rational p(p_num, p_den);
    const auto q = exact_law_quenched(dim, p, t);
    const auto d = exact_law_driven(dim, p, t);
    const Rational tv = total_variation(q, d);
    out.tv = tv.convert_to<double>();
    out.exact_zero = tv == 0;
    out.quenched_support = q.entries.size();
    out.driven_support = d.entries.size();
    out.quenched_mass = q.mass().convert_to<double>();
    out.driven_mass = d.mass().convert_to<double>();
  } else {
    const double p = static_cast<double>(p_num) / static_cast<double>(p_den);
    const auto q = exact_law_quenched(dim, p, t);
    const auto d = exact_law_driven(dim, p, t);
    out.tv = total_variation(q, d);
    out.quenched_support = q.entries.size();
    out.driven_support = d.entries.size();
    out.quenched_mass = q.mass();
    out.driven_mass = d.mass();
  }
  return out;
}

template LawTable<Rational> exact_law_quenched(int, const Rational&, std::int64_t);
template LawTable<double> exact_law_quenched(int, const double&, std::int64_t);
template LawTable<Rational> exact_law_driven(int, const Rational&, std::int64_t);
template LawTable<double> exact_law_driven(int, const double&, std::int64_t);
template LawTable<Rational> exact_law_driving(int, const Rational&, std::int64_t);
template LawTable<double> exact_law_driving(int, const double&, std::int64_t);
template Rational total_variation(const LawTable<Rational>&, const LawTable<Rational>&);
template double total_variation(const LawTable<double>&, const LawTable<double>&);
template std::pair<Rational, Rational> axis_moments(const LawTable<Rational>&, int);
template std::pair<double, double> axis_moments(const LawTable<double>&, int);

}  // namespace mirrorlab
