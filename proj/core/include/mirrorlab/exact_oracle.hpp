#pragma once

#include <cstdint>
#include <map>
#include <utility>

#include <boost/multiprecision/cpp_int.hpp>

#include "mirrorlab/lattice.hpp"

namespace mirrorlab {

using Rational = boost::multiprecision::cpp_rational;

/// Law of (X(t), V(t)) at a fixed horizon.
template <typename Num>
struct LawTable {
  int dim = 2;
  std::int64_t horizon = 0;
  std::map<std::pair<Site, Direction>, Num> entries;

  Num mass() const {
    Num m = 0;
    for (const auto& [_, w] : entries) m += w;
    return m;
  }
};

/// Largest horizon the enumerations accept: 8 for d = 2, 5 for d = 3.
std::int64_t oracle_horizon_cap(int dim);

/// Quenched walk from the origin with V(0) = e1: every newly visited site
/// (the origin included) branches over the identity with weight 1 - p and each
/// member of M_d with weight p/|M_d|; revisits reuse the stored matching.
/// States with equal (seen environment, position, velocity) are merged.
/// Throws ConfigError outside d in {2, 3}, the horizon cap or p in [0, 1].
template <typename Num>
LawTable<Num> exact_law_quenched(int dim, const Num& p, std::int64_t t);

/// Driven walk from the origin with V(0) = V~(0) = e1, enumerated over the
/// driving randomness (origin draw included) and resolved by the coupling rules.
template <typename Num>
LawTable<Num> exact_law_driven(int dim, const Num& p, std::int64_t t);

/// Driving walk alone with a uniform initial direction.
template <typename Num>
LawTable<Num> exact_law_driving(int dim, const Num& p, std::int64_t t);

/// Half the l1 distance over the union of supports. Throws UsageError when
/// dimension or horizon differ.
template <typename Num>
Num total_variation(const LawTable<Num>& a, const LawTable<Num>& b);

/// Mean and second moment of coordinate `axis` of the position.
template <typename Num>
std::pair<Num, Num> axis_moments(const LawTable<Num>& law, int axis);

/// The driving-variance closed form evaluated in exact arithmetic.
Rational driving_variance_rational(int dim, const Rational& p, std::int64_t t);

struct OracleComparison {
  double tv = 0.0;
  bool exact_zero = false;  // rational mode only
  std::size_t quenched_support = 0;
  std::size_t driven_support = 0;
  double quenched_mass = 0.0;
  double driven_mass = 0.0;
};

enum class OracleMode { kRational, kFloat };

/// Quenched versus driven law at p = p_num / p_den.
OracleComparison compare_quenched_driven(int dim, std::int64_t p_num, std::int64_t p_den,
                                         std::int64_t t, OracleMode mode);

extern template LawTable<Rational> exact_law_quenched(int, const Rational&, std::int64_t);
extern template LawTable<double> exact_law_quenched(int, const double&, std::int64_t);
extern template LawTable<Rational> exact_law_driven(int, const Rational&, std::int64_t);
extern template LawTable<double> exact_law_driven(int, const double&, std::int64_t);
extern template LawTable<Rational> exact_law_driving(int, const Rational&, std::int64_t);
extern template LawTable<double> exact_law_driving(int, const double&, std::int64_t);
extern template Rational total_variation(const LawTable<Rational>&, const LawTable<Rational>&);
extern template double total_variation(const LawTable<double>&, const LawTable<double>&);
extern template std::pair<Rational, Rational> axis_moments(const LawTable<Rational>&, int);
extern template std::pair<double, double> axis_moments(const LawTable<double>&, int);

}  // namespace mirrorlab
