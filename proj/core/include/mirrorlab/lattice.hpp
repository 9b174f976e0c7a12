#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mirrorlab/rng.hpp"

namespace mirrorlab {

inline constexpr int kMinDim = 2;
inline constexpr int kMaxDim = 8;
inline constexpr int kMaxDirections = 2 * kMaxDim;

/// Signed axis direction +-e_j. Dense code: 2 * axis + (sign < 0).
class Direction {
 public:
  constexpr Direction() = default;
  constexpr explicit Direction(std::uint8_t code) : code_(code) {}

  static constexpr Direction from_axis(int axis, int sign) {
    return Direction(static_cast<std::uint8_t>(2 * axis + (sign < 0 ? 1 : 0)));
  }
  /// +e_1, the default starting velocity.
  static constexpr Direction e1() { return Direction(0); }

  constexpr int axis() const { return code_ >> 1; }
  constexpr int sign() const { return (code_ & 1U) ? -1 : 1; }
  constexpr std::uint8_t code() const { return code_; }

  constexpr Direction operator-() const {
    return Direction(static_cast<std::uint8_t>(code_ ^ 1U));
  }

  friend constexpr bool operator==(Direction, Direction) = default;
  friend constexpr auto operator<=>(Direction, Direction) = default;

 private:
  std::uint8_t code_ = 0;
};

/// Lattice site of Z^d. Coordinates beyond the dimension stay zero, so
/// equality, hashing and norms can run over the full array.
struct Site {
  std::array<std::int64_t, kMaxDim> coords{};

  static Site origin() { return Site{}; }

  Site& operator+=(Direction u) {
    coords[static_cast<std::size_t>(u.axis())] += u.sign();
    return *this;
  }
  friend Site operator+(Site s, Direction u) { return s += u; }

  /// this + r * u
  Site shifted(Direction u, std::int64_t r) const {
    Site s = *this;
    s.coords[static_cast<std::size_t>(u.axis())] += r * u.sign();
    return s;
  }

  friend bool operator==(const Site&, const Site&) = default;
  friend auto operator<=>(const Site&, const Site&) = default;

  template <typename H>
  friend H AbslHashValue(H h, const Site& s) {
    return H::combine(std::move(h), s.coords);
  }
};

std::int64_t linf_distance(const Site& a, const Site& b);
std::int64_t linf_norm(const Site& a);
std::int64_t squared_l2_norm(const Site& a);
Site operator+(const Site& a, const Site& b);
Site operator-(const Site& a, const Site& b);

/// A local scattering rule: the image of each of the 2d directions.
class Matching {
 public:
  Matching() = default;

  static Matching identity(int dim);
  /// Wraps a table of direction codes without validating it.
  static Matching from_codes(std::span<const std::uint8_t> codes);

  int dim() const { return dim_; }
  int num_directions() const { return 2 * dim_; }

  Direction operator()(Direction v) const { return Direction(table_[v.code()]); }
  void assign(Direction v, Direction image) { table_[v.code()] = image.code(); }

  std::span<const std::uint8_t> codes() const {
    return {table_.data(), static_cast<std::size_t>(2 * dim_)};
  }
  bool is_identity() const;

  friend bool operator==(const Matching&, const Matching&) = default;
  /// Lexicographic on the code table (dimension breaks ties).
  friend std::strong_ordering operator<=>(const Matching& a, const Matching& b) {
    if (auto c = a.table_ <=> b.table_; c != 0) return c;
    return a.dim_ <=> b.dim_;
  }

 private:
  std::array<std::uint8_t, kMaxDirections> table_{};
  std::uint8_t dim_ = 0;
};

/// m(v) for a valid matching and direction.
inline Direction apply_matching(const Matching& m, Direction v) { return m(v); }

/// True iff the table is a bijection on the 2d codes with m(-m(v)) = -v and
/// m(v) != -v everywhere. Malformed tables (wrong length, codes out of range)
/// are rejected, never thrown on.
bool validate_matching(std::span<const std::uint8_t> codes, int dim);
inline bool validate_matching(const Matching& m) {
  return validate_matching(m.codes(), m.dim());
}

/// The set M_d of admissible matchings, sorted by code table.
class MirrorFamily {
 public:
  /// Builds a family from explicit members (sorted and deduplicated). Meant
  /// for degenerate test families; the members are not validated.
  static MirrorFamily from_members(int dim, std::vector<Matching> members);

  int dim() const { return dim_; }
  std::size_t size() const { return members_.size(); }
  std::span<const Matching> members() const { return members_; }
  const Matching& operator[](std::uint32_t index) const { return members_[index]; }
  std::uint32_t identity_index() const { return identity_index_; }

  std::optional<std::uint32_t> index_of(const Matching& m) const;
  /// index_of, throwing InvariantError for non-members.
  std::uint32_t require_index(const Matching& m) const;

 private:
  friend MirrorFamily enumerate_matchings(int dim);
  MirrorFamily(int dim, std::vector<Matching> members);

  int dim_ = 0;
  std::vector<Matching> members_;
  std::uint32_t identity_index_ = 0;
};

/// (2d - 1)!!, the size of M_d.
std::uint64_t mirror_family_size(int dim);

/// Enumerates M_d by constraint propagation. Throws ConfigError unless
/// 2 <= dim <= 8.
MirrorFamily enumerate_matchings(int dim);

/// Process-wide cached family for `dim`; thread-safe.
const MirrorFamily& mirror_family(int dim);

/// Uniform member index (one uniform_index draw).
inline std::uint32_t sample_matching_index(const MirrorFamily& family, CounterRng& rng) {
  return static_cast<std::uint32_t>(rng.uniform_index(family.size()));
}
inline const Matching& sample_matching(const MirrorFamily& family, CounterRng& rng) {
  return family[sample_matching_index(family, rng)];
}

/// Membership in M_d(e, et) = { m : m(et) != -e }.
inline bool in_swap_domain(const Matching& m, Direction e, Direction et) {
  return m(et) != -e;
}

/**
 * Re-coupling transform used when the driven walk (velocity e) and the
 * driving walk (velocity et) disagree at a freshly discovered mirror.
 *
 * With a = base(et) and b = base(e), the result sends e -> a, et -> b and, to
 * stay reversible, -a -> -e and -b -> -et. Every other direction keeps its
 * image under `base`. The map is an involution on M_d(e, et), and the exit
 * direction of the driven walk equals the driving walk's: result(e) = base(et).
 *
 * Throws InvariantError if e == et or base is not in M_d(e, et).
 */
Matching rule4_transform(const Matching& base, Direction e, Direction et);

/// Space-separated direction codes, e.g. "2 3 0 1".
std::string format_codes(const Matching& m);

}  // namespace mirrorlab
