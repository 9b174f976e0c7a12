#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>

#include "mirrorlab/lattice.hpp"
#include "mirrorlab/rng.hpp"

namespace mirrorlab {

/// Bucket-grid cell side used for box queries: ceil(1/p), or 1024 for p = 0.
std::int64_t kinetic_cell_side(double p);

/**
 * Insertion-ordered set of mirror locations with two acceleration structures:
 * per-axis sorted lines (for axis rays) and a uniform bucket grid (for l-inf
 * boxes). Both always describe exactly `sites()`.
 */
class MirrorIndex {
 public:
  MirrorIndex(int dim, std::int64_t cell_side);

  /// Inserts x; returns false if it was already present.
  bool insert(const Site& x);
  bool contains(const Site& x) const { return members_.contains(x); }
  std::span<const Site> sites() const { return sites_; }
  std::size_t size() const { return sites_.size(); }
  void clear();

  /// Smallest r in [0, max_r] such that x - r*u is in the set, i.e. a mirror
  /// y with y + r*u = x.
  std::optional<std::int64_t> ray_query(const Site& x, Direction u, std::int64_t max_r) const;

  /// Number of members within l-inf distance r of center.
  std::int64_t box_count(const Site& center, std::int64_t r) const;

  /// max over members y of ||y - center||_inf (from the bounding box); -1 if empty.
  std::int64_t max_distance(const Site& center) const;

  /// Rebuilds both acceleration structures from `sites()` and compares.
  bool audit() const;

  int dim() const { return dim_; }
  std::int64_t cell_side() const { return cell_side_; }

 private:
  Site line_key(const Site& x, int axis) const;
  Site cell_of(const Site& x) const;

  int dim_;
  std::int64_t cell_side_;
  std::vector<Site> sites_;
  absl::flat_hash_set<Site> members_;
  std::array<absl::flat_hash_map<Site, std::vector<std::int64_t>>, kMaxDim> lines_;
  absl::flat_hash_map<Site, std::vector<Site>> cells_;
  Site lo_;
  Site hi_;
};

struct SiteRecord {
  std::uint32_t matching = 0;  // index into the mirror family
  std::int64_t first_visit = 0;
  bool in_T = false;
};

/**
 * Lazily sampled environment of one walk generation: matchings of visited
 * sites and the discovered-mirror set M(t). The generation origin always
 * belongs to M(t).
 */
class EnvironmentRecord {
 public:
  EnvironmentRecord(int dim, double p, Site origin = Site::origin());

  const SiteRecord* find(const Site& x) const {
    auto it = visited_.find(x);
    return it == visited_.end() ? nullptr : &it->second;
  }
  bool is_visited(const Site& x) const { return visited_.contains(x); }

  /// Stores a first-visit matching. Sites with in_T (and the origin) join M.
  /// Throws InvariantError if x was already visited in this generation.
  void record_discovery(const Site& x, std::uint32_t matching, std::int64_t t, bool in_T);

  const MirrorIndex& mirrors() const { return mirrors_; }
  std::optional<std::int64_t> ray_query(const Site& x, Direction u, std::int64_t max_r) const {
    return mirrors_.ray_query(x, u, max_r);
  }
  std::int64_t box_count(const Site& center, std::int64_t r) const {
    return mirrors_.box_count(center, r);
  }

  /// Fresh i.i.d. environment: clears everything, bumps the generation and
  /// re-inserts the origin into M.
  void reset();

  int dim() const { return dim_; }
  const Site& origin() const { return origin_; }
  std::int64_t generation() const { return generation_; }
  std::size_t visited_count() const { return visited_.size(); }

  /// One tab-separated line per visited site, ordered by first visit:
  /// x1 ... xd matching_index first_visit_time in_T generation
  void dump(std::ostream& os) const;

 private:
  int dim_;
  Site origin_;
  std::int64_t generation_ = 0;
  absl::flat_hash_map<Site, SiteRecord> visited_;
  MirrorIndex mirrors_;
};

/// Matching index at x under the quenched law. A first visit draws a
/// Bernoulli(p) mirror flag and, if set, a uniform member of M_d (which may be
/// the identity); the result is stored. Revisits consume no randomness.
std::uint32_t visit_quenched(EnvironmentRecord& env, const Site& x, std::int64_t t, double p,
                             const MirrorFamily& family, CounterRng& rng);

}  // namespace mirrorlab
