#include "mirrorlab/lattice.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "mirrorlab/errors.hpp"

namespace mirrorlab {

std::int64_t linf_distance(const Site& a, const Site& b) {
  std::int64_t best = 0;
  for (std::size_t j = 0; j < a.coords.size(); ++j) {
    best = std::max(best, std::abs(a.coords[j] - b.coords[j]));
  }
  return best;
}

std::int64_t linf_norm(const Site& a) { return linf_distance(a, Site{}); }

std::int64_t squared_l2_norm(const Site& a) {
  std::int64_t s = 0;
  for (auto c : a.coords) s += c * c;
  return s;
}

Site operator+(const Site& a, const Site& b) {
  Site s;
  for (std::size_t j = 0; j < s.coords.size(); ++j) s.coords[j] = a.coords[j] + b.coords[j];
  return s;
}

Site operator-(const Site& a, const Site& b) {
  Site s;
  for (std::size_t j = 0; j < s.coords.size(); ++j) s.coords[j] = a.coords[j] - b.coords[j];
  return s;
}

Matching Matching::identity(int dim) {
  Matching m;
  m.dim_ = static_cast<std::uint8_t>(dim);
  for (int v = 0; v < 2 * dim; ++v) m.table_[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(v);
  return m;
}

Matching Matching::from_codes(std::span<const std::uint8_t> codes) {
  Matching m;
  m.dim_ = static_cast<std::uint8_t>(std::min<std::size_t>(codes.size(), kMaxDirections) / 2);
  std::copy_n(codes.begin(), std::min<std::size_t>(codes.size(), kMaxDirections), m.table_.begin());
  return m;
}

bool Matching::is_identity() const {
  for (int v = 0; v < 2 * dim_; ++v) {
    if (table_[static_cast<std::size_t>(v)] != v) return false;
  }
  return true;
}

bool validate_matching(std::span<const std::uint8_t> codes, int dim) {
  if (dim < 1 || dim > kMaxDim) return false;
  const auto n = static_cast<std::size_t>(2 * dim);
  if (codes.size() != n) return false;
  std::array<bool, kMaxDirections> used{};
  for (auto w : codes) {
    if (w >= n || used[w]) return false;
    used[w] = true;
  }
  for (std::size_t v = 0; v < n; ++v) {
    const auto neg_v = v ^ 1U;
    if (codes[v] == neg_v) return false;                  // head-on
    if (codes[codes[v] ^ 1U] != neg_v) return false;      // m(-m(v)) = -v
  }
  return true;
}

MirrorFamily::MirrorFamily(int dim, std::vector<Matching> members)
    : dim_(dim), members_(std::move(members)) {
  std::sort(members_.begin(), members_.end());
  members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
  if (auto id = index_of(Matching::identity(dim))) identity_index_ = *id;
}

MirrorFamily MirrorFamily::from_members(int dim, std::vector<Matching> members) {
  if (members.empty()) throw ConfigError("mirror family must be nonempty");
  return MirrorFamily(dim, std::move(members));
}

std::optional<std::uint32_t> MirrorFamily::index_of(const Matching& m) const {
  auto it = std::lower_bound(members_.begin(), members_.end(), m);
  if (it == members_.end() || *it != m) return std::nullopt;
  return static_cast<std::uint32_t>(it - members_.begin());
}

std::uint32_t MirrorFamily::require_index(const Matching& m) const {
  if (auto i = index_of(m)) return *i;
  throw InvariantError("matching [" + format_codes(m) + "] is not a member of M_" +
                       std::to_string(dim_));
}

std::uint64_t mirror_family_size(int dim) {
  std::uint64_t n = 1;
  for (int j = 1; j <= dim; ++j) n *= static_cast<std::uint64_t>(2 * (dim - j) + 1);
  return n;
}

namespace {

constexpr std::uint8_t kUnassigned = 0xFF;

// Depth-first over the lowest unassigned direction. Assigning m(v) = w forces
// m(-w) = -v; w must avoid -v (head-on) and images already taken.
void extend(int n, std::array<std::uint8_t, kMaxDirections>& table,
            std::array<bool, kMaxDirections>& taken, std::vector<Matching>& out) {
  int v = 0;
  while (v < n && table[static_cast<std::size_t>(v)] != kUnassigned) ++v;
  if (v == n) {
    out.push_back(Matching::from_codes({table.data(), static_cast<std::size_t>(n)}));
    return;
  }
  const auto uv = static_cast<std::uint8_t>(v);
  const auto neg_v = static_cast<std::uint8_t>(uv ^ 1U);
  for (std::uint8_t w = 0; w < n; ++w) {
    if (w == neg_v || taken[w]) continue;
    const auto neg_w = static_cast<std::uint8_t>(w ^ 1U);
    table[uv] = w;
    taken[w] = true;
    // w != -v guarantees -w != v, so the forced entry is a second slot.
    if (table[neg_w] == kUnassigned && !taken[neg_v]) {
      table[neg_w] = neg_v;
      taken[neg_v] = true;
      extend(n, table, taken, out);
      taken[neg_v] = false;
      table[neg_w] = kUnassigned;
    }
    taken[w] = false;
    table[uv] = kUnassigned;
  }
}

}  // namespace

MirrorFamily enumerate_matchings(int dim) {
  if (dim < kMinDim || dim > kMaxDim) {
    throw ConfigError("dimension must lie in [2, 8], got " + std::to_string(dim));
  }
  std::array<std::uint8_t, kMaxDirections> table;
  table.fill(kUnassigned);
  std::array<bool, kMaxDirections> taken{};
  std::vector<Matching> members;
  members.reserve(mirror_family_size(dim));
  extend(2 * dim, table, taken, members);
  return MirrorFamily(dim, std::move(members));
}

const MirrorFamily& mirror_family(int dim) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<MirrorFamily>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[dim];
  if (!slot) slot = std::make_unique<MirrorFamily>(enumerate_matchings(dim));
  return *slot;
}

Matching rule4_transform(const Matching& base, Direction e, Direction et) {
  if (e == et) throw InvariantError("rule4_transform: velocities agree");
  if (!in_swap_domain(base, e, et)) {
    throw InvariantError("rule4_transform: base(et) = -e, outside the swap domain");
  }
  const Direction a = base(et);
  const Direction b = base(e);
  Matching m = base;
  m.assign(e, a);
  m.assign(et, b);
  m.assign(-a, -e);
  m.assign(-b, -et);
  return m;
}

std::string format_codes(const Matching& m) {
  std::ostringstream os;
  bool first = true;
  for (auto c : m.codes()) {
    if (!first) os << ' ';
    os << static_cast<int>(c);
    first = false;
  }
  return os.str();
}

}  // namespace mirrorlab
