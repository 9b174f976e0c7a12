#include "mirrorlab/environment.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mirrorlab/errors.hpp"

namespace mirrorlab {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::int64_t kinetic_cell_side(double p) {
  if (!(p > 0.0)) return 1024;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(1.0 / p)));
}

MirrorIndex::MirrorIndex(int dim, std::int64_t cell_side)
    : dim_(dim), cell_side_(std::max<std::int64_t>(1, cell_side)) {}

Site MirrorIndex::line_key(const Site& x, int axis) const {
  Site k = x;
  k.coords[static_cast<std::size_t>(axis)] = 0;
  return k;
}

Site MirrorIndex::cell_of(const Site& x) const {
  Site c;
  for (int j = 0; j < dim_; ++j) {
    c.coords[static_cast<std::size_t>(j)] = floor_div(x.coords[static_cast<std::size_t>(j)], cell_side_);
  }
  return c;
}

bool MirrorIndex::insert(const Site& x) {
  if (!members_.insert(x).second) return false;
  sites_.push_back(x);
  for (int j = 0; j < dim_; ++j) {
    auto& line = lines_[static_cast<std::size_t>(j)][line_key(x, j)];
    const auto c = x.coords[static_cast<std::size_t>(j)];
    line.insert(std::upper_bound(line.begin(), line.end(), c), c);
  }
  cells_[cell_of(x)].push_back(x);
  for (int j = 0; j < dim_; ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (sites_.size() == 1 || x.coords[k] < lo_.coords[k]) lo_.coords[k] = x.coords[k];
    if (sites_.size() == 1 || x.coords[k] > hi_.coords[k]) hi_.coords[k] = x.coords[k];
  }
  return true;
}

void MirrorIndex::clear() {
  sites_.clear();
  members_.clear();
  for (auto& l : lines_) l.clear();
  cells_.clear();
}

std::optional<std::int64_t> MirrorIndex::ray_query(const Site& x, Direction u,
                                                   std::int64_t max_r) const {
  if (max_r < 0) return std::nullopt;
  const int axis = u.axis();
  const auto& lines = lines_[static_cast<std::size_t>(axis)];
  auto it = lines.find(line_key(x, axis));
  if (it == lines.end()) return std::nullopt;
  const auto& line = it->second;
  const std::int64_t xc = x.coords[static_cast<std::size_t>(axis)];
  std::int64_t r;
  if (u.sign() > 0) {
    // largest mirror coordinate <= xc
    auto pos = std::upper_bound(line.begin(), line.end(), xc);
    if (pos == line.begin()) return std::nullopt;
    r = xc - *std::prev(pos);
  } else {
    auto pos = std::lower_bound(line.begin(), line.end(), xc);
    if (pos == line.end()) return std::nullopt;
    r = *pos - xc;
  }
  if (r > max_r) return std::nullopt;
  return r;
}

std::int64_t MirrorIndex::box_count(const Site& center, std::int64_t r) const {
  if (r < 0 || sites_.empty()) return 0;
  Site lo = center;
  Site hi = center;
  for (int j = 0; j < dim_; ++j) {
    lo.coords[static_cast<std::size_t>(j)] -= r;
    hi.coords[static_cast<std::size_t>(j)] += r;
  }
  const Site lo_cell = cell_of(lo);
  const Site hi_cell = cell_of(hi);
  // Number of grid cells covered by the box, saturating.
  double covered = 1.0;
  for (int j = 0; j < dim_; ++j) {
    const auto k = static_cast<std::size_t>(j);
    covered *= static_cast<double>(hi_cell.coords[k] - lo_cell.coords[k] + 1);
  }
  auto inside = [&](const Site& y) { return linf_distance(y, center) <= r; };
  std::int64_t count = 0;
  if (covered > static_cast<double>(cells_.size())) {
    for (const auto& [cell, members] : cells_) {
      bool overlaps = true;
      for (int j = 0; j < dim_ && overlaps; ++j) {
        const auto k = static_cast<std::size_t>(j);
        overlaps = cell.coords[k] >= lo_cell.coords[k] && cell.coords[k] <= hi_cell.coords[k];
      }
      if (!overlaps) continue;
      for (const auto& y : members) count += inside(y) ? 1 : 0;
    }
    return count;
  }
  Site cell = lo_cell;
  while (true) {
    if (auto it = cells_.find(cell); it != cells_.end()) {
      for (const auto& y : it->second) count += inside(y) ? 1 : 0;
    }
    int j = 0;
    for (; j < dim_; ++j) {
      const auto k = static_cast<std::size_t>(j);
      if (++cell.coords[k] <= hi_cell.coords[k]) break;
      cell.coords[k] = lo_cell.coords[k];
    }
    if (j == dim_) break;
  }
  return count;
}

std::int64_t MirrorIndex::max_distance(const Site& center) const {
  if (sites_.empty()) return -1;
  std::int64_t d = 0;
  for (int j = 0; j < dim_; ++j) {
    const auto k = static_cast<std::size_t>(j);
    d = std::max({d, hi_.coords[k] - center.coords[k], center.coords[k] - lo_.coords[k]});
  }
  return d;
}

bool MirrorIndex::audit() const {
  MirrorIndex rebuilt(dim_, cell_side_);
  for (const auto& x : sites_) {
    if (!rebuilt.insert(x)) return false;
  }
  if (rebuilt.members_ != members_) return false;
  for (int j = 0; j < dim_; ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (rebuilt.lines_[k].size() != lines_[k].size()) return false;
    for (const auto& [key, line] : lines_[k]) {
      auto it = rebuilt.lines_[k].find(key);
      if (it == rebuilt.lines_[k].end() || it->second != line) return false;
      if (std::adjacent_find(line.begin(), line.end(), std::greater_equal<>()) != line.end()) {
        return false;
      }
    }
  }
  if (rebuilt.cells_.size() != cells_.size()) return false;
  for (const auto& [key, members] : cells_) {
    auto it = rebuilt.cells_.find(key);
    if (it == rebuilt.cells_.end() || it->second.size() != members.size()) return false;
  }
  return true;
}

EnvironmentRecord::EnvironmentRecord(int dim, double p, Site origin)
    : dim_(dim), origin_(origin), mirrors_(dim, kinetic_cell_side(p)) {
  mirrors_.insert(origin_);
}

void EnvironmentRecord::record_discovery(const Site& x, std::uint32_t matching, std::int64_t t,
                                         bool in_T) {
  auto [it, inserted] = visited_.try_emplace(x, SiteRecord{matching, t, in_T});
  if (!inserted) {
    throw InvariantError("record_discovery: site visited twice in generation " +
                         std::to_string(generation_));
  }
  if (in_T) mirrors_.insert(x);
}

void EnvironmentRecord::reset() {
  ++generation_;
  visited_.clear();
  mirrors_.clear();
  mirrors_.insert(origin_);
}

void EnvironmentRecord::dump(std::ostream& os) const {
  std::vector<std::pair<const Site*, const SiteRecord*>> rows;
  rows.reserve(visited_.size());
  for (const auto& [x, rec] : visited_) rows.emplace_back(&x, &rec);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.second->first_visit < b.second->first_visit;
  });
  for (const auto& [x, rec] : rows) {
    for (int j = 0; j < dim_; ++j) os << x->coords[static_cast<std::size_t>(j)] << '\t';
    os << rec->matching << '\t' << rec->first_visit << '\t' << (rec->in_T ? 1 : 0) << '\t'
       << generation_ << '\n';
  }
}

std::uint32_t visit_quenched(EnvironmentRecord& env, const Site& x, std::int64_t t, double p,
                             const MirrorFamily& family, CounterRng& rng) {
  if (const auto* rec = env.find(x)) return rec->matching;
  const bool mirror = rng.bernoulli(p);
  const std::uint32_t m = mirror ? sample_matching_index(family, rng) : family.identity_index();
  env.record_discovery(x, m, t, mirror);
  return m;
}

}  // namespace mirrorlab
