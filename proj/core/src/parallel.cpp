#include "mirrorlab/parallel.hpp"

#include <cstdlib>

#include "mirrorlab/errors.hpp"

namespace mirrorlab {

int resolve_threads(int requested) {
  if (const char* env = std::getenv("MIRRORLAB_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  if (requested > 0) return requested;
  return std::max(1U, std::thread::hardware_concurrency());
}

namespace detail {
bool is_invariant_error(const std::exception& e) {
  return dynamic_cast<const InvariantError*>(&e) != nullptr;
}
}  // namespace detail

}  // namespace mirrorlab
