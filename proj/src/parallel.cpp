#include "relict/parallel.hpp"

#include <cstdlib>
#include <string>

namespace relict {

unsigned resolve_worker_count(unsigned fallback) {
  if (const char* env = std::getenv("RELICT_WORKERS"); env != nullptr && *env != '\0') {
    try {
      std::size_t pos = 0;
      const long value = std::stol(env, &pos);
      if (pos == std::string(env).size() && value > 0) return static_cast<unsigned>(value);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, fallback);
}

}  // namespace relict
