#pragma once

#include <cstdint>

namespace diqa {

/// Top-left pixel of a square patch.
struct PatchCoord {
  std::int64_t row = 0;
  std::int64_t col = 0;
  bool operator==(const PatchCoord&) const = default;
};

}  // namespace diqa
