#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "diqa/dataset.hpp"

namespace diqa {

struct SyntheticOptions {
  std::int64_t images = 8;
  std::int64_t height = 64;
  std::int64_t width = 64;
  SplitCounts split{4, 2, 2};
  std::uint64_t seed = 0;
};

/// Writes a toy corpus: one sinusoid reference per image, distorted by noise or contrast loss
/// whose strength grows with the target score (spread evenly over [5, 95]).
/// Produces `manifest.csv` and `descriptor.txt` in `directory` and returns the records.
std::vector<ImageRecord> write_synthetic_corpus(const std::filesystem::path& directory,
                                                const SyntheticOptions& options);

}  // namespace diqa
