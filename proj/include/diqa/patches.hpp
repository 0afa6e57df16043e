#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diqa/dataset.hpp"
#include "diqa/patch_coord.hpp"
#include "diqa/rng.hpp"
#include "diqa/tensor.hpp"

namespace diqa {

enum class PatchMode { kRandom, kDense };

std::string to_string(PatchMode mode);
PatchMode parse_patch_mode(std::string_view text);

inline constexpr std::int64_t kImagesPerBatch = 4;
inline constexpr std::int64_t kPatchesPerImage = 32;

/**
 * Top-left coordinates of 32x32 patches in an H x W image.
 *
 * Random mode draws `count` positions uniformly, without replacement when the image
 * offers at least `count` distinct positions. Dense mode returns every
 * non-overlapping patch in row-major order and ignores `count`.
 */
std::vector<PatchCoord> sample_patch_coords(std::int64_t height, std::int64_t width, std::int64_t count,
                                            PatchMode mode, Rng& rng, std::int64_t patch_size = 32);

/// Copies the patches at `coords` out of a [3,H,W] image into [N,3,P,P].
Tensor extract_patches(const Tensor& image, std::span<const PatchCoord> coords, std::int64_t patch_size = 32);

struct SampledPatches {
  Tensor patches;  // [N,3,32,32]
  std::vector<PatchCoord> coords;
};

SampledPatches sample_patches(const Tensor& image, std::int64_t count, PatchMode mode, Rng& rng);

/// Decoded images keyed by path; images are loaded on first use.
class ImageCache {
 public:
  const Tensor& get(const std::filesystem::path& path);
  std::size_t size() const noexcept { return images_.size(); }

 private:
  std::map<std::filesystem::path, Tensor> images_;
};

/// Training unit: patches of several images, each image's patches contiguous.
struct PatchBatch {
  std::int64_t images = 0;
  std::int64_t patches_per_image = 0;
  Tensor distorted;                // [images * patches_per_image, 3, 32, 32]
  std::optional<Tensor> reference; // same shape and coordinates as `distorted`
  std::vector<double> targets;     // one q_t per image
  std::vector<std::string> ids;
  std::vector<std::vector<PatchCoord>> coords;

  std::int64_t patch_count() const { return images * patches_per_image; }
};

/// Builds a batch from explicit per-image coordinates (used for frozen validation patches).
PatchBatch build_batch(std::span<const ImageRecord> records, std::span<const std::vector<PatchCoord>> coords,
                       ImageCache& cache, bool with_reference);

/// Samples `patches_per_image` random patches per record; FR batches pair each distorted
/// patch with the reference patch at the same coordinates.
PatchBatch build_minibatch(std::span<const ImageRecord> records, ImageCache& cache, bool with_reference, Rng& rng,
                           std::int64_t patches_per_image = kPatchesPerImage);

}  // namespace diqa
