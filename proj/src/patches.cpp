#include "diqa/patches.hpp"

#include <algorithm>
#include <unordered_set>

#include "diqa/image_io.hpp"

namespace diqa {

std::string to_string(PatchMode mode) { return mode == PatchMode::kDense ? "dense" : "random"; }

PatchMode parse_patch_mode(std::string_view text) {
  if (text == "random") return PatchMode::kRandom;
  if (text == "dense") return PatchMode::kDense;
  throw ConfigError("unknown patch mode '" + std::string(text) + "' (expected random or dense)");
}

std::vector<PatchCoord> sample_patch_coords(std::int64_t height, std::int64_t width, std::int64_t count,
                                            PatchMode mode, Rng& rng, std::int64_t patch_size) {
  if (height < patch_size || width < patch_size) {
    throw DimensionError("image of " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than one " + std::to_string(patch_size) + "x" + std::to_string(patch_size) +
                         " patch");
  }
  std::vector<PatchCoord> coords;
  if (mode == PatchMode::kDense) {
    for (std::int64_t r = 0; r + patch_size <= height; r += patch_size) {
      for (std::int64_t c = 0; c + patch_size <= width; c += patch_size) coords.push_back({r, c});
    }
    return coords;
  }
  if (count <= 0) throw ConfigError("patch count must be positive");
  const std::int64_t rows = height - patch_size + 1;
  const std::int64_t cols = width - patch_size + 1;
  const std::int64_t positions = rows * cols;
  std::uniform_int_distribution<std::int64_t> pick(0, positions - 1);
  coords.reserve(static_cast<std::size_t>(count));
  if (positions >= count) {
    std::unordered_set<std::int64_t> used;
    while (static_cast<std::int64_t>(coords.size()) < count) {
      const std::int64_t k = pick(rng);
      if (used.insert(k).second) coords.push_back({k / cols, k % cols});
    }
  } else {
    for (std::int64_t i = 0; i < count; ++i) {
      const std::int64_t k = pick(rng);
      coords.push_back({k / cols, k % cols});
    }
  }
  return coords;
}

Tensor extract_patches(const Tensor& image, std::span<const PatchCoord> coords, std::int64_t patch_size) {
  require_rank(image, 3, "extract_patches");
  const std::int64_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (coords.empty()) throw DimensionError("extract_patches: no coordinates");
  Tensor out(Shape{static_cast<std::int64_t>(coords.size()), channels, patch_size, patch_size});
  float* dst = out.data().data();
  for (const auto& pc : coords) {
    if (pc.row < 0 || pc.col < 0 || pc.row + patch_size > h || pc.col + patch_size > w) {
      throw DimensionError("patch at (" + std::to_string(pc.row) + "," + std::to_string(pc.col) +
                           ") exceeds the image bounds");
    }
    for (std::int64_t c = 0; c < channels; ++c) {
      for (std::int64_t y = 0; y < patch_size; ++y) {
        const float* src = image.data().data() + (c * h + pc.row + y) * w + pc.col;
        dst = std::copy(src, src + patch_size, dst);
      }
    }
  }
  return out;
}

SampledPatches sample_patches(const Tensor& image, std::int64_t count, PatchMode mode, Rng& rng) {
  require_rank(image, 3, "sample_patches");
  SampledPatches s;
  s.coords = sample_patch_coords(image.dim(1), image.dim(2), count, mode, rng);
  s.patches = extract_patches(image, s.coords);
  return s;
}

const Tensor& ImageCache::get(const std::filesystem::path& path) {
  auto it = images_.find(path);
  if (it == images_.end()) it = images_.emplace(path, load_image(path)).first;
  return it->second;
}

PatchBatch build_batch(std::span<const ImageRecord> records, std::span<const std::vector<PatchCoord>> coords,
                       ImageCache& cache, bool with_reference) {
  if (records.empty()) throw DimensionError("batch needs at least one image");
  if (records.size() != coords.size()) throw DimensionError("one coordinate list per image is required");
  PatchBatch batch;
  batch.images = static_cast<std::int64_t>(records.size());
  batch.patches_per_image = static_cast<std::int64_t>(coords.front().size());
  const std::int64_t patch_floats = 3 * 32 * 32;
  batch.distorted = Tensor(Shape{batch.patch_count(), 3, 32, 32});
  if (with_reference) batch.reference = Tensor(Shape{batch.patch_count(), 3, 32, 32});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (static_cast<std::int64_t>(coords[i].size()) != batch.patches_per_image) {
      throw DimensionError("every image in a batch needs the same number of patches");
    }
    const Tensor& distorted = cache.get(r.distorted_path);
    Tensor d = extract_patches(distorted, coords[i]);
    std::copy(d.data().begin(), d.data().end(),
              batch.distorted.data().begin() + static_cast<std::int64_t>(i) * batch.patches_per_image * patch_floats);
    if (with_reference) {
      if (!r.reference_path) throw ConfigError("record '" + r.id + "' has no reference image");
      const Tensor& reference = cache.get(*r.reference_path);
      if (reference.shape() != distorted.shape()) {
        throw DimensionError("reference of '" + r.id + "' is " + shape_str(reference.shape()) +
                             " but the distorted image is " + shape_str(distorted.shape()));
      }
      Tensor ref = extract_patches(reference, coords[i]);
      std::copy(ref.data().begin(), ref.data().end(),
                batch.reference->data().begin() +
                    static_cast<std::int64_t>(i) * batch.patches_per_image * patch_floats);
    }
    batch.targets.push_back(r.mapped_score);
    batch.ids.push_back(r.id);
    batch.coords.push_back(coords[i]);
  }
  return batch;
}

PatchBatch build_minibatch(std::span<const ImageRecord> records, ImageCache& cache, bool with_reference, Rng& rng,
                           std::int64_t patches_per_image) {
  std::vector<std::vector<PatchCoord>> coords;
  coords.reserve(records.size());
  for (const auto& r : records) {
    const Tensor& image = cache.get(r.distorted_path);
    coords.push_back(sample_patch_coords(image.dim(1), image.dim(2), patches_per_image, PatchMode::kRandom, rng));
  }
  return build_batch(records, coords, cache, with_reference);
}

}  // namespace diqa
