#include "diqa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "diqa/errors.hpp"
#include "diqa/image_io.hpp"
#include "diqa/tensor.hpp"

namespace diqa {
namespace {

Tensor make_reference(std::int64_t h, std::int64_t w, Rng& rng) {
  std::uniform_real_distribution<double> freq(0.05, 0.35);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Tensor img({3, h, w});
  for (std::int64_t c = 0; c < 3; ++c) {
    const double fx = freq(rng), fy = freq(rng), p = phase(rng);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double v = 0.5 + 0.2 * std::sin(fx * x + p) + 0.2 * std::cos(fy * y - p);
        img[static_cast<std::size_t>((c * h + y) * w + x)] = static_cast<float>(v);
      }
    }
  }
  return img;
}

}  // namespace

std::vector<ImageRecord> write_synthetic_corpus(const std::filesystem::path& directory,
                                                const SyntheticOptions& options) {
  if (options.images < 2) throw ConfigError("synthetic corpus needs at least two images");
  if (options.height < 32 || options.width < 32) throw ConfigError("synthetic images must be at least 32x32");
  std::filesystem::create_directories(directory);
  Rng rng = make_stream(options.seed, Stream::kInit);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<ImageRecord> records;
  for (std::int64_t i = 0; i < options.images; ++i) {
    const double target = 5.0 + 90.0 * static_cast<double>(i) / static_cast<double>(options.images - 1);
    const double strength = target / 100.0;
    const Tensor ref = make_reference(options.height, options.width, rng);
    Tensor dist = ref;
    const bool noise = i % 2 == 0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      double v = ref[k];
      if (noise) {
        v += 0.3 * strength * gauss(rng);
      } else {
        v = 0.5 + (v - 0.5) * (1.0 - 0.9 * strength) + 0.05 * strength * gauss(rng);
      }
      dist[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    char stem[32];
    std::snprintf(stem, sizeof stem, "img%03lld", static_cast<long long>(i));
    save_png(directory / (std::string(stem) + "_ref.png"), ref);
    save_png(directory / (std::string(stem) + "_dist.png"), dist);

    ImageRecord r;
    r.id = stem;
    r.distorted_path = std::string(stem) + "_dist.png";
    r.reference_path = std::string(stem) + "_ref.png";
    r.raw_score = target;
    r.mapped_score = target;
    r.reference_group = stem;
    r.attributes["distortion"] = noise ? "noise" : "contrast";
    records.push_back(std::move(r));
  }
  Rng split_rng = make_stream(options.seed, Stream::kSplit);
  split_by_reference(records, options.split, split_rng);

  DatasetDescriptor descriptor;
  descriptor.scale = ScoreScale{0.0, 100.0, Orientation::kHigherIsWorse};
  descriptor.counts = options.split;
  descriptor.save(directory / "descriptor.txt");
  save_manifest(directory / "manifest.csv", records);
  return load_manifest(directory / "manifest.csv", descriptor.scale, true);
}

}  // namespace diqa
