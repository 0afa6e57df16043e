#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diqa/dataset.hpp"
#include "diqa/model.hpp"
#include "diqa/patches.hpp"
#include "diqa/pca.hpp"
#include "diqa/pooling.hpp"

namespace diqa {

struct PredictOptions {
  std::int64_t n_patches = kPatchesPerImage;
  PatchMode mode = PatchMode::kRandom;
  std::uint64_t seed = 0;
  /// Upper bound on patches per forward pass.
  std::int64_t chunk = 128;
};

/// Image-level prediction in eval mode for decoded [3,H,W] images; patch positions come
/// from a stream keyed on (seed, key).
ImagePrediction predict_tensors(const Tensor& distorted, const Tensor* reference, const Network<float>& network,
                                const PredictOptions& options, const std::string& key,
                                const FeatureTransform<float>* reference_transform = nullptr);

/// Image-level prediction in eval mode. Patch positions come from a stream keyed on
/// (seed, record id), so results do not depend on evaluation order.
ImagePrediction predict_image(const ImageRecord& record, const Network<float>& network, ImageCache& cache,
                              const PredictOptions& options,
                              const FeatureTransform<float>* reference_transform = nullptr);

struct EvalRow {
  std::string id;
  double target = 0.0;
  double prediction = 0.0;
  std::string group;
};

struct GroupMetrics {
  std::string key;
  std::size_t n = 0;
  std::optional<double> lcc;
  std::optional<double> srocc;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double lcc = 0.0;
  double srocc = 0.0;
  std::string group_by;
  std::vector<GroupMetrics> groups;

  /// `lcc=<v>,srocc=<v>,n=<count>`
  std::string summary_line() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct EvalOptions {
  PredictOptions predict;
  /// Manifest attribute used for per-group metrics; empty for none.
  std::string group_by;
  /// Fit a monotonic logistic from predictions to targets before computing LCC.
  bool logistic_fit = false;
};

EvalReport evaluate(std::span<const ImageRecord> records, const Network<float>& network, ImageCache& cache,
                    const EvalOptions& options, const FeatureTransform<float>* reference_transform = nullptr);

/// Correlations of a prediction list; throws on degenerate input.
GroupMetrics correlation_metrics(std::span<const double> targets, std::span<const double> predictions,
                                 bool logistic_fit);

struct SweepRow {
  std::int64_t n_patches = 0;
  double srocc = 0.0;
  double lcc = 0.0;
  int repeats = 0;
};

/// For each patch count, averages SROCC/LCC over `repeats` random-patch evaluations.
/// Dense mode yields a single deterministic row over all non-overlapping patches.
std::vector<SweepRow> np_sweep(std::span<const ImageRecord> records, const Network<float>& network, ImageCache& cache,
                               std::span<const std::int64_t> np_values, int repeats, std::uint64_t seed,
                               PatchMode mode = PatchMode::kRandom);

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

/// Feature vectors of `samples` random reference patches spread over the records (n x D).
Eigen::MatrixXd collect_reference_features(std::span<const ImageRecord> records, const Network<float>& network,
                                           ImageCache& cache, std::int64_t samples, std::uint64_t seed);

struct PcaSweepRow {
  std::int64_t k = 0;
  double lcc = 0.0;
  double srocc = 0.0;
};

/// Evaluates an FR model with its reference features replaced by rank-k PCA reconstructions.
std::vector<PcaSweepRow> pca_sweep(std::span<const ImageRecord> records, const Network<float>& network,
                                   ImageCache& cache, const PcaModel& pca, std::span<const std::int64_t> ks,
                                   const PredictOptions& options);

void write_pca_csv(const std::filesystem::path& path, std::span<const PcaSweepRow> rows);

/// Local quality and weight grids of a dense prediction.
struct QualityMaps {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> quality;
  std::vector<double> weight;  // alpha*_i, empty for average pooling
};

QualityMaps make_maps(const ImagePrediction& prediction, std::int64_t image_height, std::int64_t image_width);

/// Min-max normalisation to 8 bits; a constant map renders as 128.
std::vector<std::uint8_t> normalize_map(std::span<const double> values);

/// Writes `<stem>_quality.{csv,pgm,png}` and, for weighted models, `<stem>_weight.{csv,pgm,png}`.
std::vector<std::filesystem::path> export_maps(const ImagePrediction& prediction, std::int64_t image_height,
                                               std::int64_t image_width, const std::filesystem::path& directory,
                                               const std::string& stem);

void write_grid_csv(const std::filesystem::path& path, std::span<const double> values, std::int64_t rows,
                    std::int64_t cols);
std::vector<double> read_grid_csv(const std::filesystem::path& path, std::int64_t* rows = nullptr,
                                  std::int64_t* cols = nullptr);

}  // namespace diqa
