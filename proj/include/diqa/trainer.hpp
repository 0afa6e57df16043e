#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "diqa/adam.hpp"
#include "diqa/checkpoint.hpp"
#include "diqa/dataset.hpp"
#include "diqa/model.hpp"
#include "diqa/patches.hpp"

namespace diqa {

struct TrainOptions {
  int epochs = 3000;
  std::uint64_t seed = 0;
  AdamHyper adam;
  std::int64_t images_per_batch = kImagesPerBatch;
  std::int64_t patches_per_image = kPatchesPerImage;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Tracks the epoch with the lowest validation loss; ties keep the earlier epoch.
class EarlyStopping {
 public:
  /// Returns true when `val_loss` is a new best.
  bool observe(int epoch, double val_loss);
  bool has_best() const noexcept { return best_epoch_ >= 0; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  int best_epoch_ = -1;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

/**
 * Loss of one batch whose patches are grouped per image (`patches_per_image`
 * consecutive patches per target). Average pooling averages the per-image
 * mean absolute patch error; weighted pooling averages |q_hat - q_t|.
 */
template <typename T>
Var batch_loss(Tape<T>& tape, const Network<T>& network, const BasicTensor<T>& distorted,
               const BasicTensor<T>* reference, std::span<const double> targets, std::int64_t patches_per_image,
               Mode mode, Rng& rng);

/// Per-image evaluation loss for one image's patch outputs under the configured pooling.
double image_loss(const ModelConfig& config, std::span<const double> qualities, std::span<const double> weights,
                  double target);

/**
 * Mini-batch training loop: per-epoch image shuffle, fresh random patches per epoch,
 * one ADAM step per group of `images_per_batch` images (the remainder is dropped),
 * validation on patches frozen at construction, and best-epoch tracking.
 *
 * Randomness is drawn from streams keyed on (seed, purpose, epoch), so a resumed run
 * follows the same trajectory as an uninterrupted one.
 */
class Trainer {
 public:
  Trainer(ModelConfig config, std::vector<ImageRecord> train, std::vector<ImageRecord> val, TrainOptions options);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Continues from a checkpoint's parameters, optimizer state and epoch counter.
  /// Passing the best snapshot of the interrupted run carries early stopping over.
  void restore(const Checkpoint& checkpoint, const Checkpoint* best = nullptr);

  /// One pass over the training images; returns the mean batch loss.
  double train_epoch();
  /// Mean per-image loss over the validation set in eval mode on the frozen patches.
  double validate();
  /// Validation with an explicit dropout mode (a train-mode probe is noisy by construction).
  double validate(Mode mode, Rng& rng);

  EpochStats run_epoch();
  /// Runs epochs until `options.epochs` and returns the best checkpoint.
  Checkpoint fit();

  Checkpoint best_checkpoint() const;
  /// Current parameters plus optimizer state, suitable for resuming.
  Checkpoint last_checkpoint() const;

  const std::vector<EpochStats>& history() const noexcept { return history_; }
  const EarlyStopping& early_stopping() const noexcept { return tracker_; }
  int epoch() const noexcept { return epoch_; }
  ParamSet<float>& params() noexcept { return *params_; }
  const Network<float>& network() const noexcept { return *network_; }
  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<std::vector<PatchCoord>>& frozen_validation_coords() const noexcept { return val_coords_; }
  ImageCache& images() noexcept { return cache_; }

  std::function<void(const EpochStats&)> on_epoch;

 private:
  void record_best(int epoch, double val_loss);

  ModelConfig config_;
  TrainOptions options_;
  std::vector<ImageRecord> train_;
  std::vector<ImageRecord> val_;
  std::unique_ptr<ParamSet<float>> params_;
  std::unique_ptr<Network<float>> network_;
  AdamState<float> adam_;
  ImageCache cache_;
  std::vector<std::vector<PatchCoord>> val_coords_;
  std::vector<EpochStats> history_;
  EarlyStopping tracker_;
  ParamSet<float> best_params_;
  int epoch_ = 0;
};

/// Trains on the records tagged train, validates on those tagged val.
Checkpoint fit(const std::vector<ImageRecord>& records, const ModelConfig& config, const TrainOptions& options,
               std::vector<EpochStats>* history = nullptr);

/// CSV with header `epoch,train_loss,val_loss`.
void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history);
std::vector<EpochStats> read_history_csv(const std::filesystem::path& path);

}  // namespace diqa
