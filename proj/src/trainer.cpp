#include "diqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "diqa/pooling.hpp"

namespace diqa {

bool EarlyStopping::observe(int epoch, double val_loss) {
  if (best_epoch_ < 0 || val_loss < best_loss_) {
    best_epoch_ = epoch;
    best_loss_ = val_loss;
    return true;
  }
  return false;
}

template <typename T>
Var batch_loss(Tape<T>& tape, const Network<T>& network, const BasicTensor<T>& distorted,
               const BasicTensor<T>* reference, std::span<const double> targets, std::int64_t patches_per_image,
               Mode mode, Rng& rng) {
  const auto& config = network.config();
  if (config.full_reference() && reference == nullptr) {
    throw ConfigError(config.name() + " batches must include reference patches");
  }
  if (distorted.rank() != 4 || distorted.dim(0) != static_cast<std::int64_t>(targets.size()) * patches_per_image) {
    throw DimensionError("batch holds " + shape_str(distorted.shape()) + " patches, expected " +
                         std::to_string(targets.size()) + " images x " + std::to_string(patches_per_image));
  }
  PatchForward fwd = network.forward(tape, distorted, config.full_reference() ? reference : nullptr, mode, rng);
  if (config.weighted()) {
    Var q_hat = pool_weighted_groups(tape, fwd.quality, fwd.weight, patches_per_image);
    return loss_weighted_mean(tape, q_hat, targets);
  }
  return loss_simple_groups(tape, fwd.quality, targets, patches_per_image);
}

double image_loss(const ModelConfig& config, std::span<const double> qualities, std::span<const double> weights,
                  double target) {
  if (config.weighted()) return loss_weighted(pool_weighted(qualities, weights).q_hat, target);
  return loss_simple(qualities, target);
}

Trainer::Trainer(ModelConfig config, std::vector<ImageRecord> train, std::vector<ImageRecord> val,
                 TrainOptions options)
    : config_(std::move(config)), options_(options), train_(std::move(train)), val_(std::move(val)) {
  config_.validate();
  if (options_.images_per_batch <= 0 || options_.patches_per_image <= 0) {
    throw ConfigError("batch geometry must be positive");
  }
  if (static_cast<std::int64_t>(train_.size()) < options_.images_per_batch) {
    throw ValidationError("training needs at least " + std::to_string(options_.images_per_batch) +
                          " training images, got " + std::to_string(train_.size()));
  }
  if (val_.empty()) throw ValidationError("training needs at least one validation image");
  for (const auto* set : {&train_, &val_}) {
    for (const auto& r : *set) {
      if (config_.full_reference() && !r.reference_path) {
        throw ValidationError("record '" + r.id + "' lacks a reference image required by " + config_.name());
      }
    }
  }
  Rng init = make_stream(options_.seed, Stream::kInit);
  params_ = std::make_unique<ParamSet<float>>(init_params<float>(config_, init));
  network_ = std::make_unique<Network<float>>(config_, *params_);
  adam_ = AdamState<float>::zeros_like(*params_, options_.adam);

  // Validation patches are drawn once and reused for every epoch.
  Rng frozen = make_stream(options_.seed, Stream::kValidation);
  for (const auto& r : val_) {
    const Tensor& image = cache_.get(r.distorted_path);
    val_coords_.push_back(
        sample_patch_coords(image.dim(1), image.dim(2), options_.patches_per_image, PatchMode::kRandom, frozen));
  }
}

void Trainer::restore(const Checkpoint& checkpoint, const Checkpoint* best) {
  if (!(checkpoint.config == config_)) throw ConfigError("checkpoint model does not match the trainer configuration");
  check_params_match(config_, checkpoint.params);
  for (auto& e : *params_) e.tensor = checkpoint.params.at(e.name);
  if (checkpoint.adam) {
    for (auto& e : adam_.first_moment) e.tensor = checkpoint.adam->first_moment.at(e.name);
    for (auto& e : adam_.second_moment) e.tensor = checkpoint.adam->second_moment.at(e.name);
    adam_.step = checkpoint.adam->step;
    adam_.hyper = checkpoint.adam->hyper;
  }
  epoch_ = checkpoint.meta.epoch;
  if (best != nullptr) {
    if (!(best->config == config_)) throw ConfigError("best snapshot does not match the trainer configuration");
    check_params_match(config_, best->params);
    if (best->meta.epoch > epoch_) throw StateError("best snapshot is newer than the resumed state");
    tracker_ = EarlyStopping{};
    tracker_.observe(best->meta.epoch, best->meta.best_val_loss);
    best_params_ = best->params;
  }
}

double Trainer::train_epoch() {
  const int epoch = epoch_ + 1;
  const std::string key = "epoch-" + std::to_string(epoch);
  Rng shuffle = make_item_stream(options_.seed, Stream::kShuffle, key);
  Rng patches = make_item_stream(options_.seed, Stream::kPatches, key);
  Rng dropout = make_item_stream(options_.seed, Stream::kDropout, key);

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle);

  const std::size_t per_batch = static_cast<std::size_t>(options_.images_per_batch);
  const std::size_t batches = order.size() / per_batch;
  double total = 0.0;
  std::vector<ImageRecord> group(per_batch);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < per_batch; ++i) group[i] = train_[order[b * per_batch + i]];
    PatchBatch batch = build_minibatch(group, cache_, config_.full_reference(), patches, options_.patches_per_image);
    params_->zero_grad();
    Tape<float> tape;
    Var loss = batch_loss(tape, *network_, batch.distorted, batch.reference ? &*batch.reference : nullptr,
                          batch.targets, batch.patches_per_image, Mode::kTrain, dropout);
    total += tape.value(loss)[0];
    tape.backward(loss);
    adam_step(*params_, adam_);
  }
  epoch_ = epoch;
  return total / static_cast<double>(batches);
}

double Trainer::validate() {
  Rng unused(0);
  return validate(Mode::kEval, unused);
}

double Trainer::validate(Mode mode, Rng& rng) {
  const std::size_t per_batch = static_cast<std::size_t>(options_.images_per_batch);
  double total = 0.0;
  for (std::size_t start = 0; start < val_.size(); start += per_batch) {
    const std::size_t count = std::min(per_batch, val_.size() - start);
    std::span<const ImageRecord> records(val_.data() + start, count);
    std::span<const std::vector<PatchCoord>> coords(val_coords_.data() + start, count);
    PatchBatch batch = build_batch(records, coords, cache_, config_.full_reference());
    Tape<float> tape(false);
    PatchForward fwd = network_->forward(tape, batch.distorted, batch.reference ? &*batch.reference : nullptr, mode, rng);
    const auto& y = tape.value(fwd.quality);
    const std::size_t ppi = static_cast<std::size_t>(batch.patches_per_image);
    for (std::size_t img = 0; img < count; ++img) {
      std::vector<double> q(y.data().begin() + img * ppi, y.data().begin() + (img + 1) * ppi);
      std::vector<double> w;
      if (config_.weighted()) {
        const auto& a = tape.value(fwd.weight);
        w.assign(a.data().begin() + img * ppi, a.data().begin() + (img + 1) * ppi);
      }
      total += image_loss(config_, q, w, batch.targets[img]);
    }
  }
  return total / static_cast<double>(val_.size());
}

void Trainer::record_best(int epoch, double val_loss) {
  if (tracker_.observe(epoch, val_loss)) {
    best_params_ = *params_;
    best_params_.drop_grad();
  }
}

EpochStats Trainer::run_epoch() {
  EpochStats stats;
  stats.train_loss = train_epoch();
  stats.val_loss = validate();
  stats.epoch = epoch_;
  history_.push_back(stats);
  record_best(stats.epoch, stats.val_loss);
  if (on_epoch) on_epoch(stats);
  return stats;
}

Checkpoint Trainer::fit() {
  if (options_.epochs <= epoch_ && !tracker_.has_best()) {
    // No epochs to run: the initial parameters are the result.
    record_best(epoch_, validate());
  }
  while (epoch_ < options_.epochs) run_epoch();
  return best_checkpoint();
}

Checkpoint Trainer::best_checkpoint() const {
  if (!tracker_.has_best()) throw StateError("no validated epoch yet");
  Checkpoint ck;
  ck.config = config_;
  ck.params = best_params_;
  ck.meta.seed = options_.seed;
  ck.meta.epoch = tracker_.best_epoch();
  ck.meta.best_val_loss = tracker_.best_loss();
  return ck;
}

Checkpoint Trainer::last_checkpoint() const {
  Checkpoint ck;
  ck.config = config_;
  ck.params = *params_;
  ck.params.drop_grad();
  ck.adam = adam_;
  ck.meta.seed = options_.seed;
  ck.meta.epoch = epoch_;
  ck.meta.best_val_loss = tracker_.has_best() ? tracker_.best_loss() : std::numeric_limits<double>::quiet_NaN();
  return ck;
}

Checkpoint fit(const std::vector<ImageRecord>& records, const ModelConfig& config, const TrainOptions& options,
               std::vector<EpochStats>* history) {
  Trainer trainer(config, select_split(records, Split::kTrain), select_split(records, Split::kVal), options);
  Checkpoint best = trainer.fit();
  if (history != nullptr) *history = trainer.history();
  return best;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history '" + path.string() + "'");
  out << "epoch,train_loss,val_loss\n";
  char line[128];
  for (const auto& h : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", h.epoch, h.train_loss, h.val_loss);
    out << line;
  }
}

std::vector<EpochStats> read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open history '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,val_loss") {
    throw FormatError(path.string() + ": not a training history");
  }
  std::vector<EpochStats> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochStats h;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &h.epoch, &h.train_loss, &h.val_loss) != 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed history row");
    }
    rows.push_back(h);
  }
  return rows;
}

template Var batch_loss(Tape<float>&, const Network<float>&, const BasicTensor<float>&, const BasicTensor<float>*,
                        std::span<const double>, std::int64_t, Mode, Rng&);
template Var batch_loss(Tape<double>&, const Network<double>&, const BasicTensor<double>&, const BasicTensor<double>*,
                        std::span<const double>, std::int64_t, Mode, Rng&);

}  // namespace diqa
