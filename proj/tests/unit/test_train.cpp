#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "diqa/adam.hpp"
#include "diqa/checkpoint.hpp"
#include "diqa/errors.hpp"
#include "diqa/synthetic.hpp"
#include "diqa/trainer.hpp"
#include "fixtures.hpp"

using namespace diqa;
using diqa::testing::TempDir;

namespace {

ParamSet<double> scalar_param(double value) {
  ParamSet<double> p;
  p.add("x", Shape{1})[0] = value;
  return p;
}

}  // namespace

TEST(Adam, ThreeStepsMatchRecurrence) {
  auto params = scalar_param(1.0);
  auto state = AdamState<double>::zeros_like(params);
  const double grads[3] = {0.5, -0.2, 0.1};
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    params.at("x").grad()[0] = grads[t - 1];
    adam_step(params, state);
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    x -= 1e-4 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(params.at("x")[0], x, 1e-10) << "step " << t;
  }
  EXPECT_EQ(state.step, 3);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto params = scalar_param(2.5);
  auto state = AdamState<double>::zeros_like(params);
  params.at("x").grad()[0] = 0.0;
  adam_step(params, state);
  EXPECT_EQ(params.at("x")[0], 2.5);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  auto params = scalar_param(0.0);
  auto state = AdamState<double>::zeros_like(params);
  double previous = 0.0, step = 0.0;
  for (int t = 0; t < 2000; ++t) {
    params.at("x").grad()[0] = 3.0;
    adam_step(params, state);
    step = previous - params.at("x")[0];
    previous = params.at("x")[0];
  }
  EXPECT_NEAR(step, 1e-4, 1e-9);
}

TEST(Adam, QuadraticConverges) {
  auto params = scalar_param(0.3);
  auto state = AdamState<double>::zeros_like(params);
  int steps = 0;
  for (; steps < 5000 && std::abs(params.at("x")[0] - 0.1) > 1e-3; ++steps) {
    params.at("x").grad()[0] = 2.0 * (params.at("x")[0] - 0.1);
    adam_step(params, state);
  }
  EXPECT_LE(steps, 5000);
  EXPECT_NEAR(params.at("x")[0], 0.1, 1e-3);
}

TEST(Adam, ShapeMismatchThrows) {
  auto params = scalar_param(1.0);
  auto state = AdamState<double>::zeros_like(scalar_param(0.0));
  ParamSet<double> other;
  other.add("x", Shape{2});
  auto bad = AdamState<double>::zeros_like(other);
  params.at("x").grad()[0] = 1.0;
  EXPECT_THROW(adam_step(params, bad), DimensionError);
}

TEST(EarlyStoppingTracker, ArgminWithEarliestTie) {
  EarlyStopping es;
  const double losses[] = {5, 3, 4, 3};
  for (int e = 0; e < 4; ++e) es.observe(e + 1, losses[e]);
  EXPECT_EQ(es.best_epoch(), 2);
  EXPECT_EQ(es.best_loss(), 3.0);
}

TEST(BatchLoss, Examples) {
  const auto config = ModelConfig::no_reference(PoolingMode::kAverage);
  Rng init(1);
  auto params = init_params<double>(config, init);
  Network<double> net(config, params);
  EXPECT_DOUBLE_EQ(image_loss(config, std::vector<double>{1, 3}, {}, 2.0), 1.0);
  const auto weighted = ModelConfig::no_reference(PoolingMode::kWeighted);
  EXPECT_DOUBLE_EQ(image_loss(weighted, std::vector<double>{1, 5}, std::vector<double>{2, 2}, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(image_loss(weighted, std::vector<double>{2, 2}, std::vector<double>{1, 7}, 2.0), 0.0);

  Tape<double> tape;
  Rng drop(0);
  TensorD patches({5, 3, 32, 32});
  const TensorD* no_reference = nullptr;
  const std::vector<double> two_targets{1, 2};
  EXPECT_THROW(batch_loss(tape, net, patches, no_reference, two_targets, 2, Mode::kTrain, drop),
               DimensionError);
  const auto fr = ModelConfig::full_reference(PoolingMode::kAverage, Fusion::kDiff);
  auto fr_params = init_params<double>(fr, init);
  Network<double> fr_net(fr, fr_params);
  TensorD four({4, 3, 32, 32});
  EXPECT_THROW(batch_loss(tape, fr_net, four, no_reference, two_targets, 2, Mode::kTrain, drop),
               ConfigError);
}

class TrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticOptions options;
    options.images = 12;
    options.split = SplitCounts{8, 2, 2};
    records_ = write_synthetic_corpus(dir_.path(), options);
  }
  std::vector<ImageRecord> split(Split s) const { return select_split(records_, s); }

  TempDir dir_{"trainer"};
  std::vector<ImageRecord> records_;
};

TEST_F(TrainerTest, TwoStepsPerEpochForEightImages) {
  TrainOptions options;
  options.epochs = 1;
  Trainer trainer(ModelConfig::no_reference(PoolingMode::kAverage, Depth::kShallow), split(Split::kTrain),
                  split(Split::kVal), options);
  const auto before = trainer.last_checkpoint();
  trainer.train_epoch();
  EXPECT_EQ(trainer.last_checkpoint().adam->step, 2);
  EXPECT_EQ(before.adam->step, 0);
}

TEST_F(TrainerTest, ValidationIsFrozenAndModeSensitive) {
  TrainOptions options;
  Trainer trainer(ModelConfig::no_reference(PoolingMode::kWeighted, Depth::kShallow), split(Split::kTrain),
                  split(Split::kVal), options);
  const auto coords = trainer.frozen_validation_coords();
  const double a = trainer.validate();
  const double b = trainer.validate();
  EXPECT_EQ(a, b);
  trainer.train_epoch();
  EXPECT_EQ(trainer.frozen_validation_coords(), coords);
  const double eval_loss = trainer.validate();
  Rng r1(1), r2(2);
  const double t1 = trainer.validate(Mode::kTrain, r1);
  const double t2 = trainer.validate(Mode::kTrain, r2);
  EXPECT_TRUE(t1 != eval_loss || t2 != eval_loss);
  EXPECT_NE(t1, t2);
}

TEST_F(TrainerTest, ZeroEpochsReturnsInitialParameters) {
  TrainOptions options;
  options.epochs = 0;
  options.seed = 4;
  Trainer trainer(ModelConfig::no_reference(PoolingMode::kAverage, Depth::kShallow), split(Split::kTrain),
                  split(Split::kVal), options);
  const auto init = trainer.last_checkpoint();
  const Checkpoint best = trainer.fit();
  EXPECT_EQ(best.meta.epoch, 0);
  EXPECT_TRUE(std::isfinite(best.meta.best_val_loss));
  for (const auto& e : best.params) EXPECT_EQ(e.tensor.storage(), init.params.at(e.name).storage()) << e.name;
}

TEST_F(TrainerTest, RejectsTooFewImages) {
  auto train = split(Split::kTrain);
  train.resize(3);
  EXPECT_THROW(Trainer(ModelConfig::no_reference(PoolingMode::kAverage), train, split(Split::kVal), TrainOptions{}),
               ValidationError);
  EXPECT_THROW(
      Trainer(ModelConfig::no_reference(PoolingMode::kAverage), split(Split::kTrain), {}, TrainOptions{}),
      ValidationError);
}

TEST_F(TrainerTest, ResumeMatchesUninterruptedRun) {
  const auto config = ModelConfig::full_reference(PoolingMode::kWeighted, Fusion::kDiff, Depth::kShallow);
  TrainOptions options;
  options.seed = 9;
  options.epochs = 3;
  Trainer straight(config, split(Split::kTrain), split(Split::kVal), options);
  const Checkpoint full_best = straight.fit();

  options.epochs = 2;
  Trainer first(config, split(Split::kTrain), split(Split::kVal), options);
  first.fit();
  const Checkpoint last = first.last_checkpoint();
  const Checkpoint best = first.best_checkpoint();
  options.epochs = 3;
  Trainer second(config, split(Split::kTrain), split(Split::kVal), options);
  second.restore(last, &best);
  const Checkpoint resumed_best = second.fit();

  EXPECT_EQ(second.history().back().val_loss, straight.history().back().val_loss);
  EXPECT_EQ(resumed_best.meta.epoch, full_best.meta.epoch);
  for (const auto& e : full_best.params) EXPECT_EQ(e.tensor.storage(), resumed_best.params.at(e.name).storage());
}

TEST_F(TrainerTest, HistoryCsvRoundTrip) {
  std::vector<EpochStats> h{{1, 10.5, 11.25}, {2, 9.0, 10.0}};
  write_history_csv(dir_ / "h.csv", h);
  const auto back = read_history_csv(dir_ / "h.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].epoch, 2);
  EXPECT_EQ(back[0].val_loss, 11.25);
}

TEST(CheckpointIo, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  Checkpoint ck;
  ck.config = ModelConfig::full_reference(PoolingMode::kWeighted, Fusion::kConcat, Depth::kShallow);
  Rng rng(3);
  ck.params = init_params<float>(ck.config, rng);
  ck.adam = AdamState<float>::zeros_like(ck.params);
  ck.adam->step = 17;
  ck.adam->first_moment.at("feat.conv1.bias")[3] = 0.125f;
  ck.meta = TrainingMeta{12345678901234ULL, 42, 3.25};
  save_checkpoint(ck, dir / "a.diqa");
  const Checkpoint back = load_checkpoint(dir / "a.diqa", ck.config);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.meta.seed, ck.meta.seed);
  EXPECT_EQ(back.meta.epoch, 42);
  EXPECT_EQ(back.meta.best_val_loss, 3.25);
  ASSERT_TRUE(back.adam.has_value());
  EXPECT_EQ(back.adam->step, 17);
  EXPECT_EQ(back.adam->first_moment.at("feat.conv1.bias")[3], 0.125f);
  for (const auto& e : ck.params) {
    const auto& b = back.params.at(e.name);
    ASSERT_EQ(b.shape(), e.tensor.shape());
    EXPECT_EQ(std::memcmp(b.storage().data(), e.tensor.storage().data(), e.tensor.size() * sizeof(float)), 0);
  }
  save_checkpoint(back, dir / "b.diqa");
  EXPECT_EQ(diqa::testing::read_bytes(dir / "a.diqa"), diqa::testing::read_bytes(dir / "b.diqa"));
}

TEST(CheckpointIo, CorruptionAndMismatch) {
  TempDir dir("ckpt-bad");
  Checkpoint ck;
  ck.config = ModelConfig::no_reference(PoolingMode::kAverage);
  Rng rng(4);
  ck.params = init_params<float>(ck.config, rng);
  save_checkpoint(ck, dir / "full.diqa");
  std::string bytes = diqa::testing::read_bytes(dir / "full.diqa");

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  diqa::testing::write_text(dir / "magic.diqa", bad_magic);
  EXPECT_THROW(load_checkpoint(dir / "magic.diqa"), FormatError);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  diqa::testing::write_text(dir / "version.diqa", bad_version);
  EXPECT_THROW(load_checkpoint(dir / "version.diqa"), FormatError);

  diqa::testing::write_text(dir / "trunc.diqa", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir / "trunc.diqa"), FormatError);

  try {
    load_checkpoint(dir / "full.diqa", ModelConfig::no_reference(PoolingMode::kAverage, Depth::kShallow));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("feat.conv"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir / "full.diqa", ModelConfig::no_reference(PoolingMode::kWeighted)), Error);
}
