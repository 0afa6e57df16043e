// Acceptance checks. Prints one PASS/FAIL line per criterion; the exit status is
// non-zero when any selected criterion fails. Arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diqa/cli.hpp"
#include "diqa/evaluate.hpp"
#include "diqa/graph_ops.hpp"
#include "diqa/metrics.hpp"
#include "diqa/pca.hpp"
#include "diqa/synthetic.hpp"
#include "diqa/trainer.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace diqa;
using diqa::testing::check_layer;
using diqa::testing::random_tensor;
using diqa::testing::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Collects sub-check outcomes and a one-line summary for a criterion.
class Outcome {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) {
      ok_ = false;
      failures_.push_back(what);
    }
  }
  void note(const std::string& text) { notes_.push_back(text); }
  bool ok() const { return ok_; }
  std::string summary() const {
    std::string s;
    for (const auto& n : notes_) s += (s.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + ("failed: " + f);
    return s;
  }

 private:
  bool ok_ = true;
  std::vector<std::string> notes_;
  std::vector<std::string> failures_;
};

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

// 1. Gradient suite.
void gradients(Outcome& o) {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::map<std::string, diqa::testing::GradCheckResult> layer;

  auto x = random_tensor<double>({2, 3, 6, 6}, rng), w = random_tensor<double>({4, 3, 3, 3}, rng),
       b = random_tensor<double>({4}, rng);
  layer["conv3x3"] = check_layer({{"x", &x}, {"w", &w}, {"b", &b}}, {2, 4, 6, 6},
                                 [](Tape<double>& t, std::vector<Var>& v) { return ops::conv3x3(t, v[0], v[1], v[2]); });
  auto p = random_tensor<double>({2, 3, 6, 8}, rng);
  layer["maxpool2x2"] = check_layer({{"x", &p}}, {2, 3, 3, 4},
                                    [](Tape<double>& t, std::vector<Var>& v) { return ops::maxpool2x2(t, v[0]); });
  auto r = random_tensor<double>({64}, rng);
  layer["relu"] = check_layer({{"x", &r}}, {64}, [](Tape<double>& t, std::vector<Var>& v) { return ops::relu(t, v[0]); });
  auto fx = random_tensor<double>({3, 7}, rng), fw = random_tensor<double>({5, 7}, rng), fb = random_tensor<double>({5}, rng);
  layer["fc"] = check_layer({{"x", &fx}, {"w", &fw}, {"b", &fb}}, {3, 5},
                            [](Tape<double>& t, std::vector<Var>& v) { return ops::fc(t, v[0], v[1], v[2]); });
  auto d = random_tensor<double>({40}, rng);
  layer["dropout"] = check_layer({{"x", &d}}, {40}, [](Tape<double>& t, std::vector<Var>& v) {
    Rng mask(5);
    return ops::dropout(t, v[0], 0.5, Mode::kTrain, mask);
  });
  auto a = random_tensor<double>({40}, rng);
  layer["rectify_plus"] = check_layer(
      {{"x", &a}}, {40}, [](Tape<double>& t, std::vector<Var>& v) { return ops::rectify_plus(t, v[0], 1e-6); });
  auto fr = random_tensor<double>({3, 4}, rng), fd = random_tensor<double>({3, 4}, rng);
  layer["fusion"] = check_layer({{"fr", &fr}, {"fd", &fd}}, {3, 12}, [](Tape<double>& t, std::vector<Var>& v) {
    return ops::concat_features(t, {v[0], v[1], ops::sub(t, v[0], v[1])});
  });
  auto y = random_tensor<double>({6}, rng, 50, 10), alpha = random_tensor<double>({6}, rng, 2, 0.3);
  const std::vector<double> targets{40, 60};
  layer["weighted_pool+loss"] = diqa::testing::check_gradients({{"y", &y}, {"a", &alpha}}, [&](Tape<double>& t) {
    return loss_weighted_mean(t, pool_weighted_groups(t, t.parameter(y), t.parameter(alpha), 3), targets);
  });
  layer["average_pool+loss"] = diqa::testing::check_gradients(
      {{"y", &y}}, [&](Tape<double>& t) { return loss_simple_groups(t, t.parameter(y), targets, 3); });

  for (const auto& [name, res] : layer) {
    o.check(res.max_rel_error < 1e-4, name + " rel=" + fmt("%.2e", res.max_rel_error) + " at " + res.worst);
  }

  // Whole WaDIQaM-FR graph on three patch pairs, parameters sampled per tensor.
  const auto config = ModelConfig::full_reference(PoolingMode::kWeighted, Fusion::kConcatDiff);
  Rng init = make_stream(3, Stream::kInit);
  ParamSet<double> params = init_params<double>(config, init);
  Network<double> net(config, params);
  auto dist = random_tensor<double>({3, 3, 32, 32}, rng, 0.5, 0.2);
  auto ref = random_tensor<double>({3, 3, 32, 32}, rng, 0.5, 0.2);
  const std::vector<double> target{50.0};
  std::vector<std::pair<std::string, TensorD*>> leaves;
  for (auto& e : params) leaves.emplace_back(e.name, &e.tensor);
  diqa::testing::GradCheckOptions opt;
  opt.samples_per_leaf = 4;
  const auto full = diqa::testing::check_gradients(
      leaves,
      [&](Tape<double>& tape) {
        Rng drop(42);
        return batch_loss(tape, net, dist, &ref, target, 3, Mode::kTrain, drop);
      },
      opt);
  o.check(full.max_rel_error < 1e-4, "WaDIQaM-FR rel=" + fmt("%.2e", full.max_rel_error) + " at " + full.worst);
  const double secs = seconds_since(start);
  o.check(secs < 60.0, "runtime " + fmt("%.1f", secs) + "s");
  double worst_layer = 0.0;
  for (const auto& [name, res] : layer) worst_layer = std::max(worst_layer, res.max_rel_error);
  o.note("layers max_rel=" + fmt("%.2e", worst_layer));
  o.note("WaDIQaM-FR max_rel=" + fmt("%.2e", full.max_rel_error) + " checked=" + std::to_string(full.checked) +
         " kinks_excluded=" + std::to_string(full.kinks));
  o.note("runtime=" + fmt("%.1f", secs) + "s");
}

// 2. Architecture.
void architecture(Outcome& o) {
  for (Depth depth : {Depth::kFull, Depth::kShallow}) {
    const auto config = ModelConfig::no_reference(PoolingMode::kWeighted, depth);
    Rng rng = make_stream(1, Stream::kInit);
    ParamSet<float> params = init_params<float>(config, rng);
    Network<float> net(config, params);
    std::mt19937_64 g(9);
    const Tensor patch = random_tensor<float>({3, 32, 32}, g, 0.5, 0.2);
    Tape<float> tape(false);
    const auto& f = tape.value(net.extract_features(tape, tape.input(patch)));
    const std::int64_t expected = depth == Depth::kFull ? 512 : 256;
    o.check(static_cast<std::int64_t>(f.size()) == expected, to_string(depth) + " feature length " + std::to_string(f.size()));
  }
  const std::int64_t wadiqam = count_params(ModelConfig::full_reference(PoolingMode::kWeighted, Fusion::kDiff));
  const std::int64_t shallow =
      count_params(ModelConfig::full_reference(PoolingMode::kWeighted, Fusion::kConcatDiff, Depth::kShallow));
  o.check(wadiqam >= 4'700'000 && wadiqam <= 5'700'000, "WaDIQaM-FR count " + std::to_string(wadiqam));
  o.check(shallow >= 700'000 && shallow <= 900'000, "shallow count " + std::to_string(shallow));
  int closed = 0;
  for (Depth depth : {Depth::kFull, Depth::kShallow}) {
    const std::int64_t dim = depth == Depth::kFull ? 512 : 256;
    for (PoolingMode pooling : {PoolingMode::kAverage, PoolingMode::kWeighted}) {
      const int heads = pooling == PoolingMode::kWeighted ? 2 : 1;
      auto expect = [&](const ModelConfig& c, std::int64_t fused) {
        const bool ok = count_params(c) == diqa::testing::closed_form_params(depth, fused, heads);
        o.check(ok, c.name() + " closed form");
        closed += ok;
      };
      expect(ModelConfig::no_reference(pooling, depth), dim);
      expect(ModelConfig::full_reference(pooling, Fusion::kDiff, depth), dim);
      expect(ModelConfig::full_reference(pooling, Fusion::kConcat, depth), 2 * dim);
      expect(ModelConfig::full_reference(pooling, Fusion::kConcatDiff, depth), 3 * dim);
    }
  }
  o.note("features 512/256; WaDIQaM-FR(diff)=" + std::to_string(wadiqam) +
         "; shallow WaDIQaM-FR(concat_diff)=" + std::to_string(shallow) + "; closed form " + std::to_string(closed) + "/16");
}

// 3. Pooling equivalence.
void pooling(Outcome& o) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> score(50, 25);
  std::uniform_real_distribution<double> weight(1e-6, 5), len(0, 1);
  double worst_gap = 0.0;
  int outside = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(1 + len(rng) * 64);
    std::vector<double> y(n), random_alpha(n);
    for (auto& v : y) v = score(rng);
    for (auto& v : random_alpha) v = weight(rng);
    const std::vector<double> constant(n, weight(rng));
    worst_gap = std::max(worst_gap, std::abs(pool_weighted(y, constant).q_hat - pool_average(y)));
    const double q = pool_weighted(y, random_alpha).q_hat;
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    outside += q < *lo || q > *hi;
  }
  o.check(worst_gap <= 1e-6, "constant weights gap " + fmt("%.2e", worst_gap));
  o.check(outside == 0, std::to_string(outside) + " pooled values outside [min,max]");
  o.note("1000 vectors; max |weighted-average|=" + fmt("%.2e", worst_gap) + "; outside range=" + std::to_string(outside));
}

// 4. Overfit on the synthetic corpus.
void overfit(Outcome& o) {
  TempDir dir("acceptance-overfit");
  const auto records = write_synthetic_corpus(dir.path(), SyntheticOptions{});
  const auto train = select_split(records, Split::kTrain);
  const auto val = select_split(records, Split::kVal);
  const std::vector<ModelConfig> configs{ModelConfig::no_reference(PoolingMode::kAverage),
                                         ModelConfig::no_reference(PoolingMode::kWeighted),
                                         ModelConfig::full_reference(PoolingMode::kAverage, Fusion::kConcatDiff)};
  o.check(train.size() == 4 && val.size() == 2 && records.size() == 8, "corpus split 4/2/2");
  for (const auto& config : configs) {
    TrainOptions options;
    options.epochs = 300;
    options.seed = 1;
    Trainer trainer(config, train, val, options);
    const auto start = Clock::now();
    double initial = 0.0, last = 0.0;
    int epoch = 0;
    while (epoch < options.epochs) {
      const auto stats = trainer.run_epoch();
      epoch = stats.epoch;
      last = stats.train_loss;
      if (epoch == 1) initial = last;
      if (last < 5.0 || seconds_since(start) > 600.0) break;
    }
    const double secs = seconds_since(start);
    o.check(initial >= 20.0, config.name() + " initial loss " + fmt("%.2f", initial));
    o.check(last < 5.0, config.name() + " final loss " + fmt("%.2f", last) + " after " + std::to_string(epoch) + " epochs");
    o.check(secs < 600.0, config.name() + " runtime " + fmt("%.0f", secs) + "s");
    o.note(config.name() + ": " + fmt("%.2f", initial) + "->" + fmt("%.2f", last) + " in " + std::to_string(epoch) +
           " epochs, " + fmt("%.0f", secs) + "s");
  }
}

// 5. Correlation oracles.
void correlations(Outcome& o) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::uniform_int_distribution<int> level(0, 6);
  double worst_lcc = 0.0, worst_srocc = 0.0, worst_affine = 0.0, worst_monotone = 0.0;
  int ties = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 5 + static_cast<std::size_t>(trial % 60);
    std::vector<double> x(len), y(len);
    const bool tied = trial % 2 == 0;
    for (std::size_t i = 0; i < len; ++i) {
      x[i] = tied ? level(rng) : n(rng);
      y[i] = 0.6 * x[i] + n(rng);
      if (tied && i % 3 == 0) y[i] = std::round(y[i]);
    }
    if (std::set<double>(x.begin(), x.end()).size() < 2 || std::set<double>(y.begin(), y.end()).size() < 2) continue;
    ties += tied;
    const double l = lcc(x, y), s = srocc(x, y);
    worst_lcc = std::max(worst_lcc, std::abs(l - diqa::testing::pearson_oracle(x, y)));
    worst_srocc = std::max(worst_srocc, std::abs(s - diqa::testing::spearman_oracle(x, y)));
    std::vector<double> affine(len), monotone(len);
    for (std::size_t i = 0; i < len; ++i) {
      affine[i] = 3.5 * x[i] - 7.0;
      monotone[i] = std::exp(x[i]) + x[i] * x[i] * x[i];
    }
    worst_affine = std::max(worst_affine, std::abs(lcc(affine, y) - l));
    worst_monotone = std::max(worst_monotone, std::abs(srocc(monotone, y) - s));
    std::vector<double> negated(len);
    for (std::size_t i = 0; i < len; ++i) negated[i] = -x[i];
    worst_affine = std::max(worst_affine, std::abs(lcc(negated, y) + l));
    worst_monotone = std::max(worst_monotone, std::abs(srocc(negated, y) + s));
  }
  o.check(worst_lcc <= 1e-10, "lcc vs oracle " + fmt("%.2e", worst_lcc));
  o.check(worst_srocc <= 1e-10, "srocc vs oracle " + fmt("%.2e", worst_srocc));
  o.check(worst_affine <= 1e-10, "lcc affine invariance " + fmt("%.2e", worst_affine));
  o.check(worst_monotone <= 1e-10, "srocc monotone invariance " + fmt("%.2e", worst_monotone));
  o.note("200 vectors (" + std::to_string(ties) + " with ties); lcc err=" + fmt("%.1e", worst_lcc) +
         " srocc err=" + fmt("%.1e", worst_srocc) + " invariance err=" +
         fmt("%.1e", std::max(worst_affine, worst_monotone)));
}

// 6. Early stopping returns the argmin epoch.
void early_stopping(Outcome& o) {
  const std::vector<std::vector<double>> scripts{
      {9.0, 7.0, 8.0, 3.0, 3.5, 4.0, 2.9999, 5.0},
      {5.0, 5.0, 5.0},
      {1.0, 2.0, 3.0},
      {4.0, 3.0, 2.0, 1.0},
      {6.0, 2.0, 7.0, 2.0, 1.5, 1.5, 9.0},
  };
  for (const auto& script : scripts) {
    EarlyStopping tracker;
    for (std::size_t i = 0; i < script.size(); ++i) tracker.observe(static_cast<int>(i + 1), script[i]);
    const auto argmin = std::min_element(script.begin(), script.end()) - script.begin() + 1;
    o.check(tracker.best_epoch() == argmin && tracker.best_loss() == script[static_cast<std::size_t>(argmin - 1)],
            "script argmin " + std::to_string(argmin) + " got " + std::to_string(tracker.best_epoch()));
  }

  // The trainer's returned checkpoint holds exactly the parameters of its argmin epoch.
  TempDir dir("acceptance-early");
  const auto records = write_synthetic_corpus(dir.path(), SyntheticOptions{});
  TrainOptions options;
  options.epochs = 12;
  options.seed = 2;
  options.adam.learning_rate = 3e-3;  // a noisy validation curve puts the minimum mid-run
  const auto config = ModelConfig::no_reference(PoolingMode::kWeighted, Depth::kShallow);
  Trainer trainer(config, select_split(records, Split::kTrain), select_split(records, Split::kVal), options);
  std::vector<ParamSet<float>> snapshots;
  trainer.on_epoch = [&](const EpochStats&) { snapshots.push_back(trainer.params().cast<float>()); };
  const Checkpoint best = trainer.fit();
  const auto& history = trainer.history();
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].val_loss < history[argmin].val_loss) argmin = i;
  }
  o.check(best.meta.epoch == history[argmin].epoch, "trainer best epoch " + std::to_string(best.meta.epoch));
  o.check(best.meta.best_val_loss == history[argmin].val_loss, "trainer best loss");
  bool same = true;
  for (const auto& e : best.params) same = same && e.tensor.storage() == snapshots[argmin].at(e.name).storage();
  o.check(same, "best parameters equal the argmin epoch snapshot");
  bool differs_from_last = false;
  for (const auto& e : best.params) {
    differs_from_last = differs_from_last || e.tensor.storage() != trainer.params().at(e.name).storage();
  }
  o.check(argmin + 1 == history.size() || differs_from_last, "best parameters are the final ones");
  o.note(std::to_string(scripts.size()) + " scripted sequences; trained run argmin epoch " +
         std::to_string(history[argmin].epoch) + " of " + std::to_string(history.size()));
}

// 7. Determinism of the train command.
void determinism(Outcome& o) {
  TempDir dir("acceptance-determinism");
  write_synthetic_corpus(dir / "corpus", SyntheticOptions{});
  auto train = [&](const std::string& out) {
    std::ostringstream sink, err;
    const int code = cli::run({"train", "--manifest", (dir / "corpus/manifest.csv").string(), "--descriptor",
                               (dir / "corpus/descriptor.txt").string(), "--task", "fr", "--pooling", "weighted",
                               "--epochs", "3", "--seed", "11", "--out", (dir / out).string()},
                              sink, err);
    o.check(code == 0, "train exit " + std::to_string(code) + " " + err.str());
    return dir / out / "train-seed11";
  };
  const auto a = train("a"), b = train("b");
  using diqa::testing::read_bytes;
  for (const char* file : {"model.diqa", "last.diqa", "history.csv"}) {
    const std::string x = read_bytes(a / file), y = read_bytes(b / file);
    o.check(!x.empty() && x == y, std::string(file) + " differs");
  }
  o.note("two WaDIQaM-FR runs, 3 epochs, seed 11: checkpoints and history byte-identical");
}

// 8. PCA bridge.
void pca_bridge(Outcome& o) {
  TempDir dir("acceptance-pca");
  const auto records = write_synthetic_corpus(dir.path(), SyntheticOptions{});
  const auto config = ModelConfig::full_reference(PoolingMode::kWeighted, Fusion::kConcatDiff);
  Rng init = make_stream(8, Stream::kInit);
  ParamSet<float> params = init_params<float>(config, init);
  Network<float> net(config, params);
  ImageCache cache;
  const auto train = select_split(records, Split::kTrain);
  const Eigen::MatrixXd samples = collect_reference_features(train, net, cache, 1024, 8);
  const PcaModel pca = pca_fit(samples);
  const Eigen::Index dim = config.feature_dim();

  PredictOptions options;
  options.mode = PatchMode::kDense;
  const FeatureTransform<float> keep_all = [&](const Tensor& f) { return pca_reduce_rows(f, pca, dim); };
  const FeatureTransform<float> keep_none = [&](const Tensor& f) { return pca_reduce_rows(f, pca, 0); };
  double worst = 0.0, collapsed = 0.0;
  for (const auto& r : records) {
    const double plain = predict_image(r, net, cache, options).q_hat;
    const double bridged = predict_image(r, net, cache, options, &keep_all).q_hat;
    worst = std::max(worst, std::abs(plain - bridged));
    collapsed = std::max(collapsed, std::abs(plain - predict_image(r, net, cache, options, &keep_none).q_hat));
  }
  o.check(worst <= 1e-3, "k=D prediction gap " + fmt("%.2e", worst));
  o.check(collapsed > 0.0, "k=0 leaves predictions unchanged, so the transform is not applied");

  // k = 0 gives the training mean feature, which is the column mean of the samples.
  Tensor some({3, dim});
  std::mt19937_64 g(1);
  std::normal_distribution<float> n(0, 1);
  for (auto& v : some.storage()) v = n(g);
  const Tensor zero = pca_reduce_rows(some, pca, 0);
  bool exact = true;
  double mean_err = 0.0;
  for (Eigen::Index j = 0; j < dim; ++j) {
    long double acc = 0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) acc += samples(i, j);
    mean_err = std::max(mean_err, std::abs(static_cast<double>(acc / samples.rows()) - pca.mean(j)));
    for (std::int64_t row = 0; row < 3; ++row) {
      exact = exact && zero[static_cast<std::size_t>(row * dim + j)] == static_cast<float>(pca.mean(j));
    }
    exact = exact && pca_reduce(Eigen::VectorXd::Ones(dim), pca, 0)(j) == pca.mean(j);
  }
  o.check(exact, "k=0 output is not the mean feature");
  o.check(mean_err <= 1e-9, "mean feature vs sample mean " + fmt("%.2e", mean_err));

  std::vector<ImageRecord> held;
  for (const auto& r : records) {
    if (r.split != Split::kTrain) held.push_back(r);
  }
  const Eigen::MatrixXd test = collect_reference_features(held, net, cache, 100, 99);
  double previous = std::numeric_limits<double>::infinity();
  int increases = 0;
  for (Eigen::Index k = 0; k <= dim; ++k) {
    double err = 0.0;
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      err += (pca_reduce(test.row(i).transpose(), pca, k) - test.row(i).transpose()).squaredNorm();
    }
    // Only rounding noise may break ties between consecutive k.
    if (err > previous * (1 + 1e-12) + 1e-12) ++increases;
    previous = err;
  }
  o.check(increases == 0, std::to_string(increases) + " increases of held-out error");
  o.note("k=D max |dq|=" + fmt("%.2e", worst) + " (k=0 moves q by up to " + fmt("%.2f", collapsed) + ") over " + std::to_string(records.size()) +
         " images; k=0 exact mean; held-out error non-increasing over k=0.." + std::to_string(dim));
}

// 9. Batch size, reference-disjoint splits, frozen validation.
void protocol(Outcome& o) {
  TempDir dir("acceptance-protocol");
  const auto records = write_synthetic_corpus(dir.path(), SyntheticOptions{});
  ImageCache cache;
  const auto train = select_split(records, Split::kTrain);
  Rng rng(4);
  const auto nr = build_minibatch(train, cache, false, rng);
  const auto fr = build_minibatch(train, cache, true, rng);
  o.check(nr.patch_count() == 128 && nr.distorted.dim(0) == 128, "NR batch size " + std::to_string(nr.patch_count()));
  o.check(fr.patch_count() == 128 && fr.reference && fr.reference->dim(0) == 128, "FR batch size");

  // 29 reference groups with a varying number of distorted versions each.
  std::vector<ImageRecord> live;
  for (int g = 0; g < 29; ++g) {
    for (int k = 0; k < 3 + g % 5; ++k) {
      ImageRecord r;
      r.id = "ref" + std::to_string(g) + "_d" + std::to_string(k);
      r.reference_group = "ref" + std::to_string(g);
      live.push_back(r);
    }
  }
  bool disjoint = true, counts = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto copy = live;
    Rng split_rng = make_stream(seed, Stream::kSplit);
    split_by_reference(copy, SplitCounts{17, 6, 6}, split_rng);
    std::map<std::string, std::set<Split>> tags;
    std::map<Split, std::set<std::string>> groups;
    for (const auto& r : copy) {
      tags[r.reference_group].insert(r.split);
      groups[r.split].insert(r.reference_group);
    }
    for (const auto& [group, t] : tags) disjoint = disjoint && t.size() == 1;
    counts = counts && groups[Split::kTrain].size() == 17 && groups[Split::kVal].size() == 6 &&
             groups[Split::kTest].size() == 6;
  }
  o.check(disjoint, "a reference group spans splits");
  o.check(counts, "group counts differ from 17/6/6");

  TrainOptions options;
  options.seed = 6;
  Trainer trainer(ModelConfig::no_reference(PoolingMode::kWeighted, Depth::kShallow), train,
                  select_split(records, Split::kVal), options);
  const auto frozen = trainer.params().cast<float>();
  const double before = trainer.validate();
  trainer.train_epoch();
  trainer.train_epoch();
  for (auto& e : trainer.params()) e.tensor = frozen.at(e.name);
  const double after = trainer.validate();
  o.check(before == after, "validation loss changed " + fmt("%.17g", before) + " vs " + fmt("%.17g", after));
  o.note("batch=128 (4x32, NR and FR); 20 seeded splits 17/6/6 reference-disjoint; val loss " + fmt("%.9g", before) +
         " identical after 2 epochs with parameters restored");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gradient suite", gradients},
      {"architecture", architecture},
      {"pooling equivalence", pooling},
      {"overfit", overfit},
      {"correlation oracles", correlations},
      {"early stopping", early_stopping},
      {"determinism", determinism},
      {"PCA bridge", pca_bridge},
      {"protocol fidelity", protocol},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(number)) continue;
    Outcome outcome;
    try {
      criteria[i].second(outcome);
    } catch (const std::exception& e) {
      outcome.check(false, std::string("exception: ") + e.what());
    }
    failed += !outcome.ok();
    std::cout << (outcome.ok() ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[i].first
              << "): " << outcome.summary() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
