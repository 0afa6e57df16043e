#include "diqa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "diqa/checkpoint.hpp"
#include "diqa/dataset.hpp"
#include "diqa/errors.hpp"
#include "diqa/evaluate.hpp"
#include "diqa/image_io.hpp"
#include "diqa/pca.hpp"
#include "diqa/synthetic.hpp"
#include "diqa/trainer.hpp"

namespace diqa::cli {
namespace fs = std::filesystem;

namespace {

struct ModelFlags {
  std::optional<std::string> task;
  std::optional<std::string> pooling;
  std::optional<std::string> fusion;
  std::optional<std::string> depth;

  bool any() const { return task || pooling || fusion || depth; }
};

struct RunConfig {
  fs::path manifest;
  fs::path descriptor;
  fs::path checkpoint;
  fs::path out = "runs";
  fs::path resume;
  ModelFlags model;
  int epochs = 3000;
  std::optional<std::uint64_t> seed;
  std::int64_t np = kPatchesPerImage;
  std::vector<std::int64_t> np_list{1, 2, 4, 8, 16, 32};
  int repeats = 5;
  std::string patch_mode = "random";
  std::string split = "test";
  std::string group_by;
  std::vector<std::int64_t> pca_k;
  std::int64_t pca_samples = 4000;
  bool logistic_fit = false;
  std::string image_id;
  std::int64_t images = 8;
  std::int64_t size = 64;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--task", m.task, "fr or nr")->check(CLI::IsMember({"fr", "nr"}));
  cmd->add_option("--pooling", m.pooling, "average or weighted")->check(CLI::IsMember({"average", "weighted"}));
  cmd->add_option("--fusion", m.fusion, "FR feature fusion")
      ->check(CLI::IsMember({"diff", "concat", "concat_diff"}));
  cmd->add_option("--depth", m.depth, "full or shallow")->check(CLI::IsMember({"full", "shallow"}));
}

void add_data_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--manifest", rc.manifest, "image manifest CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--descriptor", rc.descriptor, "dataset descriptor")->required()->check(CLI::ExistingFile);
}

ModelConfig model_from_flags(const ModelFlags& m) {
  const Task task = parse_task(m.task.value_or("fr"));
  const PoolingMode pooling = parse_pooling(m.pooling.value_or("weighted"));
  const Depth depth = parse_depth(m.depth.value_or("full"));
  if (task == Task::kNoReference) {
    if (m.fusion) throw ConfigError("--fusion applies to FR models only");
    return ModelConfig::no_reference(pooling, depth);
  }
  return ModelConfig::full_reference(pooling, parse_fusion(m.fusion.value_or("concat_diff")), depth);
}

/// Flags given alongside a checkpoint must agree with it.
void check_model_flags(const ModelFlags& m, const ModelConfig& config) {
  auto mismatch = [&](const char* flag, const std::string& given, const std::string& stored) {
    if (given != stored) {
      throw ConfigError(std::string("checkpoint holds ") + config.name() + " (" + flag + " " + stored + "), not " +
                        flag + " " + given);
    }
  };
  if (m.task) mismatch("--task", *m.task, to_string(config.task));
  if (m.pooling) mismatch("--pooling", *m.pooling, to_string(config.pooling));
  if (m.depth) mismatch("--depth", *m.depth, to_string(config.depth));
  if (m.fusion) mismatch("--fusion", *m.fusion, config.fusion ? to_string(*config.fusion) : "none");
}

struct Corpus {
  DatasetDescriptor descriptor;
  std::vector<ImageRecord> records;
};

Corpus load_corpus(const RunConfig& rc, bool full_reference, std::uint64_t seed) {
  Corpus c;
  c.descriptor = DatasetDescriptor::load(rc.descriptor);
  c.records = load_manifest(rc.manifest, c.descriptor.scale, full_reference);
  if (!fully_split(c.records)) {
    Rng rng = make_stream(seed, Stream::kSplit);
    split_by_reference(c.records, c.descriptor.counts, rng);
  }
  return c;
}

fs::path run_dir(const RunConfig& rc, const std::string& command, std::uint64_t seed) {
  fs::path dir = rc.out / (command + "-seed" + std::to_string(seed));
  fs::create_directories(dir);
  return dir;
}

std::vector<ImageRecord> pick_split(const Corpus& corpus, const std::string& split) {
  auto records = select_split(corpus.records, parse_split(split));
  if (records.empty()) throw ValidationError("no records in split '" + split + "'");
  return records;
}

struct LoadedModel {
  Checkpoint checkpoint;
  std::unique_ptr<Network<float>> network;
};

LoadedModel load_model(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw ValidationError("--checkpoint is required");
  if (!fs::is_regular_file(rc.checkpoint)) throw ValidationError("checkpoint not found: " + rc.checkpoint.string());
  LoadedModel m;
  m.checkpoint = load_checkpoint(rc.checkpoint);
  check_model_flags(rc.model, m.checkpoint.config);
  check_params_match(m.checkpoint.config, m.checkpoint.params);
  m.network = std::make_unique<Network<float>>(m.checkpoint.config, m.checkpoint.params);
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
  const ModelConfig config = model_from_flags(rc.model);
  const std::uint64_t seed = rc.seed.value_or(0);
  if (rc.epochs < 0) throw ValidationError("--epochs must be >= 0");
  if (!rc.resume.empty() && !fs::is_regular_file(rc.resume)) {
    throw ValidationError("resume checkpoint not found: " + rc.resume.string());
  }
  const Corpus corpus = load_corpus(rc, config.full_reference(), seed);

  TrainOptions options;
  options.epochs = rc.epochs;
  options.seed = seed;
  Trainer trainer(config, select_split(corpus.records, Split::kTrain), select_split(corpus.records, Split::kVal),
                  options);

  const fs::path dir = run_dir(rc, "train", seed);
  const fs::path best_path = rc.checkpoint.empty() ? dir / "model.diqa" : rc.checkpoint;
  const fs::path last_path = dir / "last.diqa";
  const fs::path history_path = dir / "history.csv";

  std::vector<EpochStats> history;
  if (!rc.resume.empty()) {
    const Checkpoint last = load_checkpoint(rc.resume, config);
    if (last.meta.seed != seed) throw ConfigError("resume checkpoint was trained with a different --seed");
    std::optional<Checkpoint> best;
    if (fs::is_regular_file(best_path)) best = load_checkpoint(best_path, config);
    trainer.restore(last, best ? &*best : nullptr);
    if (fs::is_regular_file(history_path)) {
      for (const auto& h : read_history_csv(history_path)) {
        if (h.epoch <= last.meta.epoch) history.push_back(h);
      }
    }
  }
  trainer.on_epoch = [&out](const EpochStats& s) {
    out << "epoch " << s.epoch << " train_loss=" << fmt(s.train_loss) << " val_loss=" << fmt(s.val_loss) << '\n';
  };
  const Checkpoint best = trainer.fit();
  history.insert(history.end(), trainer.history().begin(), trainer.history().end());

  if (best_path.has_parent_path()) fs::create_directories(best_path.parent_path());
  save_checkpoint(best, best_path);
  save_checkpoint(trainer.last_checkpoint(), last_path);
  write_history_csv(history_path, history);
  save_manifest(dir / "splits.csv", corpus.records);
  out << config.name() << " best_epoch=" << best.meta.epoch << " best_val_loss=" << fmt(best.meta.best_val_loss)
      << '\n';
  out << "checkpoint=" << best_path.string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& rc, std::ostream& out) {
  LoadedModel model = load_model(rc);
  const std::uint64_t seed = rc.seed.value_or(model.checkpoint.meta.seed);
  const Corpus corpus = load_corpus(rc, model.checkpoint.config.full_reference(), model.checkpoint.meta.seed);
  const auto records = pick_split(corpus, rc.split);
  if (rc.np <= 0) throw ValidationError("--np must be positive");

  EvalOptions options;
  options.predict.n_patches = rc.np;
  options.predict.mode = parse_patch_mode(rc.patch_mode);
  options.predict.seed = seed;
  options.group_by = rc.group_by;
  options.logistic_fit = rc.logistic_fit;
  ImageCache cache;
  const EvalReport report = evaluate(records, *model.network, cache, options);

  const fs::path dir = run_dir(rc, "eval", seed);
  report.write_csv(dir / "report.csv");
  for (const auto& g : report.groups) {
    out << rc.group_by << '=' << g.key << " n=" << g.n << " lcc=" << (g.lcc ? fmt(*g.lcc) : "NA")
        << " srocc=" << (g.srocc ? fmt(*g.srocc) : "NA") << '\n';
  }
  out << report.summary_line() << '\n';
  return kExitOk;
}

int cmd_maps(const RunConfig& rc, std::ostream& out) {
  const PatchMode mode = parse_patch_mode(rc.patch_mode);
  if (mode != PatchMode::kDense) {
    throw ConfigError("quality maps need --patch-mode dense; random patch mode is unsupported");
  }
  LoadedModel model = load_model(rc);
  const std::uint64_t seed = rc.seed.value_or(model.checkpoint.meta.seed);
  const Corpus corpus = load_corpus(rc, model.checkpoint.config.full_reference(), model.checkpoint.meta.seed);
  std::vector<ImageRecord> records;
  if (!rc.image_id.empty()) {
    for (const auto& r : corpus.records) {
      if (r.id == rc.image_id) records.push_back(r);
    }
    if (records.empty()) throw ValidationError("no record with id '" + rc.image_id + "'");
  } else {
    records = pick_split(corpus, rc.split);
  }

  PredictOptions options;
  options.mode = mode;
  options.seed = seed;
  ImageCache cache;
  const fs::path dir = run_dir(rc, "maps", seed);
  std::ofstream index(dir / "maps.csv");
  index << "id,rows,cols,prediction\n";
  for (const auto& r : records) {
    const ImagePrediction p = predict_image(r, *model.network, cache, options);
    const Tensor& image = cache.get(r.distorted_path);
    export_maps(p, image.dim(1), image.dim(2), dir, r.id);
    index << r.id << ',' << image.dim(1) / kPatchSize << ',' << image.dim(2) / kPatchSize << ',' << fmt(p.q_hat)
          << '\n';
  }
  out << "maps=" << records.size() << " dir=" << dir.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const RunConfig& rc, std::ostream& out) {
  LoadedModel model = load_model(rc);
  const std::uint64_t seed = rc.seed.value_or(model.checkpoint.meta.seed);
  const Corpus corpus = load_corpus(rc, model.checkpoint.config.full_reference(), model.checkpoint.meta.seed);
  const auto records = pick_split(corpus, rc.split);
  ImageCache cache;
  const auto rows = np_sweep(records, *model.network, cache, rc.np_list, rc.repeats, seed,
                             parse_patch_mode(rc.patch_mode));
  const fs::path dir = run_dir(rc, "sweep", seed);
  write_sweep_csv(dir / "sweep.csv", rows);
  for (const auto& r : rows) out << "np=" << r.n_patches << " srocc=" << fmt(r.srocc) << " lcc=" << fmt(r.lcc) << '\n';
  return kExitOk;
}

int cmd_pca(const RunConfig& rc, std::ostream& out) {
  LoadedModel model = load_model(rc);
  const ModelConfig& config = model.checkpoint.config;
  if (!config.full_reference()) throw ConfigError("PCA reference reduction needs an FR checkpoint");
  const std::uint64_t seed = rc.seed.value_or(model.checkpoint.meta.seed);
  const Corpus corpus = load_corpus(rc, true, model.checkpoint.meta.seed);
  const auto train = select_split(corpus.records, Split::kTrain);
  if (train.empty()) throw ValidationError("no training records to fit PCA on");
  const auto records = pick_split(corpus, rc.split);

  std::vector<std::int64_t> ks = rc.pca_k;
  if (ks.empty()) ks = {0, 1, 2, 3, 5, 10, 20, 50, 100, config.feature_dim()};
  for (auto k : ks) {
    if (k < 0 || k > config.feature_dim()) {
      throw ValidationError("--pca-k values must lie in [0, " + std::to_string(config.feature_dim()) + "]");
    }
  }
  ImageCache cache;
  const Eigen::MatrixXd features = collect_reference_features(train, *model.network, cache, rc.pca_samples, seed);
  const std::int64_t max_k = *std::max_element(ks.begin(), ks.end());
  if (max_k > features.rows()) {
    throw ValidationError("k=" + std::to_string(max_k) + " exceeds the " + std::to_string(features.rows()) +
                          " sampled reference patches");
  }
  const PcaModel pca = pca_fit(features);

  PredictOptions options;
  options.n_patches = rc.np;
  options.mode = parse_patch_mode(rc.patch_mode);
  options.seed = seed;
  const auto rows = pca_sweep(records, *model.network, cache, pca, ks, options);
  EvalOptions base;
  base.predict = options;
  const EvalReport full = evaluate(records, *model.network, cache, base);

  const fs::path dir = run_dir(rc, "pca", seed);
  write_pca_csv(dir / "pca.csv", rows);
  for (const auto& r : rows) out << "k=" << r.k << " lcc=" << fmt(r.lcc) << " srocc=" << fmt(r.srocc) << '\n';
  out << "unreduced " << full.summary_line() << '\n';
  return kExitOk;
}

int cmd_synth(const RunConfig& rc, std::ostream& out) {
  SyntheticOptions options;
  options.images = rc.images;
  options.height = rc.size;
  options.width = rc.size;
  options.seed = rc.seed.value_or(0);
  const auto records = write_synthetic_corpus(rc.out, options);
  out << "images=" << records.size() << " manifest=" << (rc.out / "manifest.csv").string()
      << " descriptor=" << (rc.out / "descriptor.txt").string() << '\n';
  return kExitOk;
}

int cmd_info(const RunConfig& rc, std::ostream& out) {
  ModelConfig config;
  if (!rc.checkpoint.empty()) {
    LoadedModel model = load_model(rc);
    config = model.checkpoint.config;
    const auto& meta = model.checkpoint.meta;
    out << "seed=" << meta.seed << " epoch=" << meta.epoch << " best_val_loss=" << fmt(meta.best_val_loss) << '\n';
  } else {
    config = model_from_flags(rc.model);
  }
  out << config.name() << " depth=" << to_string(config.depth)
      << " fusion=" << (config.fusion ? to_string(*config.fusion) : "none") << " feature_dim=" << config.feature_dim()
      << " fused_dim=" << config.fused_dim() << " params=" << count_params(config) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep image-quality assessment: train and evaluate DIQaM / WaDIQaM models"};
  app.name("diqa");
  app.set_config("--config", "", "INI/TOML config file; command-line flags take precedence");
  app.require_subcommand(1);
  RunConfig rc;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint + history");
  add_data_flags(train, rc);
  add_model_flags(train, rc.model);
  train->add_option("--epochs", rc.epochs, "training epochs")->capture_default_str();
  train->add_option("--seed", rc.seed, "run seed");
  train->add_option("--checkpoint", rc.checkpoint, "best-model output path (default <out>/train-seed<seed>/model.diqa)");
  train->add_option("--resume", rc.resume, "continue from a last.diqa state");
  train->add_option("--out", rc.out, "output root")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; prints lcc=..,srocc=..,n=..");
  auto* maps = app.add_subcommand("maps", "export local quality / weight maps (dense patches)");
  auto* sweep = app.add_subcommand("sweep", "SROCC/LCC versus number of patches");
  auto* pca = app.add_subcommand("pca", "evaluate FR models with PCA-reduced reference features");
  for (auto* cmd : {eval, maps, sweep, pca}) {
    add_data_flags(cmd, rc);
    add_model_flags(cmd, rc.model);
    cmd->add_option("--checkpoint", rc.checkpoint, "trained model")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", rc.seed, "patch sampling seed (default: checkpoint seed)");
    cmd->add_option("--split", rc.split, "records to evaluate")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    cmd->add_option("--patch-mode", rc.patch_mode, "random or dense")
        ->check(CLI::IsMember({"random", "dense"}))
        ->capture_default_str();
    cmd->add_option("--out", rc.out, "output root")->capture_default_str();
  }
  eval->add_option("--np", rc.np, "patches per image")->capture_default_str();
  eval->add_option("--group-by", rc.group_by, "manifest column for per-group metrics");
  eval->add_flag("--logistic-fit", rc.logistic_fit, "fit a logistic mapping before LCC");
  maps->add_option("--id", rc.image_id, "single record id");
  sweep->add_option("--np", rc.np_list, "comma-separated patch counts")->delimiter(',')->capture_default_str();
  sweep->add_option("--repeats", rc.repeats, "random evaluations per patch count")->capture_default_str();
  pca->add_option("--np", rc.np, "patches per image")->capture_default_str();
  pca->add_option("--pca-k", rc.pca_k, "comma-separated component counts")->delimiter(',');
  pca->add_option("--pca-samples", rc.pca_samples, "training reference patches for the fit")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "write a synthetic toy corpus");
  synth->add_option("--out", rc.out, "corpus directory")->required();
  synth->add_option("--images", rc.images, "number of images")->capture_default_str();
  synth->add_option("--size", rc.size, "image side length")->capture_default_str();
  synth->add_option("--seed", rc.seed, "generator seed");

  auto* info = app.add_subcommand("info", "describe a model configuration or checkpoint");
  add_model_flags(info, rc.model);
  info->add_option("--checkpoint", rc.checkpoint, "trained model")->check(CLI::ExistingFile);

  std::vector<const char*> argv{"diqa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(rc, out);
    if (*eval) return cmd_eval(rc, out);
    if (*maps) return cmd_maps(rc, out);
    if (*sweep) return cmd_sweep(rc, out);
    if (*pca) return cmd_pca(rc, out);
    if (*synth) return cmd_synth(rc, out);
    if (*info) return cmd_info(rc, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace diqa::cli
