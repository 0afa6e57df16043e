#include "diqa/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "diqa/image_io.hpp"
#include "diqa/metrics.hpp"

namespace diqa {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

ImagePrediction predict_tensors(const Tensor& distorted, const Tensor* reference, const Network<float>& network,
                                const PredictOptions& options, const std::string& key,
                                const FeatureTransform<float>* reference_transform) {
  const auto& config = network.config();
  require_rank(distorted, 3, "image");
  if (config.full_reference()) {
    if (reference == nullptr) throw ConfigError(config.name() + " needs a reference image");
    if (reference->shape() != distorted.shape()) {
      throw DimensionError("reference and distorted image of '" + key + "' differ in size");
    }
  }
  Rng rng = make_item_stream(options.seed, Stream::kEval, key);
  ImagePrediction pred;
  pred.patch_coords =
      sample_patch_coords(distorted.dim(1), distorted.dim(2), options.n_patches, options.mode, rng, config.patch_size);
  pred.dense_tiling = options.mode == PatchMode::kDense;

  const std::size_t total = pred.patch_coords.size();
  const std::size_t chunk = static_cast<std::size_t>(std::max<std::int64_t>(1, options.chunk));
  Rng dropout_unused(0);
  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t count = std::min(chunk, total - start);
    std::span<const PatchCoord> coords(pred.patch_coords.data() + start, count);
    Tensor d = extract_patches(distorted, coords);
    std::optional<Tensor> r;
    if (config.full_reference()) r = extract_patches(*reference, coords);
    Tape<float> tape(false);
    PatchForward fwd =
        network.forward(tape, d, r ? &*r : nullptr, Mode::kEval, dropout_unused, reference_transform);
    for (float y : tape.value(fwd.quality).data()) pred.patch_qualities.push_back(y);
    if (config.weighted()) {
      for (float a : tape.value(fwd.weight).data()) pred.stabilized_weights.push_back(a);
    }
  }
  if (config.weighted()) {
    auto pooled = pool_weighted(pred.patch_qualities, pred.stabilized_weights);
    pred.q_hat = pooled.q_hat;
    pred.normalized_weights = std::move(pooled.weights);
  } else {
    pred.q_hat = pool_average(pred.patch_qualities);
  }
  return pred;
}

ImagePrediction predict_image(const ImageRecord& record, const Network<float>& network, ImageCache& cache,
                              const PredictOptions& options, const FeatureTransform<float>* reference_transform) {
  const Tensor& distorted = cache.get(record.distorted_path);
  const Tensor* reference = nullptr;
  if (network.config().full_reference()) {
    if (!record.reference_path) {
      throw ConfigError("record '" + record.id + "' has no reference for " + network.config().name());
    }
    reference = &cache.get(*record.reference_path);
  }
  return predict_tensors(distorted, reference, network, options, record.id, reference_transform);
}

GroupMetrics correlation_metrics(std::span<const double> targets, std::span<const double> predictions,
                                 bool logistic_fit) {
  GroupMetrics m;
  m.n = targets.size();
  m.srocc = srocc(predictions, targets);
  if (logistic_fit) {
    const LogisticMapping mapping = fit_logistic(predictions, targets);
    std::vector<double> mapped;
    mapped.reserve(predictions.size());
    for (double p : predictions) mapped.push_back(mapping(p));
    m.lcc = lcc(mapped, targets);
  } else {
    m.lcc = lcc(predictions, targets);
  }
  return m;
}

EvalReport evaluate(std::span<const ImageRecord> records, const Network<float>& network, ImageCache& cache,
                    const EvalOptions& options, const FeatureTransform<float>* reference_transform) {
  if (records.empty()) throw ValidationError("no records to evaluate");
  EvalReport report;
  report.group_by = options.group_by;
  std::vector<double> targets, predictions;
  for (const auto& r : records) {
    const ImagePrediction p = predict_image(r, network, cache, options.predict, reference_transform);
    EvalRow row{r.id, r.mapped_score, p.q_hat, {}};
    if (!options.group_by.empty()) {
      auto it = r.attributes.find(options.group_by);
      if (it == r.attributes.end()) {
        throw ValidationError("record '" + r.id + "' has no '" + options.group_by + "' column");
      }
      row.group = it->second;
    }
    targets.push_back(row.target);
    predictions.push_back(row.prediction);
    report.rows.push_back(std::move(row));
  }
  const GroupMetrics all = correlation_metrics(targets, predictions, options.logistic_fit);
  report.lcc = *all.lcc;
  report.srocc = *all.srocc;
  if (!options.group_by.empty()) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_group;
    for (const auto& row : report.rows) {
      by_group[row.group].first.push_back(row.target);
      by_group[row.group].second.push_back(row.prediction);
    }
    for (const auto& [key, values] : by_group) {
      GroupMetrics g;
      g.key = key;
      g.n = values.first.size();
      try {
        g = correlation_metrics(values.first, values.second, options.logistic_fit);
        g.key = key;
      } catch (const Error&) {
        // too few images or zero variance: metrics stay unavailable
      }
      report.groups.push_back(std::move(g));
    }
  }
  return report;
}

std::string EvalReport::summary_line() const {
  return "lcc=" + fmt(lcc) + ",srocc=" + fmt(srocc) + ",n=" + std::to_string(rows.size());
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path.string() + "'");
  out << "id,target,prediction";
  if (!group_by.empty()) out << ',' << group_by;
  out << '\n';
  for (const auto& r : rows) {
    out << r.id << ',' << fmt(r.target) << ',' << fmt(r.prediction);
    if (!group_by.empty()) out << ',' << r.group;
    out << '\n';
  }
  out << "\nscope,n,lcc,srocc\n";
  out << "all," << rows.size() << ',' << fmt(lcc) << ',' << fmt(srocc) << '\n';
  for (const auto& g : groups) {
    out << group_by << '=' << g.key << ',' << g.n << ',' << fmt_opt(g.lcc) << ',' << fmt_opt(g.srocc) << '\n';
  }
}

std::vector<SweepRow> np_sweep(std::span<const ImageRecord> records, const Network<float>& network, ImageCache& cache,
                               std::span<const std::int64_t> np_values, int repeats, std::uint64_t seed,
                               PatchMode mode) {
  if (repeats <= 0) throw ConfigError("sweep needs at least one repeat");
  EvalOptions options;
  options.predict.mode = mode;
  std::vector<SweepRow> rows;
  if (mode == PatchMode::kDense) {
    const EvalReport report = evaluate(records, network, cache, options);
    const Tensor& first = cache.get(records.front().distorted_path);
    const std::int64_t dense = (first.dim(1) / kPatchSize) * (first.dim(2) / kPatchSize);
    rows.push_back({dense, report.srocc, report.lcc, 1});
    return rows;
  }
  for (std::int64_t np : np_values) {
    if (np <= 0) throw ConfigError("patch counts must be positive");
    SweepRow row{np, 0.0, 0.0, repeats};
    for (int rep = 0; rep < repeats; ++rep) {
      options.predict.n_patches = np;
      options.predict.seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(np) * 1000003ULL + rep));
      const EvalReport report = evaluate(records, network, cache, options);
      row.srocc += report.srocc;
      row.lcc += report.lcc;
    }
    row.srocc /= repeats;
    row.lcc /= repeats;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "np,srocc,lcc,repeats\n";
  for (const auto& r : rows) out << r.n_patches << ',' << fmt(r.srocc) << ',' << fmt(r.lcc) << ',' << r.repeats << '\n';
}

Eigen::MatrixXd collect_reference_features(std::span<const ImageRecord> records, const Network<float>& network,
                                           ImageCache& cache, std::int64_t samples, std::uint64_t seed) {
  if (records.empty()) throw ValidationError("no records to sample reference patches from");
  if (samples < 2) throw ValidationError("PCA needs at least two reference patches");
  const auto n_records = static_cast<std::int64_t>(records.size());
  const std::int64_t d = network.config().feature_dim();
  Eigen::MatrixXd features(samples, d);
  Rng rng = make_stream(seed, Stream::kPca);
  std::int64_t row = 0;
  for (std::int64_t i = 0; i < n_records && row < samples; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    if (!r.reference_path) throw ConfigError("record '" + r.id + "' has no reference image");
    const Tensor& image = cache.get(*r.reference_path);
    // Spread the remaining samples evenly over the remaining records.
    const std::int64_t share = (samples - row + (n_records - i) - 1) / (n_records - i);
    auto coords = sample_patch_coords(image.dim(1), image.dim(2), share, PatchMode::kRandom, rng);
    for (std::size_t start = 0; start < coords.size(); start += 128) {
      const std::size_t count = std::min<std::size_t>(128, coords.size() - start);
      Tensor patches = extract_patches(image, std::span<const PatchCoord>(coords.data() + start, count));
      Tape<float> tape(false);
      const auto& f = tape.value(network.extract_features(tape, tape.constant(std::move(patches))));
      for (std::size_t k = 0; k < count; ++k, ++row) {
        for (std::int64_t c = 0; c < d; ++c) features(row, c) = f[k * static_cast<std::size_t>(d) + c];
      }
    }
  }
  return features;
}

std::vector<PcaSweepRow> pca_sweep(std::span<const ImageRecord> records, const Network<float>& network,
                                   ImageCache& cache, const PcaModel& pca, std::span<const std::int64_t> ks,
                                   const PredictOptions& options) {
  if (!network.config().full_reference()) throw ConfigError("PCA reference reduction needs an FR model");
  std::vector<PcaSweepRow> rows;
  for (std::int64_t k : ks) {
    FeatureTransform<float> transform = [&pca, k](const Tensor& features) {
      return pca_reduce_rows(features, pca, k);
    };
    EvalOptions eval;
    eval.predict = options;
    const EvalReport report = evaluate(records, network, cache, eval, &transform);
    rows.push_back({k, report.lcc, report.srocc});
  }
  return rows;
}

void write_pca_csv(const std::filesystem::path& path, std::span<const PcaSweepRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "k,lcc,srocc\n";
  for (const auto& r : rows) out << r.k << ',' << fmt(r.lcc) << ',' << fmt(r.srocc) << '\n';
}

QualityMaps make_maps(const ImagePrediction& prediction, std::int64_t image_height, std::int64_t image_width) {
  if (!prediction.dense_tiling) throw ConfigError("quality maps need a dense-mode prediction (random mode unsupported)");
  QualityMaps maps;
  maps.rows = image_height / kPatchSize;
  maps.cols = image_width / kPatchSize;
  const auto cells = static_cast<std::size_t>(maps.rows * maps.cols);
  if (prediction.patch_qualities.size() != cells || prediction.patch_coords.size() != cells) {
    throw DimensionError("prediction does not tile a " + std::to_string(image_height) + "x" +
                         std::to_string(image_width) + " image");
  }
  maps.quality.assign(cells, 0.0);
  if (!prediction.stabilized_weights.empty()) maps.weight.assign(cells, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    const auto& c = prediction.patch_coords[i];
    const auto cell = static_cast<std::size_t>((c.row / kPatchSize) * maps.cols + c.col / kPatchSize);
    maps.quality[cell] = prediction.patch_qualities[i];
    if (!maps.weight.empty()) maps.weight[cell] = prediction.stabilized_weights[i];
  }
  return maps;
}

std::vector<std::uint8_t> normalize_map(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size(), 128);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - *lo) / (*hi - *lo)));
  }
  return out;
}

void write_grid_csv(const std::filesystem::path& path, std::span<const double> values, std::int64_t rows,
                    std::int64_t cols) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      if (c) out << ',';
      out << fmt_exact(values[static_cast<std::size_t>(r * cols + c)]);
    }
    out << '\n';
  }
}

std::vector<double> read_grid_csv(const std::filesystem::path& path, std::int64_t* rows, std::int64_t* cols) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<double> values;
  std::string line;
  std::int64_t r = 0, width = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::int64_t count = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (width >= 0 && count != width) throw FormatError("ragged grid in '" + path.string() + "'");
    width = count;
    ++r;
  }
  if (rows) *rows = r;
  if (cols) *cols = std::max<std::int64_t>(width, 0);
  return values;
}

std::vector<std::filesystem::path> export_maps(const ImagePrediction& prediction, std::int64_t image_height,
                                               std::int64_t image_width, const std::filesystem::path& directory,
                                               const std::string& stem) {
  const QualityMaps maps = make_maps(prediction, image_height, image_width);
  std::filesystem::create_directories(directory);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::vector<double>& grid, const std::string& kind) {
    const auto base = directory / (stem + "_" + kind);
    write_grid_csv(base.string() + ".csv", grid, maps.rows, maps.cols);
    const auto bytes = normalize_map(grid);
    save_pgm(base.string() + ".pgm", bytes, maps.cols, maps.rows);
    save_gray_png(base.string() + ".png", bytes, maps.cols, maps.rows);
    for (const char* ext : {".csv", ".pgm", ".png"}) written.emplace_back(base.string() + ext);
  };
  emit(maps.quality, "quality");
  if (!maps.weight.empty()) emit(maps.weight, "weight");
  return written;
}

}  // namespace diqa
