#include "diqa/model.hpp"

#include <cmath>
#include <random>

#include "diqa/graph_ops.hpp"

namespace diqa {

std::string to_string(Task task) { return task == Task::kFullReference ? "fr" : "nr"; }
std::string to_string(PoolingMode pooling) { return pooling == PoolingMode::kWeighted ? "weighted" : "average"; }
std::string to_string(Depth depth) { return depth == Depth::kShallow ? "shallow" : "full"; }
std::string to_string(Fusion fusion) {
  switch (fusion) {
    case Fusion::kDiff:
      return "diff";
    case Fusion::kConcat:
      return "concat";
    case Fusion::kConcatDiff:
      return "concat_diff";
  }
  return "diff";
}

Task parse_task(std::string_view text) {
  if (text == "fr") return Task::kFullReference;
  if (text == "nr") return Task::kNoReference;
  throw ConfigError("unknown task '" + std::string(text) + "' (expected fr or nr)");
}

PoolingMode parse_pooling(std::string_view text) {
  if (text == "average") return PoolingMode::kAverage;
  if (text == "weighted") return PoolingMode::kWeighted;
  throw ConfigError("unknown pooling '" + std::string(text) + "' (expected average or weighted)");
}

Fusion parse_fusion(std::string_view text) {
  if (text == "diff") return Fusion::kDiff;
  if (text == "concat") return Fusion::kConcat;
  if (text == "concat_diff") return Fusion::kConcatDiff;
  throw ConfigError("unknown fusion '" + std::string(text) + "' (expected diff, concat or concat_diff)");
}

Depth parse_depth(std::string_view text) {
  if (text == "full") return Depth::kFull;
  if (text == "shallow") return Depth::kShallow;
  throw ConfigError("unknown depth '" + std::string(text) + "' (expected full or shallow)");
}

ModelConfig ModelConfig::no_reference(PoolingMode pooling, Depth depth) {
  ModelConfig c;
  c.task = Task::kNoReference;
  c.pooling = pooling;
  c.depth = depth;
  return c;
}

ModelConfig ModelConfig::full_reference(PoolingMode pooling, Fusion fusion, Depth depth) {
  ModelConfig c;
  c.task = Task::kFullReference;
  c.pooling = pooling;
  c.fusion = fusion;
  c.depth = depth;
  return c;
}

void ModelConfig::validate() const {
  if (task == Task::kFullReference && !fusion) throw ConfigError("FR models need a fusion scheme");
  if (task == Task::kNoReference && fusion) throw ConfigError("NR models have no feature fusion");
  if (patch_size != kPatchSize) throw ConfigError("patch size is fixed at 32 pixels");
  if (!(weight_epsilon > 0.0)) throw ConfigError("weight epsilon must be positive");
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ConfigError("dropout keep must lie in (0,1]");
}

std::int64_t ModelConfig::feature_dim() const { return depth == Depth::kShallow ? 256 : 512; }

std::int64_t ModelConfig::fused_dim() const {
  const std::int64_t d = feature_dim();
  if (task == Task::kNoReference) return d;
  switch (*fusion) {
    case Fusion::kDiff:
      return d;
    case Fusion::kConcat:
      return 2 * d;
    case Fusion::kConcatDiff:
      return 3 * d;
  }
  return d;
}

std::string ModelConfig::name() const {
  std::string n = weighted() ? "WaDIQaM-" : "DIQaM-";
  n += full_reference() ? "FR" : "NR";
  return n;
}

std::map<std::string, std::string> ModelConfig::to_key_values() const {
  std::map<std::string, std::string> kv;
  kv["task"] = to_string(task);
  kv["pooling"] = to_string(pooling);
  if (fusion) kv["fusion"] = to_string(*fusion);
  kv["depth"] = to_string(depth);
  kv["patch_size"] = std::to_string(patch_size);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", weight_epsilon);
  kv["weight_epsilon"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", dropout_keep);
  kv["dropout_keep"] = buf;
  return kv;
}

ModelConfig ModelConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("model configuration is missing '" + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.task = parse_task(get("task"));
  c.pooling = parse_pooling(get("pooling"));
  if (auto it = kv.find("fusion"); it != kv.end()) c.fusion = parse_fusion(it->second);
  c.depth = parse_depth(get("depth"));
  try {
    c.patch_size = std::stoll(get("patch_size"));
    c.weight_epsilon = std::stod(get("weight_epsilon"));
    c.dropout_keep = std::stod(get("dropout_keep"));
  } catch (const std::logic_error&) {
    throw FormatError("model configuration holds a malformed number");
  }
  c.validate();
  return c;
}

std::vector<LayerSpec> extractor_layers(Depth depth) {
  std::vector<LayerSpec> layers;
  auto conv = [&](std::int64_t in, std::int64_t out) {
    layers.push_back(LayerSpec::conv3(in, out));
    layers.push_back(LayerSpec::relu());
  };
  if (depth == Depth::kFull) {
    conv(3, 32), conv(32, 32), layers.push_back(LayerSpec::maxpool2());
    conv(32, 64), conv(64, 64), layers.push_back(LayerSpec::maxpool2());
    conv(64, 128), conv(128, 128), layers.push_back(LayerSpec::maxpool2());
    conv(128, 256), conv(256, 256), layers.push_back(LayerSpec::maxpool2());
    conv(256, 512), conv(512, 512), layers.push_back(LayerSpec::maxpool2());
  } else {
    conv(3, 32), conv(32, 32), layers.push_back(LayerSpec::maxpool2());
    conv(32, 64), layers.push_back(LayerSpec::maxpool2());
    conv(64, 128), layers.push_back(LayerSpec::maxpool2());
    conv(128, 256), layers.push_back(LayerSpec::maxpool2());
    // The four listed pools leave a 2x2x256 map; a final pool reduces it to 1x1x256.
    layers.push_back(LayerSpec::maxpool2());
  }
  return layers;
}

std::vector<LayerSpec> regression_layers(std::int64_t fused_dim, std::int64_t hidden_dim, double keep) {
  return {LayerSpec::fc(fused_dim, hidden_dim), LayerSpec::relu(), LayerSpec::dropout(keep),
          LayerSpec::fc(hidden_dim, 1)};
}

namespace {

std::int64_t layer_param_count(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kConv3:
      return 9 * l.in_channels * l.out_channels + l.out_channels;
    case LayerKind::kFullyConnected:
      return l.in_channels * l.out_channels + l.out_channels;
    default:
      return 0;
  }
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config) {
  std::vector<std::pair<std::string, Shape>> layout;
  int conv_index = 0;
  for (const auto& l : extractor_layers(config.depth)) {
    if (l.kind != LayerKind::kConv3) continue;
    const std::string prefix = "feat.conv" + std::to_string(++conv_index);
    layout.emplace_back(prefix + ".weight", Shape{l.out_channels, l.in_channels, 3, 3});
    layout.emplace_back(prefix + ".bias", Shape{l.out_channels});
  }
  std::vector<std::string> heads{"quality"};
  if (config.weighted()) heads.emplace_back("weight");
  for (const auto& head : heads) {
    int fc_index = 0;
    for (const auto& l : regression_layers(config.fused_dim(), config.feature_dim(), config.dropout_keep)) {
      if (l.kind != LayerKind::kFullyConnected) continue;
      const std::string prefix = head + ".fc" + std::to_string(++fc_index);
      layout.emplace_back(prefix + ".weight", Shape{l.out_channels, l.in_channels});
      layout.emplace_back(prefix + ".bias", Shape{l.out_channels});
    }
  }
  return layout;
}

std::int64_t count_params(const ModelConfig& config) {
  config.validate();
  std::int64_t total = 0;
  for (const auto& l : extractor_layers(config.depth)) total += layer_param_count(l);
  const int heads = config.weighted() ? 2 : 1;
  for (const auto& l : regression_layers(config.fused_dim(), config.feature_dim(), config.dropout_keep)) {
    total += heads * layer_param_count(l);
  }
  return total;
}

template <typename T>
ParamSet<T> init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  ParamSet<T> params;
  for (const auto& [name, shape] : parameter_layout(config)) {
    auto& tensor = params.add(name, shape);
    if (shape.size() == 1) continue;  // biases start at zero
    std::int64_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& w : tensor.storage()) w = static_cast<T>(normal(rng));
  }
  return params;
}

template <typename T>
Network<T>::Network(ModelConfig config, ParamSet<T>& params)
    : config_(std::move(config)), params_(&params), extractor_(extractor_layers(config_.depth)) {
  config_.validate();
  for (const auto& [name, shape] : parameter_layout(config_)) {
    if (!params.contains(name)) throw ConfigError("parameter set lacks '" + name + "' required by " + config_.name());
    if (params.at(name).shape() != shape) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_str(params.at(name).shape()) +
                           ", configuration expects " + shape_str(shape));
    }
  }
}

template <typename T>
Var Network<T>::extract_features(Tape<T>& tape, Var patches) const {
  const auto& v = tape.value(patches);
  const bool single = v.rank() == 3;
  if (!(single || v.rank() == 4) || v.dim(v.rank() - 3) != kChannels || v.dim(v.rank() - 2) != config_.patch_size ||
      v.dim(v.rank() - 1) != config_.patch_size) {
    throw DimensionError("patches must be [N,3,32,32] or [3,32,32], got " + shape_str(v.shape()));
  }
  const std::int64_t n = single ? 1 : v.dim(0);
  Var x = single ? ops::reshape(tape, patches, Shape{1, kChannels, config_.patch_size, config_.patch_size}) : patches;
  int conv_index = 0;
  for (const auto& layer : extractor_) {
    switch (layer.kind) {
      case LayerKind::kConv3: {
        const std::string prefix = "feat.conv" + std::to_string(++conv_index);
        x = ops::conv3x3(tape, x, tape.parameter(params_->at(prefix + ".weight")),
                         tape.parameter(params_->at(prefix + ".bias")));
        break;
      }
      case LayerKind::kReLU:
        x = ops::relu(tape, x);
        break;
      case LayerKind::kMaxPool2:
        x = ops::maxpool2x2(tape, x);
        break;
      default:
        throw ConfigError("unexpected layer kind in feature extractor");
    }
  }
  return ops::reshape(tape, x, Shape{n, config_.feature_dim()});
}

template <typename T>
Var Network<T>::fuse(Tape<T>& tape, Var reference, Var distorted) const {
  if (!config_.full_reference()) throw ConfigError("feature fusion is only defined for FR models");
  switch (*config_.fusion) {
    case Fusion::kDiff:
      return ops::sub(tape, reference, distorted);
    case Fusion::kConcat:
      return ops::concat_features(tape, {reference, distorted});
    case Fusion::kConcatDiff:
      return ops::concat_features(tape, {reference, distorted, ops::sub(tape, reference, distorted)});
  }
  return reference;
}

template <typename T>
Var Network<T>::head(Tape<T>& tape, Var fused, const std::string& prefix, Mode mode, Rng& rng) const {
  const Shape shape = tape.value(fused).shape();
  if (shape.size() != 2 || shape[1] != config_.fused_dim()) {
    throw DimensionError(prefix + " head expects [N," + std::to_string(config_.fused_dim()) + "], got " +
                         shape_str(shape));
  }
  Var h = ops::fc(tape, fused, tape.parameter(params_->at(prefix + ".fc1.weight")),
                  tape.parameter(params_->at(prefix + ".fc1.bias")));
  h = ops::relu(tape, h);
  h = ops::dropout(tape, h, config_.dropout_keep, mode, rng);
  Var out = ops::fc(tape, h, tape.parameter(params_->at(prefix + ".fc2.weight")),
                    tape.parameter(params_->at(prefix + ".fc2.bias")));
  return ops::reshape(tape, out, Shape{shape[0]});
}

template <typename T>
Var Network<T>::regress_quality(Tape<T>& tape, Var fused, Mode mode, Rng& rng) const {
  return head(tape, fused, "quality", mode, rng);
}

template <typename T>
std::pair<Var, Var> Network<T>::regress_weight(Tape<T>& tape, Var fused, Mode mode, Rng& rng) const {
  if (!config_.weighted()) throw ConfigError("weight regression requires weighted pooling");
  Var alpha = head(tape, fused, "weight", mode, rng);
  return {alpha, ops::rectify_plus(tape, alpha, config_.weight_epsilon)};
}

template <typename T>
PatchForward Network<T>::forward(Tape<T>& tape, const BasicTensor<T>& distorted, const BasicTensor<T>* reference,
                                 Mode mode, Rng& rng, const FeatureTransform<T>* reference_transform) const {
  PatchForward out;
  out.distorted_features = extract_features(tape, tape.constant(distorted));
  if (config_.full_reference()) {
    if (reference == nullptr) throw ConfigError(config_.name() + " needs reference patches");
    if (reference->shape() != distorted.shape()) {
      throw DimensionError("reference patches " + shape_str(reference->shape()) + " do not match distorted " +
                           shape_str(distorted.shape()));
    }
    out.reference_features = extract_features(tape, tape.constant(*reference));
    if (reference_transform != nullptr) {
      out.reference_features = tape.constant((*reference_transform)(tape.value(out.reference_features)));
    }
    out.fused = fuse(tape, out.reference_features, out.distorted_features);
  } else {
    out.fused = out.distorted_features;
  }
  out.quality = regress_quality(tape, out.fused, mode, rng);
  if (config_.weighted()) std::tie(out.raw_weight, out.weight) = regress_weight(tape, out.fused, mode, rng);
  return out;
}

template ParamSet<float> init_params(const ModelConfig&, Rng&);
template ParamSet<double> init_params(const ModelConfig&, Rng&);
template class Network<float>;
template class Network<double>;

}  // namespace diqa
