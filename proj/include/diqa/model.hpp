#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diqa/layers.hpp"
#include "diqa/params.hpp"
#include "diqa/tape.hpp"

namespace diqa {

enum class Task { kFullReference, kNoReference };
enum class PoolingMode { kAverage, kWeighted };
enum class Fusion { kDiff, kConcat, kConcatDiff };
enum class Depth { kFull, kShallow };

std::string to_string(Task task);
std::string to_string(PoolingMode pooling);
std::string to_string(Fusion fusion);
std::string to_string(Depth depth);
Task parse_task(std::string_view text);
PoolingMode parse_pooling(std::string_view text);
Fusion parse_fusion(std::string_view text);
Depth parse_depth(std::string_view text);

inline constexpr std::int64_t kPatchSize = 32;
inline constexpr std::int64_t kChannels = 3;

/// Architecture description. NR models carry no fusion scheme; FR models require one.
struct ModelConfig {
  Task task = Task::kNoReference;
  PoolingMode pooling = PoolingMode::kAverage;
  std::optional<Fusion> fusion;
  Depth depth = Depth::kFull;
  std::int64_t patch_size = kPatchSize;
  double weight_epsilon = 1e-6;
  double dropout_keep = 0.5;

  static ModelConfig no_reference(PoolingMode pooling, Depth depth = Depth::kFull);
  static ModelConfig full_reference(PoolingMode pooling, Fusion fusion, Depth depth = Depth::kFull);

  void validate() const;
  bool weighted() const { return pooling == PoolingMode::kWeighted; }
  bool full_reference() const { return task == Task::kFullReference; }
  /// Extracted feature length: 512 for full depth, 256 for shallow.
  std::int64_t feature_dim() const;
  /// Input width of the regression heads after fusion.
  std::int64_t fused_dim() const;
  /// Conventional model name, e.g. "WaDIQaM-FR".
  std::string name() const;

  std::map<std::string, std::string> to_key_values() const;
  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

/// Feature-extraction layer listing for a depth variant.
std::vector<LayerSpec> extractor_layers(Depth depth);

/// FC -> ReLU -> dropout -> FC(1) head shared by the quality and weight branches.
std::vector<LayerSpec> regression_layers(std::int64_t fused_dim, std::int64_t hidden_dim, double keep);

/// Parameter names and shapes implied by a configuration, in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

/// Exact number of trainable scalars implied by a configuration.
std::int64_t count_params(const ModelConfig& config);

/// Fan-in scaled normal initialisation (std = sqrt(2 / fan_in)), zero biases.
template <typename T>
ParamSet<T> init_params(const ModelConfig& config, Rng& rng);

/// Replaces reference features before fusion (used for PCA reduction at inference).
template <typename T>
using FeatureTransform = std::function<BasicTensor<T>(const BasicTensor<T>& features)>;

/// Graph handles produced by one forward pass over N patches.
struct PatchForward {
  Var reference_features;  // [N, D], FR only
  Var distorted_features;  // [N, D]
  Var fused;               // [N, fused_dim]
  Var quality;             // [N]
  Var raw_weight;          // [N], weighted pooling only
  Var weight;              // [N] stabilised, weighted pooling only
};

/**
 * Patch-level network: a VGG-style feature extractor (shared between reference and
 * distorted inputs in FR mode), optional feature fusion, a quality regression head,
 * and for weighted pooling a second head with its own parameters.
 */
template <typename T>
class Network {
 public:
  Network(ModelConfig config, ParamSet<T>& params);

  const ModelConfig& config() const noexcept { return config_; }
  ParamSet<T>& params() noexcept { return *params_; }

  /// [N,3,32,32] (or a single [3,32,32] patch) -> [N, D].
  Var extract_features(Tape<T>& tape, Var patches) const;
  /// Combines reference and distorted features according to the fusion scheme.
  Var fuse(Tape<T>& tape, Var reference, Var distorted) const;
  Var regress_quality(Tape<T>& tape, Var fused, Mode mode, Rng& rng) const;
  /// Returns (alpha, alpha*) where alpha* = max(0, alpha) + epsilon.
  std::pair<Var, Var> regress_weight(Tape<T>& tape, Var fused, Mode mode, Rng& rng) const;

  PatchForward forward(Tape<T>& tape, const BasicTensor<T>& distorted, const BasicTensor<T>* reference, Mode mode,
                       Rng& rng, const FeatureTransform<T>* reference_transform = nullptr) const;

 private:
  Var head(Tape<T>& tape, Var fused, const std::string& prefix, Mode mode, Rng& rng) const;

  ModelConfig config_;
  ParamSet<T>* params_;
  std::vector<LayerSpec> extractor_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace diqa
