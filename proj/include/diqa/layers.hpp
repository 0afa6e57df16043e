#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diqa/rng.hpp"
#include "diqa/tensor.hpp"

namespace diqa {

enum class Mode { kTrain, kEval };

enum class LayerKind { kConv3, kMaxPool2, kReLU, kFullyConnected, kDropout };

/// One layer of a feed-forward stack. Conv layers are always 3x3, zero padding 1,
/// stride 1; pooling layers are always 2x2 with stride 2.
struct LayerSpec {
  LayerKind kind = LayerKind::kReLU;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  double dropout_keep = 0.5;

  static LayerSpec conv3(std::int64_t in, std::int64_t out) { return {LayerKind::kConv3, in, out, 1.0}; }
  static LayerSpec maxpool2() { return {LayerKind::kMaxPool2, 0, 0, 1.0}; }
  static LayerSpec relu() { return {LayerKind::kReLU, 0, 0, 1.0}; }
  static LayerSpec fc(std::int64_t in, std::int64_t out) { return {LayerKind::kFullyConnected, in, out, 1.0}; }
  static LayerSpec dropout(double keep) { return {LayerKind::kDropout, 0, 0, keep}; }
};

// Kernels below accept a single sample ([C,H,W] / [D]) or a batch ([N,C,H,W] /
// [N,D]). Backward kernels accumulate (+=) into the gradient spans they are given;
// an empty span means that gradient is not wanted.

template <typename T>
BasicTensor<T> conv3x3_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
void conv3x3_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> grad_output,
                      std::span<T> grad_input, std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  /// Flat input offset of the maximum chosen for each output element.
  std::vector<std::uint32_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input);

template <typename T>
void maxpool2x2_backward(std::span<const std::uint32_t> argmax, std::span<const T> grad_output,
                         std::span<T> grad_input);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

template <typename T>
void relu_backward(const BasicTensor<T>& input, std::span<const T> grad_output, std::span<T> grad_input);

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
void fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> grad_output,
                 std::span<T> grad_input, std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
struct DropoutResult {
  BasicTensor<T> output;
  /// Per-unit multiplier applied in forward: 0/1 in train mode, `keep` in eval mode.
  std::vector<T> mask;
};

/// Classic dropout: in train mode units are zeroed with probability 1-keep and
/// survivors pass unscaled; in eval mode every unit is multiplied by keep.
template <typename T>
DropoutResult<T> dropout_apply(const BasicTensor<T>& input, double keep, Mode mode, Rng& rng);

}  // namespace diqa
