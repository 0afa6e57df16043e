#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diqa/patch_coord.hpp"
#include "diqa/tape.hpp"

namespace diqa {

/// Image-level result of pooling patch outputs.
struct ImagePrediction {
  double q_hat = 0.0;
  std::vector<double> patch_qualities;
  /// p_i, weighted pooling only; sums to one.
  std::vector<double> normalized_weights;
  /// alpha*_i, weighted pooling only.
  std::vector<double> stabilized_weights;
  std::vector<PatchCoord> patch_coords;
  /// True when the patches are the complete non-overlapping tiling of the image.
  bool dense_tiling = false;
};

struct WeightedPool {
  double q_hat = 0.0;
  std::vector<double> weights;  // p_i
};

/// Arithmetic mean of the patch qualities.
double pool_average(std::span<const double> qualities);

/// q_hat = sum_i p_i y_i with p_i = alpha*_i / sum_j alpha*_j. Every alpha* must be positive.
WeightedPool pool_weighted(std::span<const double> qualities, std::span<const double> stabilized_weights);

/// Mean absolute deviation of patch qualities from the image target.
double loss_simple(std::span<const double> qualities, double target);

/// Absolute error of the pooled estimate.
double loss_weighted(double q_hat, double target);

// Differentiable forms over a flat [images * group_size] patch vector, where each
// consecutive run of `group_size` patches belongs to one image. The |.| subgradient
// at zero is taken as 0.

template <typename T>
Var pool_average_groups(Tape<T>& tape, Var qualities, std::int64_t group_size);

template <typename T>
Var pool_weighted_groups(Tape<T>& tape, Var qualities, Var stabilized_weights, std::int64_t group_size);

/// Mean over images of the per-image simple loss.
template <typename T>
Var loss_simple_groups(Tape<T>& tape, Var qualities, std::span<const double> targets, std::int64_t group_size);

/// Mean over images of |q_hat - q_t|.
template <typename T>
Var loss_weighted_mean(Tape<T>& tape, Var q_hat, std::span<const double> targets);

}  // namespace diqa
