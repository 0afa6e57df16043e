#pragma once

#include <cstdint>

#include "diqa/params.hpp"

namespace diqa {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter first/second moment buffers plus the step counter.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  ParamSet<T> first_moment;
  ParamSet<T> second_moment;

  static AdamState zeros_like(const ParamSet<T>& params, AdamHyper hyper = {});
};

/// One bias-corrected ADAM update using the gradients stored in `params`.
template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace diqa
