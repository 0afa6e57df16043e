#pragma once

#include <cstdint>
#include <vector>

#include "diqa/layers.hpp"
#include "diqa/tape.hpp"

/// Differentiable wrappers that record the layer kernels on a Tape.
namespace diqa::ops {

template <typename T>
Var conv3x3(Tape<T>& tape, Var input, Var weight, Var bias);

template <typename T>
Var maxpool2x2(Tape<T>& tape, Var input);

template <typename T>
Var relu(Tape<T>& tape, Var input);

template <typename T>
Var fc(Tape<T>& tape, Var input, Var weight, Var bias);

/// Dropout; the mask drawn in train mode is reused by backward.
template <typename T>
Var dropout(Tape<T>& tape, Var input, double keep, Mode mode, Rng& rng);

/// Same values, new shape.
template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape shape);

/// Elementwise a - b (identical shapes).
template <typename T>
Var sub(Tape<T>& tape, Var a, Var b);

/// Concatenates [N,D_k] inputs along the feature axis.
template <typename T>
Var concat_features(Tape<T>& tape, const std::vector<Var>& parts);

/// max(0, x) + epsilon, elementwise.
template <typename T>
Var rectify_plus(Tape<T>& tape, Var input, double epsilon);

/// Sum of all elements to a one-element tensor.
template <typename T>
Var sum(Tape<T>& tape, Var input);

}  // namespace diqa::ops
