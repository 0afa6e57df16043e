#include "diqa/graph_ops.hpp"

#include <memory>
#include <string>

#include "diqa/branches.hpp"

namespace diqa::ops {
namespace {

// x * [x > 0] + offset with the sign pattern routed through a branch log.
template <typename T>
Var masked_linear(Tape<T>& tape, Var input, BranchLog& log, T offset) {
  const auto& v = tape.value(input);
  std::vector<std::uint32_t> observed(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) observed[i] = v[i] > T(0) ? 1U : 0U;
  auto mask = std::make_shared<std::vector<std::uint32_t>>(log.visit(std::move(observed)));
  BasicTensor<T> out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = ((*mask)[i] ? v[i] : T(0)) + offset;
  return tape.record({input}, std::move(out),
                     [mask](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if ((*mask)[i]) gi[0][i] += g[i];
                       }
                     });
}

}  // namespace

template <typename T>
Var conv3x3(Tape<T>& tape, Var input, Var weight, Var bias) {
  auto out = conv3x3_forward(tape.value(input), tape.value(weight), tape.value(bias));
  return tape.record({input, weight, bias}, std::move(out),
                     [input, weight](const Tape<T>& t, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       conv3x3_backward(t.value(input), t.value(weight), g, gi[0], gi[1], gi[2]);
                     });
}

template <typename T>
Var maxpool2x2(Tape<T>& tape, Var input) {
  auto pooled = maxpool2x2_forward(tape.value(input));
  if (BranchLog* log = active_branch_log()) {
    pooled.argmax = log->visit(std::move(pooled.argmax));
    const auto& v = tape.value(input);
    for (std::size_t o = 0; o < pooled.argmax.size(); ++o) pooled.output[o] = v[pooled.argmax[o]];
  }
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(std::move(pooled.argmax));
  return tape.record({input}, std::move(pooled.output),
                     [argmax](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       maxpool2x2_backward<T>(*argmax, g, gi[0]);
                     });
}

template <typename T>
Var relu(Tape<T>& tape, Var input) {
  if (BranchLog* log = active_branch_log()) return masked_linear(tape, input, *log, T(0));
  return tape.record({input}, relu_forward(tape.value(input)),
                     [input](const Tape<T>& t, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       relu_backward(t.value(input), g, gi[0]);
                     });
}

template <typename T>
Var fc(Tape<T>& tape, Var input, Var weight, Var bias) {
  auto out = fc_forward(tape.value(input), tape.value(weight), tape.value(bias));
  return tape.record({input, weight, bias}, std::move(out),
                     [input, weight](const Tape<T>& t, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       fc_backward(t.value(input), t.value(weight), g, gi[0], gi[1], gi[2]);
                     });
}

template <typename T>
Var dropout(Tape<T>& tape, Var input, double keep, Mode mode, Rng& rng) {
  auto result = dropout_apply(tape.value(input), keep, mode, rng);
  auto mask = std::make_shared<std::vector<T>>(std::move(result.mask));
  return tape.record({input}, std::move(result.output),
                     [mask](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * (*mask)[i];
                     });
}

template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape shape) {
  return tape.record({input}, tape.value(input).reshaped(std::move(shape)),
                     [](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                     });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (va.shape() != vb.shape()) {
    throw DimensionError("sub: shapes " + shape_str(va.shape()) + " and " + shape_str(vb.shape()) + " differ");
  }
  BasicTensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return tape.record({a, b}, std::move(out),
                     [](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       if (!gi[0].empty()) {
                         for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                       }
                       if (!gi[1].empty()) {
                         for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] -= g[i];
                       }
                     });
}

template <typename T>
Var concat_features(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_features: no inputs");
  const std::int64_t rows = tape.value(parts.front()).dim(0);
  std::vector<std::int64_t> widths;
  std::int64_t total = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    if (v.rank() != 2 || v.dim(0) != rows) {
      throw DimensionError("concat_features: every part must be [" + std::to_string(rows) + ",D], got " +
                           shape_str(v.shape()));
    }
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  BasicTensor<T> out(Shape{rows, total});
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = tape.value(parts[k]);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < widths[k]; ++c) out[r * total + offset + c] = v[r * widths[k] + c];
    }
    offset += widths[k];
  }
  return tape.record(parts, std::move(out),
                     [widths, rows, total](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       std::int64_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (!gi[k].empty()) {
                           for (std::int64_t r = 0; r < rows; ++r) {
                             for (std::int64_t c = 0; c < widths[k]; ++c) {
                               gi[k][r * widths[k] + c] += g[r * total + off + c];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

template <typename T>
Var rectify_plus(Tape<T>& tape, Var input, double epsilon) {
  if (BranchLog* log = active_branch_log()) return masked_linear(tape, input, *log, static_cast<T>(epsilon));
  const auto& v = tape.value(input);
  BasicTensor<T> out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] > T(0) ? v[i] : T(0)) + static_cast<T>(epsilon);
  return tape.record({input}, std::move(out),
                     [input](const Tape<T>& t, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       relu_backward(t.value(input), g, gi[0]);
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var input) {
  const auto& v = tape.value(input);
  T acc = T(0);
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i];
  return tape.record({input}, BasicTensor<T>(Shape{1}, acc),
                     [](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       for (auto& x : gi[0]) x += g[0];
                     });
}

#define DIQA_INSTANTIATE_OPS(T)                                              \
  template Var conv3x3(Tape<T>&, Var, Var, Var);                            \
  template Var maxpool2x2(Tape<T>&, Var);                                   \
  template Var relu(Tape<T>&, Var);                                         \
  template Var fc(Tape<T>&, Var, Var, Var);                                 \
  template Var dropout(Tape<T>&, Var, double, Mode, Rng&);                  \
  template Var reshape(Tape<T>&, Var, Shape);                               \
  template Var sub(Tape<T>&, Var, Var);                                     \
  template Var concat_features(Tape<T>&, const std::vector<Var>&);          \
  template Var rectify_plus(Tape<T>&, Var, double);                         \
  template Var sum(Tape<T>&, Var);

DIQA_INSTANTIATE_OPS(float)
DIQA_INSTANTIATE_OPS(double)

#undef DIQA_INSTANTIATE_OPS

}  // namespace diqa::ops
