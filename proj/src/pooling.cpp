#include "diqa/pooling.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "diqa/branches.hpp"

namespace diqa {
namespace {

template <typename U>
U sign_of(U x) {
  return x > U(0) ? U(1) : (x < U(0) ? U(-1) : U(0));
}

// Signs of the residuals (-1, 0, 1), routed through the active branch log if any.
template <typename T>
std::shared_ptr<std::vector<T>> residual_signs(const std::vector<T>& residuals) {
  std::vector<std::uint32_t> observed(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) observed[i] = static_cast<std::uint32_t>(sign_of(residuals[i]) + T(1));
  if (BranchLog* log = active_branch_log()) observed = log->visit(std::move(observed));
  auto signs = std::make_shared<std::vector<T>>(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) (*signs)[i] = static_cast<T>(observed[i]) - T(1);
  return signs;
}

std::int64_t group_count(std::size_t total, std::int64_t group_size, const char* what) {
  if (group_size <= 0 || total == 0 || total % static_cast<std::size_t>(group_size) != 0) {
    throw DimensionError(std::string(what) + ": " + std::to_string(total) +
                         " patch values do not split into groups of " + std::to_string(group_size));
  }
  return static_cast<std::int64_t>(total) / group_size;
}

}  // namespace

double pool_average(std::span<const double> qualities) {
  if (qualities.empty()) throw DimensionError("pool_average: no patch qualities");
  double acc = 0.0;
  for (double y : qualities) acc += y;
  return acc / static_cast<double>(qualities.size());
}

WeightedPool pool_weighted(std::span<const double> qualities, std::span<const double> stabilized_weights) {
  if (qualities.empty()) throw DimensionError("pool_weighted: no patch qualities");
  if (qualities.size() != stabilized_weights.size()) {
    throw DimensionError("pool_weighted: " + std::to_string(qualities.size()) + " qualities but " +
                         std::to_string(stabilized_weights.size()) + " weights");
  }
  double total = 0.0;
  for (double a : stabilized_weights) {
    if (!(a > 0.0)) throw ValidationError("pool_weighted: stabilized weights must be strictly positive");
    total += a;
  }
  WeightedPool out;
  out.weights.reserve(qualities.size());
  for (std::size_t i = 0; i < qualities.size(); ++i) {
    const double p = stabilized_weights[i] / total;
    out.weights.push_back(p);
    out.q_hat += p * qualities[i];
  }
  return out;
}

double loss_simple(std::span<const double> qualities, double target) {
  if (qualities.empty()) throw DimensionError("loss_simple: no patch qualities");
  double acc = 0.0;
  for (double y : qualities) acc += std::abs(y - target);
  return acc / static_cast<double>(qualities.size());
}

double loss_weighted(double q_hat, double target) { return std::abs(q_hat - target); }

template <typename T>
Var pool_average_groups(Tape<T>& tape, Var qualities, std::int64_t group_size) {
  const auto& y = tape.value(qualities);
  const std::int64_t images = group_count(y.size(), group_size, "pool_average_groups");
  BasicTensor<T> out(Shape{images});
  for (std::int64_t g = 0; g < images; ++g) {
    T acc = T(0);
    for (std::int64_t i = 0; i < group_size; ++i) acc += y[g * group_size + i];
    out[g] = acc / static_cast<T>(group_size);
  }
  return tape.record({qualities}, std::move(out),
                     [group_size](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       for (std::size_t k = 0; k < gi[0].size(); ++k) {
                         gi[0][k] += g[k / group_size] / static_cast<T>(group_size);
                       }
                     });
}

template <typename T>
Var pool_weighted_groups(Tape<T>& tape, Var qualities, Var stabilized_weights, std::int64_t group_size) {
  const auto& y = tape.value(qualities);
  const auto& a = tape.value(stabilized_weights);
  if (y.size() != a.size()) throw DimensionError("pool_weighted_groups: quality and weight counts differ");
  const std::int64_t images = group_count(y.size(), group_size, "pool_weighted_groups");
  BasicTensor<T> out(Shape{images});
  for (std::int64_t g = 0; g < images; ++g) {
    T num = T(0), den = T(0);
    for (std::int64_t i = 0; i < group_size; ++i) {
      const auto k = static_cast<std::size_t>(g * group_size + i);
      if (!(a[k] > T(0))) throw ValidationError("pool_weighted_groups: stabilized weights must be positive");
      num += a[k] * y[k];
      den += a[k];
    }
    out[g] = num / den;
  }
  return tape.record(
      {qualities, stabilized_weights}, std::move(out),
      [qualities, stabilized_weights, group_size, images](const Tape<T>& t, std::span<const T> g,
                                                          std::vector<std::span<T>>& gi) {
        const auto& yv = t.value(qualities);
        const auto& av = t.value(stabilized_weights);
        for (std::int64_t img = 0; img < images; ++img) {
          T num = T(0), den = T(0);
          for (std::int64_t i = 0; i < group_size; ++i) {
            const auto k = static_cast<std::size_t>(img * group_size + i);
            num += av[k] * yv[k];
            den += av[k];
          }
          const T q = num / den;
          for (std::int64_t i = 0; i < group_size; ++i) {
            const auto k = static_cast<std::size_t>(img * group_size + i);
            if (!gi[0].empty()) gi[0][k] += g[img] * av[k] / den;
            if (!gi[1].empty()) gi[1][k] += g[img] * (yv[k] - q) / den;
          }
        }
      });
}

template <typename T>
Var loss_simple_groups(Tape<T>& tape, Var qualities, std::span<const double> targets, std::int64_t group_size) {
  const auto& y = tape.value(qualities);
  const std::int64_t images = group_count(y.size(), group_size, "loss_simple_groups");
  if (static_cast<std::int64_t>(targets.size()) != images) {
    throw DimensionError("loss_simple_groups: " + std::to_string(images) + " images but " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<T> residuals(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    residuals[k] = y[k] - static_cast<T>(targets[k / static_cast<std::size_t>(group_size)]);
  }
  auto signs = residual_signs(residuals);
  T total = T(0);
  for (std::int64_t img = 0; img < images; ++img) {
    T acc = T(0);
    for (std::int64_t i = 0; i < group_size; ++i) {
      const auto k = static_cast<std::size_t>(img * group_size + i);
      acc += (*signs)[k] * residuals[k];
    }
    total += acc / static_cast<T>(group_size);
  }
  return tape.record({qualities}, BasicTensor<T>(Shape{1}, total / static_cast<T>(images)),
                     [signs, group_size, images](const Tape<T>&, std::span<const T> g,
                                                 std::vector<std::span<T>>& gi) {
                       const T scale = g[0] / static_cast<T>(group_size * images);
                       for (std::size_t k = 0; k < signs->size(); ++k) gi[0][k] += scale * (*signs)[k];
                     });
}

template <typename T>
Var loss_weighted_mean(Tape<T>& tape, Var q_hat, std::span<const double> targets) {
  const auto& q = tape.value(q_hat);
  if (q.size() != targets.size() || targets.empty()) {
    throw DimensionError("loss_weighted_mean: " + std::to_string(q.size()) + " estimates but " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<T> residuals(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) residuals[i] = q[i] - static_cast<T>(targets[i]);
  auto signs = residual_signs(residuals);
  T total = T(0);
  for (std::size_t i = 0; i < q.size(); ++i) total += (*signs)[i] * residuals[i];
  return tape.record({q_hat}, BasicTensor<T>(Shape{1}, total / static_cast<T>(q.size())),
                     [signs](const Tape<T>&, std::span<const T> g, std::vector<std::span<T>>& gi) {
                       const T scale = g[0] / static_cast<T>(signs->size());
                       for (std::size_t i = 0; i < signs->size(); ++i) gi[0][i] += scale * (*signs)[i];
                     });
}

#define DIQA_INSTANTIATE_POOLING(T)                                                         \
  template Var pool_average_groups(Tape<T>&, Var, std::int64_t);                           \
  template Var pool_weighted_groups(Tape<T>&, Var, Var, std::int64_t);                     \
  template Var loss_simple_groups(Tape<T>&, Var, std::span<const double>, std::int64_t);   \
  template Var loss_weighted_mean(Tape<T>&, Var, std::span<const double>);

DIQA_INSTANTIATE_POOLING(float)
DIQA_INSTANTIATE_POOLING(double)

#undef DIQA_INSTANTIATE_POOLING

}  // namespace diqa
