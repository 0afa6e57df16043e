#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "diqa/tensor.hpp"

namespace diqa {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

/**
 * Reverse-mode gradient tape.
 *
 * Every operation appends a node holding its forward value and a closure that maps
 * the node's output gradient onto its inputs. Nodes are appended in evaluation
 * order, so walking them backwards is a valid topological order. Parameters are
 * bound by address: binding the same tensor twice yields the same Var, which is
 * how weight sharing between Siamese branches is expressed. References returned by
 * value() stay valid while further nodes are recorded.
 */
template <typename T>
class Tape {
 public:
  /// grad_in[k] is empty when input k does not require a gradient.
  using BackwardFn = std::function<void(const Tape& tape, std::span<const T> grad_out,
                                        std::vector<std::span<T>>& grad_in)>;

  explicit Tape(bool track_gradients = true) : track_gradients_(track_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  bool tracking() const noexcept { return track_gradients_; }

  /// A value that never receives a gradient.
  Var constant(BasicTensor<T> value);
  /// A leaf whose gradient is kept on the tape (useful to inspect input sensitivities).
  Var input(BasicTensor<T> value);
  /// Binds an externally owned parameter. On backward its gradient is added to `param.grad()`.
  Var parameter(BasicTensor<T>& param);

  Var record(std::vector<Var> inputs, BasicTensor<T> value, BackwardFn backward);

  const BasicTensor<T>& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient of the last backward() target with respect to `v`.
  std::span<const T> grad(Var v) const;

  /// Propagates d(loss)/d(node) through the tape. `loss` must be a one-element value.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    const BasicTensor<T>* external = nullptr;
    BasicTensor<T>* param = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;

  std::deque<Node> nodes_;
  std::unordered_map<const void*, std::size_t> bound_params_;
  bool track_gradients_ = true;
  bool backward_done_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace diqa
