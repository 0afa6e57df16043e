#include "diqa/tape.hpp"

#include <algorithm>
#include <string>

namespace diqa {

template <typename T>
Var Tape<T>::constant(BasicTensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::input(BasicTensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = track_gradients_;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(BasicTensor<T>& param) {
  if (auto it = bound_params_.find(&param); it != bound_params_.end()) return Var{it->second};
  Node n;
  n.external = &param;
  n.param = track_gradients_ ? &param : nullptr;
  n.requires_grad = track_gradients_;
  nodes_.push_back(std::move(n));
  bound_params_.emplace(&param, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(std::vector<Var> inputs, BasicTensor<T> value, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    const Node& in = node(v);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw StateError("variable is not recorded on this tape");
  return nodes_[v.id];
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(Var v) const {
  const Node& n = node(v);
  return n.external != nullptr ? *n.external : n.value;
}

template <typename T>
bool Tape<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <typename T>
std::span<const T> Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (!backward_done_ || n.grad.empty()) throw StateError("no gradient recorded for this variable");
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
    throw StateError("backward called before a forward pass was recorded");
  }
  if (backward_done_) throw StateError("backward already ran on this tape");
  if (!track_gradients_) throw StateError("backward on a tape that does not track gradients");
  if (value(loss).size() != 1) {
    throw DimensionError("backward target must be a scalar, got shape " + shape_str(value(loss).shape()));
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) n.grad.assign(value(Var{i}).size(), T(0));
  }
  if (nodes_[loss.id].requires_grad) nodes_[loss.id].grad[0] = T(1);

  std::vector<std::span<T>> grad_in;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backward) {
      grad_in.clear();
      for (std::size_t in : n.inputs) {
        Node& src = nodes_[in];
        grad_in.push_back(src.requires_grad ? std::span<T>(src.grad) : std::span<T>());
      }
      n.backward(*this, n.grad, grad_in);
    }
    if (n.param != nullptr) {
      auto dst = n.param->grad();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
  backward_done_ = true;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace diqa
