#include "diqa/tensor.hpp"

#include <sstream>

namespace diqa {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) {
    if (extent <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    n *= extent;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw DimensionError("tensor of shape " + shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
}

template <typename T>
std::size_t BasicTensor<T>::offset(std::initializer_list<std::int64_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " does not match tensor rank " +
                         std::to_string(shape_.size()));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= shape_[axis]) {
      throw DimensionError("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis));
    }
    off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return off;
}

template <typename T>
T& BasicTensor<T>::at(std::initializer_list<std::int64_t> index) {
  return data_[offset(index)];
}

template <typename T>
const T& BasicTensor<T>::at(std::initializer_list<std::int64_t> index) const {
  return data_[offset(index)];
}

template <typename T>
std::span<T> BasicTensor<T>::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  return grad_;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (grad_.size() != data_.size()) throw StateError("tensor has no gradient buffer");
  return grad_;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  grad_.assign(data_.size(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != static_cast<std::int64_t>(data_.size())) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
void require_rank(const BasicTensor<T>& tensor, std::size_t expected_rank, const char* what) {
  if (tensor.rank() != expected_rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(expected_rank) + ", got shape " +
                         shape_str(tensor.shape()));
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void require_rank(const BasicTensor<float>&, std::size_t, const char*);
template void require_rank(const BasicTensor<double>&, std::size_t, const char*);

}  // namespace diqa
