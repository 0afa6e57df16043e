#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "diqa/errors.hpp"

namespace diqa {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/**
 * Dense row-major n-dimensional array with an optional gradient buffer.
 *
 * Every extent is positive and `data().size() == numel()`. The gradient, when
 * allocated, always has the same shape as the value.
 */
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

  const Shape& shape() const noexcept { return shape_; }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Multi-index element access (row-major); bounds are checked.
  T& at(std::initializer_list<std::int64_t> index);
  const T& at(std::initializer_list<std::int64_t> index) const;

  bool has_grad() const noexcept { return !grad_.empty(); }
  /// Allocates (zeroed) the gradient buffer if absent.
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  /// Same data, new shape with identical element count.
  BasicTensor reshaped(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  std::size_t offset(std::initializer_list<std::int64_t> index) const;

  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Throws DimensionError unless `tensor` has exactly `expected_rank` axes.
template <typename T>
void require_rank(const BasicTensor<T>& tensor, std::size_t expected_rank, const char* what);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace diqa
