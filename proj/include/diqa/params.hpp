#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>

#include "diqa/tensor.hpp"

namespace diqa {

/// Ordered, uniquely named set of parameter tensors. References to stored tensors stay
/// valid as entries are added, so a Tape can bind them by address.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> tensor;
  };

  BasicTensor<T>& add(std::string name, Shape shape);

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }
  BasicTensor<T>& at(std::string_view name);
  const BasicTensor<T>& at(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Total number of scalars across every tensor.
  std::int64_t scalar_count() const;

  void zero_grad();
  void drop_grad();

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) {
      auto& dst = out.add(e.name, e.tensor.shape());
      dst = e.tensor.template cast<U>();
    }
    return out;
  }

 private:
  std::deque<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace diqa
