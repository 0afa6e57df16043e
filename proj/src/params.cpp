#include "diqa/params.hpp"

namespace diqa {

template <typename T>
BasicTensor<T>& ParamSet<T>::add(std::string name, Shape shape) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), BasicTensor<T>(std::move(shape))});
  return entries_.back().tensor;
}

template <typename T>
BasicTensor<T>& ParamSet<T>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].tensor;
}

template <typename T>
const BasicTensor<T>& ParamSet<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].tensor;
}

template <typename T>
std::int64_t ParamSet<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::int64_t>(e.tensor.size());
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
void ParamSet<T>::drop_grad() {
  for (auto& e : entries_) e.tensor.drop_grad();
}

template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace diqa
