#pragma once

#include <map>
#include <string>
#include <vector>

#include "gbu/nn/tensor.hpp"

namespace gbu::model {

/// Named tensors in lexicographic order. Trainable entries require grad;
/// the rest are buffers such as batch-norm running statistics.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    nn::Tensor<T> tensor;
    bool trainable = true;
  };

  void add(const std::string& name, nn::Tensor<T> tensor, bool trainable) {
    require(!entries_.count(name), ErrorCode::kContract, "duplicate parameter " + name);
    tensor.set_requires_grad(trainable);
    entries_.emplace(name, Entry{std::move(tensor), trainable});
  }

  [[nodiscard]] bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  [[nodiscard]] const nn::Tensor<T>& at(const std::string& name) const {
    const auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::kLookup, "no parameter named " + name);
    return it->second.tensor;
  }

  [[nodiscard]] bool trainable(const std::string& name) const {
    const auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::kLookup, "no parameter named " + name);
    return it->second.trainable;
  }

  [[nodiscard]] std::size_t size() const { return entries_.size(); }

  /// Scalar count of trainable (or all) entries.
  [[nodiscard]] std::size_t count(bool trainable_only = true) const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_)
      if (e.trainable || !trainable_only) n += e.tensor.numel();
    return n;
  }

  [[nodiscard]] std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_)
      if (e.trainable) out.push_back(name);
    return out;
  }

  [[nodiscard]] auto begin() const { return entries_.begin(); }
  [[nodiscard]] auto end() const { return entries_.end(); }

  /// Deep copy: new storage, no gradients.
  [[nodiscard]] ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, e] : entries_) {
      auto copy = e.tensor.clone();
      copy.zero_grad();
      out.entries_.emplace(name, Entry{std::move(copy), e.trainable});
    }
    return out;
  }

  template <typename U>
  [[nodiscard]] ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.tensor.template cast<U>(), e.trainable);
    return out;
  }

  void zero_grad() const {
    for (const auto& [name, e] : entries_) e.tensor.zero_grad();
  }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace gbu::model
