#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "geomlab/common.hpp"
#include "geomlab/tensor.hpp"

namespace geomlab {

// Named parameter collection with a per-parameter trainable flag. Iteration
// follows insertion order so optimizer sweeps and checkpoints are stable.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{name, std::move(value), trainable});
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) { return entry(name).value; }
  const Tensor<T>& at(const std::string& name) const { return entry(name).value; }

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[static_cast<size_t>(it->second)];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[static_cast<size_t>(it->second)];
  }

  void set_trainable(const std::string& name, bool t) { entry(name).trainable = t; }

  void freeze_all() {
    for (auto& e : entries_) e.trainable = false;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  size_t size() const { return entries_.size(); }

  int64_t total_values() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.value.zero_grad();
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.trainable);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace geomlab
