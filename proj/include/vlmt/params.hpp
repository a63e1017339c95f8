#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vlmt/tensor.hpp"

namespace vlmt {

/// Insertion-ordered collection of named tensors. Holds plain (constant)
/// tensors; a forward pass binds them onto a fresh tape with bind().
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> value) {
    if (map_.count(name)) {
      throw ContractError("ParamStore: duplicate name '" + name + "'");
    }
    order_.push_back(name);
    map_.emplace(name, std::move(value));
  }

  bool contains(const std::string& name) const { return map_.count(name) > 0; }

  const Tensor<T>& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) {
      throw ContractError("ParamStore: no parameter named '" + name + "'");
    }
    return it->second;
  }

  /// Replace an existing entry; the shape must not change.
  void set(const std::string& name, Tensor<T> value) {
    auto it = map_.find(name);
    if (it == map_.end()) {
      throw ContractError("ParamStore: no parameter named '" + name + "'");
    }
    if (it->second.shape() != value.shape()) {
      throw DimensionError("ParamStore: shape change for '" + name + "': " +
                           shape_str(it->second.shape()) + " -> " +
                           shape_str(value.shape()));
    }
    it->second = std::move(value);
  }

  const std::vector<std::string>& names() const { return order_; }

  size_t total_params() const {
    size_t n = 0;
    for (const auto& name : order_) n += at(name).numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& name : order_) {
      const Tensor<T>& t = at(name);
      std::vector<U> v(t.numel());
      const auto& src = t.values();
      for (size_t i = 0; i < src.size(); ++i) v[i] = static_cast<U>(src[i]);
      out.add(name, Tensor<U>(t.shape(), std::move(v)));
    }
    return out;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor<T>> map_;
};

/// Parameters materialized for one forward pass, either as differentiable
/// leaves of a tape or as constants (tape == nullptr, for evaluation-only
/// passes that skip op recording).
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>* tape, const ParamStore<T>& store) : tape_(tape) {
    for (const auto& name : store.names()) {
      const Tensor<T>& src = store.at(name);
      map_.emplace(name, tape ? tape->leaf(src) : src);
      order_.push_back(name);
    }
  }

  const Tensor<T>& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) {
      throw ContractError("BoundParams: no parameter named '" + name + "'");
    }
    return it->second;
  }

  bool contains(const std::string& name) const { return map_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }
  Tape<T>* tape() const { return tape_; }

 private:
  Tape<T>* tape_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor<T>> map_;
};

template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ParamStore<T>& store) {
  return BoundParams<T>(&tape, store);
}

template <typename T>
BoundParams<T> bind_constants(const ParamStore<T>& store) {
  return BoundParams<T>(nullptr, store);
}

}  // namespace vlmt
