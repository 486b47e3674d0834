#pragma once

#include <map>
#include <string>
#include <vector>

#include "tar/tensor.hpp"

namespace tar {

// Named trainable parameters with their gradient accumulators. Iteration
// order is the lexicographic name order of std::map, so anything that
// walks the store (optimizer steps, serialization) is deterministic.
template <typename T>
class ParamStore {
 public:
  struct Slot {
    Tensor<T> value;
    Tensor<T> grad;  // empty until the first zero_grad or accumulate
  };

  Tensor<T>& add(const std::string& name, Tensor<T> init) {
    auto [it, inserted] = slots_.emplace(name, Slot{std::move(init), {}});
    if (!inserted) throw ContractError("duplicate parameter '" + name + "'");
    return it->second.value;
  }

  bool contains(const std::string& name) const { return slots_.count(name) != 0; }

  Slot& at(const std::string& name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Slot& at(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  void zero_grad() {
    for (auto& [name, slot] : slots_) {
      if (slot.grad.empty()) slot.grad = Tensor<T>(slot.value.shape());
      else slot.grad.fill(T{0});
    }
  }

  void accumulate_grad(const std::string& name, const Tensor<T>& g) {
    Slot& slot = at(name);
    if (!g.same_shape(slot.value)) {
      throw ContractError("gradient shape " + shape_string(g.shape()) + " does not match '" +
                          name + "' " + shape_string(slot.value.shape()));
    }
    if (slot.grad.empty()) slot.grad = Tensor<T>(slot.value.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) slot.grad[i] += g[i];
  }

  std::size_t size() const { return slots_.size(); }

  std::int64_t total_elements() const {
    std::int64_t n = 0;
    for (const auto& [name, slot] : slots_) n += slot.value.numel();
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(slots_.size());
    for (const auto& [name, slot] : slots_) out.push_back(name);
    return out;
  }

  auto begin() { return slots_.begin(); }
  auto end() { return slots_.end(); }
  auto begin() const { return slots_.begin(); }
  auto end() const { return slots_.end(); }

 private:
  std::map<std::string, Slot> slots_;
};

}  // namespace tar
