#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "tar/param_store.hpp"

namespace tar {

enum class OptimizerKind { sgd, adam };

inline const char* optimizer_kind_name(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

inline OptimizerKind optimizer_kind_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "', expected sgd or adam");
}

template <typename T>
struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  void validate() const {
    if (!(lr > T{0})) throw ConfigError("learning rate must be positive");
    if (!(beta1 >= T{0} && beta1 < T{1})) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= T{0} && beta2 < T{1})) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(eps > T{0})) throw ConfigError("optimizer eps must be positive");
  }
};

// SGD or Adam over a ParamStore. Adam keeps first and second moment
// estimates per parameter with bias correction; the moment tensors are
// exposed so checkpoints can persist and restore them.
template <typename T>
class Optimizer {
 public:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  explicit Optimizer(OptimizerConfig<T> cfg) : cfg_(cfg) { cfg_.validate(); }

  const OptimizerConfig<T>& config() const { return cfg_; }
  std::int64_t steps_taken() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  void restore(std::int64_t steps, std::map<std::string, Moments> moments) {
    if (steps < 0) throw ContractError("optimizer step count must be non-negative");
    steps_ = steps;
    moments_ = std::move(moments);
  }

  // Applies one update from the gradients currently held in `params`.
  // Every parameter must have a gradient; a missing one means backward
  // never ran, which is a caller bug worth failing loudly on.
  void step(ParamStore<T>& params) {
    for (auto& [name, slot] : params) {
      if (slot.grad.empty()) {
        throw ContractError("parameter '" + name + "' has no gradient; run backward before step");
      }
    }
    ++steps_;
    if (cfg_.kind == OptimizerKind::sgd) {
      for (auto& [name, slot] : params) {
        for (std::int64_t i = 0; i < slot.value.numel(); ++i) {
          slot.value[i] -= cfg_.lr * slot.grad[i];
        }
      }
      return;
    }
    const double c1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(steps_));
    for (auto& [name, slot] : params) {
      auto it = moments_.find(name);
      if (it == moments_.end()) {
        it = moments_.emplace(name, Moments{Tensor<T>(slot.value.shape()),
                                            Tensor<T>(slot.value.shape())}).first;
      }
      Moments& mom = it->second;
      if (!mom.m.same_shape(slot.value)) {
        throw ContractError("optimizer moments for '" + name + "' shaped " +
                            shape_string(mom.m.shape()) + " do not match parameter " +
                            shape_string(slot.value.shape()));
      }
      for (std::int64_t i = 0; i < slot.value.numel(); ++i) {
        const T g = slot.grad[i];
        mom.m[i] = cfg_.beta1 * mom.m[i] + (T{1} - cfg_.beta1) * g;
        mom.v[i] = cfg_.beta2 * mom.v[i] + (T{1} - cfg_.beta2) * g * g;
        const T mhat = static_cast<T>(static_cast<double>(mom.m[i]) / c1);
        const T vhat = static_cast<T>(static_cast<double>(mom.v[i]) / c2);
        slot.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  OptimizerConfig<T> cfg_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace tar
