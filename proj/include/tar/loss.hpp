#pragma once

#include <cmath>
#include <vector>

#include "tar/label.hpp"
#include "tar/tape.hpp"

namespace tar {

template <typename T>
struct LossWeights {
  T lambda = T(0.1);

  void validate() const {
    if (!(lambda >= T{0})) throw ConfigError("loss weight lambda must be >= 0");
  }
};

// Batch sum of |A2 - l + 1| + |A1 + l - 2| over samples. For a real
// sample (l=1) this reduces to |A2| + |A1 - 1|, for a fake one (l=2) to
// |A2 - 1| + |A1|: the own-class mean activation is pulled to 1 and the
// opposite one to 0. `acts` is the [B,2] output of per_class_activation.
template <typename T>
Var activation_loss(Tape<T>& tape, Var acts, std::vector<Label> labels) {
  const Tensor<T>& av = tape.value(acts);
  if (av.rank() != 2 || av.dim(1) != 2) {
    throw ContractError("activation_loss expects activations [B,2], got " +
                        shape_string(av.shape()));
  }
  if (static_cast<std::int64_t>(labels.size()) != av.dim(0)) {
    throw ContractError("activation_loss got " + std::to_string(labels.size()) +
                        " labels for batch " + std::to_string(av.dim(0)));
  }
  T total{0};
  for (std::int64_t b = 0; b < av.dim(0); ++b) {
    const T l = static_cast<T>(label_value(labels[static_cast<std::size_t>(b)]));
    total += std::abs(av(b, 1) - l + T{1}) + std::abs(av(b, 0) + l - T{2});
  }
  if (!tape.requires_grad(acts)) return tape.emit(Tensor<T>::scalar(total), false, nullptr);
  auto back = [acts, labels = std::move(labels)](Tape<T>& t, std::int32_t self) {
    const T g = t.grad_buffer(Var{self})[0];
    const Tensor<T>& av = t.value(acts);
    Tensor<T>& ga = t.grad_buffer(acts);
    for (std::int64_t b = 0; b < av.dim(0); ++b) {
      const T l = static_cast<T>(label_value(labels[static_cast<std::size_t>(b)]));
      const T r2 = av(b, 1) - l + T{1};
      const T r1 = av(b, 0) + l - T{2};
      if (r2 > T{0}) ga(b, 1) += g;
      else if (r2 < T{0}) ga(b, 1) -= g;
      if (r1 > T{0}) ga(b, 0) += g;
      else if (r1 < T{0}) ga(b, 0) -= g;
    }
  };
  return tape.emit(Tensor<T>::scalar(total), true, back);
}

// Mean absolute deviation between input and reconstruction: the summed L1
// distance divided by the total element count of the batch, so the value
// is comparable across image sizes and batch sizes.
template <typename T>
Var reconstruction_loss(Tape<T>& tape, Var x, Var recon) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& rv = tape.value(recon);
  if (!xv.same_shape(rv)) {
    throw ContractError("reconstruction_loss shape mismatch: " + shape_string(xv.shape()) +
                        " vs " + shape_string(rv.shape()));
  }
  const T norm = static_cast<T>(xv.numel());
  T total{0};
  for (std::int64_t i = 0; i < xv.numel(); ++i) total += std::abs(xv[i] - rv[i]);
  total /= norm;
  const bool grad = tape.requires_grad(x) || tape.requires_grad(recon);
  if (!grad) return tape.emit(Tensor<T>::scalar(total), false, nullptr);
  auto back = [x, recon, norm](Tape<T>& t, std::int32_t self) {
    const T g = t.grad_buffer(Var{self})[0] / norm;
    const Tensor<T>& xval = t.value(x);
    const Tensor<T>& rval = t.value(recon);
    Tensor<T>* gr = t.requires_grad(recon) ? &t.grad_buffer(recon) : nullptr;
    Tensor<T>* gx = t.requires_grad(x) ? &t.grad_buffer(x) : nullptr;
    for (std::int64_t i = 0; i < xval.numel(); ++i) {
      const T d = rval[i] - xval[i];
      T s{0};
      if (d > T{0}) s = g;
      else if (d < T{0}) s = -g;
      if (s == T{0}) continue;
      if (gr) (*gr)[i] += s;
      if (gx) (*gx)[i] -= s;
    }
  };
  return tape.emit(Tensor<T>::scalar(total), true, back);
}

// lambda * reconstruction + activation.
template <typename T>
Var total_loss(Tape<T>& tape, Var recon_loss, Var activ_loss, const LossWeights<T>& weights) {
  weights.validate();
  const Tensor<T>& rv = tape.value(recon_loss);
  const Tensor<T>& av = tape.value(activ_loss);
  if (rv.numel() != 1 || av.numel() != 1) {
    throw ContractError("total_loss expects scalar inputs, got " + shape_string(rv.shape()) +
                        " and " + shape_string(av.shape()));
  }
  const T lambda = weights.lambda;
  const T value = lambda * rv[0] + av[0];
  const bool grad = tape.requires_grad(recon_loss) || tape.requires_grad(activ_loss);
  if (!grad) return tape.emit(Tensor<T>::scalar(value), false, nullptr);
  auto back = [recon_loss, activ_loss, lambda](Tape<T>& t, std::int32_t self) {
    const T g = t.grad_buffer(Var{self})[0];
    if (t.requires_grad(recon_loss)) t.grad_buffer(recon_loss)[0] += lambda * g;
    if (t.requires_grad(activ_loss)) t.grad_buffer(activ_loss)[0] += g;
  };
  return tape.emit(Tensor<T>::scalar(value), true, back);
}

}  // namespace tar
