#pragma once

#include <algorithm>
#include <cmath>

#include "tar/tape.hpp"

namespace tar {

// Compares the analytic gradient of a scalar-valued function against
// central finite differences, coordinate by coordinate, and returns the
// worst relative error. `f` maps (tape, input var) to a scalar Var; it is
// re-invoked on a fresh tape for every probe, so it must be a pure
// function of the input value (copy any state it mutates, e.g. batchnorm
// running statistics).
//
// The relative error denominator is max(|analytic|, |numeric|, 1e-12),
// which keeps near-zero gradients from blowing up the ratio.
template <typename T, typename F>
double grad_check(F&& f, const Tensor<T>& x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("grad_check eps must be positive");

  Tape<T> tape;
  Var xv = tape.leaf(x, true);
  Var out = f(tape, xv);
  if (tape.value(out).numel() != 1) {
    throw ContractError("grad_check target must produce a scalar, got shape " +
                        shape_string(tape.value(out).shape()));
  }
  tape.backward(out);
  Tensor<T> analytic = tape.grad(xv);

  auto value_at = [&f](const Tensor<T>& probe) {
    Tape<T> t;
    Var v = t.leaf(probe, false);
    return static_cast<double>(t.value(f(t, v))[0]);
  };

  Tensor<T> probe = x;
  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + static_cast<T>(eps);
    const double up = value_at(probe);
    probe[i] = orig - static_cast<T>(eps);
    const double down = value_at(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace tar
