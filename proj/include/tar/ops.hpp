#pragma once

#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "tar/detail/gemm.hpp"
#include "tar/tape.hpp"

namespace tar {

namespace detail {

// Lowers one [Cin,H,W] sample to a [Cin*Kh*Kw, Ho*Wo] patch matrix with
// zero padding, so convolution becomes a single GEMM per sample.
template <typename T>
void im2col(const T* x, std::int64_t cin, std::int64_t h, std::int64_t w,
            std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
            std::int64_t ho, std::int64_t wo, T* col) {
  const std::int64_t np = ho * wo;
  for (std::int64_t ci = 0; ci < cin; ++ci) {
    const T* xp = x + ci * h * w;
    for (std::int64_t fh = 0; fh < kh; ++fh) {
      for (std::int64_t fw = 0; fw < kw; ++fw) {
        T* crow = col + ((ci * kh + fh) * kw + fw) * np;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          std::int64_t ih = oh * stride - pad + fh;
          T* dst = crow + oh * wo;
          if (ih < 0 || ih >= h) {
            for (std::int64_t ow = 0; ow < wo; ++ow) dst[ow] = T{0};
            continue;
          }
          const T* xrow = xp + ih * w;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            std::int64_t iw = ow * stride - pad + fw;
            dst[ow] = (iw >= 0 && iw < w) ? xrow[iw] : T{0};
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col; accumulates into x.
template <typename T>
void col2im_add(const T* col, std::int64_t cin, std::int64_t h, std::int64_t w,
                std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
                std::int64_t ho, std::int64_t wo, T* x) {
  const std::int64_t np = ho * wo;
  for (std::int64_t ci = 0; ci < cin; ++ci) {
    T* xp = x + ci * h * w;
    for (std::int64_t fh = 0; fh < kh; ++fh) {
      for (std::int64_t fw = 0; fw < kw; ++fw) {
        const T* crow = col + ((ci * kh + fh) * kw + fw) * np;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          std::int64_t ih = oh * stride - pad + fh;
          if (ih < 0 || ih >= h) continue;
          T* xrow = xp + ih * w;
          const T* src = crow + oh * wo;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            std::int64_t iw = ow * stride - pad + fw;
            if (iw >= 0 && iw < w) xrow[iw] += src[ow];
          }
        }
      }
    }
  }
}

inline void check_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw ContractError(std::string(what) + " must be rank 4 [B,C,H,W], got " + shape_string(s));
  }
}

}  // namespace detail

// 2-D convolution, zero padded. x: [B,Cin,H,W], w: [Cout,Cin,Kh,Kw],
// bias: rank-1 [Cout] or an invalid Var for no bias.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var bias, std::int64_t stride = 1,
           std::int64_t pad = 0) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  detail::check_rank4(xv.shape(), "conv2d input");
  detail::check_rank4(wv.shape(), "conv2d weight");
  if (xv.dim(1) != wv.dim(1)) {
    throw ContractError("conv2d channel mismatch: input " + shape_string(xv.shape()) +
                        " vs weight " + shape_string(wv.shape()));
  }
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw ConfigError("conv2d padding must be >= 0, got " + std::to_string(pad));

  const std::int64_t batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const std::int64_t cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (h + 2 * pad < kh || wd + 2 * pad < kw) {
    throw ContractError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                        " exceeds padded input " + shape_string(xv.shape()) + " with pad " +
                        std::to_string(pad));
  }
  const bool has_bias = bias.valid();
  if (has_bias) {
    const Tensor<T>& bv = tape.value(bias);
    if (bv.rank() != 1 || bv.dim(0) != cout) {
      throw ContractError("conv2d bias must be rank 1 [" + std::to_string(cout) + "], got " +
                          shape_string(bv.shape()));
    }
  }

  const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  const std::int64_t k = cin * kh * kw;
  const std::int64_t np = ho * wo;

  Tensor<T> y({batch, cout, ho, wo});
  parallel_for(batch, [&](std::int64_t b0, std::int64_t b1) {
    std::vector<T> col(static_cast<std::size_t>(k * np));
    for (std::int64_t b = b0; b < b1; ++b) {
      detail::im2col(xv.data() + b * cin * h * wd, cin, h, wd, kh, kw, stride, pad, ho, wo,
                     col.data());
      T* yb = y.data() + b * cout * np;
      if (has_bias) {
        const Tensor<T>& bv = tape.value(bias);
        for (std::int64_t c = 0; c < cout; ++c) {
          T v = bv[c];
          T* row = yb + c * np;
          for (std::int64_t i = 0; i < np; ++i) row[i] = v;
        }
      }
      detail::gemm_nn(cout, np, k, wv.data(), col.data(), yb);
    }
  });

  const bool grad = tape.requires_grad(x) || tape.requires_grad(w) ||
                    (has_bias && tape.requires_grad(bias));
  if (!grad) return tape.emit(std::move(y), false, nullptr);

  auto back = [=](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    const Tensor<T>& xval = t.value(x);
    const Tensor<T>& wval = t.value(w);
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(w);
    const bool need_b = has_bias && t.requires_grad(bias);
    Tensor<T>* gx = need_x ? &t.grad_buffer(x) : nullptr;

    // Contiguous batch ranges; each worker owns its range's dx rows and a
    // local dw/db partial. Partials merge in range order so the result is
    // reproducible for a fixed thread count.
    int workers = num_threads();
    if (static_cast<std::int64_t>(workers) > batch) workers = static_cast<int>(batch);
    const std::int64_t chunk = (batch + workers - 1) / workers;
    struct Partial {
      std::vector<T> dw, db;
    };
    std::vector<Partial> parts(static_cast<std::size_t>(workers));

    auto run_range = [&](int r, std::int64_t b0, std::int64_t b1) {
      Partial& part = parts[static_cast<std::size_t>(r)];
      if (need_w) part.dw.assign(static_cast<std::size_t>(cout * k), T{0});
      if (need_b) part.db.assign(static_cast<std::size_t>(cout), T{0});
      std::vector<T> col(static_cast<std::size_t>(k * np));
      std::vector<T> dcol(need_x ? static_cast<std::size_t>(k * np) : 0);
      for (std::int64_t b = b0; b < b1; ++b) {
        const T* gb = g.data() + b * cout * np;
        if (need_w || need_x) {
          detail::im2col(xval.data() + b * cin * h * wd, cin, h, wd, kh, kw, stride, pad, ho, wo,
                         col.data());
        }
        if (need_w) detail::gemm_nt(cout, k, np, gb, col.data(), part.dw.data());
        if (need_b) {
          for (std::int64_t c = 0; c < cout; ++c) {
            T s{0};
            const T* row = gb + c * np;
            for (std::int64_t i = 0; i < np; ++i) s += row[i];
            part.db[static_cast<std::size_t>(c)] += s;
          }
        }
        if (need_x) {
          std::fill(dcol.begin(), dcol.end(), T{0});
          detail::gemm_tn(k, np, cout, wval.data(), gb, dcol.data());
          detail::col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                             gx->data() + b * cin * h * wd);
        }
      }
    };

    if (workers <= 1) {
      run_range(0, 0, batch);
    } else {
      std::vector<std::thread> pool;
      for (int r = 0; r < workers; ++r) {
        std::int64_t b0 = r * chunk;
        std::int64_t b1 = std::min(batch, b0 + chunk);
        if (b0 >= b1) break;
        pool.emplace_back(run_range, r, b0, b1);
      }
      for (auto& th : pool) th.join();
    }

    if (need_w) {
      Tensor<T>& gw = t.grad_buffer(w);
      for (const Partial& part : parts) {
        if (part.dw.empty()) continue;
        for (std::int64_t i = 0; i < cout * k; ++i) gw[i] += part.dw[static_cast<std::size_t>(i)];
      }
    }
    if (need_b) {
      Tensor<T>& gb = t.grad_buffer(bias);
      for (const Partial& part : parts) {
        if (part.db.empty()) continue;
        for (std::int64_t c = 0; c < cout; ++c) gb[c] += part.db[static_cast<std::size_t>(c)];
      }
    }
  };
  return tape.emit(std::move(y), true, back);
}

enum class BnMode { train, infer };

// Running statistics of one batchnorm layer, shape [C] each.
template <typename T>
struct BnStats {
  Tensor<T> mean;
  Tensor<T> var;

  static BnStats fresh(std::int64_t channels) {
    BnStats s;
    s.mean = Tensor<T>::zeros({channels});
    s.var = Tensor<T>::ones({channels});
    return s;
  }
};

namespace detail {

template <typename T>
void check_bn_shapes(const Tensor<T>& xv, const Tensor<T>& gv, const Tensor<T>& bv,
                     const BnStats<T>& stats, T eps) {
  check_rank4(xv.shape(), "batchnorm2d input");
  const std::int64_t ch = xv.dim(1);
  if (gv.rank() != 1 || gv.dim(0) != ch || bv.rank() != 1 || bv.dim(0) != ch) {
    throw ContractError("batchnorm2d gamma/beta must be rank 1 [" + std::to_string(ch) +
                        "], got " + shape_string(gv.shape()) + " and " + shape_string(bv.shape()));
  }
  if (stats.mean.numel() != ch || stats.var.numel() != ch) {
    throw ContractError("batchnorm2d running stats sized " + shape_string(stats.mean.shape()) +
                        " do not match " + std::to_string(ch) + " channels");
  }
  if (eps <= T{0}) throw ConfigError("batchnorm2d eps must be positive");
}

}  // namespace detail

// Inference-mode batch normalization: normalizes with the running
// estimates and never writes them back.
template <typename T>
Var batchnorm2d_infer(Tape<T>& tape, Var x, Var gamma, Var beta, const BnStats<T>& stats,
                      T eps = T(1e-5)) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  detail::check_bn_shapes(xv, gv, bv, stats, eps);
  const std::int64_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t hw = h * w;
  const std::int64_t chw = ch * hw;
  const bool grad = tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);

  Tensor<T> y(xv.shape());
  std::vector<T> scale(static_cast<std::size_t>(ch)), shift(static_cast<std::size_t>(ch)),
      istd(static_cast<std::size_t>(ch));
  for (std::int64_t c = 0; c < ch; ++c) {
    const double is = 1.0 / std::sqrt(static_cast<double>(stats.var[c]) + static_cast<double>(eps));
    istd[static_cast<std::size_t>(c)] = static_cast<T>(is);
    scale[static_cast<std::size_t>(c)] = static_cast<T>(static_cast<double>(gv[c]) * is);
    shift[static_cast<std::size_t>(c)] =
        static_cast<T>(static_cast<double>(bv[c]) -
                       static_cast<double>(stats.mean[c]) * static_cast<double>(gv[c]) * is);
  }
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < ch; ++c) {
      const T* p = xv.data() + b * chw + c * hw;
      T* yp = y.data() + b * chw + c * hw;
      const T sc = scale[static_cast<std::size_t>(c)];
      const T sh = shift[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < hw; ++i) yp[i] = p[i] * sc + sh;
    }
  }
  if (!grad) return tape.emit(std::move(y), false, nullptr);

  std::vector<T> rmean(static_cast<std::size_t>(ch));
  for (std::int64_t c = 0; c < ch; ++c) rmean[static_cast<std::size_t>(c)] = stats.mean[c];
  auto back = [=, scale = std::move(scale), istd = std::move(istd),
               rmean = std::move(rmean)](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    const Tensor<T>& xval = t.value(x);
    const bool need_x = t.requires_grad(x);
    const bool need_g = t.requires_grad(gamma);
    const bool need_b = t.requires_grad(beta);
    for (std::int64_t c = 0; c < ch; ++c) {
      double sg = 0.0, sgx = 0.0;
      for (std::int64_t b = 0; b < batch; ++b) {
        const T* gp = g.data() + b * chw + c * hw;
        const T* xp = xval.data() + b * chw + c * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          sg += static_cast<double>(gp[i]);
          sgx += static_cast<double>(gp[i]) *
                 (static_cast<double>(xp[i]) -
                  static_cast<double>(rmean[static_cast<std::size_t>(c)])) *
                 static_cast<double>(istd[static_cast<std::size_t>(c)]);
        }
      }
      if (need_g) t.grad_buffer(gamma)[c] += static_cast<T>(sgx);
      if (need_b) t.grad_buffer(beta)[c] += static_cast<T>(sg);
      if (need_x) {
        Tensor<T>& gx = t.grad_buffer(x);
        const T sc = scale[static_cast<std::size_t>(c)];
        for (std::int64_t b = 0; b < batch; ++b) {
          const T* gp = g.data() + b * chw + c * hw;
          T* out = gx.data() + b * chw + c * hw;
          for (std::int64_t i = 0; i < hw; ++i) out[i] += gp[i] * sc;
        }
      }
    }
  };
  return tape.emit(std::move(y), true, back);
}

// Batch normalization over [B,*,H,W] per channel. In train mode the batch
// is normalized with its own biased variance and `stats` is advanced as
// running = (1 - momentum) * running + momentum * batch, with the unbiased
// variance feeding the running estimate. In infer mode `stats` is read
// only. Train mode needs at least two values per channel, otherwise the
// variance degenerates and the call refuses to proceed.
template <typename T>
Var batchnorm2d(Tape<T>& tape, Var x, Var gamma, Var beta, BnStats<T>& stats, BnMode mode,
                T eps = T(1e-5), T momentum = T(0.1)) {
  if (mode == BnMode::infer) return batchnorm2d_infer(tape, x, gamma, beta, stats, eps);

  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  detail::check_bn_shapes(xv, gv, bv, stats, eps);
  const std::int64_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t hw = h * w;
  const std::int64_t chw = ch * hw;
  const std::int64_t n = batch * hw;
  const bool grad = tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);

  if (n < 2) {
    throw ContractError("batchnorm2d train mode needs >= 2 values per channel to estimate "
                        "variance, got " + std::to_string(n));
  }
  if (momentum < T{0} || momentum > T{1}) {
    throw ConfigError("batchnorm2d momentum must lie in [0, 1]");
  }
  Tensor<T> y(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> invstd(static_cast<std::size_t>(ch));
  for (std::int64_t c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) {
      const T* p = xv.data() + b * chw + c * hw;
      for (std::int64_t i = 0; i < hw; ++i) sum += static_cast<double>(p[i]);
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) {
      const T* p = xv.data() + b * chw + c * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        double d = static_cast<double>(p[i]) - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    invstd[static_cast<std::size_t>(c)] = static_cast<T>(istd);
    const T gc = gv[c], bc = bv[c];
    for (std::int64_t b = 0; b < batch; ++b) {
      const T* p = xv.data() + b * chw + c * hw;
      T* xh = xhat.data() + b * chw + c * hw;
      T* yp = y.data() + b * chw + c * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        T xn = static_cast<T>((static_cast<double>(p[i]) - mean) * istd);
        xh[i] = xn;
        yp[i] = gc * xn + bc;
      }
    }
    const double unbiased = sq / static_cast<double>(n - 1);
    stats.mean[c] = static_cast<T>((1.0 - static_cast<double>(momentum)) *
                                       static_cast<double>(stats.mean[c]) +
                                   static_cast<double>(momentum) * mean);
    stats.var[c] = static_cast<T>((1.0 - static_cast<double>(momentum)) *
                                      static_cast<double>(stats.var[c]) +
                                  static_cast<double>(momentum) * unbiased);
  }
  if (!grad) return tape.emit(std::move(y), false, nullptr);

  auto back = [=, xhat = std::move(xhat), invstd = std::move(invstd)](Tape<T>& t,
                                                                      std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    const Tensor<T>& gval = t.value(gamma);
    const bool need_x = t.requires_grad(x);
    const bool need_g = t.requires_grad(gamma);
    const bool need_b = t.requires_grad(beta);
    for (std::int64_t c = 0; c < ch; ++c) {
      double sg = 0.0, sgx = 0.0;
      for (std::int64_t b = 0; b < batch; ++b) {
        const T* gp = g.data() + b * chw + c * hw;
        const T* xh = xhat.data() + b * chw + c * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          sg += static_cast<double>(gp[i]);
          sgx += static_cast<double>(gp[i]) * static_cast<double>(xh[i]);
        }
      }
      if (need_g) t.grad_buffer(gamma)[c] += static_cast<T>(sgx);
      if (need_b) t.grad_buffer(beta)[c] += static_cast<T>(sg);
      if (need_x) {
        Tensor<T>& gx = t.grad_buffer(x);
        const double coef = static_cast<double>(gval[c]) *
                            static_cast<double>(invstd[static_cast<std::size_t>(c)]);
        const double mg = sg / static_cast<double>(n);
        const double mgx = sgx / static_cast<double>(n);
        for (std::int64_t b = 0; b < batch; ++b) {
          const T* gp = g.data() + b * chw + c * hw;
          const T* xh = xhat.data() + b * chw + c * hw;
          T* out = gx.data() + b * chw + c * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            out[i] += static_cast<T>(coef * (static_cast<double>(gp[i]) - mg -
                                             static_cast<double>(xh[i]) * mgx));
          }
        }
      }
    }
  };
  return tape.emit(std::move(y), true, back);
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] >= T{0} ? xv[i] : T{0};
  if (!tape.requires_grad(x)) return tape.emit(std::move(y), false, nullptr);
  auto back = [x](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    const Tensor<T>& xval = t.value(x);
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < xval.numel(); ++i) {
      if (xval[i] >= T{0}) gx[i] += g[i];
    }
  };
  return tape.emit(std::move(y), true, back);
}

template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope) {
  if (!(slope >= T{0} && slope < T{1})) {
    throw ConfigError("leaky_relu slope must lie in [0, 1), got " + std::to_string(slope));
  }
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] >= T{0} ? xv[i] : slope * xv[i];
  if (!tape.requires_grad(x)) return tape.emit(std::move(y), false, nullptr);
  auto back = [x, slope](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    const Tensor<T>& xval = t.value(x);
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < xval.numel(); ++i) {
      gx[i] += xval[i] >= T{0} ? g[i] : slope * g[i];
    }
  };
  return tape.emit(std::move(y), true, back);
}

// tanh with outputs kept strictly inside (-1, 1): std::tanh saturates to
// exactly +-1 in finite precision, which would break consumers that rely
// on the open interval, so saturated values are nudged one ulp inward.
template <typename T>
Var tanh_op(Tape<T>& tape, Var x) {
  const T hi = std::nextafter(T{1}, T{0});
  const T lo = std::nextafter(T{-1}, T{0});
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) {
    T v = std::tanh(xv[i]);
    if (v >= T{1}) v = hi;
    if (v <= T{-1}) v = lo;
    y[i] = v;
  }
  if (!tape.requires_grad(x)) return tape.emit(std::move(y), false, nullptr);
  auto back = [x](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    const Tensor<T>& yv = t.value(Var{self});
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < yv.numel(); ++i) gx[i] += g[i] * (T{1} - yv[i] * yv[i]);
  };
  return tape.emit(std::move(y), true, back);
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (!av.same_shape(bv)) {
    throw ContractError("add shape mismatch: " + shape_string(av.shape()) + " vs " +
                        shape_string(bv.shape()));
  }
  Tensor<T> y(av.shape());
  for (std::int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] + bv[i];
  const bool grad = tape.requires_grad(a) || tape.requires_grad(b);
  if (!grad) return tape.emit(std::move(y), false, nullptr);
  auto back = [a, b](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad_buffer(a);
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad_buffer(b);
      for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  };
  return tape.emit(std::move(y), true, back);
}

// Nearest-neighbour upsampling by a factor of two in both spatial axes.
template <typename T>
Var upsample_nearest2x(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  detail::check_rank4(xv.shape(), "upsample_nearest2x input");
  const std::int64_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> y({batch, ch, 2 * h, 2 * w});
  for (std::int64_t bc = 0; bc < batch * ch; ++bc) {
    const T* src = xv.data() + bc * h * w;
    T* dst = y.data() + bc * 4 * h * w;
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        T v = src[i * w + j];
        T* d = dst + 2 * i * 2 * w + 2 * j;
        d[0] = v;
        d[1] = v;
        d[2 * w] = v;
        d[2 * w + 1] = v;
      }
    }
  }
  if (!tape.requires_grad(x)) return tape.emit(std::move(y), false, nullptr);
  auto back = [x, batch, ch, h, w](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::int64_t bc = 0; bc < batch * ch; ++bc) {
      const T* src = g.data() + bc * 4 * h * w;
      T* dst = gx.data() + bc * h * w;
      for (std::int64_t i = 0; i < h; ++i) {
        for (std::int64_t j = 0; j < w; ++j) {
          const T* s = src + 2 * i * 2 * w + 2 * j;
          dst[i * w + j] += s[0] + s[1] + s[2 * w] + s[2 * w + 1];
        }
      }
    }
  };
  return tape.emit(std::move(y), true, back);
}

// Sum of all elements, as a scalar.
template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T s{0};
  for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  if (!tape.requires_grad(x)) return tape.emit(Tensor<T>::scalar(s), false, nullptr);
  auto back = [x](Tape<T>& t, std::int32_t self) {
    const T g = t.grad_buffer(Var{self})[0];
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  };
  return tape.emit(Tensor<T>::scalar(s), true, back);
}

// Sum of absolute values, as a scalar. Subgradient 0 at exact zeros.
template <typename T>
Var l1_sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T s{0};
  for (std::int64_t i = 0; i < xv.numel(); ++i) s += std::abs(xv[i]);
  if (!tape.requires_grad(x)) return tape.emit(Tensor<T>::scalar(s), false, nullptr);
  auto back = [x](Tape<T>& t, std::int32_t self) {
    const T g = t.grad_buffer(Var{self})[0];
    const Tensor<T>& xval = t.value(x);
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < xval.numel(); ++i) {
      if (xval[i] > T{0}) gx[i] += g;
      else if (xval[i] < T{0}) gx[i] -= g;
    }
  };
  return tape.emit(Tensor<T>::scalar(s), true, back);
}

// Dot product with a constant weight tensor, as a scalar. Used to reduce
// arbitrary outputs to a scalar for gradient checking.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, Tensor<T> weights) {
  const Tensor<T>& xv = tape.value(x);
  if (!xv.same_shape(weights)) {
    throw ContractError("weighted_sum shape mismatch: " + shape_string(xv.shape()) + " vs " +
                        shape_string(weights.shape()));
  }
  T s{0};
  for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i] * weights[i];
  if (!tape.requires_grad(x)) return tape.emit(Tensor<T>::scalar(s), false, nullptr);
  auto back = [x, weights = std::move(weights)](Tape<T>& t, std::int32_t self) {
    const T g = t.grad_buffer(Var{self})[0];
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g * weights[i];
  };
  return tape.emit(Tensor<T>::scalar(s), true, back);
}

}  // namespace tar
