#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tar/ops.hpp"
#include "tar/tape.hpp"

namespace {

using tar::BnMode;
using tar::BnStats;
using tar::Rng;
using tar::Tape;
using tar::Tensor;
using tar::Var;

// Direct-summation convolution, deliberately naive: walks every output
// position and kernel tap with explicit bounds checks. This is the
// reference the fast im2col/GEMM path is judged against.
template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& x, const Tensor<T>& w, const std::vector<T>& bias,
                           std::int64_t stride, std::int64_t pad) {
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t F = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::int64_t HO = (H + 2 * pad - KH) / stride + 1;
  const std::int64_t WO = (W + 2 * pad - KW) / stride + 1;
  Tensor<T> y({B, F, HO, WO});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t f = 0; f < F; ++f)
      for (std::int64_t oh = 0; oh < HO; ++oh)
        for (std::int64_t ow = 0; ow < WO; ++ow) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[static_cast<std::size_t>(f)]);
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t kh = 0; kh < KH; ++kh)
              for (std::int64_t kw = 0; kw < KW; ++kw) {
                const std::int64_t ih = oh * stride - pad + kh;
                const std::int64_t iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += static_cast<double>(x(b, c, ih, iw)) * static_cast<double>(w(f, c, kh, kw));
              }
          y(b, f, oh, ow) = static_cast<T>(acc);
        }
  return y;
}

TEST(Conv2d, MatchesDirectSummationOracle) {
  Rng rng(11);
  for (auto [stride, pad] : std::vector<std::pair<std::int64_t, std::int64_t>>{
           {1, 0}, {1, 1}, {2, 1}, {2, 0}, {3, 2}}) {
    auto x = tar::random_uniform<double>({2, 3, 9, 8}, rng);
    auto w = tar::random_uniform<double>({4, 3, 3, 3}, rng);
    std::vector<double> bias{0.1, -0.2, 0.3, 0.0};

    Tape<double> tape;
    Var xv = tape.leaf(x);
    Var wv = tape.leaf(w);
    Var bv = tape.leaf(Tensor<double>({4}, bias));
    Var y = tar::conv2d(tape, xv, wv, bv, stride, pad);

    Tensor<double> want = conv2d_reference(x, w, bias, stride, pad);
    ASSERT_EQ(tape.value(y).shape(), want.shape()) << "stride " << stride << " pad " << pad;
    for (std::int64_t i = 0; i < want.numel(); ++i) {
      EXPECT_NEAR(tape.value(y)[i], want[i], 1e-6) << "stride " << stride << " pad " << pad;
    }
  }
}

TEST(Conv2d, IdentityKernelPassesThrough) {
  // 1x1 kernel with weight 1 on a single channel is the identity map.
  Rng rng(5);
  auto x = tar::random_uniform<float>({1, 1, 6, 6}, rng);
  Tape<float> tape;
  Var y = tar::conv2d(tape, tape.leaf(x), tape.leaf(Tensor<float>({1, 1, 1, 1}, {1.0f})), Var{});
  EXPECT_TRUE(tape.value(y) == x);
}

TEST(Conv2d, ChannelMismatchNamesBothShapes) {
  Tape<float> tape;
  Var x = tape.leaf(Tensor<float>({1, 3, 4, 4}));
  Var w = tape.leaf(Tensor<float>({2, 4, 3, 3}));
  try {
    tar::conv2d(tape, x, w, Var{}, 1, 1);
    FAIL() << "expected ContractError";
  } catch (const tar::ContractError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1, 3, 4, 4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 4, 3, 3]"), std::string::npos) << msg;
  }
}

TEST(Conv2d, KernelLargerThanPaddedInputRejected) {
  Tape<float> tape;
  Var x = tape.leaf(Tensor<float>({1, 1, 2, 2}));
  Var w = tape.leaf(Tensor<float>({1, 1, 5, 5}));
  EXPECT_THROW(tar::conv2d(tape, x, w, Var{}, 1, 1), tar::ContractError);
  // With enough padding the same kernel fits.
  EXPECT_NO_THROW(tar::conv2d(tape, x, w, Var{}, 1, 2));
}

TEST(Conv2d, ThreadCountDoesNotChangeValues) {
  Rng rng(17);
  auto x = tar::random_uniform<float>({5, 3, 12, 12}, rng);
  auto w = tar::random_uniform<float>({6, 3, 3, 3}, rng);
  Tape<float> t1;
  Var y1 = tar::conv2d(t1, t1.leaf(x), t1.leaf(w), Var{}, 1, 1);
  tar::set_num_threads(3);
  Tape<float> t2;
  Var y2 = tar::conv2d(t2, t2.leaf(x), t2.leaf(w), Var{}, 1, 1);
  tar::set_num_threads(1);
  EXPECT_TRUE(t1.value(y1) == t2.value(y2));
}

// Two-pass mean/variance reference for batchnorm.
template <typename T>
Tensor<T> batchnorm_reference(const Tensor<T>& x, const std::vector<T>& gamma,
                              const std::vector<T>& beta, double eps) {
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double n = static_cast<double>(B * H * W);
  Tensor<T> y(x.shape());
  for (std::int64_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t i = 0; i < H; ++i)
        for (std::int64_t j = 0; j < W; ++j) mean += static_cast<double>(x(b, c, i, j));
    mean /= n;
    double var = 0.0;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t i = 0; i < H; ++i)
        for (std::int64_t j = 0; j < W; ++j) {
          const double d = static_cast<double>(x(b, c, i, j)) - mean;
          var += d * d;
        }
    var /= n;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t i = 0; i < H; ++i)
        for (std::int64_t j = 0; j < W; ++j) {
          const double xh = (static_cast<double>(x(b, c, i, j)) - mean) / std::sqrt(var + eps);
          y(b, c, i, j) = static_cast<T>(
              static_cast<double>(gamma[static_cast<std::size_t>(c)]) * xh +
              static_cast<double>(beta[static_cast<std::size_t>(c)]));
        }
  }
  return y;
}

TEST(BatchNorm, TrainModeMatchesTwoPassOracle) {
  Rng rng(23);
  auto x = tar::random_uniform<double>({3, 4, 5, 5}, rng, -2.0, 2.0);
  std::vector<double> gamma{1.0, 0.5, 2.0, 1.5}, beta{0.0, 0.1, -0.2, 0.3};
  auto stats = BnStats<double>::fresh(4);

  Tape<double> tape;
  Var y = tar::batchnorm2d(tape, tape.leaf(x), tape.leaf(Tensor<double>({4}, gamma)),
                           tape.leaf(Tensor<double>({4}, beta)), stats, BnMode::train, 1e-5, 0.1);
  Tensor<double> want = batchnorm_reference(x, gamma, beta, 1e-5);
  for (std::int64_t i = 0; i < want.numel(); ++i) {
    EXPECT_NEAR(tape.value(y)[i], want[i], 1e-6);
  }
}

TEST(BatchNorm, NormalizedBatchHasZeroMeanUnitVariance) {
  Rng rng(29);
  auto x = tar::random_uniform<double>({4, 2, 6, 6}, rng, -3.0, 1.0);
  auto stats = BnStats<double>::fresh(2);
  Tape<double> tape;
  Var y = tar::batchnorm2d(tape, tape.leaf(x), tape.leaf(Tensor<double>::ones({2})),
                           tape.leaf(Tensor<double>({2})), stats, BnMode::train);
  const auto& yv = tape.value(y);
  for (std::int64_t c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::int64_t b = 0; b < 4; ++b)
      for (std::int64_t i = 0; i < 6; ++i)
        for (std::int64_t j = 0; j < 6; ++j) mean += yv(b, c, i, j);
    mean /= 4 * 36;
    for (std::int64_t b = 0; b < 4; ++b)
      for (std::int64_t i = 0; i < 6; ++i)
        for (std::int64_t j = 0; j < 6; ++j) {
          var += (yv(b, c, i, j) - mean) * (yv(b, c, i, j) - mean);
        }
    var /= 4 * 36;
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-4);  // eps shaves a little off exact unity
  }
}

TEST(BatchNorm, RunningStatsBlendWithMomentum) {
  // One channel, constant input 3: batch mean 3, biased variance 0. With
  // momentum 0.1 from fresh stats (mean 0, var 1): mean -> 0.3; the
  // variance blend uses the unbiased estimate (still 0 here) -> 0.9.
  Tensor<double> x({2, 1, 2, 2});
  x.fill(3.0);
  auto stats = BnStats<double>::fresh(1);
  Tape<double> tape;
  tar::batchnorm2d(tape, tape.leaf(x), tape.leaf(Tensor<double>::ones({1})),
                   tape.leaf(Tensor<double>({1})), stats, BnMode::train, 1e-5, 0.1);
  EXPECT_NEAR(stats.mean[0], 0.3, 1e-12);
  EXPECT_NEAR(stats.var[0], 0.9, 1e-12);
}

TEST(BatchNorm, InferModeUsesRunningStatsAndLeavesThemAlone) {
  Rng rng(31);
  auto x = tar::random_uniform<double>({2, 1, 3, 3}, rng);
  BnStats<double> stats;
  stats.mean = Tensor<double>({1}, {0.5});
  stats.var = Tensor<double>({1}, {4.0});
  Tape<double> tape;
  Var y = tar::batchnorm2d(tape, tape.leaf(x), tape.leaf(Tensor<double>({1}, {2.0})),
                           tape.leaf(Tensor<double>({1}, {1.0})), stats, BnMode::infer);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double want = 2.0 * (x[i] - 0.5) / std::sqrt(4.0 + 1e-5) + 1.0;
    EXPECT_NEAR(tape.value(y)[i], want, 1e-9);
  }
  EXPECT_EQ(stats.mean[0], 0.5);
  EXPECT_EQ(stats.var[0], 4.0);
}

TEST(BatchNorm, SingleElementPerChannelRejectedInTrainMode) {
  Tape<float> tape;
  Var x = tape.leaf(Tensor<float>({1, 3, 1, 1}));
  auto stats = BnStats<float>::fresh(3);
  EXPECT_THROW(tar::batchnorm2d(tape, x, tape.leaf(Tensor<float>::ones({3})),
                                tape.leaf(Tensor<float>({3})), stats, BnMode::train),
               tar::ContractError);
  // The same shape is fine in inference mode.
  EXPECT_NO_THROW(tar::batchnorm2d(tape, x, tape.leaf(Tensor<float>::ones({3})),
                                   tape.leaf(Tensor<float>({3})), stats, BnMode::infer));
}

TEST(Activations, ReluAndLeakyValues) {
  Tensor<float> x({5}, {-2.0f, -0.5f, 0.0f, 0.5f, 2.0f});
  Tape<float> tape;
  Var xv = tape.leaf(x);
  const auto& r = tape.value(tar::relu(tape, xv));
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 0.0f);
  EXPECT_EQ(r[2], 0.0f);
  EXPECT_EQ(r[3], 0.5f);
  const auto& l = tape.value(tar::leaky_relu(tape, xv, 0.01f));
  EXPECT_FLOAT_EQ(l[0], -0.02f);
  EXPECT_EQ(l[3], 0.5f);
  // Leaky maps zero to zero and nothing else to zero.
  for (std::int64_t i = 0; i < 5; ++i) EXPECT_EQ(l[i] == 0.0f, x[i] == 0.0f);
}

TEST(Activations, LeakySlopeOutsideUnitIntervalRejected) {
  Tape<float> tape;
  Var x = tape.leaf(Tensor<float>({1}));
  EXPECT_THROW(tar::leaky_relu(tape, x, -0.1f), tar::ConfigError);
  EXPECT_THROW(tar::leaky_relu(tape, x, 1.0f), tar::ConfigError);
}

TEST(Activations, TanhStaysStrictlyInsideUnitInterval) {
  // Large magnitudes saturate std::tanh to exactly 1 in float; the op
  // must keep outputs strictly inside the open interval.
  Tensor<float> x({4}, {-100.0f, -0.3f, 0.3f, 100.0f});
  Tape<float> tape;
  const auto& y = tape.value(tar::tanh_op(tape, tape.leaf(x)));
  for (std::int64_t i = 0; i < 4; ++i) {
    EXPECT_LT(y[i], 1.0f);
    EXPECT_GT(y[i], -1.0f);
  }
  EXPECT_NEAR(y[1], std::tanh(-0.3f), 1e-7);
}

TEST(Add, RequiresIdenticalShapes) {
  Tape<float> tape;
  Var a = tape.leaf(Tensor<float>({2, 3}));
  Var b = tape.leaf(Tensor<float>({3, 2}));
  EXPECT_THROW(tar::add(tape, a, b), tar::ContractError);
}

TEST(Upsample, NearestDoublesEveryPixel) {
  Tensor<float> x({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  Tape<float> tape;
  const auto& y = tape.value(tar::upsample_nearest2x(tape, tape.leaf(x)));
  ASSERT_EQ(y.shape(), (tar::Shape{1, 1, 4, 4}));
  const float want[4][4] = {{1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}};
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) EXPECT_EQ(y(0, 0, i, j), want[i][j]);
}

TEST(Reductions, SumAndL1) {
  Tensor<double> x({4}, {1.0, -2.0, 3.0, -4.0});
  Tape<double> tape;
  Var xv = tape.leaf(x);
  EXPECT_EQ(tape.value(tar::sum(tape, xv))[0], -2.0);
  EXPECT_EQ(tape.value(tar::l1_sum(tape, xv))[0], 10.0);
  Tensor<double> w({4}, {1.0, 1.0, 0.0, 2.0});
  EXPECT_EQ(tape.value(tar::weighted_sum(tape, xv, w))[0], 1.0 - 2.0 - 8.0);
}

}  // namespace
