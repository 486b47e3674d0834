#include <gtest/gtest.h>

#include <atomic>
#include <numeric>
#include <vector>

#include "tar/common.hpp"
#include "tar/tensor.hpp"

namespace {

using tar::Rng;
using tar::Tensor;

TEST(Tensor, ZeroInitializedAndIndexable) {
  Tensor<float> t({2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120);
  EXPECT_EQ(t.rank(), 4);
  for (std::int64_t i = 0; i < t.numel(); ++i) EXPECT_EQ(t[i], 0.0f);
  t(1, 2, 3, 4) = 7.0f;
  EXPECT_EQ(t[t.numel() - 1], 7.0f);
  t(0, 0, 0, 0) = 3.0f;
  EXPECT_EQ(t[0], 3.0f);
}

TEST(Tensor, RowMajorLayout) {
  Tensor<int> t({2, 3});
  int v = 0;
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 3; ++j) t(i, j) = v++;
  std::vector<int> expect{0, 1, 2, 3, 4, 5};
  EXPECT_EQ(t.values(), expect);
}

TEST(Tensor, RejectsNonPositiveDims) {
  EXPECT_THROW(Tensor<float>({2, 0, 3}), tar::ContractError);
  EXPECT_THROW(Tensor<float>({-1}), tar::ContractError);
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor<float>({2, 2}, {1.0f, 2.0f, 3.0f}), tar::ContractError);
}

TEST(Tensor, EqualityIsExact) {
  Tensor<float> a({3}, {1.0f, 2.0f, 3.0f});
  Tensor<float> b = a;
  EXPECT_TRUE(a == b);
  b[1] = std::nextafter(2.0f, 3.0f);
  EXPECT_FALSE(a == b);
}

TEST(Tensor, AllFiniteDetectsNan) {
  Tensor<float> t({2}, {1.0f, 2.0f});
  EXPECT_TRUE(t.all_finite());
  t[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t[0] = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42), c(43);
  bool diverged = false;
  for (int i = 0; i < 100; ++i) {
    const double av = a.uniform();
    EXPECT_EQ(av, b.uniform());
    if (av != c.uniform()) diverged = true;
    EXPECT_GE(av, 0.0);
    EXPECT_LT(av, 1.0);
  }
  EXPECT_TRUE(diverged);
}

TEST(Rng, DerivedSeedsDiffer) {
  const std::uint64_t master = 7;
  EXPECT_NE(tar::derive_seed(master, 0), tar::derive_seed(master, 1));
  EXPECT_NE(tar::derive_seed(master, 0), tar::derive_seed(master + 1, 0));
  EXPECT_EQ(tar::derive_seed(master, 5), tar::derive_seed(master, 5));
}

TEST(Rng, NormalHasSaneMoments) {
  Rng rng(1);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Rng, ShuffleIsSeededPermutation) {
  std::vector<int> base(50);
  std::iota(base.begin(), base.end(), 0);
  std::vector<int> a = base, b = base;
  Rng r1(9), r2(9);
  r1.shuffle(a);
  r2.shuffle(b);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, base);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, base);
}

TEST(Threads, ParallelForCoversRangeOnce) {
  tar::set_num_threads(4);
  std::vector<std::atomic<int>> hits(1000);
  tar::parallel_for(1000, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) hits[static_cast<std::size_t>(i)]++;
  });
  tar::set_num_threads(1);
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Threads, RejectsZeroThreads) {
  EXPECT_THROW(tar::set_num_threads(0), tar::ConfigError);
}

TEST(RandomTensors, UniformRespectsBounds) {
  Rng rng(3);
  auto t = tar::random_uniform<float>({64}, rng, -0.25, 0.25);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    EXPECT_GE(t[i], -0.25f);
    EXPECT_LE(t[i], 0.25f);
  }
}

}  // namespace
