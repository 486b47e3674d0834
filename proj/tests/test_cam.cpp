#include "tar/cam.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace {

TEST(CamReduce, HandComputedOracle) {
  // Two channels over a 2x2 grid; cell means |.| are {1, 2, 3, 4}.
  tar::Tensor<double> captured({1, 2, 2, 2});
  const double ch0[] = {2.0, -1.0, 4.0, 0.0};
  const double ch1[] = {0.0, -3.0, 2.0, 8.0};
  for (int i = 0; i < 4; ++i) {
    captured[i] = ch0[i];
    captured[4 + i] = ch1[i];
  }
  const auto map = tar::cam_reduce_normalize(captured);
  ASSERT_EQ(map.shape(), (tar::Shape{2, 2}));
  // min 1, max 4: expected (v - 1) / 3 up to the 1e-12 regularizer.
  EXPECT_NEAR(map[0], 0.0, 1e-9);
  EXPECT_NEAR(map[1], 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(map[2], 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(map[3], 1.0, 1e-9);
}

TEST(CamReduce, InvariantToActivationScale) {
  tar::Rng rng(44);
  const auto captured = tar::random_uniform<double>({1, 3, 4, 4}, rng, -2.0, 2.0);
  tar::Tensor<double> scaled = captured;
  for (std::int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= 137.0;
  const auto a = tar::cam_reduce_normalize(captured);
  const auto b = tar::cam_reduce_normalize(scaled);
  for (std::int64_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(CamReduce, ConstantMapNormalizesToZero) {
  const auto captured = tar::Tensor<float>::full({1, 4, 3, 3}, 0.7f);
  const auto map = tar::cam_reduce_normalize(captured);
  for (std::int64_t i = 0; i < map.numel(); ++i) EXPECT_EQ(map[i], 0.0f);
}

TEST(CamReduce, RejectsBatchedCaptures) {
  EXPECT_THROW(tar::cam_reduce_normalize(tar::Tensor<float>({2, 1, 2, 2})), tar::ContractError);
  EXPECT_THROW(tar::cam_reduce_normalize(tar::Tensor<float>({1, 2, 2})), tar::ContractError);
}

TEST(CamUpsample, RepeatsNearestBlocks) {
  tar::Tensor<float> map({2, 2});
  map(0, 0) = 1.0f;
  map(0, 1) = 2.0f;
  map(1, 0) = 3.0f;
  map(1, 1) = 4.0f;
  const auto up = tar::upsample_nearest_to(map, 4);
  ASSERT_EQ(up.shape(), (tar::Shape{4, 4}));
  EXPECT_EQ(up(0, 0), 1.0f);
  EXPECT_EQ(up(0, 1), 1.0f);
  EXPECT_EQ(up(1, 1), 1.0f);
  EXPECT_EQ(up(0, 2), 2.0f);
  EXPECT_EQ(up(3, 0), 3.0f);
  EXPECT_EQ(up(3, 3), 4.0f);
  EXPECT_THROW(tar::upsample_nearest_to(map, 5), tar::ContractError);
  EXPECT_THROW(tar::upsample_nearest_to(tar::Tensor<float>({2, 3}), 6), tar::ContractError);
}

TEST(CamMap, ProducesNormalizedInputSizedMaps) {
  const auto model = tar::build_model<float>(tar::ArchConfig::micro(), 8);
  const auto sample = tar::gen_real(17, 1, 16).front();
  for (const std::string& layer : tar::cam_layer_names()) {
    const auto map = tar::cam_map(model, sample.pixels, layer);
    ASSERT_EQ(map.shape(), (tar::Shape{16, 16})) << layer;
    float lo = 1.0f, hi = 0.0f;
    for (std::int64_t i = 0; i < map.numel(); ++i) {
      EXPECT_GE(map[i], 0.0f);
      EXPECT_LE(map[i], 1.0f);
      lo = std::min(lo, map[i]);
      hi = std::max(hi, map[i]);
    }
    // Min-max normalization pins the endpoints (up to the regularizer).
    EXPECT_NEAR(lo, 0.0f, 1e-6f) << layer;
    EXPECT_NEAR(hi, 1.0f, 1e-4f) << layer;
  }
  const auto a = tar::cam_map(model, sample.pixels);
  const auto b = tar::cam_map(model, sample.pixels, "dec.s0");
  for (std::int64_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(CamMap, UnknownLayerListsValidNames) {
  const auto model = tar::build_model<float>(tar::ArchConfig::micro(), 8);
  const auto sample = tar::gen_real(17, 1, 16).front();
  try {
    tar::cam_map(model, sample.pixels, "enc.s0");
    FAIL() << "expected ConfigError";
  } catch (const tar::ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("enc.s0"), std::string::npos);
    EXPECT_NE(msg.find("dec.s0"), std::string::npos);
    EXPECT_NE(msg.find("dec.s3"), std::string::npos);
  }
  EXPECT_THROW(tar::cam_map(model, tar::Tensor<float>({3, 8, 8})), tar::ContractError);
}

TEST(Colormap, HitsAllThreeAnchors) {
  const auto blue = tar::cam_colormap(0.0);
  EXPECT_EQ(blue[0], 0.0);
  EXPECT_EQ(blue[1], 0.0);
  EXPECT_EQ(blue[2], 1.0);
  const auto yellow = tar::cam_colormap(0.5);
  EXPECT_EQ(yellow[0], 1.0);
  EXPECT_EQ(yellow[1], 1.0);
  EXPECT_EQ(yellow[2], 0.0);
  const auto red = tar::cam_colormap(1.0);
  EXPECT_EQ(red[0], 1.0);
  EXPECT_EQ(red[1], 0.0);
  EXPECT_EQ(red[2], 0.0);
  const auto mid = tar::cam_colormap(0.25);
  EXPECT_DOUBLE_EQ(mid[0], 0.5);
  EXPECT_DOUBLE_EQ(mid[1], 0.5);
  EXPECT_DOUBLE_EQ(mid[2], 0.5);
  const auto clamped = tar::cam_colormap(-3.0);
  EXPECT_EQ(clamped[2], 1.0);
}

TEST(Overlay, BlendsByAlpha) {
  tar::Tensor<float> image({3, 2, 2});
  for (std::int64_t i = 0; i < image.numel(); ++i) image[i] = 0.2f;
  tar::Tensor<float> heat({2, 2});
  heat[0] = 0.0f;
  heat[1] = 0.5f;
  heat[2] = 1.0f;
  heat[3] = 0.25f;

  const auto untouched = tar::cam_overlay(image, heat, 0.0);
  for (std::int64_t i = 0; i < image.numel(); ++i) EXPECT_EQ(untouched[i], image[i]);

  const auto pure = tar::cam_overlay(image, heat, 1.0);
  // heat 0 -> blue (0,0,1) -> (-1,-1,1) in pixel space.
  EXPECT_EQ(pure[0], -1.0f);
  EXPECT_EQ(pure[4], -1.0f);
  EXPECT_EQ(pure[8], 1.0f);
  // heat 1 -> red.
  EXPECT_EQ(pure[2], 1.0f);
  EXPECT_EQ(pure[6], -1.0f);
  EXPECT_EQ(pure[10], -1.0f);

  const auto half = tar::cam_overlay(image, heat, 0.5);
  // Pixel 0, red channel: 0.5 * 0.2 + 0.5 * (-1).
  EXPECT_NEAR(half[0], -0.4f, 1e-6f);
}

TEST(Overlay, ValidatesAlphaAndShapes) {
  const tar::Tensor<float> image({3, 4, 4});
  const tar::Tensor<float> heat({4, 4});
  EXPECT_THROW(tar::cam_overlay(image, heat, 1.5), tar::ConfigError);
  EXPECT_THROW(tar::cam_overlay(image, heat, -0.1), tar::ConfigError);
  EXPECT_THROW(tar::cam_overlay(image, tar::Tensor<float>({2, 2}), 0.5), tar::ContractError);
  EXPECT_THROW(tar::cam_overlay(tar::Tensor<float>({1, 4, 4}), heat, 0.5), tar::ContractError);
}

}  // namespace
