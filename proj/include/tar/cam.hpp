#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "tar/model.hpp"

namespace tar {

// Class-activation heatmaps from decoder stage outputs. The map is the
// channel-mean absolute activation, min-max normalized and nearest-
// upsampled back to input resolution, so it shows where the decoder is
// spending reconstruction effort.

inline std::vector<std::string> cam_layer_names() {
  return {"dec.s0", "dec.s1", "dec.s2", "dec.s3"};
}

inline constexpr const char* kDefaultCamLayer = "dec.s0";

// [1,C,h,w] capture -> [h,w] mean |activation|, normalized to [0,1] via
// (v - min) / (max - min + eps). A constant map normalizes to all zeros.
template <typename T>
Tensor<T> cam_reduce_normalize(const Tensor<T>& captured) {
  if (captured.rank() != 4 || captured.dim(0) != 1) {
    throw ContractError("cam capture must be [1,C,h,w], got " + shape_string(captured.shape()));
  }
  const std::int64_t c = captured.dim(1);
  const std::int64_t h = captured.dim(2);
  const std::int64_t w = captured.dim(3);
  Tensor<T> map({h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double total = 0.0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        total += std::abs(static_cast<double>(captured[(ch * h + y) * w + x]));
      }
      map(y, x) = static_cast<T>(total / static_cast<double>(c));
    }
  }
  T lo = map[0], hi = map[0];
  for (std::int64_t i = 0; i < map.numel(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  const T denom = hi - lo + static_cast<T>(1e-12);
  for (std::int64_t i = 0; i < map.numel(); ++i) map[i] = (map[i] - lo) / denom;
  return map;
}

template <typename T>
Tensor<T> upsample_nearest_to(const Tensor<T>& map, std::int64_t size) {
  if (map.rank() != 2) {
    throw ContractError("upsample_nearest_to expects [h,w], got " + shape_string(map.shape()));
  }
  const std::int64_t h = map.dim(0);
  if (h != map.dim(1) || size < h || size % h != 0) {
    throw ContractError("cannot nearest-upsample " + shape_string(map.shape()) + " to " +
                        std::to_string(size) + "x" + std::to_string(size));
  }
  const std::int64_t factor = size / h;
  Tensor<T> out({size, size});
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      out(y, x) = map(y / factor, x / factor);
    }
  }
  return out;
}

// Runs the inference forward on one image and extracts the heatmap of
// the requested decoder stage, returned at input resolution.
template <typename T>
Tensor<T> cam_map(const TarModel<T>& model, const Tensor<T>& image,
                  const std::string& layer = kDefaultCamLayer) {
  const std::int64_t s = model.config.input_size;
  if (image.rank() != 3 || image.dim(0) != model.config.input_channels || image.dim(1) != s ||
      image.dim(2) != s) {
    throw ContractError("cam_map expects an image [" +
                        std::to_string(model.config.input_channels) + "," + std::to_string(s) +
                        "," + std::to_string(s) + "], got " + shape_string(image.shape()));
  }
  const auto names = cam_layer_names();
  if (std::find(names.begin(), names.end(), layer) == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown cam layer '" + layer + "', valid layers: " + valid);
  }

  Tensor<T> batch({1, model.config.input_channels, s, s});
  for (std::int64_t i = 0; i < image.numel(); ++i) batch[i] = image[i];
  const Tensor<T> latent = encode_infer(model, batch);
  std::map<std::string, Tensor<T>> capture;
  decode_infer(model, latent, &capture);
  return upsample_nearest_to(cam_reduce_normalize(capture.at(layer)), s);
}

// Three-anchor colormap over [0,1]: blue through yellow to red, returned
// as rgb in [0,1].
template <typename T>
std::array<T, 3> cam_colormap(T v) {
  v = std::clamp(v, T{0}, T{1});
  if (v <= T{0.5}) {
    const T t = v * T{2};  // blue (0,0,1) -> yellow (1,1,0)
    return {t, t, T{1} - t};
  }
  const T t = (v - T{0.5}) * T{2};  // yellow (1,1,0) -> red (1,0,0)
  return {T{1}, T{1} - t, T{0}};
}

// Alpha-blends the colormapped heatmap over the image, both in the
// [-1,1] pixel convention: out = (1 - alpha) * pixel + alpha * color.
template <typename T>
Tensor<T> cam_overlay(const Tensor<T>& image, const Tensor<T>& heat, double alpha = 0.5) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("overlay alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ContractError("cam_overlay expects an image [3,S,S], got " +
                        shape_string(image.shape()));
  }
  if (heat.rank() != 2 || heat.dim(0) != image.dim(1) || heat.dim(1) != image.dim(2)) {
    throw ContractError("heatmap " + shape_string(heat.shape()) + " does not match image " +
                        shape_string(image.shape()));
  }
  const T a = static_cast<T>(alpha);
  const std::int64_t hw = heat.numel();
  Tensor<T> out(image.shape());
  for (std::int64_t i = 0; i < hw; ++i) {
    const std::array<T, 3> rgb = cam_colormap(heat[i]);
    for (std::int64_t c = 0; c < 3; ++c) {
      out[c * hw + i] = (T{1} - a) * image[c * hw + i] + a * (rgb[static_cast<std::size_t>(c)] * T{2} - T{1});
    }
  }
  return out;
}

}  // namespace tar
