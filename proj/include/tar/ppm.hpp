#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tar/tensor.hpp"

namespace tar {

// Binary P6 image I/O. Pixel tensors are [3,H,W] in [-1,1]; files store
// 8-bit RGB. The linear quantization maps -1 to 0 and +1 to 255, so a
// round trip moves a channel by at most 1/255.

namespace detail {

class PpmParser {
 public:
  explicit PpmParser(std::vector<unsigned char> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what + " at byte " + std::to_string(pos_));
  }

  void expect_magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') fail("not a P6 file");
    pos_ = 2;
  }

  // Whitespace and '#' comments separate header tokens.
  void skip_separators() {
    while (pos_ < bytes_.size()) {
      const unsigned char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::int64_t read_int(const char* what) {
    skip_separators();
    if (pos_ >= bytes_.size() || bytes_[pos_] < '0' || bytes_[pos_] > '9') {
      fail(std::string("expected ") + what);
    }
    std::int64_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) fail(std::string(what) + " out of range");
      ++pos_;
    }
    return value;
  }

  // Exactly one whitespace byte separates the maxval from the payload.
  void consume_payload_separator() {
    if (pos_ >= bytes_.size()) fail("missing payload separator");
    const unsigned char c = bytes_[pos_];
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n') fail("missing payload separator");
    ++pos_;
  }

  const unsigned char* payload(std::size_t need) {
    if (bytes_.size() - pos_ < need) {
      throw FormatError(path_ + ": payload truncated, need " + std::to_string(need) +
                        " bytes but only " + std::to_string(bytes_.size() - pos_) +
                        " remain at byte " + std::to_string(pos_));
    }
    return bytes_.data() + pos_;
  }

 private:
  std::vector<unsigned char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::uint8_t quantize_channel(float v) {
  const float mapped = (v + 1.0f) * 0.5f * 255.0f;
  const long q = std::lround(mapped);
  return static_cast<std::uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

inline float dequantize_channel(std::uint8_t q) {
  return static_cast<float>(q) / 255.0f * 2.0f - 1.0f;
}

inline void save_ppm(const Tensor<float>& img, const std::string& path) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ContractError("save_ppm expects a [3,H,W] tensor, got " + shape_string(img.shape()));
  }
  const std::int64_t h = img.dim(1);
  const std::int64_t w = img.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        row[static_cast<std::size_t>(x * 3 + c)] = quantize_channel(img(c, y, x));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw FormatError(path + ": write failed");
}

inline Tensor<float> load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  detail::PpmParser parser(std::move(bytes), path);
  parser.expect_magic();
  const std::int64_t w = parser.read_int("width");
  const std::int64_t h = parser.read_int("height");
  const std::int64_t maxval = parser.read_int("maxval");
  if (w <= 0 || h <= 0) parser.fail("non-positive dimensions");
  if (maxval != 255) parser.fail("unsupported maxval " + std::to_string(maxval));
  parser.consume_payload_separator();
  const unsigned char* data = parser.payload(static_cast<std::size_t>(w) * h * 3);

  Tensor<float> img({3, h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        img(c, y, x) = dequantize_channel(data[(y * w + x) * 3 + c]);
      }
    }
  }
  return img;
}

}  // namespace tar
