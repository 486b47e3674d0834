#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tar/model.hpp"
#include "tar/optimizer.hpp"

namespace tar {

// TARC checkpoint files: "TARC" magic, a version word, the architecture
// block, every parameter tensor, the batchnorm running statistics, an
// optional optimizer-moment section, and a trailing CRC-32 over all
// preceding bytes. All integers are little-endian; tensor payloads are
// float32 regardless of the in-memory precision.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint32_t crc32_bytes(const unsigned char* data, std::size_t size) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) {
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32_bytes(const std::string& bytes) {
  return crc32_bytes(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void bytes(const std::string& s) { out_.append(s); }
  void name(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  template <typename T>
  void tensor_payload(const Tensor<T>& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i) f32(static_cast<float>(t[i]));
  }

  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(path_ + ": " + msg + " at byte " + std::to_string(pos_));
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const unsigned char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const unsigned char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string name() {
    const std::uint32_t len = u32();
    if (len > 4096) fail("implausible name length " + std::to_string(len));
    const unsigned char* p = take(len);
    return std::string(reinterpret_cast<const char*>(p), len);
  }
  std::string magic4() {
    const unsigned char* p = take(4);
    return std::string(reinterpret_cast<const char*>(p), 4);
  }
  template <typename T>
  void tensor_payload(Tensor<T>& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(f32());
  }

 private:
  const unsigned char* take(std::size_t n) {
    if (remaining() < n) {
      fail("truncated: need " + std::to_string(n) + " more bytes, have " +
           std::to_string(remaining()));
    }
    const unsigned char* p = reinterpret_cast<const unsigned char*>(data_.data()) + pos_;
    pos_ += n;
    return p;
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline void write_arch(ByteWriter& w, const ArchConfig& c, Variant variant) {
  w.i64(c.input_size);
  w.i64(c.input_channels);
  for (std::int64_t ch : c.stage_channels) w.i64(ch);
  w.i64(c.repeats);
  w.i64(c.latent_half_channels);
  w.i64(c.kernel);
  w.f64(c.leaky_slope);
  w.f64(c.bn_eps);
  w.f64(c.bn_momentum);
  w.u32(static_cast<std::uint32_t>(variant));
}

inline void read_arch(ByteReader& r, ArchConfig& c, Variant& variant) {
  c.input_size = r.i64();
  c.input_channels = r.i64();
  for (std::int64_t& ch : c.stage_channels) ch = r.i64();
  c.repeats = r.i64();
  c.latent_half_channels = r.i64();
  c.kernel = r.i64();
  c.leaky_slope = r.f64();
  c.bn_eps = r.f64();
  c.bn_momentum = r.f64();
  const std::uint32_t v = r.u32();
  if (v > 2) r.fail("unknown variant code " + std::to_string(v));
  variant = static_cast<Variant>(v);
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

template <typename T>
struct LoadedCheckpoint {
  TarModel<T> model;
  bool has_moments = false;
  std::int64_t optimizer_steps = 0;
  std::map<std::string, typename Optimizer<T>::Moments> moments;
};

// Serializes model weights and batchnorm statistics, optionally with
// optimizer moments so training can resume exactly. The file is written
// to a temp path and renamed, so readers never observe a half-written
// checkpoint.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const TarModel<T>& model,
                     const Optimizer<T>* optimizer = nullptr) {
  detail::ByteWriter w;
  w.bytes("TARC");
  w.u32(kCheckpointVersion);
  detail::write_arch(w, model.config, model.variant);

  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [name, slot] : model.params) {
    w.name(name);
    w.u32(static_cast<std::uint32_t>(slot.value.rank()));
    for (int d = 0; d < slot.value.rank(); ++d) {
      w.u32(static_cast<std::uint32_t>(slot.value.dim(d)));
    }
    w.tensor_payload(slot.value);
  }

  w.u32(static_cast<std::uint32_t>(model.bn_stats.size()));
  for (const auto& [name, stats] : model.bn_stats) {
    w.name(name);
    w.u32(static_cast<std::uint32_t>(stats.mean.numel()));
    w.tensor_payload(stats.mean);
    w.tensor_payload(stats.var);
  }

  if (optimizer && !optimizer->moments().empty()) {
    w.u8(1);
    w.u64(static_cast<std::uint64_t>(optimizer->steps_taken()));
    w.u32(static_cast<std::uint32_t>(optimizer->moments().size()));
    for (const auto& [name, mom] : optimizer->moments()) {
      w.name(name);
      w.tensor_payload(mom.m);
      w.tensor_payload(mom.v);
    }
  } else {
    w.u8(0);
  }

  detail::ByteWriter trailer;
  trailer.u32(detail::crc32_bytes(w.str()));
  detail::write_file_atomic(path, w.str() + trailer.str());
}

template <typename T = float>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::string bytes = detail::read_file_bytes(path);
  if (bytes.size() < 12) {
    throw FormatError(path.string() + ": too small to be a checkpoint (" +
                      std::to_string(bytes.size()) + " bytes)");
  }
  if (bytes.compare(0, 4, "TARC") != 0) {
    throw FormatError(path.string() + ": not a TARC checkpoint");
  }
  const std::string body = bytes.substr(0, bytes.size() - 4);
  {
    detail::ByteReader tail(bytes.substr(bytes.size() - 4), path.string());
    const std::uint32_t stored = tail.u32();
    const std::uint32_t actual = detail::crc32_bytes(body);
    if (stored != actual) {
      throw FormatError(path.string() + ": checksum mismatch, file is corrupt (stored " +
                        std::to_string(stored) + ", computed " + std::to_string(actual) + ")");
    }
  }

  detail::ByteReader r(body, path.string());
  r.magic4();
  const std::uint32_t version = r.u32();
  if (version > kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint version " + std::to_string(version) +
                      " is newer than supported version " + std::to_string(kCheckpointVersion));
  }

  ArchConfig config;
  Variant variant = Variant::full;
  detail::read_arch(r, config, variant);
  config.validate();

  // Build the skeleton for this architecture, then overwrite every value
  // from the file. Anything missing or extra is a mismatch worth failing
  // on: the architecture block fully determines the parameter set.
  LoadedCheckpoint<T> out;
  out.model = build_model<T>(config, 0, variant);

  const std::uint32_t param_count = r.u32();
  if (param_count != out.model.params.size()) {
    r.fail("parameter count " + std::to_string(param_count) + " does not match architecture (" +
           std::to_string(out.model.params.size()) + ")");
  }
  for (std::uint32_t i = 0; i < param_count; ++i) {
    const std::string name = r.name();
    if (!out.model.params.contains(name)) r.fail("unknown parameter '" + name + "'");
    auto& slot = out.model.params.at(name);
    const int rank = static_cast<int>(r.u32());
    if (rank != slot.value.rank()) {
      r.fail("parameter '" + name + "' rank " + std::to_string(rank) + ", expected " +
             std::to_string(slot.value.rank()));
    }
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t extent = r.u32();
      if (static_cast<std::int64_t>(extent) != slot.value.dim(d)) {
        r.fail("parameter '" + name + "' extent " + std::to_string(extent) + " at axis " +
               std::to_string(d) + ", expected " + std::to_string(slot.value.dim(d)));
      }
    }
    r.tensor_payload(slot.value);
  }

  const std::uint32_t stats_count = r.u32();
  if (stats_count != out.model.bn_stats.size()) {
    r.fail("batchnorm stats count " + std::to_string(stats_count) +
           " does not match architecture (" + std::to_string(out.model.bn_stats.size()) + ")");
  }
  for (std::uint32_t i = 0; i < stats_count; ++i) {
    const std::string name = r.name();
    const auto it = out.model.bn_stats.find(name);
    if (it == out.model.bn_stats.end()) r.fail("unknown batchnorm layer '" + name + "'");
    const std::uint32_t channels = r.u32();
    if (static_cast<std::int64_t>(channels) != it->second.mean.numel()) {
      r.fail("batchnorm '" + name + "' has " + std::to_string(channels) + " channels, expected " +
             std::to_string(it->second.mean.numel()));
    }
    r.tensor_payload(it->second.mean);
    r.tensor_payload(it->second.var);
  }

  out.has_moments = r.u8() != 0;
  if (out.has_moments) {
    out.optimizer_steps = static_cast<std::int64_t>(r.u64());
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = r.name();
      if (!out.model.params.contains(name)) r.fail("moments for unknown parameter '" + name + "'");
      const auto& shape = out.model.params.at(name).value.shape();
      typename Optimizer<T>::Moments mom{Tensor<T>(shape), Tensor<T>(shape)};
      r.tensor_payload(mom.m);
      r.tensor_payload(mom.v);
      out.moments.emplace(name, std::move(mom));
    }
  }
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

}  // namespace tar
