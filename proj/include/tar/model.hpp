#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tar/label.hpp"
#include "tar/ops.hpp"
#include "tar/optimizer.hpp"
#include "tar/param_store.hpp"

namespace tar {

// Architecture hyperparameters. The topology itself is fixed — three
// stride-2 encoder stages, a stride-2 final encoder conv, four decoder
// stages each preceded by 2x nearest upsampling — so the latent spatial
// extent is always input_size/16 and the latent depth is always
// 2*latent_half_channels (one half per class).
struct ArchConfig {
  std::int64_t input_size = 240;
  std::int64_t input_channels = 3;
  std::array<std::int64_t, 3> stage_channels{16, 32, 64};
  std::int64_t repeats = 3;
  std::int64_t latent_half_channels = 64;
  std::int64_t kernel = 3;
  double leaky_slope = 1e-7;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  std::int64_t latent_size() const { return input_size / 16; }
  std::int64_t latent_channels() const { return 2 * latent_half_channels; }

  // Encoder stage output channels feed the decoder in reverse, tapering
  // towards the image: (c3, c2, c1, c1/2).
  std::array<std::int64_t, 4> decoder_channels() const {
    return {stage_channels[2], stage_channels[1], stage_channels[0],
            std::max<std::int64_t>(1, stage_channels[0] / 2)};
  }

  void validate() const {
    if (input_size <= 0 || input_size % 16 != 0) {
      throw ConfigError("input_size must be a positive multiple of 16, got " +
                        std::to_string(input_size));
    }
    if (input_channels <= 0) {
      throw ConfigError("input_channels must be positive, got " + std::to_string(input_channels));
    }
    for (std::int64_t c : stage_channels) {
      if (c <= 0) throw ConfigError("stage channel counts must be positive");
    }
    if (repeats < 1) throw ConfigError("repeats must be >= 1, got " + std::to_string(repeats));
    if (latent_half_channels < 1) {
      throw ConfigError("latent_half_channels must be >= 1, got " +
                        std::to_string(latent_half_channels));
    }
    if (kernel < 1 || kernel % 2 == 0) {
      throw ConfigError("kernel must be odd and >= 1, got " + std::to_string(kernel));
    }
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
      throw ConfigError("leaky_slope must lie in [0, 1)");
    }
    if (!(bn_eps > 0.0)) throw ConfigError("bn_eps must be positive");
    if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) {
      throw ConfigError("bn_momentum must lie in [0, 1]");
    }
  }

  // CPU-friendly preset: same topology at 48x48 with thinner stages.
  static ArchConfig desk() {
    ArchConfig c;
    c.input_size = 48;
    c.stage_channels = {8, 16, 32};
    c.latent_half_channels = 32;
    return c;
  }

  // Smallest legal footprint, used by the finite-difference gradient
  // tests where every parameter is probed twice.
  static ArchConfig micro() {
    ArchConfig c;
    c.input_size = 16;
    c.stage_channels = {2, 3, 4};
    c.repeats = 1;
    c.latent_half_channels = 2;
    return c;
  }
};

// Ablation switches: `full` is the real model; the others strip the
// residual shortcuts and optionally harden the final encoder activation
// from leaky to plain relu, to reproduce the dead-latent pathology.
enum class Variant { full, leaky_no_residual, relu_no_residual };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::leaky_no_residual: return "leaky-no-residual";
    default: return "relu-no-residual";
  }
}

inline Variant variant_from_name(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "leaky-no-residual") return Variant::leaky_no_residual;
  if (name == "relu-no-residual") return Variant::relu_no_residual;
  throw ConfigError("unknown variant '" + name +
                    "', expected full, leaky-no-residual or relu-no-residual");
}

template <typename T>
struct TarModel {
  ArchConfig config;
  Variant variant = Variant::full;
  ParamStore<T> params;
  std::map<std::string, BnStats<T>> bn_stats;
};

namespace detail {

// Walks the fixed topology in construction order. The same enumeration
// drives parameter creation, the layer-count report and the summary
// table, so they cannot drift apart.
//
// visit_conv(name, in_ch, out_ch, kernel, stride, bias)
// visit_bn(name, ch)
template <typename ConvFn, typename BnFn>
void walk_layers(const ArchConfig& cfg, Variant variant, ConvFn&& visit_conv, BnFn&& visit_bn) {
  const bool residual = variant == Variant::full;
  auto stage = [&](const std::string& prefix, std::int64_t in_ch, std::int64_t out_ch,
                   std::int64_t first_stride) {
    std::int64_t cur = in_ch;
    for (std::int64_t b = 0; b < cfg.repeats; ++b) {
      const std::string p = prefix + ".b" + std::to_string(b);
      const std::int64_t stride = b == 0 ? first_stride : 1;
      visit_conv(p + ".conv1", cur, out_ch, cfg.kernel, stride, false);
      visit_bn(p + ".bn1", out_ch);
      visit_conv(p + ".conv2", out_ch, out_ch, cfg.kernel, std::int64_t{1}, false);
      visit_bn(p + ".bn2", out_ch);
      if (residual && (cur != out_ch || stride != 1)) {
        visit_conv(p + ".proj", cur, out_ch, std::int64_t{1}, stride, false);
        visit_bn(p + ".projbn", out_ch);
      }
      cur = out_ch;
    }
  };

  std::int64_t ch = cfg.input_channels;
  for (int s = 0; s < 3; ++s) {
    stage("enc.s" + std::to_string(s), ch, cfg.stage_channels[static_cast<std::size_t>(s)], 2);
    ch = cfg.stage_channels[static_cast<std::size_t>(s)];
  }
  visit_conv("enc.out", ch, cfg.latent_channels(), cfg.kernel, std::int64_t{2}, true);

  ch = cfg.latent_channels();
  const auto dec = cfg.decoder_channels();
  for (int s = 0; s < 4; ++s) {
    stage("dec.s" + std::to_string(s), ch, dec[static_cast<std::size_t>(s)], 1);
    ch = dec[static_cast<std::size_t>(s)];
  }
  visit_conv("dec.out", ch, cfg.input_channels, cfg.kernel, std::int64_t{1}, true);
}

}  // namespace detail

// Builds a freshly initialized model: fan-in-scaled uniform conv weights,
// zero biases, unit-gamma/zero-beta batchnorm with unit running variance.
// Bitwise deterministic for a given (config, seed, variant).
template <typename T>
TarModel<T> build_model(const ArchConfig& config, std::uint64_t seed,
                        Variant variant = Variant::full) {
  config.validate();
  TarModel<T> model;
  model.config = config;
  model.variant = variant;
  Rng rng(seed);
  detail::walk_layers(
      config, variant,
      [&](const std::string& name, std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
          std::int64_t stride, bool bias) {
        (void)stride;
        const double fan_in = static_cast<double>(in_ch * kernel * kernel);
        const double bound = std::sqrt(6.0 / fan_in);
        model.params.add(name + ".w",
                         random_uniform<T>({out_ch, in_ch, kernel, kernel}, rng, -bound, bound));
        if (bias) model.params.add(name + ".b", Tensor<T>({out_ch}));
      },
      [&](const std::string& name, std::int64_t ch) {
        model.params.add(name + ".g", Tensor<T>::ones({ch}));
        model.params.add(name + ".b", Tensor<T>({ch}));
        model.bn_stats.emplace(name, BnStats<T>::fresh(ch));
      });
  return model;
}

// The ablation entry point: same initialization path, explicit variant.
template <typename T>
TarModel<T> ablation_variant(const ArchConfig& config, Variant variant, std::uint64_t seed) {
  return build_model<T>(config, seed, variant);
}

inline int count_conv_layers(const ArchConfig& config, Variant variant = Variant::full) {
  int count = 0;
  detail::walk_layers(
      config, variant,
      [&](const std::string&, std::int64_t, std::int64_t, std::int64_t, std::int64_t, bool) {
        ++count;
      },
      [](const std::string&, std::int64_t) {});
  return count;
}

// One forward construction over a tape, in either batch-statistics
// (training) or running-statistics (inference) mode. Training mode
// advances the owning model's batchnorm estimates as layers execute;
// inference mode leaves the model untouched.
template <typename T>
class ModelForward {
 public:
  static ModelForward train(Tape<T>& tape, TarModel<T>& model, bool with_grad = true) {
    return ModelForward(tape, model, &model, BnMode::train, with_grad);
  }

  static ModelForward infer(Tape<T>& tape, const TarModel<T>& model) {
    return ModelForward(tape, model, nullptr, BnMode::infer, false);
  }

  // Sink for named intermediate activations (decoder stage outputs),
  // copied out as they are produced. Null disables capture.
  void capture_to(std::map<std::string, Tensor<T>>* sink) { capture_ = sink; }

  Var encode(Var x) {
    const ArchConfig& cfg = model_->config;
    const Tensor<T>& xv = tape_->value(x);
    if (xv.rank() != 4 || xv.dim(1) != cfg.input_channels || xv.dim(2) != cfg.input_size ||
        xv.dim(3) != cfg.input_size) {
      throw ContractError("encode expects input [B," + std::to_string(cfg.input_channels) + "," +
                          std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_size) +
                          "], got " + shape_string(xv.shape()));
    }
    Var h = x;
    for (int s = 0; s < 3; ++s) h = stage("enc.s" + std::to_string(s), h, 2);
    h = conv("enc.out", h, 2, cfg.kernel / 2);
    if (model_->variant == Variant::relu_no_residual) return relu(*tape_, h);
    return leaky_relu(*tape_, h, static_cast<T>(cfg.leaky_slope));
  }

  Var decode(Var h) {
    const ArchConfig& cfg = model_->config;
    const Tensor<T>& hv = tape_->value(h);
    if (hv.rank() != 4 || hv.dim(1) != cfg.latent_channels() || hv.dim(2) != cfg.latent_size() ||
        hv.dim(3) != cfg.latent_size()) {
      throw ContractError("decode expects latent [B," + std::to_string(cfg.latent_channels()) +
                          "," + std::to_string(cfg.latent_size()) + "," +
                          std::to_string(cfg.latent_size()) + "], got " + shape_string(hv.shape()));
    }
    Var y = h;
    for (int s = 0; s < 4; ++s) {
      y = upsample_nearest2x(*tape_, y);
      y = stage("dec.s" + std::to_string(s), y, 1);
      if (capture_) (*capture_)["dec.s" + std::to_string(s)] = tape_->value(y);
    }
    y = conv("dec.out", y, 1, cfg.kernel / 2);
    return tanh_op(*tape_, y);
  }

  const std::map<std::string, Var>& param_vars() const { return params_; }

 private:
  ModelForward(Tape<T>& tape, const TarModel<T>& model, TarModel<T>* mutable_model, BnMode mode,
               bool with_grad)
      : tape_(&tape), model_(&model), mutable_model_(mutable_model), mode_(mode) {
    for (const auto& [name, slot] : model.params) {
      params_.emplace(name, tape.leaf(slot.value, with_grad));
    }
  }

  Var conv(const std::string& name, Var x, std::int64_t stride, std::int64_t pad) {
    Var w = params_.at(name + ".w");
    auto bit = params_.find(name + ".b");
    Var b = bit == params_.end() ? Var{} : bit->second;
    return conv2d(*tape_, x, w, b, stride, pad);
  }

  Var bn(const std::string& name, Var x) {
    Var g = params_.at(name + ".g");
    Var b = params_.at(name + ".b");
    const ArchConfig& cfg = model_->config;
    if (mode_ == BnMode::train) {
      return batchnorm2d(*tape_, x, g, b, mutable_model_->bn_stats.at(name), BnMode::train,
                         static_cast<T>(cfg.bn_eps), static_cast<T>(cfg.bn_momentum));
    }
    return batchnorm2d_infer(*tape_, x, g, b, model_->bn_stats.at(name),
                             static_cast<T>(cfg.bn_eps));
  }

  Var block(const std::string& prefix, Var x, std::int64_t stride) {
    const ArchConfig& cfg = model_->config;
    Var h = conv(prefix + ".conv1", x, stride, cfg.kernel / 2);
    h = bn(prefix + ".bn1", h);
    h = relu(*tape_, h);
    h = conv(prefix + ".conv2", h, 1, cfg.kernel / 2);
    h = bn(prefix + ".bn2", h);
    if (model_->variant == Variant::full) {
      Var shortcut = x;
      if (params_.count(prefix + ".proj.w")) {
        shortcut = conv(prefix + ".proj", x, stride, 0);
        shortcut = bn(prefix + ".projbn", shortcut);
      }
      h = add(*tape_, h, shortcut);
    }
    return relu(*tape_, h);
  }

  Var stage(const std::string& prefix, Var x, std::int64_t first_stride) {
    for (std::int64_t b = 0; b < model_->config.repeats; ++b) {
      x = block(prefix + ".b" + std::to_string(b), x, b == 0 ? first_stride : 1);
    }
    return x;
  }

  Tape<T>* tape_;
  const TarModel<T>* model_;
  TarModel<T>* mutable_model_;
  BnMode mode_;
  std::map<std::string, Var> params_;
  std::map<std::string, Tensor<T>>* capture_ = nullptr;
};

// Zeroes the latent half that belongs to the opposite label: a real
// sample keeps the first half_channels channels, a fake sample keeps the
// rest. Value semantics; the input tensor is untouched.
template <typename T>
Tensor<T> facilitate(const Tensor<T>& h, const std::vector<Label>& labels,
                     std::int64_t half_channels) {
  detail::check_rank4(h.shape(), "facilitate input");
  if (h.dim(1) != 2 * half_channels) {
    throw ContractError("facilitate expects " + std::to_string(2 * half_channels) +
                        " channels, got " + shape_string(h.shape()));
  }
  if (static_cast<std::int64_t>(labels.size()) != h.dim(0)) {
    throw ContractError("facilitate got " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(h.dim(0)));
  }
  const std::int64_t half = half_channels * h.dim(2) * h.dim(3);
  Tensor<T> out = h;
  for (std::int64_t b = 0; b < h.dim(0); ++b) {
    T* base = out.data() + b * 2 * half;
    T* masked = labels[static_cast<std::size_t>(b)] == Label::real ? base + half : base;
    for (std::int64_t i = 0; i < half; ++i) masked[i] = T{0};
  }
  return out;
}

template <typename T>
Var facilitate(Tape<T>& tape, Var h, std::vector<Label> labels, std::int64_t half_channels) {
  Tensor<T> out = facilitate(tape.value(h), labels, half_channels);
  const std::int64_t half = half_channels * out.dim(2) * out.dim(3);
  const std::int64_t batch = out.dim(0);
  if (!tape.requires_grad(h)) return tape.emit(std::move(out), false, nullptr);
  auto back = [h, labels = std::move(labels), half, batch](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    Tensor<T>& gh = t.grad_buffer(h);
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t kept = labels[static_cast<std::size_t>(b)] == Label::real ? 0 : half;
      const T* src = g.data() + b * 2 * half + kept;
      T* dst = gh.data() + b * 2 * half + kept;
      for (std::int64_t i = 0; i < half; ++i) dst[i] += src[i];
    }
  };
  return tape.emit(std::move(out), true, back);
}

// Mean absolute activation of each latent half: out[b] = (A1, A2) where
// A_c = ||H_c||_1 / (half_channels * M * M).
template <typename T>
Tensor<T> per_class_activation(const Tensor<T>& h, std::int64_t half_channels) {
  detail::check_rank4(h.shape(), "per_class_activation input");
  if (h.dim(1) != 2 * half_channels) {
    throw ContractError("per_class_activation expects " + std::to_string(2 * half_channels) +
                        " channels, got " + shape_string(h.shape()));
  }
  const std::int64_t half = half_channels * h.dim(2) * h.dim(3);
  Tensor<T> out({h.dim(0), 2});
  for (std::int64_t b = 0; b < h.dim(0); ++b) {
    const T* base = h.data() + b * 2 * half;
    double a1 = 0.0, a2 = 0.0;
    for (std::int64_t i = 0; i < half; ++i) a1 += std::abs(static_cast<double>(base[i]));
    for (std::int64_t i = 0; i < half; ++i) a2 += std::abs(static_cast<double>(base[half + i]));
    out(b, 0) = static_cast<T>(a1 / static_cast<double>(half));
    out(b, 1) = static_cast<T>(a2 / static_cast<double>(half));
  }
  return out;
}

template <typename T>
Var per_class_activation(Tape<T>& tape, Var h, std::int64_t half_channels) {
  Tensor<T> out = per_class_activation(tape.value(h), half_channels);
  const Tensor<T>& hv = tape.value(h);
  const std::int64_t half = half_channels * hv.dim(2) * hv.dim(3);
  const std::int64_t batch = hv.dim(0);
  if (!tape.requires_grad(h)) return tape.emit(std::move(out), false, nullptr);
  auto back = [h, half, batch](Tape<T>& t, std::int32_t self) {
    const Tensor<T>& g = t.grad_buffer(Var{self});
    const Tensor<T>& hval = t.value(h);
    Tensor<T>& gh = t.grad_buffer(h);
    const T scale = T{1} / static_cast<T>(half);
    for (std::int64_t b = 0; b < batch; ++b) {
      const T* src = hval.data() + b * 2 * half;
      T* dst = gh.data() + b * 2 * half;
      const T g1 = g(b, 0) * scale;
      const T g2 = g(b, 1) * scale;
      for (std::int64_t i = 0; i < 2 * half; ++i) {
        const T gb = i < half ? g1 : g2;
        if (src[i] > T{0}) dst[i] += gb;
        else if (src[i] < T{0}) dst[i] -= gb;
      }
    }
  };
  return tape.emit(std::move(out), true, back);
}

// Test-time rule on the raw (un-facilitated) latent: fake wins only on a
// strict A2 > A1; ties are real.
inline Label classify_pair(double a1, double a2) {
  return a2 > a1 ? Label::fake : Label::real;
}

template <typename T>
std::vector<Label> classify(const Tensor<T>& h, std::int64_t half_channels) {
  Tensor<T> acts = per_class_activation(h, half_channels);
  std::vector<Label> out;
  out.reserve(static_cast<std::size_t>(acts.dim(0)));
  for (std::int64_t b = 0; b < acts.dim(0); ++b) {
    out.push_back(classify_pair(static_cast<double>(acts(b, 0)), static_cast<double>(acts(b, 1))));
  }
  return out;
}

// Training-path forward pass: encode, mask by label, decode the masked
// latent. Per-class activations for the loss come off the RAW latent:
// the loss must see the opposite half to push it toward zero, which is
// what makes the halves separate (the masked copy would make that term
// identically zero and let both halves co-activate). All on one tape so
// backward reaches every parameter.
template <typename T>
struct TrainForward {
  Var recon;
  Var latent_raw;
  Var latent_fac;
  Var activations;  // [B,2] per-class means of the raw latent
};

template <typename T>
TrainForward<T> forward_train(ModelForward<T>& fwd, Tape<T>& tape, Var x,
                              const std::vector<Label>& labels, const ArchConfig& config) {
  TrainForward<T> out;
  out.latent_raw = fwd.encode(x);
  out.latent_fac = facilitate(tape, out.latent_raw, labels, config.latent_half_channels);
  out.activations = per_class_activation(tape, out.latent_raw, config.latent_half_channels);
  out.recon = fwd.decode(out.latent_fac);
  return out;
}

// Inference helpers over an immutable model snapshot.
template <typename T>
Tensor<T> encode_infer(const TarModel<T>& model, const Tensor<T>& x) {
  Tape<T> tape;
  ModelForward<T> fwd = ModelForward<T>::infer(tape, model);
  return tape.value(fwd.encode(tape.leaf(x)));
}

template <typename T>
Tensor<T> decode_infer(const TarModel<T>& model, const Tensor<T>& h,
                       std::map<std::string, Tensor<T>>* capture = nullptr) {
  Tape<T> tape;
  ModelForward<T> fwd = ModelForward<T>::infer(tape, model);
  if (capture) fwd.capture_to(capture);
  return tape.value(fwd.decode(tape.leaf(h)));
}

// Layer table with output shapes and parameter counts, plus the totals
// line used by the inspect command.
inline std::string model_summary(const ArchConfig& config, Variant variant = Variant::full) {
  config.validate();
  std::ostringstream out;
  std::int64_t spatial = config.input_size;
  std::int64_t total_params = 0;
  out << "layer                     output              params\n";
  detail::walk_layers(
      config, variant,
      [&](const std::string& name, std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
          std::int64_t stride, bool bias) {
        const bool is_proj = name.size() >= 5 && name.compare(name.size() - 5, 5, ".proj") == 0;
        // Decoder stages are preceded by 2x upsampling; strided convs
        // halve. Projection convs run beside the block, so they reuse the
        // extent conv1 already established.
        if (name.rfind("dec.", 0) == 0 && name.find(".b0.conv1") != std::string::npos) {
          spatial *= 2;
        }
        if (!is_proj && stride == 2) spatial /= 2;
        const std::int64_t params = out_ch * in_ch * kernel * kernel + (bias ? out_ch : 0);
        total_params += params;
        std::ostringstream shape;
        shape << out_ch << "x" << spatial << "x" << spatial;
        out << name;
        for (std::size_t i = name.size(); i < 26; ++i) out << ' ';
        const std::string sh = shape.str();
        out << sh;
        for (std::size_t i = sh.size(); i < 20; ++i) out << ' ';
        out << params << "\n";
      },
      [&](const std::string&, std::int64_t ch) { total_params += 2 * ch; });
  out << "latent: " << config.latent_channels() << "x" << config.latent_size() << "x"
      << config.latent_size() << " (two halves of " << config.latent_half_channels
      << " channels)\n";
  out << "conv layers: " << count_conv_layers(config, variant) << "\n";
  out << "parameters (incl. batchnorm): " << total_params << "\n";
  return out.str();
}

}  // namespace tar
