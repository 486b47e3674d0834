#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tar/label.hpp"
#include "tar/tensor.hpp"

namespace tar {

// Synthetic face-analogue imagery. One "real" generator and three fake
// generators that manipulate the central region in visibly different
// ways, so a detector trained on one manipulation has something genuinely
// new to meet in the others.

enum class Domain { real, blendswap, sharpswap, localwarp };

inline const char* domain_name(Domain d) {
  switch (d) {
    case Domain::real: return "real";
    case Domain::blendswap: return "blendswap";
    case Domain::sharpswap: return "sharpswap";
    case Domain::localwarp: return "localwarp";
  }
  throw ContractError("unreachable domain value");
}

inline Domain domain_from_name(const std::string& name) {
  if (name == "real") return Domain::real;
  if (name == "blendswap") return Domain::blendswap;
  if (name == "sharpswap") return Domain::sharpswap;
  if (name == "localwarp") return Domain::localwarp;
  throw ConfigError("unknown domain '" + name +
                    "' (expected real, blendswap, sharpswap or localwarp)");
}

inline const std::vector<Domain>& fake_domains() {
  static const std::vector<Domain> kinds{Domain::blendswap, Domain::sharpswap, Domain::localwarp};
  return kinds;
}

struct ImageSample {
  Tensor<float> pixels;  // [3,S,S] in [-1,1]
  Label label = Label::real;
  Domain domain = Domain::real;
  std::int64_t id = 0;
  std::uint64_t seed = 0;  // per-sample stream, recorded for the manifest
};

inline void validate_sample(const ImageSample& s) {
  if (s.pixels.rank() != 3 || s.pixels.dim(0) != 3 || s.pixels.dim(1) != s.pixels.dim(2)) {
    throw ContractError("sample pixels must be [3,S,S], got " + shape_string(s.pixels.shape()));
  }
  if ((s.domain == Domain::real) != (s.label == Label::real)) {
    throw ContractError("sample " + std::to_string(s.id) + " mixes domain '" +
                        domain_name(s.domain) + "' with label '" + label_name(s.label) + "'");
  }
}

namespace detail {

// Geometry of the manipulated area, shared by every fake kind: a disk
// around the image center covering the "face".
inline double swap_radius(std::int64_t size) { return 0.30 * static_cast<double>(size); }
inline double feather_width(std::int64_t size) { return 0.08 * static_cast<double>(size); }

// Donor pastes whose disk interior nearly matches the target produce
// composites with no detectable manipulation cue, which makes the fake
// label ambiguous. Donor selection therefore requires at least this mean
// absolute per-channel difference inside the disk (pixel values span
// [-1,1]; random pairs measure about 0.15 to 0.74 with a median near
// 0.40, so the bar trims the indistinct tail without narrowing the bulk).
constexpr double kMinDonorDistance = 0.35;

template <typename T>
double disk_mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b, std::int64_t size) {
  const double radius = swap_radius(size);
  const double half = static_cast<double>(size - 1) / 2.0;
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - half;
      const double dy = static_cast<double>(y) - half;
      if (dx * dx + dy * dy >= radius * radius) continue;
      for (std::int64_t c = 0; c < 3; ++c) {
        sum += std::abs(static_cast<double>(a(c, y, x)) - static_cast<double>(b(c, y, x)));
      }
      count += 3;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

inline float clamp_unit(float v) { return v < -1.0f ? -1.0f : (v > 1.0f ? 1.0f : v); }

// One face-analogue image: a sloped two-tone background, an ellipse with
// its own palette, banded texture and two darker "eye" dots, plus mild
// pixel noise. Every number is drawn from the sample's own stream.
inline Tensor<float> render_real(std::int64_t size, Rng& rng) {
  Tensor<float> img({3, size, size});
  const double s = static_cast<double>(size);

  // Background: per-channel linear ramp plus one low-frequency wave.
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(-0.6, 0.6);
    gx[c] = rng.uniform(-0.5, 0.5);
    gy[c] = rng.uniform(-0.5, 0.5);
  }
  const double wave_amp = rng.uniform(0.05, 0.15);
  const double wave_fx = rng.uniform(1.0, 3.0);
  const double wave_fy = rng.uniform(1.0, 3.0);
  const double wave_phase = rng.uniform(0.0, 6.283185307179586);

  // Face ellipse: jittered center, orientation and palette.
  const double cx = s * (0.5 + rng.uniform(-0.05, 0.05));
  const double cy = s * (0.5 + rng.uniform(-0.05, 0.05));
  const double ax = s * rng.uniform(0.26, 0.36);
  const double ay = s * rng.uniform(0.30, 0.40);
  const double tilt = rng.uniform(-0.4, 0.4);
  double face[3];
  for (int c = 0; c < 3; ++c) face[c] = rng.uniform(-0.4, 0.7);
  const double tex_amp = rng.uniform(0.08, 0.2);
  const double tex_fx = rng.uniform(2.0, 6.0);
  const double tex_fy = rng.uniform(2.0, 6.0);
  const double tex_phase = rng.uniform(0.0, 6.283185307179586);

  // Eyes sit symmetrically on the tilted horizontal axis.
  const double eye_dx = ax * 0.45;
  const double eye_dy = -ay * 0.25;
  const double eye_r = s * 0.045;
  const double noise_amp = rng.uniform(0.01, 0.03);

  const double cos_t = std::cos(tilt);
  const double sin_t = std::sin(tilt);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / s;
      const double v = static_cast<double>(y) / s;
      const double wave =
          wave_amp * std::sin(6.283185307179586 * (wave_fx * u + wave_fy * v) + wave_phase);

      // Ellipse coordinates.
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double ex = (dx * cos_t + dy * sin_t) / ax;
      const double ey = (-dx * sin_t + dy * cos_t) / ay;
      const double rho = ex * ex + ey * ey;

      double tex = 0.0;
      double shade = 0.0;
      bool inside = rho <= 1.0;
      if (inside) {
        tex = tex_amp * std::sin(6.283185307179586 * (tex_fx * u + tex_fy * v) + tex_phase);
        shade = -0.15 * rho;  // slightly darker towards the rim
      }

      // Eye dots in ellipse space.
      const double exl = dx * cos_t + dy * sin_t - eye_dx;
      const double exr = dx * cos_t + dy * sin_t + eye_dx;
      const double eyy = -dx * sin_t + dy * cos_t - eye_dy;
      const bool eye = inside && (exl * exl + eyy * eyy <= eye_r * eye_r ||
                                  exr * exr + eyy * eyy <= eye_r * eye_r);

      for (int c = 0; c < 3; ++c) {
        double value;
        if (inside) {
          value = face[c] + tex + shade;
          if (eye) value -= 0.5;
        } else {
          value = base[c] + gx[c] * u + gy[c] * v + wave;
        }
        value += rng.uniform(-noise_amp, noise_amp);
        img(c, y, x) = clamp_unit(static_cast<float>(value));
      }
    }
  }
  return img;
}

}  // namespace detail

inline std::vector<ImageSample> gen_real(std::uint64_t seed, std::int64_t n, std::int64_t size) {
  if (n < 0) throw ConfigError("gen_real needs n >= 0, got " + std::to_string(n));
  if (size < 8) throw ConfigError("gen_real needs size >= 8, got " + std::to_string(size));
  std::vector<ImageSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng rng(sample_seed);
    out.push_back({detail::render_real(size, rng), Label::real, Domain::real, i, sample_seed});
  }
  return out;
}

// Builds one fake per pool entry: the entry is the target, a different
// pool member donates its central region (blendswap/sharpswap) or the
// target's own region is warped in place (localwarp). Fakes keep the
// target's id, which later ties them to the same split as the image they
// were cut from.
inline std::vector<ImageSample> gen_fake(Domain kind, const std::vector<ImageSample>& real_pool,
                                         std::uint64_t seed) {
  if (kind == Domain::real) throw ConfigError("gen_fake needs a fake domain kind");
  if (real_pool.empty()) throw ConfigError("gen_fake needs a non-empty real pool");
  if (kind != Domain::localwarp && real_pool.size() < 2) {
    throw ConfigError("donor-paste kinds need at least 2 pool images, got 1");
  }
  const std::int64_t n = static_cast<std::int64_t>(real_pool.size());
  const std::int64_t size = real_pool.front().pixels.dim(1);

  std::vector<ImageSample> out;
  out.reserve(real_pool.size());
  const double radius = detail::swap_radius(size);
  const double feather = detail::feather_width(size);
  const double half = static_cast<double>(size - 1) / 2.0;

  for (std::int64_t i = 0; i < n; ++i) {
    const ImageSample& target = real_pool[static_cast<std::size_t>(i)];
    const std::uint64_t sample_seed =
        derive_seed(derive_seed(seed, static_cast<std::uint64_t>(kind)), target.seed);
    Rng rng(sample_seed);
    Tensor<float> img = target.pixels;

    if (kind == Domain::localwarp) {
      // Smooth in-place displacement, fading to zero at the region rim.
      // Nearest-neighbor sampling moves pixels without inventing new
      // colors, which is what keeps the histogram put. The amplitude
      // floor keeps the weakest warps clearly visible at desk scale.
      const double amp = rng.uniform(0.5, 0.8) * 0.13 * static_cast<double>(size);
      const double fx = rng.uniform(1.0, 2.2);
      const double fy = rng.uniform(1.0, 2.2);
      const double px = rng.uniform(0.0, 6.283185307179586);
      const double py = rng.uniform(0.0, 6.283185307179586);
      for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
          const double dx = static_cast<double>(x) - half;
          const double dy = static_cast<double>(y) - half;
          const double d = std::sqrt(dx * dx + dy * dy);
          if (d >= radius) continue;
          const double fall = 1.0 - d / radius;
          const double u = static_cast<double>(x) / size;
          const double v = static_cast<double>(y) / size;
          const double ox = amp * fall * std::sin(6.283185307179586 * (fx * v) + px);
          const double oy = amp * fall * std::sin(6.283185307179586 * (fy * u) + py);
          std::int64_t sx = x + static_cast<std::int64_t>(std::lround(ox));
          std::int64_t sy = y + static_cast<std::int64_t>(std::lround(oy));
          sx = sx < 0 ? 0 : (sx >= size ? size - 1 : sx);
          sy = sy < 0 ? 0 : (sy >= size ? size - 1 : sy);
          for (int c = 0; c < 3; ++c) img(c, y, x) = target.pixels(c, sy, sx);
        }
      }
    } else {
      // Donor paste with a hard or feathered seam. Starting from a random
      // pool position, take the first donor whose disk interior clears
      // kMinDonorDistance; if none does, keep the most distant one seen.
      const std::int64_t first = (i + 1 + rng.uniform_int(n - 1)) % n;  // never the target
      std::int64_t donor_index = first;
      double best = -1.0;
      for (std::int64_t probe = 0; probe < n; ++probe) {
        const std::int64_t cand = (first + probe) % n;
        if (cand == i) continue;
        const double dist = detail::disk_mean_abs_diff(
            real_pool[static_cast<std::size_t>(cand)].pixels, target.pixels, size);
        if (dist > best) {
          best = dist;
          donor_index = cand;
        }
        if (dist >= detail::kMinDonorDistance) break;
      }
      const ImageSample& donor = real_pool[static_cast<std::size_t>(donor_index)];
      for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
          const double dx = static_cast<double>(x) - half;
          const double dy = static_cast<double>(y) - half;
          const double d = std::sqrt(dx * dx + dy * dy);
          if (d >= radius) continue;
          double alpha = 1.0;
          if (kind == Domain::blendswap) {
            alpha = (radius - d) / feather;
            if (alpha > 1.0) alpha = 1.0;
          }
          for (int c = 0; c < 3; ++c) {
            const double mixed = alpha * donor.pixels(c, y, x) + (1.0 - alpha) * img(c, y, x);
            img(c, y, x) = static_cast<float>(mixed);
          }
        }
      }
    }
    out.push_back({std::move(img), Label::fake, kind, target.id, sample_seed});
  }
  return out;
}

// ------------------------------------------------------------------
// Split assignment

struct SplitSpec {
  std::int64_t base_real = 1000, base_fake = 1000;
  std::int64_t fewshot_real = 50, fewshot_fake = 50;
  std::int64_t test_real = 250, test_fake = 250;

  void validate() const {
    for (std::int64_t v : {base_real, base_fake, fewshot_real, fewshot_fake, test_real, test_fake}) {
      if (v < 0) throw ConfigError("split counts must be non-negative");
    }
    if (base_fake > base_real || fewshot_fake > fewshot_real || test_fake > test_real) {
      throw ConfigError(
          "fake counts cannot exceed real counts per split: fakes follow the split of the real "
          "image they were built from");
    }
  }

  std::int64_t reals_needed() const { return base_real + fewshot_real + test_real; }
};

enum class Split { base, fewshot, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::base: return "base";
    case Split::fewshot: return "fewshot";
    case Split::test: return "test";
  }
  throw ContractError("unreachable split value");
}

inline Split split_from_name(const std::string& name) {
  if (name == "base") return Split::base;
  if (name == "fewshot") return Split::fewshot;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected base, fewshot or test)");
}

struct DomainSplits {
  std::vector<ImageSample> base, fewshot, test;

  const std::vector<ImageSample>& at(Split s) const {
    switch (s) {
      case Split::base: return base;
      case Split::fewshot: return fewshot;
      case Split::test: return test;
    }
    throw ContractError("unreachable split value");
  }
  std::vector<ImageSample>& at(Split s) {
    return const_cast<std::vector<ImageSample>&>(static_cast<const DomainSplits&>(*this).at(s));
  }
};

struct Dataset {
  SplitSpec spec;
  DomainSplits reals;
  std::map<Domain, DomainSplits> fakes;
};

// Assigns reals to base/fewshot/test by seeded shuffle, then places each
// fake in the split its target real landed in and trims to the requested
// counts. Keeping a fake and its source image in the same split means the
// test set never shows content that training saw in any form.
inline Dataset make_splits(const std::vector<ImageSample>& reals,
                           const std::map<Domain, std::vector<ImageSample>>& fakes_by_domain,
                           const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (static_cast<std::int64_t>(reals.size()) < spec.reals_needed()) {
    throw ConfigError("make_splits needs " + std::to_string(spec.reals_needed()) +
                      " real samples (base " + std::to_string(spec.base_real) + " + fewshot " +
                      std::to_string(spec.fewshot_real) + " + test " +
                      std::to_string(spec.test_real) + "), got " + std::to_string(reals.size()));
  }

  std::vector<std::size_t> order(reals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  Dataset ds;
  ds.spec = spec;
  std::map<std::int64_t, Split> split_of_id;
  std::size_t cursor = 0;
  auto take_reals = [&](Split s, std::int64_t count) {
    auto& bucket = ds.reals.at(s);
    for (std::int64_t k = 0; k < count; ++k, ++cursor) {
      const ImageSample& sample = reals[order[cursor]];
      split_of_id[sample.id] = s;
      bucket.push_back(sample);
    }
  };
  take_reals(Split::base, spec.base_real);
  take_reals(Split::fewshot, spec.fewshot_real);
  take_reals(Split::test, spec.test_real);

  for (const auto& [kind, fakes] : fakes_by_domain) {
    if (kind == Domain::real) throw ConfigError("fakes_by_domain cannot contain the real domain");
    DomainSplits buckets;
    for (const ImageSample& f : fakes) {
      const auto it = split_of_id.find(f.id);
      if (it == split_of_id.end()) continue;  // target real was left unused
      buckets.at(it->second).push_back(f);
    }
    auto trim = [&](Split s, std::int64_t count) {
      auto& v = buckets.at(s);
      if (static_cast<std::int64_t>(v.size()) < count) {
        throw ConfigError("domain '" + std::string(domain_name(kind)) + "' has only " +
                          std::to_string(v.size()) + " fakes available for split '" +
                          split_name(s) + "', need " + std::to_string(count));
      }
      v.resize(static_cast<std::size_t>(count));
    };
    trim(Split::base, spec.base_fake);
    trim(Split::fewshot, spec.fewshot_fake);
    trim(Split::test, spec.test_fake);
    ds.fakes.emplace(kind, std::move(buckets));
  }
  return ds;
}

// Mixed real+fake working set for one domain and split, reals first.
inline std::vector<ImageSample> labeled_set(const Dataset& ds, Domain domain, Split split) {
  if (domain == Domain::real) throw ConfigError("labeled_set needs a fake domain");
  const auto it = ds.fakes.find(domain);
  if (it == ds.fakes.end()) {
    throw ConfigError("dataset has no domain '" + std::string(domain_name(domain)) + "'");
  }
  std::vector<ImageSample> out = ds.reals.at(split);
  const auto& fk = it->second.at(split);
  out.insert(out.end(), fk.begin(), fk.end());
  return out;
}

// ------------------------------------------------------------------
// Preprocessing used by the degraded-input experiment. Both operate in
// [0,1] space and clamp there, then return to [-1,1].

inline Tensor<float> adjust_brightness(const Tensor<float>& img, double delta) {
  Tensor<float> out = img;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    double p = (static_cast<double>(out[i]) + 1.0) * 0.5 + delta;
    p = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    out[i] = static_cast<float>(p * 2.0 - 1.0);
  }
  return out;
}

inline Tensor<float> adjust_contrast(const Tensor<float>& img, double factor) {
  if (!(factor > 0.0)) {
    throw ContractError("contrast factor must be positive, got " + std::to_string(factor));
  }
  Tensor<float> out = img;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    double p = (static_cast<double>(out[i]) + 1.0) * 0.5;
    p = (p - 0.5) * factor + 0.5;
    p = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    out[i] = static_cast<float>(p * 2.0 - 1.0);
  }
  return out;
}

}  // namespace tar
