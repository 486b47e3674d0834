#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tar {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. The CLI maps these onto process exit codes, so every
// throw site in the library should pick the class that matches the cause,
// not just the nearest convenient type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated API contract: bad shapes, invalid labels, misuse of the tape.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed files or on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Numeric failure at runtime: NaN or infinite loss, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitFormat = 3,
  kExitNumeric = 4,
};

// splitmix64, used to derive independent sub-seeds from a master seed.
// Distinct (seed, index) pairs give uncorrelated streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

// Deterministic random source. All distributions are derived by hand from
// the standardized mt19937_64 stream, so the same seed produces the same
// bytes on every platform; std::uniform_real_distribution and friends make
// no such promise.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 usable bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is below 2^-40 for any n that
  // fits in 24 bits, which covers every use in this library.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ContractError("uniform_int needs n >= 1");
    return next_u64() % n;
  }

  // Standard normal via Box-Muller; one value per call, no caching.
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename V>
  void shuffle(std::vector<V>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

namespace detail {
inline std::atomic<int>& thread_count_slot() {
  static std::atomic<int> count{1};
  return count;
}
}  // namespace detail

inline void set_num_threads(int n) {
  if (n < 1) throw ConfigError("thread count must be >= 1, got " + std::to_string(n));
  detail::thread_count_slot().store(n);
}

inline int num_threads() { return detail::thread_count_slot().load(); }

// Runs fn(begin, end) over a static partition of [0, total). The partition
// depends only on (total, thread count), so results that reduce per-range
// are reproducible for a fixed thread count. With one thread the call is a
// plain function call on the caller's stack.
template <typename Fn>
void parallel_for(std::int64_t total, Fn&& fn) {
  int workers = num_threads();
  if (workers <= 1 || total <= 1) {
    if (total > 0) fn(std::int64_t{0}, total);
    return;
  }
  if (static_cast<std::int64_t>(workers) > total) workers = static_cast<int>(total);
  std::int64_t chunk = (total + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    std::int64_t begin = t * chunk;
    std::int64_t end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace tar
