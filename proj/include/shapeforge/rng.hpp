#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "shapeforge/error.hpp"

namespace shapeforge {

/// Addresses one random draw. The triple fully determines the value:
/// drawing sample i never requires drawing samples 0..i-1, so generation
/// can be split across workers in any order.
struct SeedSpec {
  uint64_t root_seed = 0;
  std::string stream_label;
  uint64_t index = 0;
};

struct BetaParams {
  double alpha = 4.0;
  double beta = 1.0;
};

namespace detail {

inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

/// Small counter-keyed PRNG: the SeedSpec is hashed into a splitmix64
/// stream. Avoids std::hash and the std <random> distributions, whose
/// outputs are implementation-defined.
class CounterRng {
 public:
  explicit CounterRng(const SeedSpec& seed) {
    uint64_t s = detail::mix64(seed.root_seed) ^ detail::fnv1a64(seed.stream_label);
    state_ = detail::mix64(detail::mix64(s) ^ seed.index);
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

  /// Unbiased integer in [0, n) via Lemire's multiply-shift with rejection.
  uint64_t next_below(uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t t = (0 - n) % n;
      while (lo < t) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  /// Standard normal via the Marsaglia polar method.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Gamma(a, 1) by Marsaglia-Tsang squeeze rejection; the a < 1 case is
  /// boosted through Gamma(a+1).
  double next_gamma(double a) {
    if (a < 1.0) {
      double u = next_double();
      while (u == 0.0) u = next_double();
      return next_gamma(a + 1.0) * std::pow(u, 1.0 / a);
    }
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

 private:
  uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// One Beta(alpha, beta) variate in [0, 1]: X/(X+Y) with X~Gamma(alpha),
/// Y~Gamma(beta).
inline double sample_lambda(const SeedSpec& seed, const BetaParams& params) {
  if (!(params.alpha > 0.0) || !(params.beta > 0.0))
    throw ConfigError("sample_lambda: alpha and beta must be positive");
  CounterRng rng(seed);
  double x = rng.next_gamma(params.alpha);
  double y = rng.next_gamma(params.beta);
  double lam = x / (x + y);
  if (!std::isfinite(lam)) return 0.5;  // both gammas underflowed to zero
  return std::clamp(lam, 0.0, 1.0);
}

/// Uniformly random permutation of {0..n-1} via seeded Fisher-Yates.
inline std::vector<uint32_t> sample_permutation(const SeedSpec& seed, std::size_t n) {
  if (n < 1) throw ConfigError("sample_permutation: n must be >= 1");
  std::vector<uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  CounterRng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = rng.next_below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

/// k independent uniform (shape_idx, texture_idx) pairs with replacement.
/// Pair i is keyed on seed.index + i, so any sub-range can be regenerated
/// without the rest.
inline std::vector<std::pair<uint32_t, uint32_t>> sample_pairing(
    const SeedSpec& seed, std::size_t n_shapes, std::size_t n_textures, std::size_t k) {
  if (n_shapes < 1 || n_textures < 1 || k < 1)
    throw ConfigError("sample_pairing: counts must be >= 1");
  std::vector<std::pair<uint32_t, uint32_t>> pairs;
  pairs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    CounterRng rng({seed.root_seed, seed.stream_label, seed.index + i});
    auto s = static_cast<uint32_t>(rng.next_below(n_shapes));
    auto t = static_cast<uint32_t>(rng.next_below(n_textures));
    pairs.emplace_back(s, t);
  }
  return pairs;
}

}  // namespace shapeforge
