#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace clreg {

// 64-bit FNV-1a over a purpose tag.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Derives an independent stream seed from (master seed, purpose tag), so
// adding a consumer of randomness never perturbs the other streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = fnv1a64(tag);
  h ^= master + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

// Seeded RNG with hand-rolled distributions. std::*_distribution output is
// implementation-defined, which would break bit-identical reruns across
// toolchains; everything here is pinned to the mt19937_64 word stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // uniform double in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; consumes exactly two words per call
  double gaussian() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // unbiased index in [0, n); n must be > 0
  std::size_t index(std::size_t n) {
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  Rng derive(std::string_view tag) const { return Rng(derive_seed(seed_, tag)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Fisher-Yates, driven by Rng::index so results are toolchain-stable.
template <class T>
void shuffle(std::vector<T>& xs, Rng& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(xs[i - 1], xs[j]);
  }
}

}  // namespace clreg
