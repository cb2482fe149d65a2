#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "headprune/hash.hpp"

namespace headprune {

// Deterministic RNG. mt19937_64 is fully specified by the standard, and all
// value conversions are done explicitly here, so streams are reproducible
// across compilers and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two draws per sample, no cached spare.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
  }

  // unbiased index in [0, n) via rejection
  size_t index(size_t n) {
    if (n <= 1) return 0;
    uint64_t bound = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = eng_();
    while (x >= bound) x = eng_();
    return static_cast<size_t>(x % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // weighted draw; weights need not be normalized
  size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  std::mt19937_64 eng_;
};

// Derives a child seed from a parent seed and a labelled path, e.g.
// derive_seed(master, "latent", split_idx, sentence_idx).
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = fnv1a64(tag, mix64(base));
  h = hash_combine(h, a);
  h = hash_combine(h, b);
  return h;
}

}  // namespace headprune
