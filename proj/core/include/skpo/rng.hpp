#pragma once
#include <cstdint>
#include <cstddef>
#include <span>
#include <vector>

namespace skpo {

// splitmix64 finalizer, used both as the generator step and as the seed mixer.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives a child seed from a parent seed and a stream label. Adding new
// labels never perturbs existing streams.
inline uint64_t derive_seed(uint64_t parent, uint64_t label) {
  return mix64(parent ^ mix64(label));
}
inline uint64_t derive_seed(uint64_t parent, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(parent, a), b);
}
inline uint64_t derive_seed(uint64_t parent, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(parent, a, b), c);
}

// Small deterministic generator (splitmix64 stream). We avoid the standard
// distributions so sampled values are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return next_u64() % n;
  }

  // Inverse-CDF draw from an explicit probability vector.
  int next_categorical(std::span<const double> probs) {
    double u = next_double();
    double acc = 0.0;
    for (size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return int(i);
    }
    return int(probs.size()) - 1;
  }

  int next_binomial(int n, double p) {
    int c = 0;
    for (int i = 0; i < n; ++i) c += next_bernoulli(p) ? 1 : 0;
    return c;
  }

 private:
  uint64_t state_;
};

}  // namespace skpo
