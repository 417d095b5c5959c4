#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vmb {

// Deterministic random source. std::mt19937_64 has a fully specified output
// sequence, and we derive doubles from raw 64-bit draws ourselves, so streams
// are reproducible across platforms and standard-library implementations.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53 mantissa bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal();

  // Uniform over [0, n).
  uint64_t below(uint64_t n);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 step; used to derive independent seed streams.
uint64_t mix_seed(uint64_t state);

// Combine a base seed with a stream tag into a fresh seed.
uint64_t derive_seed(uint64_t base, uint64_t stream);

// FNV-1a over bytes; stable content hash used for stub embeddings and
// store-file fingerprints.
uint64_t fnv1a64(std::string_view bytes, uint64_t basis = 14695981039346656037ull);

}  // namespace vmb
