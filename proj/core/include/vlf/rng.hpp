#pragma once

// Deterministic, toolchain-independent randomness. std:: engines are portable
// but the std:: distributions are not bit-stable across implementations, and
// simulation outputs here must be byte-identical across runs and worker
// counts, so draws are produced explicitly (splitmix64 keying + xoshiro256++).

#include <cstdint>
#include <span>

namespace vlf {

inline std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Order-sensitive key combiner for deriving independent substreams.
inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2));
  std::uint64_t m = splitmix64(s);
  return m ^ b;
}

class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next() {
    auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t s_[4];
};

// Draw an index from `probs` (assumed to sum to ~1). The tail slot absorbs
// rounding so a valid index is always returned.
inline std::size_t sample_categorical(Xoshiro256pp& rng, std::span<const double> probs) {
  double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

// Stream purposes (last key in the derivation chain).
enum : std::uint64_t {
  kStreamNoise = 1,
  kStreamPartition = 2,
  kStreamMessage = 3,
  kStreamWalk = 4,
};

inline std::uint64_t stream_seed(std::uint64_t run_seed, std::uint64_t trial,
                                 std::uint64_t attempt, std::uint64_t purpose) {
  return mix_key(mix_key(mix_key(run_seed, trial), attempt), purpose);
}

}  // namespace vlf
