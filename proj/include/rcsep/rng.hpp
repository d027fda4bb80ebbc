#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace rcsep {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011 parameters).
/// A block is a pure function of (key, counter); the engine below walks the
/// counter so independent streams only need distinct keys.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
    }
    return ctr;
  }
};

// 64-bit finalizer used to fold seeds and identifiers into keys.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b + 0x632BE59BD9B4E019ull));
}

inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char c : s) h = (h ^ c) * 0x100000001B3ull;
  return mix64(h);
}

// Uniform double in the open interval (0,1) from 64 random bits.
inline double open_unit(std::uint64_t r) {
  return (double(r >> 11) + 0.5) * 0x1.0p-53;
}

inline std::uint64_t philox_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const auto out = Philox4x32::block(
      {std::uint32_t(a), std::uint32_t(a >> 32), std::uint32_t(b), std::uint32_t(b >> 32)},
      {std::uint32_t(seed), std::uint32_t(seed >> 32)});
  return (std::uint64_t(out[1]) << 32) | out[0];
}

/// Counter-based stream: draw k is the SplitMix64 finalizer of key + k * golden ratio
/// (Steele, Lea & Flood 2014). Keys come from Philox, so streams with different
/// (seed, id) pairs are unrelated. Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key, std::uint64_t stream = 0)
      : state_(philox_key(key, stream, 0x57AEA11ull)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  double uniform() { return open_unit((*this)()); }
  double exponential() { return -std::log(uniform()); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

// Per-bond draw: a pure function of (seed, bond index).
inline double bond_uniform(std::uint64_t seed, std::int64_t bond) {
  const std::uint64_t b = std::uint64_t(bond);
  const auto out = Philox4x32::block(
      {std::uint32_t(b), std::uint32_t(b >> 32), 0x5EEDu, 0},
      {std::uint32_t(seed), std::uint32_t(seed >> 32)});
  return open_unit((std::uint64_t(out[1]) << 32) | out[0]);
}

/// Replica streams derive from (master_seed, replica_id) only, so results do
/// not depend on how replicas are spread across threads.
inline RandomStream replica_stream(std::uint64_t master_seed, std::uint64_t replica_id,
                                   std::uint64_t purpose = 0) {
  return RandomStream(philox_key(master_seed, replica_id, 0xA11CE), purpose);
}

}  // namespace rcsep
