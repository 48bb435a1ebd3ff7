#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace dne {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// A keyed bijection of a 128-bit counter; every draw is addressed, not sequenced,
// so results never depend on evaluation order.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit constexpr Philox4x32(std::uint64_t key)
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  constexpr Block operator()(Block ctr) const {
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, k);
      k[0] += kW0;
      k[1] += kW1;
    }
    return ctr;
  }

  constexpr Block operator()(std::uint64_t hi, std::uint64_t lo) const {
    return (*this)(Block{static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(lo >> 32),
                         static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)});
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;

  static constexpr Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }

  std::array<std::uint32_t, 2> key_;
};

// SplitMix64 finalizer; used to derive keys from (seed, tag) tuples.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag));
}

// Stream of draws addressed by (stream, index) under one key.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : philox_(key) {}

  constexpr std::uint64_t bits64(std::uint64_t stream, std::uint64_t index) const {
    const auto b = philox_(stream, index);
    return (std::uint64_t{b[1]} << 32) | b[0];
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform(std::uint64_t stream, std::uint64_t index) const {
    return static_cast<double>(bits64(stream, index) >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n) by rejection-free multiply-shift on 64 bits (bias < 2^-32 for n < 2^32).
  std::uint64_t below(std::uint64_t stream, std::uint64_t index, std::uint64_t n) const {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(bits64(stream, index)) * static_cast<unsigned __int128>(n);
    return static_cast<std::uint64_t>(wide >> 64);
  }

  // Standard normal via Box-Muller on the two 64-bit halves of one block.
  double normal(std::uint64_t stream, std::uint64_t index) const {
    const auto b = philox_(stream, index);
    const std::uint64_t x = (std::uint64_t{b[1]} << 32) | b[0];
    const std::uint64_t y = (std::uint64_t{b[3]} << 32) | b[2];
    const double u1 = (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;  // (0, 1)
    const double u2 = static_cast<double>(y >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  Philox4x32 philox_;
};

}  // namespace dne
