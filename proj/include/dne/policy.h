#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>

namespace dne::policy {

// Fibonacci LFSR of `Width` bits, right-shifting. Taps are given in the usual
// 1-based polynomial notation (x^Width + ... + 1); the output bit is bit 0 of
// the state before the step.
template <int Width, int... Taps>
class Lfsr {
  static_assert(Width > 1 && Width <= 63);
  static_assert(((Taps >= 1 && Taps <= Width) && ...));

 public:
  static constexpr std::uint64_t kMask = (std::uint64_t{1} << Width) - 1;
  static constexpr int kWidth = Width;

  explicit constexpr Lfsr(std::uint64_t seed) : state_(seed & kMask) {
    if (state_ == 0) throw std::invalid_argument("Lfsr: zero state is a fixed point");
  }

  constexpr int next_bit() {
    const int out = static_cast<int>(state_ & 1);
    const std::uint64_t fb = ((state_ >> (Width - Taps)) ^ ...) & 1;
    state_ = (state_ >> 1) | (fb << (Width - 1));
    return out;
  }

  constexpr std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// x^41 + x^38 + 1, maximal length (period 2^41 - 1).
using Lfsr41 = Lfsr<41, 41, 38>;
// x^8 + x^6 + x^5 + x^4 + 1, same construction at a width small enough to enumerate.
using Lfsr8 = Lfsr<8, 8, 6, 5, 4>;

// Seeds a 41-bit LFSR from an arbitrary 64-bit value, avoiding the zero state.
Lfsr41 seed_lfsr41(std::uint64_t seed);

// 16 successive output bits, MSB first, as a 16.16 fraction numerator.
template <class L>
constexpr std::uint32_t draw_u16(L& rng) {
  std::uint32_t v = 0;
  for (int i = 0; i < 16; ++i) v = (v << 1) | static_cast<std::uint32_t>(rng.next_bit());
  return v;
}

template <class L>
constexpr double draw_uniform(L& rng) {
  return draw_u16(rng) / 65536.0;
}

inline constexpr int kNoop = 0;

// Argmax with lowest-index tie break.
template <class T>
int select_action(std::span<const T> q) {
  if (q.empty()) throw std::invalid_argument("select_action: no action values");
  int best = 0;
  for (int i = 1; i < static_cast<int>(q.size()); ++i) {
    if (q[i] > q[best]) best = i;
  }
  return best;
}

// Per-frame sticky action state. The stickiness threshold is held with 16-bit
// resolution to match the uniform draw: repeat iff draw_u16 < threshold.
class StickyPolicy {
 public:
  StickyPolicy(double stickiness, std::uint64_t seed);

  // One console frame. Always consumes one 16-bit draw. Before the first
  // emission of an episode there is no previous action and `pending` is emitted.
  int apply(int pending);

  void reset(std::uint64_t seed);

  double stickiness() const { return threshold_ / 65536.0; }
  std::uint32_t threshold() const { return threshold_; }
  int previous() const { return previous_; }
  bool has_previous() const { return has_previous_; }
  std::uint64_t repeats() const { return repeats_; }

 private:
  std::uint32_t threshold_;
  Lfsr41 rng_;
  int previous_ = kNoop;
  bool has_previous_ = false;
  std::uint64_t repeats_ = 0;
};

}  // namespace dne::policy
