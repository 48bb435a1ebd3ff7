#include "dne/policy.h"

#include <cmath>

#include "dne/counter_rng.h"

namespace dne::policy {

Lfsr41 seed_lfsr41(std::uint64_t seed) {
  std::uint64_t s = mix64(seed) & Lfsr41::kMask;
  if (s == 0) s = 1;
  return Lfsr41(s);
}

namespace {

std::uint32_t to_threshold(double stickiness) {
  if (!(stickiness >= 0.0 && stickiness < 1.0))
    throw std::invalid_argument("stickiness must lie in [0, 1)");
  return static_cast<std::uint32_t>(std::lround(stickiness * 65536.0));
}

}  // namespace

StickyPolicy::StickyPolicy(double stickiness, std::uint64_t seed)
    : threshold_(to_threshold(stickiness)), rng_(seed_lfsr41(seed)) {}

void StickyPolicy::reset(std::uint64_t seed) {
  rng_ = seed_lfsr41(seed);
  previous_ = kNoop;
  has_previous_ = false;
  repeats_ = 0;
}

int StickyPolicy::apply(int pending) {
  const bool stick = draw_u16(rng_) < threshold_;
  int emitted = pending;
  if (stick && has_previous_) {
    emitted = previous_;
    ++repeats_;
  }
  previous_ = emitted;
  has_previous_ = true;
  return emitted;
}

}  // namespace dne::policy
