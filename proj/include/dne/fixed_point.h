#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace dne::fixed {

// Signed Q-format: `bit_width` total bits including sign, `radix` fractional bits.
struct QFormat {
  int bit_width = 16;
  int radix = 0;

  constexpr bool valid() const {
    return radix > 0 && radix < bit_width && bit_width <= 32;
  }
  constexpr std::int64_t raw_min() const {
    return -(std::int64_t{1} << (bit_width - 1));
  }
  constexpr std::int64_t raw_max() const {
    return (std::int64_t{1} << (bit_width - 1)) - 1;
  }
  double real_min() const { return std::ldexp(double(raw_min()), -radix); }
  double real_max() const { return std::ldexp(double(raw_max()), -radix); }
  double step() const { return std::ldexp(1.0, -radix); }

  friend constexpr bool operator==(const QFormat&, const QFormat&) = default;
};

inline constexpr QFormat kWeightFormat{16, 13};
inline constexpr QFormat kActivationFormat{16, 6};
inline constexpr int kProductRadix = kWeightFormat.radix + kActivationFormat.radix;

class QValue {
 public:
  constexpr QValue(std::int32_t raw, QFormat fmt) : raw_(raw), fmt_(fmt) {
    if (!fmt.valid()) throw std::invalid_argument("QValue: invalid format");
    if (raw < fmt.raw_min() || raw > fmt.raw_max())
      throw std::out_of_range("QValue: raw value does not fit format");
  }

  constexpr std::int32_t raw() const { return raw_; }
  constexpr QFormat format() const { return fmt_; }

  friend constexpr bool operator==(const QValue&, const QValue&) = default;

 private:
  std::int32_t raw_;
  QFormat fmt_;
};

// Wide product accumulator. 48 usable bits.
struct Accumulator {
  static constexpr int kUsableBits = 48;
  static constexpr std::int64_t kLimit = std::int64_t{1} << (kUsableBits - 1);

  std::int64_t raw = 0;
  int radix = kProductRadix;
};

constexpr std::int64_t saturate(std::int64_t raw, QFormat fmt) {
  if (raw < fmt.raw_min()) return fmt.raw_min();
  if (raw > fmt.raw_max()) return fmt.raw_max();
  return raw;
}

// Arithmetic right shift with round-half-to-even. shift >= 0.
constexpr std::int64_t shift_round_even(std::int64_t raw, int shift) {
  if (shift <= 0) return raw;
  const std::int64_t q = raw >> shift;  // floor
  const std::int64_t rem = raw - (q * (std::int64_t{1} << shift));
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (rem > half || (rem == half && (q & 1) != 0)) return q + 1;
  return q;
}

// Round-half-to-even of a finite double to an integer-valued double.
inline double round_half_even(double v) {
  const double fl = std::floor(v);
  const double diff = v - fl;
  if (diff > 0.5) return fl + 1.0;
  if (diff < 0.5) return fl;
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

inline std::int32_t quantize_raw(double x, QFormat fmt) {
  if (std::isnan(x)) return 0;
  if (x >= fmt.real_max()) return static_cast<std::int32_t>(fmt.raw_max());
  if (x <= fmt.real_min()) return static_cast<std::int32_t>(fmt.raw_min());
  const double scaled = round_half_even(std::ldexp(x, fmt.radix));
  return static_cast<std::int32_t>(saturate(static_cast<std::int64_t>(scaled), fmt));
}

inline QValue quantize(double x, QFormat fmt) {
  if (!fmt.valid()) throw std::invalid_argument("quantize: invalid format");
  return QValue(quantize_raw(x, fmt), fmt);
}

inline double dequantize_raw(std::int64_t raw, int radix) {
  return std::ldexp(static_cast<double>(raw), -radix);
}

inline double dequantize(const QValue& q) {
  return dequantize_raw(q.raw(), q.format().radix);
}

inline Accumulator mac(Accumulator acc, const QValue& w, const QValue& a) {
  if (acc.radix != w.format().radix + a.format().radix)
    throw std::invalid_argument("mac: accumulator radix mismatch");
  acc.raw += std::int64_t{w.raw()} * std::int64_t{a.raw()};
  assert(acc.raw < Accumulator::kLimit && acc.raw >= -Accumulator::kLimit);
  return acc;
}

inline std::int32_t requantize_relu_raw(std::int64_t acc_raw, int acc_radix, QFormat out) {
  if (acc_raw <= 0) return 0;
  return static_cast<std::int32_t>(
      saturate(shift_round_even(acc_raw, acc_radix - out.radix), out));
}

// Signed narrowing without the ReLU clamp (dense output layer).
inline std::int32_t requantize_raw(std::int64_t acc_raw, int acc_radix, QFormat out) {
  return static_cast<std::int32_t>(
      saturate(shift_round_even(acc_raw, acc_radix - out.radix), out));
}

inline QValue requantize_relu(const Accumulator& acc, QFormat out) {
  if (acc.radix < out.radix)
    throw std::invalid_argument("requantize_relu: accumulator radix below output radix");
  return QValue(requantize_relu_raw(acc.raw, acc.radix, out), out);
}

inline QValue requantize(const Accumulator& acc, QFormat out) {
  if (acc.radix < out.radix)
    throw std::invalid_argument("requantize: accumulator radix below output radix");
  return QValue(requantize_raw(acc.raw, acc.radix, out), out);
}

}  // namespace dne::fixed
