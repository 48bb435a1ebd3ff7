#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace dne::preproc {

inline constexpr int kFrameWidth = 160;
inline constexpr int kFrameHeight = 210;
inline constexpr int kFramePixels = kFrameWidth * kFrameHeight;
inline constexpr int kScaledSize = 84;
inline constexpr int kScaledPixels = kScaledSize * kScaledSize;
inline constexpr int kStackDepth = 4;
inline constexpr int kPaletteSize = 128;

// 160x210 palette-indexed console frame, row-major. Every pixel < 128.
class FrameBuffer {
 public:
  FrameBuffer() { pixels_.fill(0); }

  // Throws std::invalid_argument on wrong size or an index >= 128.
  static FrameBuffer from_bytes(std::span<const std::uint8_t> bytes);

  std::uint8_t at(int x, int y) const { return pixels_[y * kFrameWidth + x]; }
  void set(int x, int y, std::uint8_t index);
  void fill(std::uint8_t index);
  void fill_rect(int x, int y, int w, int h, std::uint8_t index);

  std::span<const std::uint8_t, kFramePixels> pixels() const { return pixels_; }

  friend bool operator==(const FrameBuffer&, const FrameBuffer&) = default;

 private:
  std::array<std::uint8_t, kFramePixels> pixels_;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

class Palette {
 public:
  explicit Palette(const std::array<Rgb, kPaletteSize>& entries);

  // 128 lines of "RR GG BB" hex; blank lines and '#' comments are skipped.
  static Palette parse(std::string_view text);
  static Palette load(const std::filesystem::path& path);
  // The NTSC palette compiled into the library (identical to data/ntsc_palette.txt).
  static const Palette& reference_ntsc();

  const Rgb& entry(int index) const { return entries_[index]; }
  std::uint8_t luma(int index) const { return luma_[index]; }

 private:
  std::array<Rgb, kPaletteSize> entries_;
  std::array<std::uint8_t, kPaletteSize> luma_;
};

// BT.601 luma, round-half-to-even of 0.299 R + 0.587 G + 0.114 B, computed exactly in integers.
std::uint8_t bt601_luma(const Rgb& c);

struct LumaFrame {
  std::array<std::uint8_t, kFramePixels> pixels{};
  friend bool operator==(const LumaFrame&, const LumaFrame&) = default;
};

struct ScaledFrame {
  std::array<std::uint8_t, kScaledPixels> pixels{};
  std::uint8_t at(int x, int y) const { return pixels[y * kScaledSize + x]; }
  friend bool operator==(const ScaledFrame&, const ScaledFrame&) = default;
};

// Channels oldest-first.
struct StackedInput {
  std::array<ScaledFrame, kStackDepth> channels{};
  friend bool operator==(const StackedInput&, const StackedInput&) = default;
};

void to_luma(const FrameBuffer& frame, const Palette& palette, LumaFrame& out);
LumaFrame to_luma(const FrameBuffer& frame, const Palette& palette);

void pool(const LumaFrame& prev, const LumaFrame& cur, LumaFrame& out);
LumaFrame pool(const LumaFrame& prev, const LumaFrame& cur);

void rescale(const LumaFrame& frame, ScaledFrame& out);
ScaledFrame rescale(const LumaFrame& frame);

// Sliding window over the last four scaled frames. Until four frames have been
// pushed, the oldest frame is repeated to fill the front of the stack.
class FrameStack {
 public:
  void reset() { count_ = 0; }
  void push(const ScaledFrame& frame);
  std::size_t size() const { return count_; }
  StackedInput stacked() const;

 private:
  std::array<ScaledFrame, kStackDepth> ring_{};
  std::size_t count_ = 0;
};

// Four frames -> StackedInput. `history` holds 1..4 frames, oldest first.
StackedInput stack(std::span<const ScaledFrame> history);

// Maps pixel v to the activation format as quantize(v / 256). Output layout is HWC
// (84 x 84 x 4, channel fastest), raw activation units.
std::vector<std::int16_t> to_activations(const StackedInput& input);
std::int16_t pixel_activation(std::uint8_t v);

// Per-episode pipeline state: luma, pooling against the previous console frame,
// rescale and stacking. The first frame is pooled with itself.
class Pipeline {
 public:
  explicit Pipeline(const Palette& palette) : palette_(&palette) {}

  void reset();
  void push(const FrameBuffer& frame);
  StackedInput stacked() const { return stack_.stacked(); }
  std::size_t frames_seen() const { return frames_; }

 private:
  const Palette* palette_;
  LumaFrame prev_{};
  LumaFrame cur_{};
  LumaFrame pooled_{};
  ScaledFrame scaled_{};
  FrameStack stack_;
  std::size_t frames_ = 0;
};

// Bilinear sampling taps for one destination coordinate: source index pair and
// the 8-bit weight of the upper neighbour.
struct Tap {
  int lo = 0;
  int hi = 0;
  int frac = 0;  // 0..255
};
std::array<Tap, kScaledSize> bilinear_taps(int src_size);

}  // namespace dne::preproc
