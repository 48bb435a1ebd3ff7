#include "dne/preproc.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dne/fixed_point.h"

namespace dne::preproc {

FrameBuffer FrameBuffer::from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != static_cast<std::size_t>(kFramePixels))
    throw std::invalid_argument("FrameBuffer: expected 160x210 bytes, got " +
                                std::to_string(bytes.size()));
  FrameBuffer f;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] >= kPaletteSize)
      throw std::invalid_argument("FrameBuffer: palette index >= 128 at byte " + std::to_string(i));
    f.pixels_[i] = bytes[i];
  }
  return f;
}

void FrameBuffer::set(int x, int y, std::uint8_t index) {
  if (index >= kPaletteSize) throw std::invalid_argument("FrameBuffer: palette index >= 128");
  pixels_[y * kFrameWidth + x] = index;
}

void FrameBuffer::fill(std::uint8_t index) {
  if (index >= kPaletteSize) throw std::invalid_argument("FrameBuffer: palette index >= 128");
  pixels_.fill(index);
}

void FrameBuffer::fill_rect(int x, int y, int w, int h, std::uint8_t index) {
  if (index >= kPaletteSize) throw std::invalid_argument("FrameBuffer: palette index >= 128");
  const int x0 = std::clamp(x, 0, kFrameWidth);
  const int x1 = std::clamp(x + w, 0, kFrameWidth);
  const int y0 = std::clamp(y, 0, kFrameHeight);
  const int y1 = std::clamp(y + h, 0, kFrameHeight);
  for (int row = y0; row < y1; ++row) {
    std::fill(pixels_.begin() + row * kFrameWidth + x0, pixels_.begin() + row * kFrameWidth + x1,
              index);
  }
}

std::uint8_t bt601_luma(const Rgb& c) {
  // Thousandths; exact since the coefficients have three decimals.
  const int v = 299 * c.r + 587 * c.g + 114 * c.b;
  int q = v / 1000;
  const int rem = v % 1000;
  if (rem > 500 || (rem == 500 && (q & 1) != 0)) ++q;
  return static_cast<std::uint8_t>(q);
}

Palette::Palette(const std::array<Rgb, kPaletteSize>& entries) : entries_(entries) {
  for (int i = 0; i < kPaletteSize; ++i) luma_[i] = bt601_luma(entries_[i]);
}

Palette Palette::parse(std::string_view text) {
  std::array<Rgb, kPaletteSize> entries{};
  int count = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string tok[3];
    if (!(fields >> tok[0])) continue;
    if (!(fields >> tok[1] >> tok[2]))
      throw std::invalid_argument("palette line " + std::to_string(line_no) +
                                  ": expected three hex components");
    if (count >= kPaletteSize) throw std::invalid_argument("palette: more than 128 entries");
    std::uint8_t rgb[3];
    for (int k = 0; k < 3; ++k) {
      unsigned value = 0;
      const auto* first = tok[k].data();
      const auto* last = first + tok[k].size();
      auto [ptr, ec] = std::from_chars(first, last, value, 16);
      if (ec != std::errc{} || ptr != last || tok[k].size() != 2 || value > 255)
        throw std::invalid_argument("palette line " + std::to_string(line_no) +
                                    ": bad hex component '" + tok[k] + "'");
      rgb[k] = static_cast<std::uint8_t>(value);
    }
    entries[count++] = Rgb{rgb[0], rgb[1], rgb[2]};
  }
  if (count != kPaletteSize)
    throw std::invalid_argument("palette: expected 128 entries, got " + std::to_string(count));
  return Palette(entries);
}

Palette Palette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open palette file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

namespace {

// Stella "standard" NTSC palette, 128 colours (hue-major, 8 luminance steps per hue).
constexpr std::uint32_t kNtsc[kPaletteSize] = {
    0x000000, 0x4a4a4a, 0x6f6f6f, 0x8e8e8e, 0xaaaaaa, 0xc0c0c0, 0xd6d6d6, 0xececec,
    0x484800, 0x69690f, 0x86861d, 0xa2a22a, 0xbbbb35, 0xd2d240, 0xe8e84a, 0xfcfc54,
    0x7c2c00, 0x904811, 0xa26221, 0xb47a30, 0xc3903d, 0xd2a44a, 0xdfb755, 0xecc860,
    0x901c00, 0xa33915, 0xb55328, 0xc66c3a, 0xd5824a, 0xe39759, 0xf0aa67, 0xfcbc74,
    0x940000, 0xa71a1a, 0xb83232, 0xc84848, 0xd65c5c, 0xe46f6f, 0xf08080, 0xfc9090,
    0x840064, 0x97197a, 0xa8308f, 0xb846a2, 0xc659b3, 0xd46cc3, 0xe07cd2, 0xec8ce0,
    0x500084, 0x68199a, 0x7d30ad, 0x9246c0, 0xa459d0, 0xb56ce0, 0xc57cee, 0xd48cfc,
    0x140090, 0x331aa3, 0x4e32b5, 0x6848c6, 0x7f5cd5, 0x956fe3, 0xa980f0, 0xbc90fc,
    0x000094, 0x181aa7, 0x2d32b8, 0x4248c8, 0x545cd6, 0x656fe4, 0x7580f0, 0x8490fc,
    0x001c88, 0x183b9d, 0x2d57b0, 0x4272c2, 0x548ad2, 0x65a0e1, 0x75b5ef, 0x84c8fc,
    0x003064, 0x185080, 0x2d6d98, 0x4288b0, 0x54a0c5, 0x65b7d9, 0x75cceb, 0x84e0fc,
    0x004030, 0x18624e, 0x2d8169, 0x429e82, 0x54b899, 0x65d1ae, 0x75e7c2, 0x84fcd4,
    0x004400, 0x1a661a, 0x328432, 0x48a048, 0x5cba5c, 0x6fd26f, 0x80e880, 0x90fc90,
    0x143c00, 0x355f18, 0x527e2d, 0x6e9c42, 0x87b754, 0x9ed065, 0xb4e775, 0xc8fc84,
    0x303800, 0x505916, 0x6d762b, 0x88923e, 0xa0ab4f, 0xb7c25f, 0xccd86e, 0xe0ec7c,
    0x482c00, 0x694d14, 0x866a26, 0xa28638, 0xbb9f47, 0xd2b656, 0xe8cc63, 0xfce070,
};

}  // namespace

const Palette& Palette::reference_ntsc() {
  static const Palette palette = [] {
    std::array<Rgb, kPaletteSize> entries{};
    for (int i = 0; i < kPaletteSize; ++i) {
      entries[i] = Rgb{static_cast<std::uint8_t>(kNtsc[i] >> 16),
                       static_cast<std::uint8_t>(kNtsc[i] >> 8), static_cast<std::uint8_t>(kNtsc[i])};
    }
    return Palette(entries);
  }();
  return palette;
}

void to_luma(const FrameBuffer& frame, const Palette& palette, LumaFrame& out) {
  const auto px = frame.pixels();
  for (int i = 0; i < kFramePixels; ++i) out.pixels[i] = palette.luma(px[i]);
}

LumaFrame to_luma(const FrameBuffer& frame, const Palette& palette) {
  LumaFrame out;
  to_luma(frame, palette, out);
  return out;
}

void pool(const LumaFrame& prev, const LumaFrame& cur, LumaFrame& out) {
  for (int i = 0; i < kFramePixels; ++i) out.pixels[i] = std::max(prev.pixels[i], cur.pixels[i]);
}

LumaFrame pool(const LumaFrame& prev, const LumaFrame& cur) {
  LumaFrame out;
  pool(prev, cur, out);
  return out;
}

std::array<Tap, kScaledSize> bilinear_taps(int src_size) {
  std::array<Tap, kScaledSize> taps{};
  const std::int64_t max_fp = std::int64_t{src_size - 1} * 256;
  for (int d = 0; d < kScaledSize; ++d) {
    // ((d + 0.5) * src / dst - 0.5) in 8.8 fixed point, rounded to nearest.
    const std::int64_t num = 256 * (std::int64_t{2 * d + 1} * src_size - kScaledSize);
    const std::int64_t den = 2 * kScaledSize;
    std::int64_t fp = num >= 0 ? (num + den / 2) / den : -((-num + den / 2) / den);
    fp = std::clamp<std::int64_t>(fp, 0, max_fp);
    Tap t;
    t.lo = static_cast<int>(fp >> 8);
    t.frac = static_cast<int>(fp & 255);
    t.hi = std::min(t.lo + 1, src_size - 1);
    taps[d] = t;
  }
  return taps;
}

void rescale(const LumaFrame& frame, ScaledFrame& out) {
  static const auto xs = bilinear_taps(kFrameWidth);
  static const auto ys = bilinear_taps(kFrameHeight);
  for (int dy = 0; dy < kScaledSize; ++dy) {
    const Tap& ty = ys[dy];
    const std::uint8_t* row_lo = frame.pixels.data() + ty.lo * kFrameWidth;
    const std::uint8_t* row_hi = frame.pixels.data() + ty.hi * kFrameWidth;
    const int wy1 = ty.frac;
    const int wy0 = 256 - wy1;
    for (int dx = 0; dx < kScaledSize; ++dx) {
      const Tap& tx = xs[dx];
      const int wx1 = tx.frac;
      const int wx0 = 256 - wx1;
      const int top = row_lo[tx.lo] * wx0 + row_lo[tx.hi] * wx1;
      const int bottom = row_hi[tx.lo] * wx0 + row_hi[tx.hi] * wx1;
      const int v = (top * wy0 + bottom * wy1 + (1 << 15)) >> 16;
      out.pixels[dy * kScaledSize + dx] = static_cast<std::uint8_t>(v);
    }
  }
}

ScaledFrame rescale(const LumaFrame& frame) {
  ScaledFrame out;
  rescale(frame, out);
  return out;
}

void FrameStack::push(const ScaledFrame& frame) {
  ring_[count_ % kStackDepth] = frame;
  ++count_;
}

StackedInput FrameStack::stacked() const {
  if (count_ == 0) throw std::logic_error("FrameStack: no frames pushed");
  StackedInput s;
  const std::size_t n = std::min<std::size_t>(count_, kStackDepth);
  const std::size_t oldest = count_ - n;
  for (int c = 0; c < kStackDepth; ++c) {
    const std::size_t pad = kStackDepth - n;
    const std::size_t logical = oldest + (static_cast<std::size_t>(c) < pad ? 0 : c - pad);
    s.channels[c] = ring_[logical % kStackDepth];
  }
  return s;
}

StackedInput stack(std::span<const ScaledFrame> history) {
  if (history.empty() || history.size() > kStackDepth)
    throw std::invalid_argument("stack: expected 1..4 frames");
  FrameStack fs;
  for (const auto& f : history) fs.push(f);
  return fs.stacked();
}

std::int16_t pixel_activation(std::uint8_t v) {
  return static_cast<std::int16_t>(fixed::quantize_raw(v / 256.0, fixed::kActivationFormat));
}

std::vector<std::int16_t> to_activations(const StackedInput& input) {
  static const auto lut = [] {
    std::array<std::int16_t, 256> t{};
    for (int v = 0; v < 256; ++v) t[v] = pixel_activation(static_cast<std::uint8_t>(v));
    return t;
  }();
  std::vector<std::int16_t> out(static_cast<std::size_t>(kScaledPixels) * kStackDepth);
  for (int p = 0; p < kScaledPixels; ++p) {
    for (int c = 0; c < kStackDepth; ++c) out[p * kStackDepth + c] = lut[input.channels[c].pixels[p]];
  }
  return out;
}

void Pipeline::reset() {
  stack_.reset();
  frames_ = 0;
}

void Pipeline::push(const FrameBuffer& frame) {
  to_luma(frame, *palette_, cur_);
  if (frames_ == 0) prev_ = cur_;
  pool(prev_, cur_, pooled_);
  std::swap(prev_, cur_);
  rescale(pooled_, scaled_);
  stack_.push(scaled_);
  ++frames_;
}

}  // namespace dne::preproc
