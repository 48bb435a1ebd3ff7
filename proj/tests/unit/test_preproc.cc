#include <doctest.h>

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <random>
#include <set>

#include "dne/preproc.h"

using namespace dne::preproc;

namespace {

LumaFrame random_luma(std::mt19937_64& gen) {
  LumaFrame f;
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(d(gen));
  return f;
}

ScaledFrame filled(std::uint8_t v) {
  ScaledFrame s;
  s.pixels.fill(v);
  return s;
}

// Straight double-precision bilinear with pixel-centre alignment.
double oracle_sample(const LumaFrame& f, int dx, int dy) {
  auto coord = [](int d, int src) {
    const double s = (d + 0.5) * static_cast<double>(src) / kScaledSize - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(src - 1));
  };
  const double sx = coord(dx, kFrameWidth);
  const double sy = coord(dy, kFrameHeight);
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, kFrameWidth - 1);
  const int y1 = std::min(y0 + 1, kFrameHeight - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  auto px = [&](int x, int y) { return static_cast<double>(f.pixels[y * kFrameWidth + x]); };
  return (1 - fy) * ((1 - fx) * px(x0, y0) + fx * px(x1, y0)) +
         fy * ((1 - fx) * px(x0, y1) + fx * px(x1, y1));
}

}  // namespace

TEST_SUITE("preproc") {

TEST_CASE("bt601 luma") {
  CHECK(bt601_luma({0, 0, 0}) == 0);
  CHECK(bt601_luma({255, 255, 255}) == 255);
  CHECK(bt601_luma({255, 0, 0}) == 76);   // 76.245
  CHECK(bt601_luma({0, 255, 0}) == 150);  // 149.685
  CHECK(bt601_luma({0, 0, 255}) == 29);   // 29.07
  // every RGB triple against a double computation away from ties
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> d(0, 255);
  for (int i = 0; i < 20000; ++i) {
    const Rgb c{static_cast<std::uint8_t>(d(gen)), static_cast<std::uint8_t>(d(gen)),
                static_cast<std::uint8_t>(d(gen))};
    const int thousandths = 299 * c.r + 587 * c.g + 114 * c.b;
    if (thousandths % 1000 == 500) continue;
    CHECK(bt601_luma(c) == static_cast<int>(std::lround(thousandths / 1000.0)));
  }
}

TEST_CASE("palette parsing") {
  std::string text = "# comment\n\n";
  for (int i = 0; i < kPaletteSize; ++i) text += "10 20 30\n";
  const auto p = Palette::parse(text);
  CHECK(p.entry(5) == Rgb{0x10, 0x20, 0x30});
  CHECK_THROWS(Palette::parse("00 00 00\n"));
  CHECK_THROWS(Palette::parse(text + "00 00 00\n"));
  CHECK_THROWS(Palette::parse("zz 00 00\n"));
}

TEST_CASE("shipped palette file matches the compiled palette") {
  const auto file = Palette::load(DNE_DATA_DIR "/ntsc_palette.txt");
  const auto& ref = Palette::reference_ntsc();
  for (int i = 0; i < kPaletteSize; ++i) {
    CHECK(file.entry(i) == ref.entry(i));
    CHECK(ref.luma(i) == bt601_luma(ref.entry(i)));
  }
  CHECK(ref.entry(0) == Rgb{0, 0, 0});
}

TEST_CASE("to_luma uses the palette lookup") {
  FrameBuffer f;
  f.fill(0);
  f.set(3, 4, 14);
  const auto& p = Palette::reference_ntsc();
  const auto l = to_luma(f, p);
  CHECK(l.pixels[4 * kFrameWidth + 3] == p.luma(14));
  CHECK(l.pixels[0] == p.luma(0));
}

TEST_CASE("frame buffer validation") {
  std::vector<std::uint8_t> bytes(kFramePixels, 5);
  CHECK(FrameBuffer::from_bytes(bytes).at(10, 10) == 5);
  bytes[100] = 128;
  CHECK_THROWS_AS(FrameBuffer::from_bytes(bytes), std::invalid_argument);
  bytes.pop_back();
  CHECK_THROWS_AS(FrameBuffer::from_bytes(bytes), std::invalid_argument);
  FrameBuffer f;
  CHECK_THROWS(f.set(0, 0, 200));
}

TEST_CASE("pool") {
  LumaFrame a, b;
  a.pixels.fill(10);
  b.pixels.fill(30);
  CHECK(pool(a, b).pixels == b.pixels);
  std::mt19937_64 gen(9);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_luma(gen);
    const auto y = random_luma(gen);
    CHECK(pool(x, x) == x);
    const auto p = pool(x, y);
    CHECK(p == pool(y, x));
    for (int k = 0; k < kFramePixels; ++k) {
      REQUIRE(p.pixels[k] >= x.pixels[k]);
      REQUIRE(p.pixels[k] >= y.pixels[k]);
    }
  }
}

TEST_CASE("rescale preserves constants and bounds") {
  LumaFrame c;
  c.pixels.fill(77);
  for (auto v : rescale(c).pixels) REQUIRE(v == 77);
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<int> d(40, 90);
  LumaFrame r;
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(d(gen));
  const auto [lo, hi] = std::minmax_element(r.pixels.begin(), r.pixels.end());
  for (auto v : rescale(r).pixels) {
    REQUIRE(v >= *lo);
    REQUIRE(v <= *hi);
  }
}

TEST_CASE("rescale within one grey level of a double oracle") {
  std::mt19937_64 gen(17);
  int worst = 0;
  for (int i = 0; i < 20; ++i) {
    const auto f = random_luma(gen);
    const auto s = rescale(f);
    for (int y = 0; y < kScaledSize; ++y)
      for (int x = 0; x < kScaledSize; ++x) {
        const double o = oracle_sample(f, x, y);
        const int diff = static_cast<int>(std::ceil(std::abs(s.at(x, y) - o) - 1e-9));
        worst = std::max(worst, diff);
      }
  }
  CHECK(worst <= 1);
}

TEST_CASE("bilinear taps") {
  const auto ty = bilinear_taps(kFrameHeight);
  // scale 2.5 in y: d=0 samples 0.75
  CHECK(ty[0].lo == 0);
  CHECK(ty[0].frac == 192);
  CHECK(ty[83].hi == kFrameHeight - 1);
  const auto tx = bilinear_taps(kFrameWidth);
  for (const auto& t : tx) {
    CHECK(t.lo >= 0);
    CHECK(t.hi < kFrameWidth);
    CHECK(t.frac >= 0);
    CHECK(t.frac < 256);
  }
}

TEST_CASE("stack ordering and padding") {
  const auto A = filled(1), B = filled(2), C = filled(3), D = filled(4), E = filled(5);
  const std::vector<ScaledFrame> abcd{A, B, C, D};
  const auto s = stack(abcd);
  CHECK(s.channels[0] == A);
  CHECK(s.channels[3] == D);

  FrameStack fs;
  fs.push(A);
  auto p = fs.stacked();
  for (const auto& ch : p.channels) CHECK(ch == A);
  fs.push(B);
  p = fs.stacked();
  CHECK(p.channels[0] == A);
  CHECK(p.channels[1] == A);
  CHECK(p.channels[2] == A);
  CHECK(p.channels[3] == B);
  fs.push(C);
  fs.push(D);
  fs.push(E);
  p = fs.stacked();
  CHECK(p.channels[0] == B);
  CHECK(p.channels[3] == E);
  CHECK_THROWS(stack(std::span<const ScaledFrame>{}));
}

TEST_CASE("pixel activations") {
  CHECK(pixel_activation(0) == 0);
  CHECK(pixel_activation(128) == 32);
  CHECK(pixel_activation(255) == 64);
  // scalar oracle: v/4 with the FPU's default nearest-even rounding
  REQUIRE(std::fegetround() == FE_TONEAREST);
  for (int v = 0; v < 256; ++v) {
    const auto expect = static_cast<int>(std::nearbyint(v / 4.0));
    CHECK(pixel_activation(static_cast<std::uint8_t>(v)) == expect);
    CHECK(std::abs(pixel_activation(static_cast<std::uint8_t>(v)) - v / 4.0) <= 0.5);
  }
  StackedInput s;
  s.channels[2].pixels[5] = 128;
  const auto x = to_activations(s);
  CHECK(x.size() == std::size_t(kScaledPixels) * kStackDepth);
  CHECK(x[5 * kStackDepth + 2] == 32);
  CHECK(x[5 * kStackDepth + 1] == 0);
}

TEST_CASE("pipeline pools against the previous frame and is deterministic") {
  const auto& pal = Palette::reference_ntsc();
  FrameBuffer dark, lit;
  dark.fill(0);
  lit.fill(0);
  lit.fill_rect(0, 0, kFrameWidth, kFrameHeight, 14);
  Pipeline p(pal);
  p.push(lit);
  p.push(dark);  // pooled with the lit frame
  auto s = p.stacked();
  CHECK(s.channels[3].pixels[0] == pal.luma(14));
  p.push(dark);
  s = p.stacked();
  CHECK(s.channels[3].pixels[0] == pal.luma(0));
  CHECK(s.channels[0].pixels[0] == pal.luma(14));

  Pipeline q(pal);
  q.push(lit);
  q.push(dark);
  q.push(dark);
  CHECK(q.stacked() == s);
}

}
