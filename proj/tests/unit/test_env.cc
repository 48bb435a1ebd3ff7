#include <doctest.h>

#include "dne/env.h"
#include "dne/error.h"

using namespace dne;
using namespace dne::env;

namespace {

constexpr int kRight = 3;
constexpr int kLeft = 4;

// Moves the paddle centre towards the ball centre.
int chase(const CatchEnv& e) {
  const auto& c = e.config();
  const int paddle_mid = e.paddle_x() + c.paddle_width / 2;
  const int ball_mid = e.ball_x() + c.ball_size / 2;
  if (ball_mid > paddle_mid + 1) return kRight;
  if (ball_mid < paddle_mid - 1) return kLeft;
  return 0;
}

ReplayFixture make_fixture(int n, bool scores) {
  ReplayFixture fx;
  for (int i = 0; i < n; ++i) {
    FrameBuffer f;
    f.fill(static_cast<std::uint8_t>(i % 128));
    fx.frames.push_back(f);
    if (scores) fx.scores.push_back(i * 10);
  }
  return fx;
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("same seed gives identical frames, different seeds diverge") {
  EnvDescriptor d;
  CatchEnv a(d, {}, 1), b(d, {}, 1), c(d, {}, 2);
  CHECK(a.frame() == b.frame());
  CHECK(a.frame_index() == 0);
  bool differ = false;
  for (int i = 0; i < 300 && a.alive(); ++i) {
    const int act = (i / 30) % 2 ? kLeft : kRight;
    CHECK(a.step(act) == b.step(act));
    if (c.alive()) differ |= !(c.step(act) == a.frame());
  }
  CHECK(differ);
}

TEST_CASE("frame pixels stay inside the palette") {
  CatchEnv e(EnvDescriptor{}, {}, 3);
  for (int i = 0; i < 200; ++i) {
    for (auto p : e.step(i % 18).pixels()) REQUIRE(p < 128);
  }
}

TEST_CASE("noop ends the episode before the cap") {
  EnvDescriptor d;
  CatchEnv e(d, {}, 4);
  while (e.alive()) e.step(0);
  CHECK(e.frame_index() <= d.frame_cap);
  CHECK_FALSE(e.truncated());
  CHECK(e.drops() == 10);
  CHECK_THROWS_AS(e.step(0), EnvError);
}

TEST_CASE("frame cap truncates") {
  EnvDescriptor d;
  d.frame_cap = 8;
  CatchEnv e(d, {}, 4);
  while (e.alive()) e.step(0);
  CHECK(e.frame_index() == 8);
  CHECK(e.truncated());
}

TEST_CASE("a chasing policy catches every ball") {
  EnvDescriptor d;
  d.frame_cap = 4000;
  CatchEnv e(d, {}, 11);
  int last = 0;
  while (e.alive()) {
    e.step(chase(e));
    CHECK(e.score() - last <= 1);
    CHECK(e.score() >= last);
    last = e.score();
  }
  CHECK(e.truncated());
  CHECK(e.drops() == 0);
  // a ball falls (paddle_y - ball_size - spawn_y) / ball_speed frames, +1 for the landing step
  const auto& c = e.config();
  const int fall = (c.paddle_y - c.ball_size - c.spawn_y + c.ball_speed - 1) / c.ball_speed;
  CHECK(e.score() == static_cast<int>(d.frame_cap) / fall);
}

TEST_CASE("action mapping") {
  for (int a : {3, 6, 8, 11, 14, 16}) CHECK(CatchEnv::direction(a) == 1);
  for (int a : {4, 7, 9, 12, 15, 17}) CHECK(CatchEnv::direction(a) == -1);
  for (int a : {0, 1, 2, 5, 10, 13}) CHECK(CatchEnv::direction(a) == 0);
  CatchEnv e(EnvDescriptor{}, {}, 1);
  CHECK_THROWS_AS(e.step(18), EnvError);
  CHECK_THROWS_AS(e.step(-1), EnvError);
}

TEST_CASE("descriptor and config validation") {
  EnvDescriptor d;
  d.game_id = 99;
  CHECK_THROWS_AS(make_environment(d, 1, {}), ConfigError);
  d = EnvDescriptor{};
  d.frame_cap = 0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  CatchConfig c;
  c.paddle_width = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_game("catch") == 1);
  CHECK_THROWS_AS(parse_game("pong"), ConfigError);
  EnvDescriptor r;
  r.game_id = static_cast<std::uint32_t>(GameId::replay);
  CHECK_THROWS_AS(make_environment(r, 1, {}), ConfigError);
}

TEST_CASE("replay reproduces the fixture") {
  auto fx = std::make_shared<const ReplayFixture>(make_fixture(6, true));
  EnvDescriptor d;
  d.game_id = static_cast<std::uint32_t>(GameId::replay);
  auto e = make_environment(d, 0, GameAssets{{}, fx});
  int k = 0;
  while (e->alive()) {
    const auto& f = e->step(k % 18);
    CHECK(f == fx->frames[k]);
    ++k;
  }
  CHECK(k == 6);
  CHECK(e->score() == 50);
  CHECK_FALSE(e->truncated());
}

TEST_CASE("fixture encoding round trip and truncation") {
  for (bool scores : {false, true}) {
    const auto fx = make_fixture(3, scores);
    const auto bytes = encode_fixture(fx);
    CHECK(bytes.size() == 16 + 3 * 33600 + (scores ? 12 : 0));
    const auto back = decode_fixture(bytes);
    CHECK(back.frames == fx.frames);
    CHECK(back.scores == fx.scores);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
    CHECK_THROWS_AS(decode_fixture(cut), FormatError);
  }
  auto bytes = encode_fixture(make_fixture(1, false));
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_fixture(bytes), FormatError);
  bytes = encode_fixture(make_fixture(1, false));
  bytes[20] = 200;
  CHECK_THROWS_AS(decode_fixture(bytes), FormatError);
}

}
