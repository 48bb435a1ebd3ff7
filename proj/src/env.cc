#include "dne/env.h"

#include <algorithm>

#include "dne/byte_io.h"
#include "dne/counter_rng.h"
#include "dne/error.h"

namespace dne::env {

std::string game_name(std::uint32_t game_id) {
  switch (static_cast<GameId>(game_id)) {
    case GameId::catch_game:
      return "catch";
    case GameId::replay:
      return "replay";
  }
  return "unknown(" + std::to_string(game_id) + ")";
}

std::uint32_t parse_game(const std::string& name) {
  if (name == "catch") return static_cast<std::uint32_t>(GameId::catch_game);
  if (name == "replay") return static_cast<std::uint32_t>(GameId::replay);
  throw ConfigError("unknown game '" + name + "' (expected catch or replay)");
}

void EnvDescriptor::validate() const {
  if (game_id != static_cast<std::uint32_t>(GameId::catch_game) &&
      game_id != static_cast<std::uint32_t>(GameId::replay))
    throw ConfigError("env.game: unknown game id " + std::to_string(game_id));
  if (action_count < 1 || action_count > kMaxActions)
    throw ConfigError("env.action_count: must be in [1, 18]");
  if (frame_cap < 1) throw ConfigError("env.frame_cap: must be positive");
}

void CatchConfig::validate() const {
  using preproc::kFrameHeight;
  using preproc::kFrameWidth;
  if (paddle_width < 1 || paddle_width > kFrameWidth) throw ConfigError("catch.paddle_width out of range");
  if (paddle_height < 1 || paddle_y < 0 || paddle_y + paddle_height > kFrameHeight)
    throw ConfigError("catch.paddle_y/paddle_height out of range");
  if (paddle_speed < 0) throw ConfigError("catch.paddle_speed must be >= 0");
  if (ball_size < 1 || ball_size > kFrameWidth) throw ConfigError("catch.ball_size out of range");
  if (ball_speed < 1) throw ConfigError("catch.ball_speed must be >= 1");
  if (spawn_y < 0 || spawn_y + ball_size >= paddle_y) throw ConfigError("catch.spawn_y out of range");
  if (max_drops < 1) throw ConfigError("catch.max_drops must be >= 1");
  for (auto c : {background, wall_color, paddle_color, ball_color}) {
    if (c >= preproc::kPaletteSize) throw ConfigError("catch colours must be palette indices < 128");
  }
}

std::vector<std::uint8_t> encode_fixture(const ReplayFixture& fixture) {
  if (!fixture.scores.empty() && fixture.scores.size() != fixture.frames.size())
    throw std::invalid_argument("fixture score track length must match frame count");
  ByteWriter w;
  w.magic("AFRM");
  w.u16(kFixtureFormatVersion);
  w.u16(fixture.scores.empty() ? 0 : 1);
  w.u64(fixture.frames.size());
  for (const auto& f : fixture.frames) w.bytes(f.pixels());
  for (const auto s : fixture.scores) w.i32(s);
  return w.take();
}

ReplayFixture decode_fixture(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 16 || !r.magic("AFRM")) throw FormatError("not a frame fixture (bad magic)");
  const auto version = r.u16();
  if (version != kFixtureFormatVersion)
    throw FormatError("unsupported fixture version " + std::to_string(version));
  const auto flags = r.u16();
  const auto count = r.u64();
  const std::uint64_t frame_bytes = count * preproc::kFramePixels;
  const std::uint64_t score_bytes = (flags & 1) ? count * 4 : 0;
  if (r.remaining() < frame_bytes + score_bytes) throw FormatError("fixture truncated");
  ReplayFixture fx;
  fx.frames.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    try {
      fx.frames.push_back(FrameBuffer::from_bytes(r.bytes(preproc::kFramePixels)));
    } catch (const std::invalid_argument& e) {
      throw FormatError("fixture frame " + std::to_string(i) + ": " + e.what());
    }
  }
  if (flags & 1) {
    fx.scores.resize(count);
    for (auto& s : fx.scores) s = r.i32();
  }
  return fx;
}

const FrameBuffer& Environment::step(int action) {
  if (!alive_) throw EnvError("step called after the episode ended");
  if (action < 0 || action >= desc_.action_count)
    throw EnvError("action " + std::to_string(action) + " outside the action set");
  advance(action);
  ++frame_index_;
  if (alive_ && frame_index_ >= desc_.frame_cap) {
    alive_ = false;
    truncated_ = true;
  }
  return frame_;
}

CatchEnv::CatchEnv(const EnvDescriptor& d, const CatchConfig& cfg, std::uint64_t seed)
    : Environment(d), cfg_(cfg), key_(derive_key(seed, 0xCA7C4ull)) {
  cfg_.validate();
  paddle_x_ = (preproc::kFrameWidth - cfg_.paddle_width) / 2;
  spawn();
  render();
}

int CatchEnv::direction(int action) {
  switch (action) {
    case 3: case 6: case 8: case 11: case 14: case 16:
      return 1;
    case 4: case 7: case 9: case 12: case 15: case 17:
      return -1;
    default:
      return 0;
  }
}

void CatchEnv::spawn() {
  const CounterRng rng(key_);
  const auto span = static_cast<std::uint64_t>(preproc::kFrameWidth - cfg_.ball_size + 1);
  ball_x_ = static_cast<int>(rng.below(0, balls_++, span));
  ball_y_ = cfg_.spawn_y;
}

void CatchEnv::advance(int action) {
  paddle_x_ = std::clamp(paddle_x_ + direction(action) * cfg_.paddle_speed, 0,
                         preproc::kFrameWidth - cfg_.paddle_width);
  ball_y_ += cfg_.ball_speed;
  if (ball_y_ + cfg_.ball_size >= cfg_.paddle_y) {
    const bool overlap = ball_x_ + cfg_.ball_size > paddle_x_ && ball_x_ < paddle_x_ + cfg_.paddle_width;
    if (overlap) {
      ++score_;
    } else if (++drops_ >= cfg_.max_drops) {
      alive_ = false;
    }
    spawn();
  }
  render();
}

void CatchEnv::render() {
  frame_.fill(cfg_.background);
  frame_.fill_rect(0, 0, preproc::kFrameWidth, 8, cfg_.wall_color);
  // Remaining lives as pips in the top wall.
  for (int i = 0; i < cfg_.max_drops - drops_; ++i) frame_.fill_rect(4 + i * 8, 2, 4, 4, cfg_.paddle_color);
  frame_.fill_rect(ball_x_, ball_y_, cfg_.ball_size, cfg_.ball_size, cfg_.ball_color);
  frame_.fill_rect(paddle_x_, cfg_.paddle_y, cfg_.paddle_width, cfg_.paddle_height, cfg_.paddle_color);
}

ReplayEnv::ReplayEnv(const EnvDescriptor& d, std::shared_ptr<const ReplayFixture> fixture)
    : Environment(d), fixture_(std::move(fixture)) {
  if (!fixture_ || fixture_->frames.empty()) throw ConfigError("replay: fixture has no frames");
  if (!fixture_->scores.empty() && fixture_->scores.size() != fixture_->frames.size())
    throw ConfigError("replay: score track length does not match frame count");
}

void ReplayEnv::advance(int) {
  frame_ = fixture_->frames[next_];
  if (!fixture_->scores.empty()) score_ = fixture_->scores[next_];
  ++next_;
  if (next_ >= fixture_->frames.size()) alive_ = false;
}

std::unique_ptr<Environment> make_environment(const EnvDescriptor& d, std::uint64_t seed,
                                              const GameAssets& assets) {
  d.validate();
  switch (static_cast<GameId>(d.game_id)) {
    case GameId::catch_game:
      return std::make_unique<CatchEnv>(d, assets.catch_config, seed);
    case GameId::replay:
      if (!assets.fixture) throw ConfigError("replay game requires a frame fixture");
      return std::make_unique<ReplayEnv>(d, assets.fixture);
  }
  throw ConfigError("unknown game id " + std::to_string(d.game_id));
}

}  // namespace dne::env
