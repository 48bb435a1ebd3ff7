#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dne/preproc.h"

namespace dne::env {

using preproc::FrameBuffer;

inline constexpr std::uint32_t kDefaultFrameCap = 18000;  // 5 minutes of console time at 60 fps
inline constexpr int kMaxActions = 18;

enum class GameId : std::uint32_t {
  catch_game = 1,
  replay = 2,
};

std::string game_name(std::uint32_t game_id);
// "catch" / "replay"; throws ConfigError otherwise.
std::uint32_t parse_game(const std::string& name);

struct EnvDescriptor {
  std::uint32_t game_id = static_cast<std::uint32_t>(GameId::catch_game);
  int action_count = kMaxActions;
  std::uint32_t frame_cap = kDefaultFrameCap;

  void validate() const;
  friend bool operator==(const EnvDescriptor&, const EnvDescriptor&) = default;
};

// Paddle-under-falling-object toy game. Actions containing RIGHT/LEFT in the
// standard 18-action joystick set move the paddle; everything else holds it.
struct CatchConfig {
  int paddle_width = 24;
  int paddle_height = 6;
  int paddle_y = 190;
  int paddle_speed = 4;
  int ball_size = 6;
  int ball_speed = 4;
  int spawn_y = 20;
  int max_drops = 10;
  std::uint8_t background = 0;
  std::uint8_t wall_color = 3;
  std::uint8_t paddle_color = 15;
  std::uint8_t ball_color = 38;

  void validate() const;
  friend bool operator==(const CatchConfig&, const CatchConfig&) = default;
};

// Recorded console trace: frames plus an optional per-frame score track.
struct ReplayFixture {
  std::vector<FrameBuffer> frames;
  std::vector<std::int32_t> scores;  // empty or frames.size()
};

// AFRM file: "AFRM", u16 version, u16 flags (bit0: score track), u64 frame count,
// then frame_count * 33600 palette bytes, then (if flagged) frame_count * i32 scores.
inline constexpr std::uint16_t kFixtureFormatVersion = 1;
std::vector<std::uint8_t> encode_fixture(const ReplayFixture& fixture);
// Throws FormatError on bad magic, truncation or out-of-range pixels.
ReplayFixture decode_fixture(std::span<const std::uint8_t> bytes);

struct GameAssets {
  CatchConfig catch_config;
  std::shared_ptr<const ReplayFixture> fixture;
};

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic frame-producing state machine. step() advances one console frame.
class Environment {
 public:
  explicit Environment(const EnvDescriptor& d) : desc_(d) {}
  virtual ~Environment() = default;

  // Throws EnvError when called after the episode ended.
  const FrameBuffer& step(int action);

  std::int32_t score() const { return score_; }
  bool alive() const { return alive_; }
  // Ended because the frame cap was reached rather than by the game.
  bool truncated() const { return truncated_; }
  std::uint32_t frame_index() const { return frame_index_; }
  const FrameBuffer& frame() const { return frame_; }
  const EnvDescriptor& descriptor() const { return desc_; }

 protected:
  // Advance game state one frame, render into frame_, update score_/alive_.
  virtual void advance(int action) = 0;

  FrameBuffer frame_;
  std::int32_t score_ = 0;
  bool alive_ = true;

 private:
  EnvDescriptor desc_;
  bool truncated_ = false;
  std::uint32_t frame_index_ = 0;
};

class CatchEnv final : public Environment {
 public:
  CatchEnv(const EnvDescriptor& d, const CatchConfig& cfg, std::uint64_t seed);

  int paddle_x() const { return paddle_x_; }
  int ball_x() const { return ball_x_; }
  int ball_y() const { return ball_y_; }
  int drops() const { return drops_; }
  const CatchConfig& config() const { return cfg_; }

  // -1 left, +1 right, 0 hold.
  static int direction(int action);

 private:
  void advance(int action) override;
  void spawn();
  void render();

  CatchConfig cfg_;
  std::uint64_t key_;
  std::uint64_t balls_ = 0;
  int paddle_x_ = 0;
  int ball_x_ = 0;
  int ball_y_ = 0;
  int drops_ = 0;
};

// Replays fixture frames verbatim and ignores actions; dead after the last frame.
class ReplayEnv final : public Environment {
 public:
  ReplayEnv(const EnvDescriptor& d, std::shared_ptr<const ReplayFixture> fixture);

 private:
  void advance(int action) override;

  std::shared_ptr<const ReplayFixture> fixture_;
  std::size_t next_ = 0;
};

// Initial state for (descriptor, seed). Throws ConfigError on an unknown game id
// or missing assets.
std::unique_ptr<Environment> make_environment(const EnvDescriptor& d, std::uint64_t seed,
                                              const GameAssets& assets);

}  // namespace dne::env
