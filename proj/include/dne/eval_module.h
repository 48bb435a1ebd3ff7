#pragma once

#include <atomic>
#include <chrono>
#include <compare>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "dne/env.h"
#include "dne/network.h"
#include "dne/preproc.h"

namespace dne::eval {

inline constexpr int kFramesPerDecision = 4;
inline constexpr double kDefaultStickiness = 0.25;

enum class Termination : std::uint8_t { dead = 0, timeout = 1, stopped = 2 };
std::string to_string(Termination t);

struct FitnessRecord {
  std::uint64_t genome_id = 0;
  std::int32_t score = 0;
  std::uint32_t frames = 0;
  Termination termination = Termination::dead;
  std::uint64_t eval_seed = 0;

  friend bool operator==(const FitnessRecord&, const FitnessRecord&) = default;
  friend auto operator<=>(const FitnessRecord& a, const FitnessRecord& b) {
    return std::tie(a.genome_id, a.eval_seed, a.score, a.frames, a.termination) <=>
           std::tie(b.genome_id, b.eval_seed, b.score, b.frames, b.termination);
  }
};

struct FrameProgress {
  std::uint32_t frame_count = 0;
  std::uint32_t inferences = 0;
  std::int32_t score = 0;
  int emitted_action = 0;
};

struct EpisodeOptions {
  double stickiness = kDefaultStickiness;
  env::GameAssets assets;
  const preproc::Palette* palette = nullptr;  // reference NTSC palette when null
  const std::atomic<bool>* stop = nullptr;    // checked at every frame boundary
  std::function<void(const FrameProgress&)> on_frame;
};

// The closed loop env -> luma -> pool -> rescale -> stack -> network -> argmax ->
// sticky action -> env, one inference every fourth console frame. Pure function
// of (network weights, descriptor, seed, options) unless stopped.
FitnessRecord run_episode(const net::Network& network, std::uint64_t genome_id,
                          const env::EnvDescriptor& d, std::uint64_t seed,
                          const EpisodeOptions& options = {});
FitnessRecord run_episode(const net::Genome& genome, const env::EnvDescriptor& d, std::uint64_t seed,
                          const EpisodeOptions& options = {});

// Register map (byte offsets). See PROTOCOL.md.
namespace reg {
inline constexpr std::uint32_t kGameId = 0x00;      // u32 rw
inline constexpr std::uint32_t kStatus = 0x04;      // u32 ro
inline constexpr std::uint32_t kScore = 0x08;       // i32 ro
inline constexpr std::uint32_t kFrameCount = 0x0C;  // u32 ro
inline constexpr std::uint32_t kClockCount = 0x10;  // u64 ro, ns since START
inline constexpr std::uint32_t kCommand = 0x18;     // u32 wo
inline constexpr std::uint32_t kFrameCap = 0x1C;    // u32 rw
inline constexpr std::uint32_t kEvalSeed = 0x20;    // u64 rw
inline constexpr std::uint32_t kGenomeId = 0x28;    // u64 rw
inline constexpr std::uint32_t kStickiness = 0x30;  // u32 rw, units of 1/65536
inline constexpr std::uint32_t kTermination = 0x34; // u32 ro, valid in DONE_* states
inline constexpr std::uint32_t kInferences = 0x38;  // u32 ro
inline constexpr std::uint32_t kParamWindow = 0x10000000;
inline constexpr std::uint32_t kRomWindow = 0x20000000;
inline constexpr std::uint32_t kRomWindowSize = 64u << 20;

inline constexpr std::uint32_t kCmdReset = 1u << 0;
inline constexpr std::uint32_t kCmdStart = 1u << 1;
inline constexpr std::uint32_t kCmdStop = 1u << 2;
}  // namespace reg

enum class Status : std::uint32_t {
  idle = 0,
  running = 1,
  done_dead = 2,
  done_timeout = 3,
  done_stopped = 4,
};

enum class RegError : std::uint32_t {
  ok = 0,
  bad_address = 1,
  read_only = 2,
  write_only = 3,
  illegal_transition = 4,
  busy = 5,        // write to a configuration register or window while RUNNING
  not_ready = 6,   // START without a complete parameter upload / valid ROM
  out_of_range = 7,
};
std::string to_string(RegError e);

struct RegRead {
  RegError error = RegError::ok;
  std::uint64_t value = 0;
};

struct ModuleConfig {
  env::CatchConfig catch_config;
  const preproc::Palette* palette = nullptr;
  net::NetworkSpec spec = net::default_spec();
};

// One fitness evaluation module: a register file in front of an episode loop that
// runs on its own thread. Register access never blocks the loop.
class EvaluationModule {
 public:
  explicit EvaluationModule(ModuleConfig config = {});
  ~EvaluationModule();
  EvaluationModule(const EvaluationModule&) = delete;
  EvaluationModule& operator=(const EvaluationModule&) = delete;

  RegRead register_read(std::uint32_t addr) const;
  RegError register_write(std::uint32_t addr, std::uint64_t value);
  // Byte writes into the parameter or ROM window.
  RegError window_write(std::uint32_t addr, std::span<const std::uint8_t> bytes);

  // Convenience: uploads the genome into the parameter window and sets GENOME_ID.
  RegError load_genome(const net::Genome& genome);

  Status status() const { return static_cast<Status>(status_.load(std::memory_order_acquire)); }
  std::optional<FitnessRecord> last_record() const;
  std::size_t param_window_size() const { return param_bytes_.size(); }

  // Called on the module thread when an episode finishes.
  void set_completion_handler(std::function<void(const FitnessRecord&)> handler);

  // Blocks until the module leaves RUNNING or the timeout expires.
  bool wait_done(std::chrono::milliseconds timeout) const;

 private:
  RegError command(std::uint32_t bits);
  void loop();
  std::uint64_t clock_now() const;

  ModuleConfig config_;

  mutable std::mutex mu_;  // configuration registers, windows, handler
  mutable std::condition_variable cv_;
  std::uint32_t game_id_ = static_cast<std::uint32_t>(env::GameId::catch_game);
  std::uint32_t frame_cap_ = env::kDefaultFrameCap;
  std::uint64_t eval_seed_ = 0;
  std::uint64_t genome_id_ = 0;
  std::uint32_t stickiness_ = 16384;
  std::vector<std::uint8_t> param_bytes_;
  std::size_t param_prefix_ = 0;
  std::vector<std::uint8_t> rom_bytes_;
  std::shared_ptr<const env::ReplayFixture> fixture_;
  bool rom_dirty_ = true;
  std::optional<FitnessRecord> last_;
  std::function<void(const FitnessRecord&)> on_complete_;
  bool start_requested_ = false;
  bool shutdown_ = false;

  std::atomic<std::uint32_t> status_{static_cast<std::uint32_t>(Status::idle)};
  std::atomic<std::int32_t> score_{0};
  std::atomic<std::uint32_t> frame_count_{0};
  std::atomic<std::uint32_t> inferences_{0};
  std::atomic<std::uint32_t> termination_{0};
  std::atomic<std::int64_t> start_ns_{0};
  std::atomic<std::uint64_t> final_clock_{0};
  std::atomic<bool> stop_{false};

  std::thread thread_;
};

}  // namespace dne::eval
