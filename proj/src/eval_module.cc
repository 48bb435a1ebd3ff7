#include "dne/eval_module.h"

#include <algorithm>
#include <cstring>

#include "dne/counter_rng.h"
#include "dne/error.h"
#include "dne/genome_io.h"
#include "dne/policy.h"

namespace dne::eval {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::dead:
      return "dead";
    case Termination::timeout:
      return "timeout";
    case Termination::stopped:
      return "stopped";
  }
  return "unknown";
}

std::string to_string(RegError e) {
  switch (e) {
    case RegError::ok: return "ok";
    case RegError::bad_address: return "bad_address";
    case RegError::read_only: return "read_only";
    case RegError::write_only: return "write_only";
    case RegError::illegal_transition: return "illegal_transition";
    case RegError::busy: return "busy";
    case RegError::not_ready: return "not_ready";
    case RegError::out_of_range: return "out_of_range";
  }
  return "unknown";
}

FitnessRecord run_episode(const net::Network& network, std::uint64_t genome_id,
                          const env::EnvDescriptor& d, std::uint64_t seed,
                          const EpisodeOptions& options) {
  const preproc::Palette& palette =
      options.palette ? *options.palette : preproc::Palette::reference_ntsc();
  auto environment = env::make_environment(d, seed, options.assets);
  preproc::Pipeline pipeline(palette);
  policy::StickyPolicy sticky(options.stickiness, derive_key(seed, 0x571C4ull));

  FitnessRecord rec;
  rec.genome_id = genome_id;
  rec.eval_seed = seed;

  FrameProgress progress;
  int pending = policy::kNoop;
  bool stopped = false;
  while (environment->alive()) {
    if (options.stop && options.stop->load(std::memory_order_relaxed)) {
      stopped = true;
      break;
    }
    progress.emitted_action = sticky.apply(pending);
    pipeline.push(environment->step(progress.emitted_action));
    ++progress.frame_count;
    progress.score = environment->score();
    if (progress.frame_count % kFramesPerDecision == 0) {
      const auto x = preproc::to_activations(pipeline.stacked());
      const auto q = network.forward(x);
      pending = policy::select_action(
          std::span<const std::int16_t>(q).first(static_cast<std::size_t>(d.action_count)));
      ++progress.inferences;
    }
    if (options.on_frame) options.on_frame(progress);
  }

  rec.score = environment->score();
  rec.frames = progress.frame_count;
  if (stopped) {
    rec.termination = Termination::stopped;
  } else {
    rec.termination = environment->truncated() ? Termination::timeout : Termination::dead;
  }
  return rec;
}

FitnessRecord run_episode(const net::Genome& genome, const env::EnvDescriptor& d, std::uint64_t seed,
                          const EpisodeOptions& options) {
  const net::Network network(net::default_spec(), genome);
  return run_episode(network, genome.id(), d, seed, options);
}

namespace {

std::int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

EvaluationModule::EvaluationModule(ModuleConfig config) : config_(std::move(config)) {
  config_.catch_config.validate();
  param_bytes_.assign(config_.spec.total_params * 2, 0);
  thread_ = std::thread([this] { loop(); });
}

EvaluationModule::~EvaluationModule() {
  {
    std::lock_guard lock(mu_);
    shutdown_ = true;
    stop_.store(true);
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

std::uint64_t EvaluationModule::clock_now() const {
  if (status() == Status::running) {
    const auto start = start_ns_.load(std::memory_order_acquire);
    return static_cast<std::uint64_t>(std::max<std::int64_t>(0, steady_ns() - start));
  }
  return final_clock_.load(std::memory_order_acquire);
}

RegRead EvaluationModule::register_read(std::uint32_t addr) const {
  switch (addr) {
    case reg::kStatus:
      return {RegError::ok, status_.load(std::memory_order_acquire)};
    case reg::kScore:
      return {RegError::ok, static_cast<std::uint32_t>(score_.load(std::memory_order_acquire))};
    case reg::kFrameCount:
      return {RegError::ok, frame_count_.load(std::memory_order_acquire)};
    case reg::kInferences:
      return {RegError::ok, inferences_.load(std::memory_order_acquire)};
    case reg::kTermination:
      return {RegError::ok, termination_.load(std::memory_order_acquire)};
    case reg::kClockCount:
      return {RegError::ok, clock_now()};
    case reg::kCommand:
      return {RegError::write_only, 0};
    default:
      break;
  }
  std::lock_guard lock(mu_);
  switch (addr) {
    case reg::kGameId:
      return {RegError::ok, game_id_};
    case reg::kFrameCap:
      return {RegError::ok, frame_cap_};
    case reg::kEvalSeed:
      return {RegError::ok, eval_seed_};
    case reg::kGenomeId:
      return {RegError::ok, genome_id_};
    case reg::kStickiness:
      return {RegError::ok, stickiness_};
    default:
      break;
  }
  if ((addr >= reg::kParamWindow && addr < reg::kParamWindow + param_bytes_.size()) ||
      (addr >= reg::kRomWindow && addr < reg::kRomWindow + reg::kRomWindowSize))
    return {RegError::write_only, 0};
  return {RegError::bad_address, 0};
}

RegError EvaluationModule::register_write(std::uint32_t addr, std::uint64_t value) {
  if (addr >= reg::kParamWindow) {
    // Single-register writes into a window store the value as 8 little-endian bytes.
    std::uint8_t bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(value >> (8 * i));
    return window_write(addr, bytes);
  }
  switch (addr) {
    case reg::kStatus:
    case reg::kScore:
    case reg::kFrameCount:
    case reg::kClockCount:
    case reg::kTermination:
    case reg::kInferences:
      return RegError::read_only;
    case reg::kCommand:
      if (value > 0xffffffffu) return RegError::out_of_range;
      return command(static_cast<std::uint32_t>(value));
    default:
      break;
  }
  std::lock_guard lock(mu_);
  const bool running = status() == Status::running;
  switch (addr) {
    case reg::kGameId:
      if (running) return RegError::busy;
      if (value > 0xffffffffu) return RegError::out_of_range;
      game_id_ = static_cast<std::uint32_t>(value);
      return RegError::ok;
    case reg::kFrameCap:
      if (running) return RegError::busy;
      if (value == 0 || value > 0xffffffffu) return RegError::out_of_range;
      frame_cap_ = static_cast<std::uint32_t>(value);
      return RegError::ok;
    case reg::kEvalSeed:
      if (running) return RegError::busy;
      eval_seed_ = value;
      return RegError::ok;
    case reg::kGenomeId:
      if (running) return RegError::busy;
      genome_id_ = value;
      return RegError::ok;
    case reg::kStickiness:
      if (running) return RegError::busy;
      if (value >= 65536) return RegError::out_of_range;
      stickiness_ = static_cast<std::uint32_t>(value);
      return RegError::ok;
    default:
      break;
  }
  return RegError::bad_address;
}

RegError EvaluationModule::window_write(std::uint32_t addr, std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  const auto in_window = [&](std::uint32_t base, std::size_t size) {
    return addr >= base && addr - base < size;
  };
  if (in_window(reg::kParamWindow, param_bytes_.size())) {
    if (status() == Status::running) return RegError::busy;
    const std::size_t off = addr - reg::kParamWindow;
    if (bytes.size() > param_bytes_.size() - off) return RegError::out_of_range;
    std::memcpy(param_bytes_.data() + off, bytes.data(), bytes.size());
    if (off <= param_prefix_) param_prefix_ = std::max(param_prefix_, off + bytes.size());
    return RegError::ok;
  }
  if (in_window(reg::kRomWindow, reg::kRomWindowSize)) {
    if (status() == Status::running) return RegError::busy;
    const std::size_t off = addr - reg::kRomWindow;
    if (bytes.size() > reg::kRomWindowSize - off) return RegError::out_of_range;
    if (off == 0) rom_bytes_.clear();  // a write at the window base starts a new image
    if (rom_bytes_.size() < off + bytes.size()) rom_bytes_.resize(off + bytes.size());
    std::memcpy(rom_bytes_.data() + off, bytes.data(), bytes.size());
    rom_dirty_ = true;
    return RegError::ok;
  }
  return RegError::bad_address;
}

RegError EvaluationModule::load_genome(const net::Genome& genome) {
  if (genome.size() != config_.spec.total_params) return RegError::out_of_range;
  const auto bytes = weight_bytes(genome);
  if (auto e = window_write(reg::kParamWindow, bytes); e != RegError::ok) return e;
  return register_write(reg::kGenomeId, genome.id());
}

RegError EvaluationModule::command(std::uint32_t bits) {
  if (bits & ~(reg::kCmdReset | reg::kCmdStart | reg::kCmdStop)) return RegError::out_of_range;
  {
    std::lock_guard lock(mu_);
    Status s = status();
    if (bits & reg::kCmdStop) {
      if (s != Status::running) return RegError::illegal_transition;
      stop_.store(true, std::memory_order_release);
      return RegError::ok;  // STOP combined with other bits: the rest is ignored
    }
    if (bits & reg::kCmdReset) {
      if (s == Status::running) return RegError::illegal_transition;
      score_.store(0);
      frame_count_.store(0);
      inferences_.store(0);
      termination_.store(0);
      final_clock_.store(0);
      status_.store(static_cast<std::uint32_t>(Status::idle), std::memory_order_release);
      s = Status::idle;
    }
    if (bits & reg::kCmdStart) {
      if (s != Status::idle) return RegError::illegal_transition;
      if (param_prefix_ < param_bytes_.size()) return RegError::not_ready;
      env::EnvDescriptor d;
      d.game_id = game_id_;
      d.frame_cap = frame_cap_;
      try {
        d.validate();
      } catch (const ConfigError&) {
        return RegError::not_ready;
      }
      if (game_id_ == static_cast<std::uint32_t>(env::GameId::replay) && rom_dirty_) {
        try {
          fixture_ = std::make_shared<const env::ReplayFixture>(env::decode_fixture(rom_bytes_));
          if (fixture_->frames.empty()) return RegError::not_ready;
          rom_dirty_ = false;
        } catch (const std::exception&) {
          return RegError::not_ready;
        }
      }
      score_.store(0);
      frame_count_.store(0);
      inferences_.store(0);
      stop_.store(false);
      start_ns_.store(steady_ns(), std::memory_order_release);
      status_.store(static_cast<std::uint32_t>(Status::running), std::memory_order_release);
      start_requested_ = true;
    }
  }
  cv_.notify_all();
  return RegError::ok;
}

void EvaluationModule::loop() {
  for (;;) {
    env::EnvDescriptor d;
    std::uint64_t seed = 0;
    std::uint64_t genome_id = 0;
    double stickiness = kDefaultStickiness;
    std::vector<std::int16_t> weights;
    std::shared_ptr<const env::ReplayFixture> fixture;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return start_requested_ || shutdown_; });
      if (shutdown_) return;
      start_requested_ = false;
      d.game_id = game_id_;
      d.frame_cap = frame_cap_;
      seed = eval_seed_;
      genome_id = genome_id_;
      stickiness = stickiness_ / 65536.0;
      weights = weights_from_bytes(param_bytes_);
      fixture = fixture_;
    }

    EpisodeOptions opts;
    opts.stickiness = stickiness;
    opts.assets.catch_config = config_.catch_config;
    opts.assets.fixture = fixture;
    opts.palette = config_.palette;
    opts.stop = &stop_;
    opts.on_frame = [this](const FrameProgress& p) {
      score_.store(p.score, std::memory_order_release);
      inferences_.store(p.inferences, std::memory_order_release);
      frame_count_.store(p.frame_count, std::memory_order_release);
    };

    FitnessRecord rec;
    try {
      const net::Genome genome(genome_id, std::move(weights));
      const net::Network network(config_.spec, genome);
      rec = run_episode(network, genome_id, d, seed, opts);
    } catch (const std::exception&) {
      rec.genome_id = genome_id;
      rec.eval_seed = seed;
      rec.termination = Termination::stopped;
      rec.frames = frame_count_.load();
      rec.score = score_.load();
    }

    final_clock_.store(clock_now(), std::memory_order_release);
    termination_.store(static_cast<std::uint32_t>(rec.termination), std::memory_order_release);
    const Status done = rec.termination == Termination::dead      ? Status::done_dead
                        : rec.termination == Termination::timeout ? Status::done_timeout
                                                                  : Status::done_stopped;
    std::function<void(const FitnessRecord&)> handler;
    {
      std::lock_guard lock(mu_);
      last_ = rec;
      handler = on_complete_;
      status_.store(static_cast<std::uint32_t>(done), std::memory_order_release);
    }
    cv_.notify_all();
    if (handler) handler(rec);
  }
}

std::optional<FitnessRecord> EvaluationModule::last_record() const {
  std::lock_guard lock(mu_);
  return last_;
}

void EvaluationModule::set_completion_handler(std::function<void(const FitnessRecord&)> handler) {
  std::lock_guard lock(mu_);
  on_complete_ = std::move(handler);
}

bool EvaluationModule::wait_done(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return status() != Status::running; });
}

}  // namespace dne::eval
