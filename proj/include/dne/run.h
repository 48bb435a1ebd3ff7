#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dne/env.h"
#include "dne/farm/dispatch.h"
#include "dne/ga.h"

namespace dne::run {

enum class FarmMode { threads, workers };
enum class Timing { none, wall };

// Everything a training run depends on. Text form: flat `section.key = value`
// lines, '#' comments, and optional `[section]` headers that prefix the keys below.
struct RunConfig {
  ga::GaConfig ga;  // ga.generations defaults to 0 here as well

  env::EnvDescriptor env;
  double stickiness = eval::kDefaultStickiness;
  env::CatchConfig catch_config;
  std::string fixture;  // AFRM file for env.game = replay
  std::string palette;  // palette text file; empty = built-in NTSC

  FarmMode farm_mode = FarmMode::threads;
  int threads = 0;  // 0 = hardware concurrency
  std::vector<farm::Endpoint> workers;
  farm::CompletionMode completion = farm::CompletionMode::push;
  int poll_interval_us = 500;

  std::string out_dir = "run";
  int checkpoint_interval = 10;
  // `none` leaves wall_seconds empty in stats.csv so reruns are byte-identical;
  // wall times then go to timing.csv only.
  Timing timing = Timing::none;

  // Throws ConfigError naming the field.
  void validate() const;
};

// Applies one `key = value`. Throws ConfigError("<key>: ...") on an unknown key
// or a malformed value.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Canonical text with every key; parse_config(render_config(c)) reproduces c.
std::string render_config(const RunConfig& cfg);

// Source revision baked in at configure time.
std::string git_describe();

// Stats CSV, schema version 1:
//   # dne-stats v1
//   generation,elite_mean,topT_mean,pop_mean,frames_total,wall_seconds
// frames_total is cumulative over the run.
inline constexpr const char* kStatsSchema = "# dne-stats v1";
inline constexpr const char* kStatsHeader = "generation,elite_mean,topT_mean,pop_mean,frames_total,wall_seconds";

struct StatsRow {
  int generation = 0;
  double elite_mean = 0.0;
  double topT_mean = 0.0;
  double pop_mean = 0.0;
  std::uint64_t frames_total = 0;
  std::optional<double> wall_seconds;
  friend bool operator==(const StatsRow&, const StatsRow&) = default;
};

std::string format_stats_row(const StatsRow& row);
// Throws FormatError on a wrong schema line, header, or field.
std::vector<StatsRow> parse_stats_csv(const std::string& text);
std::vector<StatsRow> read_stats_csv(const std::filesystem::path& path);

// Learning curve over several runs: mean elite score per generation with the
// min-max band across runs. Throws FormatError when no run has any rows.
std::string render_plot(const std::vector<std::vector<StatsRow>>& runs, const std::string& title = "elite mean score");

// Owns the resources a runner points into (palette, fixture).
struct Runtime {
  std::shared_ptr<const preproc::Palette> palette;
  env::GameAssets assets;
  std::shared_ptr<const std::vector<std::uint8_t>> rom;
  std::unique_ptr<farm::JobRunner> runner;
};

// Loads assets and connects the runner. Throws ConfigError, FormatError, NetError.
Runtime make_runtime(const RunConfig& cfg);

struct TrainOptions {
  const std::atomic<bool>* interrupt = nullptr;
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
};

struct TrainResult {
  ga::EvolveResult evolve;
  std::filesystem::path out_dir;
};

// Writes <out>/manifest.cfg, stats.csv, timing.csv, checkpoint.gack every
// checkpoint_interval generations (and on interrupt), and elite.gnom.
TrainResult train(const RunConfig& cfg, const TrainOptions& options = {});

// Seeds of the `episodes` evaluation episodes started from `seed`.
std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, int episodes);

struct EvalSummary {
  std::vector<eval::FitnessRecord> records;
  double mean = 0.0;
  double variance = 0.0;  // population variance
};
EvalSummary evaluate(const net::Genome& genome, const RunConfig& cfg, int episodes, std::uint64_t seed);

struct BenchOptions {
  farm::CompletionMode mode = farm::CompletionMode::push;
  std::chrono::milliseconds duration{5000};
  // With no workers in the config, `local_workers` loopback workers are started
  // in process, each with `modules` modules and the given reply latency.
  int local_workers = 1;
  int modules = 2;
  std::chrono::microseconds poll_latency{0};
  int batch = 16;  // jobs per dispatch call
};

struct BenchReport {
  farm::FarmStats stats;
  std::uint64_t batches = 0;
};

BenchReport bench(const RunConfig& cfg, const BenchOptions& options);
std::string format_report(const BenchReport& report, const BenchOptions& options);

}  // namespace dne::run
