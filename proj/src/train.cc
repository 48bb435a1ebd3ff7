#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "dne/counter_rng.h"
#include "dne/error.h"
#include "dne/farm/worker.h"
#include "dne/genome_io.h"
#include "dne/run.h"

namespace dne::run {

namespace {

constexpr std::uint64_t kEpisodeTag = 0xE7A3;
constexpr std::uint64_t kBenchTag = 0xBE7C;

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << text;
    if (!f.flush()) throw ConfigError("cannot write " + p.string());
  }
  std::filesystem::rename(tmp, p);
}

farm::FarmOptions farm_options(const RunConfig& cfg, const Runtime& rt) {
  farm::FarmOptions o;
  o.mode = cfg.completion;
  o.poll_interval = std::chrono::microseconds(cfg.poll_interval_us);
  o.rom = rt.rom;
  return o;
}

std::string manifest_text(const RunConfig& cfg) {
  std::ostringstream o;
  o << "# run manifest: `dne train --config manifest.cfg --out <dir>` repeats this run\n"
    << "# source " << git_describe() << "\n"
    << "# master seed " << cfg.ga.master_seed << "; every other seed is derived from it\n\n"
    << render_config(cfg);
  return o.str();
}

}  // namespace

Runtime make_runtime(const RunConfig& cfg) {
  cfg.validate();
  Runtime rt;
  if (!cfg.palette.empty()) rt.palette = std::make_shared<preproc::Palette>(preproc::Palette::load(cfg.palette));
  rt.assets.catch_config = cfg.catch_config;
  if (cfg.env.game_id == static_cast<std::uint32_t>(env::GameId::replay)) {
    auto bytes = read_file(cfg.fixture);
    rt.assets.fixture = std::make_shared<const env::ReplayFixture>(env::decode_fixture(bytes));
    rt.rom = std::make_shared<const std::vector<std::uint8_t>>(std::move(bytes));
  }
  if (cfg.farm_mode == FarmMode::threads) {
    const int n = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    rt.runner = farm::in_process_pool(n, {rt.assets, rt.palette.get(), net::default_spec()});
  } else {
    rt.runner = std::make_unique<farm::RemoteFarm>(cfg.workers, farm_options(cfg, rt));
  }
  return rt;
}

TrainResult train(const RunConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  std::optional<ga::Checkpoint> resume;
  if (options.resume) resume = ga::load_checkpoint(options.resume->string());

  Runtime rt = make_runtime(cfg);
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  write_text(out / "manifest.cfg", manifest_text(cfg));

  std::ofstream stats(out / "stats.csv", std::ios::binary | std::ios::trunc);
  std::ofstream timing(out / "timing.csv", std::ios::binary | std::ios::trunc);
  if (!stats || !timing) throw ConfigError("output.dir: cannot write into " + out.string());
  stats << kStatsSchema << "\n" << kStatsHeader << "\n";
  timing << "generation,wall_seconds,frames,elite_id\n";

  std::uint64_t frames_total = 0;
  const auto emit = [&](const ga::GenerationStats& s) {
    frames_total += s.frames;
    StatsRow row{s.generation, s.elite_mean, s.topT_mean, s.pop_mean, frames_total, std::nullopt};
    if (cfg.timing == Timing::wall) row.wall_seconds = s.wall_seconds;
    stats << format_stats_row(row) << "\n" << std::flush;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", s.wall_seconds);
    timing << s.generation << "," << buf << "," << s.frames << "," << s.elite_id << "\n" << std::flush;
  };
  if (resume)
    for (const auto& s : resume->stats) emit(s);

  ga::EvolveOptions eo;
  eo.on_generation = [&](const ga::GenerationStats& s) {
    emit(s);
    spdlog::info("generation {}: elite {:.2f} top-T {:.2f} population {:.2f} ({} frames, {:.1f} s)", s.generation,
                 s.elite_mean, s.topT_mean, s.pop_mean, s.frames, s.wall_seconds);
  };
  eo.checkpoint_interval = cfg.checkpoint_interval;
  eo.on_checkpoint = [&](const ga::Checkpoint& c) {
    const auto path = out / "checkpoint.gack";
    const auto tmp = out / "checkpoint.gack.tmp";
    ga::save_checkpoint(tmp.string(), c);
    std::filesystem::rename(tmp, path);
    spdlog::info("checkpoint after generation {} written to {}", c.generation, path.string());
  };
  eo.interrupt = options.interrupt;
  eo.resume = std::move(resume);

  TrainResult result;
  result.out_dir = out;
  result.evolve = ga::evolve(cfg.ga, farm::make_evaluator(*rt.runner, cfg.env, cfg.stickiness), eo);
  if (result.evolve.elite) save_genome((out / "elite.gnom").string(), *result.evolve.elite);

  const auto fs = rt.runner->stats();
  spdlog::info("{} frames in {:.1f} s of evaluation ({:.0f} frames/s)", fs.frames, fs.busy_seconds,
               fs.frames_per_second);
  return result;
}

std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, int episodes) {
  const CounterRng rng(derive_key(seed, kEpisodeTag));
  std::vector<std::uint64_t> out;
  for (int i = 0; i < episodes; ++i) out.push_back(rng.bits64(0, static_cast<std::uint64_t>(i)));
  return out;
}

EvalSummary evaluate(const net::Genome& genome, const RunConfig& cfg, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("episodes: must be at least 1");
  Runtime rt = make_runtime(cfg);
  const auto g = std::make_shared<const net::Genome>(genome);
  std::vector<farm::EvalJob> jobs;
  for (const auto s : episode_seeds(seed, episodes)) jobs.push_back({g, cfg.env, s, cfg.stickiness, 0});
  EvalSummary out;
  out.records = rt.runner->dispatch(jobs);
  for (const auto& r : out.records) out.mean += r.score;
  out.mean /= episodes;
  for (const auto& r : out.records) out.variance += (r.score - out.mean) * (r.score - out.mean);
  out.variance /= episodes;
  return out;
}

BenchReport bench(const RunConfig& cfg, const BenchOptions& options) {
  cfg.validate();
  Runtime rt;
  std::vector<std::unique_ptr<farm::WorkerServer>> servers;
  if (options.local_workers > 0) {
    RunConfig local = cfg;
    local.farm_mode = FarmMode::threads;
    rt = make_runtime(local);
    rt.runner.reset();
    std::vector<farm::Endpoint> eps;
    for (int i = 0; i < options.local_workers; ++i) {
      farm::WorkerOptions wo;
      wo.modules = options.modules;
      wo.module_config.catch_config = cfg.catch_config;
      wo.module_config.palette = rt.palette.get();
      wo.poll_latency = options.poll_latency;
      wo.name = "bench-" + std::to_string(i);
      servers.push_back(std::make_unique<farm::WorkerServer>(wo));
      eps.push_back(servers.back()->endpoint());
    }
    auto fo = farm_options(cfg, rt);
    fo.mode = options.mode;
    rt.runner = std::make_unique<farm::RemoteFarm>(eps, fo);
  } else if (cfg.farm_mode == FarmMode::workers) {
    RunConfig remote = cfg;
    remote.completion = options.mode;
    rt = make_runtime(remote);
  } else {
    rt = make_runtime(cfg);
  }

  // Fresh ids every batch so genome uploads are part of the measurement.
  std::vector<net::Genome> base;
  for (int i = 0; i < options.batch; ++i) base.push_back(ga::xavier_init(derive_key(kBenchTag, i)));
  const CounterRng seeds(derive_key(cfg.ga.master_seed, kBenchTag));

  BenchReport report;
  const auto t0 = std::chrono::steady_clock::now();
  while (std::chrono::steady_clock::now() - t0 < options.duration) {
    std::vector<farm::EvalJob> jobs;
    for (int i = 0; i < options.batch; ++i) {
      const std::uint64_t id = ((report.batches + 1) << 32) | static_cast<std::uint64_t>(i);
      jobs.push_back({std::make_shared<const net::Genome>(base[i].with_id(id)), cfg.env,
                      seeds.bits64(report.batches, static_cast<std::uint64_t>(i)), cfg.stickiness, 0});
    }
    rt.runner->dispatch(jobs);
    ++report.batches;
  }
  report.stats = rt.runner->stats();
  rt.runner.reset();
  for (auto& s : servers) s->kill();
  return report;
}

std::string format_report(const BenchReport& r, const BenchOptions& options) {
  const auto& s = r.stats;
  std::ostringstream o;
  char buf[64];
  o << "mode:              " << (options.mode == farm::CompletionMode::push ? "push" : "polling") << "\n";
  std::snprintf(buf, sizeof buf, "%.2f", s.busy_seconds);
  o << "busy seconds:      " << buf << "\n";
  o << "batches:           " << r.batches << "\n";
  o << "jobs:              " << s.jobs << "\n";
  o << "frames:            " << s.frames << "\n";
  std::snprintf(buf, sizeof buf, "%.0f", s.frames_per_second);
  o << "frames/s:          " << buf << "\n";
  o << "peak in flight:    " << s.peak_in_flight << "\n";
  o << "bytes out:         " << s.bytes_out << "\n";
  o << "bytes in:          " << s.bytes_in << "\n";
  o << "re-dispatched:     " << s.redispatched << "\n";
  for (const auto& w : s.workers) {
    std::snprintf(buf, sizeof buf, "%.0f", w.frames_per_second);
    o << "  " << w.address << ": " << w.jobs << " jobs, " << w.frames << " frames, " << buf << " frames/s"
      << (w.lost ? " (lost)" : "") << "\n";
  }
  return o.str();
}

}  // namespace dne::run
