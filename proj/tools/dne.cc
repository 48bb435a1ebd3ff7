// dne: train, evaluate, benchmark, plot, and host a worker.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/spdlog.h>

#include "dne/error.h"
#include "dne/farm/worker.h"
#include "dne/genome_io.h"
#include "dne/run.h"

namespace {

using namespace dne;

std::atomic<bool> g_interrupt{false};

sigset_t stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

// SIGINT/SIGTERM stay blocked in every thread (the mask is set in main before any
// thread starts) and are handled here on one waiting thread.
void watch_signals(std::function<void()> on_signal) {
  const sigset_t set = stop_signals();
  std::thread([set, on_signal = std::move(on_signal)] {
    for (;;) {
      int sig = 0;
      if (sigwait(&set, &sig) != 0) return;
      if (g_interrupt.exchange(true)) {
        // second signal: give up immediately
        std::_Exit(130);
      }
      on_signal();
    }
  }).detach();
}

run::RunConfig base_config(const std::string& path) {
  return path.empty() ? run::RunConfig{} : run::load_config(path);
}

void apply_sets(run::RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set " + s + ": expected key=value");
    run::set_key(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
}

struct TrainArgs {
  std::string config, out, workers, resume;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = base_config(a.config);
  apply_sets(cfg, a.sets);
  if (a.seed) cfg.ga.master_seed = *a.seed;
  if (a.threads) {
    cfg.farm_mode = run::FarmMode::threads;
    cfg.threads = *a.threads;
  }
  if (!a.workers.empty()) {
    run::set_key(cfg, "farm.workers", a.workers);
    cfg.farm_mode = run::FarmMode::workers;
  }
  if (!a.out.empty()) cfg.out_dir = a.out;
  cfg.validate();

  watch_signals([] { spdlog::warn("interrupt: finishing the current generation, then checkpointing"); });
  run::TrainOptions opts;
  opts.interrupt = &g_interrupt;
  if (!a.resume.empty()) opts.resume = a.resume;
  const auto r = run::train(cfg, opts);
  if (r.evolve.aborted) {
    spdlog::error("training aborted: {}", r.evolve.error);
    return 1;
  }
  if (r.evolve.elite)
    std::cout << "elite " << r.evolve.elite->id() << " mean score " << r.evolve.elite_fitness << "\n";
  std::cout << "outputs in " << r.out_dir.string() << "\n";
  return r.evolve.interrupted ? 130 : 0;
}

struct EvalArgs {
  std::string genome, env = "catch", config, fixture;
  int episodes = 5;
  std::uint64_t seed = 0;
  std::optional<std::uint32_t> frame_cap;
  std::optional<int> threads;
};

int cmd_eval(const EvalArgs& a) {
  auto cfg = base_config(a.config);
  run::set_key(cfg, "env.game", a.env);
  if (!a.fixture.empty()) cfg.fixture = a.fixture;
  if (a.frame_cap) cfg.env.frame_cap = *a.frame_cap;
  if (a.threads) {
    cfg.farm_mode = run::FarmMode::threads;
    cfg.threads = *a.threads;
  }
  const auto genome = load_genome(a.genome);
  const auto s = run::evaluate(genome, cfg, a.episodes, a.seed);
  const auto seeds = run::episode_seeds(a.seed, a.episodes);
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& r = s.records[i];
    std::cout << "episode " << i << " seed " << seeds[i] << " score " << r.score << " frames " << r.frames << " "
              << eval::to_string(r.termination) << "\n";
  }
  std::printf("mean %.4f variance %.4f\n", s.mean, s.variance);
  return 0;
}

struct BenchArgs {
  std::string mode = "push", config, workers;
  double duration = 5.0;
  std::optional<int> threads;
  int local_workers = 1, modules = 2, batch = 16;
  double poll_latency_ms = 0.0;
  std::optional<std::uint32_t> frame_cap;
};

int cmd_bench(const BenchArgs& a) {
  auto cfg = base_config(a.config);
  run::BenchOptions o;
  o.mode = a.mode == "push" ? farm::CompletionMode::push : farm::CompletionMode::polling;
  o.duration = std::chrono::milliseconds(static_cast<long>(a.duration * 1000));
  o.local_workers = a.local_workers;
  o.modules = a.modules;
  o.batch = a.batch;
  o.poll_latency = std::chrono::microseconds(static_cast<long>(a.poll_latency_ms * 1000));
  if (a.frame_cap) cfg.env.frame_cap = *a.frame_cap;
  if (a.threads) {
    cfg.farm_mode = run::FarmMode::threads;
    cfg.threads = *a.threads;
    o.local_workers = 0;
  }
  if (!a.workers.empty()) {
    run::set_key(cfg, "farm.workers", a.workers);
    cfg.farm_mode = run::FarmMode::workers;
    o.local_workers = 0;
  }
  std::cout << run::format_report(run::bench(cfg, o), o);
  return 0;
}

int cmd_plot(const std::vector<std::string>& csvs, const std::string& out) {
  std::vector<std::vector<run::StatsRow>> runs;
  for (const auto& p : csvs) {
    runs.push_back(run::read_stats_csv(p));
    if (runs.back().empty()) throw FormatError(p + ": no generations");
  }
  const auto svg = run::render_plot(runs);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f || !(f << svg)) throw ConfigError("cannot write " + out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

struct WorkerArgs {
  std::string bind = "0.0.0.0:4100", env_config, name = "worker";
  int modules = 2;
  double poll_latency_ms = 0.0;
  std::size_t cache = 2048;
};

int cmd_worker(const WorkerArgs& a) {
  const auto cfg = base_config(a.env_config);
  cfg.catch_config.validate();
  std::shared_ptr<const preproc::Palette> palette;
  if (!cfg.palette.empty()) palette = std::make_shared<preproc::Palette>(preproc::Palette::load(cfg.palette));
  farm::WorkerOptions o;
  o.bind = farm::Endpoint::parse(a.bind);
  o.modules = a.modules;
  o.module_config.catch_config = cfg.catch_config;
  o.module_config.palette = palette.get();
  o.poll_latency = std::chrono::microseconds(static_cast<long>(a.poll_latency_ms * 1000));
  o.genome_cache_limit = a.cache;
  o.name = a.name;
  farm::WorkerServer server(o);
  watch_signals([&server] { server.kill(); });
  server.wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=debug etc.
  const sigset_t blocked = stop_signals();
  pthread_sigmask(SIG_BLOCK, &blocked, nullptr);
  CLI::App app{"Deep neuroevolution on fixed-point evaluation modules"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run the genetic algorithm");
  train->add_option("--config", ta.config, "Run configuration file")->check(CLI::ExistingFile);
  train->add_option("--seed", ta.seed, "Master seed (ga.seed)");
  train->add_option("--workers", ta.workers, "Comma-separated worker host:port list");
  train->add_option("--threads", ta.threads, "Evaluate on local threads")->check(CLI::NonNegativeNumber);
  train->add_option("--out", ta.out, "Output directory (output.dir)");
  train->add_option("--set", ta.sets, "Override a configuration key: key=value");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Evaluate a genome over several episodes");
  evalc->add_option("--genome", ea.genome, "GNOM genome file")->required();
  evalc->add_option("--env", ea.env, "catch or replay");
  evalc->add_option("--episodes", ea.episodes)->check(CLI::PositiveNumber);
  evalc->add_option("--seed", ea.seed);
  evalc->add_option("--config", ea.config, "Run configuration (game parameters)")->check(CLI::ExistingFile);
  evalc->add_option("--fixture", ea.fixture, "AFRM fixture for the replay game")->check(CLI::ExistingFile);
  evalc->add_option("--frame-cap", ea.frame_cap);
  evalc->add_option("--threads", ea.threads);

  BenchArgs ba;
  auto* benchc = app.add_subcommand("bench", "Measure farm throughput");
  benchc->add_option("--mode", ba.mode)->check(CLI::IsMember({"polling", "push"}));
  benchc->add_option("--duration", ba.duration, "Seconds")->check(CLI::PositiveNumber);
  benchc->add_option("--config", ba.config)->check(CLI::ExistingFile);
  benchc->add_option("--threads", ba.threads, "Benchmark the in-process pool instead");
  benchc->add_option("--workers", ba.workers, "Benchmark remote workers instead");
  benchc->add_option("--local-workers", ba.local_workers, "Loopback workers to start")->check(CLI::PositiveNumber);
  benchc->add_option("--modules", ba.modules, "Modules per loopback worker")->check(CLI::PositiveNumber);
  benchc->add_option("--poll-latency-ms", ba.poll_latency_ms, "Injected worker reply latency");
  benchc->add_option("--batch", ba.batch, "Jobs per dispatch")->check(CLI::PositiveNumber);
  benchc->add_option("--frame-cap", ba.frame_cap);

  std::vector<std::string> csvs;
  std::string plot_out = "curve.svg";
  auto* plot = app.add_subcommand("plot", "Learning curve SVG from stats CSVs");
  plot->add_option("csv", csvs, "stats.csv files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out);

  WorkerArgs wa;
  auto* worker = app.add_subcommand("worker", "Host evaluation modules on a TCP port");
  worker->add_option("--bind", wa.bind, "host:port");
  worker->add_option("--modules", wa.modules)->check(CLI::PositiveNumber);
  worker->add_option("--env-config", wa.env_config, "Run configuration with catch.* and env.palette keys")
      ->check(CLI::ExistingFile);
  worker->add_option("--poll-latency-ms", wa.poll_latency_ms, "Delay before answering POLL and REG_READ");
  worker->add_option("--cache", wa.cache, "Genome cache capacity")->check(CLI::PositiveNumber);
  worker->add_option("--name", wa.name);

  CLI11_PARSE(app, argc, argv);

  if (!*train && !*worker) watch_signals([] { std::_Exit(130); });
  try {
    if (*train) return cmd_train(ta);
    if (*evalc) return cmd_eval(ea);
    if (*benchc) return cmd_bench(ba);
    if (*plot) return cmd_plot(csvs, plot_out);
    if (*worker) return cmd_worker(wa);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
