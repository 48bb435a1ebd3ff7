#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dne/env.h"
#include "dne/eval_module.h"
#include "dne/farm/gateway.h"
#include "dne/ga.h"

namespace dne::farm {

struct EvalJob {
  net::GenomePtr genome;
  env::EnvDescriptor env;
  std::uint64_t seed = 0;
  double stickiness = eval::kDefaultStickiness;
  int priority = 0;  // higher runs first; ties in submission order
};

struct WorkerStats {
  std::string address;
  std::uint64_t frames = 0;
  std::uint64_t jobs = 0;
  double frames_per_second = 0.0;
  bool lost = false;
};

// Cumulative over every dispatch call of one runner.
struct FarmStats {
  double busy_seconds = 0.0;  // wall time spent inside dispatch
  std::uint64_t frames = 0;
  std::uint64_t jobs = 0;
  double frames_per_second = 0.0;  // frames / busy_seconds
  std::vector<WorkerStats> workers;
  std::size_t jobs_in_flight = 0;
  std::size_t peak_in_flight = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t redispatched = 0;
};

// All workers were lost (or a job failed outright). `completed` holds the
// finished records in job order, with gaps for unfinished jobs.
class DispatchError : public std::runtime_error {
 public:
  DispatchError(const std::string& what, std::vector<std::optional<eval::FitnessRecord>> completed)
      : std::runtime_error(what), completed_(std::move(completed)) {}
  const std::vector<std::optional<eval::FitnessRecord>>& completed() const { return completed_; }

 private:
  std::vector<std::optional<eval::FitnessRecord>> completed_;
};

// Maps jobs to FitnessRecords, returned in job order. The record for a job is a
// function of the job alone, whatever the scheduling.
class JobRunner {
 public:
  virtual ~JobRunner() = default;
  virtual std::vector<eval::FitnessRecord> dispatch(const std::vector<EvalJob>& jobs) = 0;
  virtual FarmStats stats() const = 0;
};

struct LocalPoolOptions {
  env::GameAssets assets;
  const preproc::Palette* palette = nullptr;
  net::NetworkSpec spec = net::default_spec();
};

// Desk-scale runner: evaluates on local threads without sockets.
class LocalPool final : public JobRunner {
 public:
  explicit LocalPool(int threads, LocalPoolOptions options = {});
  std::vector<eval::FitnessRecord> dispatch(const std::vector<EvalJob>& jobs) override;
  FarmStats stats() const override;

 private:
  int threads_;
  LocalPoolOptions options_;
  mutable std::mutex mu_;
  FarmStats stats_;
};

inline std::unique_ptr<JobRunner> in_process_pool(int threads, LocalPoolOptions options = {}) {
  return std::make_unique<LocalPool>(threads, std::move(options));
}

enum class CompletionMode { polling, push };

struct FarmOptions {
  CompletionMode mode = CompletionMode::push;
  std::chrono::microseconds poll_interval{500};  // idle pause between polling rounds
  std::chrono::milliseconds connect_timeout{5000};
  // Fixture image written to every module's ROM window after connecting.
  std::shared_ptr<const std::vector<std::uint8_t>> rom;
};

// Gateway over a set of workers. Genomes are uploaded once per worker and then
// referenced by id; jobs of a lost worker are re-run on the survivors.
class RemoteFarm final : public JobRunner {
 public:
  // Throws NetError if a worker cannot be reached.
  RemoteFarm(const std::vector<Endpoint>& workers, FarmOptions options = {});
  ~RemoteFarm() override;

  std::vector<eval::FitnessRecord> dispatch(const std::vector<EvalJob>& jobs) override;
  FarmStats stats() const override;
  std::size_t live_workers() const;

 private:
  struct Worker;
  struct Completion {
    std::size_t worker;
    std::uint32_t module;
    eval::FitnessRecord record;
  };

  void mark_lost(std::size_t w, const std::string& why);

  FarmOptions options_;
  std::vector<std::unique_ptr<Worker>> workers_;

  std::mutex events_mu_;
  std::condition_variable events_cv_;
  std::deque<Completion> completions_;
  std::uint64_t loss_events_ = 0;

  mutable std::mutex stats_mu_;
  FarmStats stats_;
};

// GA adapter: one job per request, fitness = episode score.
ga::Evaluator make_evaluator(JobRunner& runner, const env::EnvDescriptor& env,
                             double stickiness = eval::kDefaultStickiness);

}  // namespace dne::farm
