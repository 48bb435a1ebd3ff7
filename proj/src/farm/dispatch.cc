#include "dne/farm/dispatch.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "dne/error.h"
#include "dne/genome_io.h"

namespace dne::farm {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::size_t> job_order(const std::vector<EvalJob>& jobs) {
  std::vector<std::size_t> order(jobs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return jobs[a].priority > jobs[b].priority; });
  return order;
}

std::uint32_t stickiness_units(double s) {
  if (!(s >= 0.0 && s < 1.0)) throw ConfigError("stickiness must lie in [0, 1)");
  return static_cast<std::uint32_t>(std::lround(s * 65536.0));
}

void refresh_rates(FarmStats& s) {
  s.frames_per_second = s.busy_seconds > 0 ? static_cast<double>(s.frames) / s.busy_seconds : 0.0;
  for (auto& w : s.workers)
    w.frames_per_second = s.busy_seconds > 0 ? static_cast<double>(w.frames) / s.busy_seconds : 0.0;
}

bool matches(const eval::FitnessRecord& r, const EvalJob& job) {
  return r.genome_id == job.genome->id() && r.eval_seed == job.seed &&
         r.termination != eval::Termination::stopped;
}

}  // namespace

LocalPool::LocalPool(int threads, LocalPoolOptions options) : threads_(threads), options_(std::move(options)) {
  if (threads_ < 1) throw ConfigError("farm.threads: must be at least 1");
  stats_.workers.resize(static_cast<std::size_t>(threads_));
  for (int i = 0; i < threads_; ++i) stats_.workers[i].address = "thread:" + std::to_string(i);
}

std::vector<eval::FitnessRecord> LocalPool::dispatch(const std::vector<EvalJob>& jobs) {
  const auto t0 = Clock::now();
  const auto order = job_order(jobs);
  std::vector<std::optional<eval::FitnessRecord>> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string error;
  std::vector<WorkerStats> per(static_cast<std::size_t>(threads_));

  const auto work = [&](std::size_t t) {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= order.size()) return;
      const auto& job = jobs[order[k]];
      try {
        if (!job.genome) throw ConfigError("job without a genome");
        eval::EpisodeOptions opts;
        opts.stickiness = static_cast<double>(stickiness_units(job.stickiness)) / 65536.0;
        opts.assets = options_.assets;
        opts.palette = options_.palette;
        const net::Network network(options_.spec, *job.genome);
        out[order[k]] = eval::run_episode(network, job.genome->id(), job.env, job.seed, opts);
        per[t].frames += out[order[k]]->frames;
        ++per[t].jobs;
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (error.empty()) error = e.what();
        next = order.size();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads_), std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work, t);
  work(0);
  for (auto& th : pool) th.join();

  {
    std::lock_guard lock(mu_);
    stats_.busy_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    for (std::size_t t = 0; t < per.size(); ++t) {
      stats_.workers[t].frames += per[t].frames;
      stats_.workers[t].jobs += per[t].jobs;
      stats_.frames += per[t].frames;
      stats_.jobs += per[t].jobs;
    }
    stats_.peak_in_flight = std::max(stats_.peak_in_flight, std::min(jobs.size(), n_threads));
    refresh_rates(stats_);
  }
  if (!error.empty()) throw DispatchError("evaluation failed: " + error, std::move(out));
  std::vector<eval::FitnessRecord> records;
  records.reserve(out.size());
  for (auto& r : out) records.push_back(*r);
  return records;
}

FarmStats LocalPool::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

struct RemoteFarm::Worker {
  std::unique_ptr<WorkerClient> client;
  std::set<std::uint64_t> uploaded;
  bool lost = false;
};

RemoteFarm::RemoteFarm(const std::vector<Endpoint>& workers, FarmOptions options) : options_(std::move(options)) {
  if (workers.empty()) throw ConfigError("farm.workers: at least one worker address is required");
  for (std::size_t i = 0; i < workers.size(); ++i) {
    auto w = std::make_unique<Worker>();
    WorkerClient::Options co;
    co.push = options_.mode == CompletionMode::push;
    co.connect_timeout = options_.connect_timeout;
    co.on_result = [this, i](const Result& r) {
      {
        std::lock_guard lock(events_mu_);
        completions_.push_back({i, r.module, r.record});
      }
      events_cv_.notify_all();
    };
    co.on_lost = [this] {
      {
        std::lock_guard lock(events_mu_);
        ++loss_events_;
      }
      events_cv_.notify_all();
    };
    w->client = std::make_unique<WorkerClient>(workers[i], std::move(co));
    if (options_.rom) {
      for (std::uint32_t m = 0; m < w->client->module_count(); ++m) {
        BulkWrite b;
        b.module = m;
        b.addr = eval::reg::kRomWindow;
        b.data = *options_.rom;
        const auto r = w->client->bulk_write(std::move(b));
        if (r.status != 0) throw NetError("ROM upload to " + workers[i].str() + " failed");
      }
    }
    WorkerStats ws;
    ws.address = workers[i].str();
    stats_.workers.push_back(ws);
    workers_.push_back(std::move(w));
  }
}

RemoteFarm::~RemoteFarm() = default;

std::size_t RemoteFarm::live_workers() const {
  std::size_t n = 0;
  for (const auto& w : workers_) n += (!w->lost && w->client->alive()) ? 1 : 0;
  return n;
}

void RemoteFarm::mark_lost(std::size_t w, const std::string& why) {
  if (workers_[w]->lost) return;
  workers_[w]->lost = true;
  workers_[w]->client->close();
  spdlog::warn("farm: worker {} lost ({}); re-dispatching its jobs", workers_[w]->client->endpoint().str(), why);
  std::lock_guard lock(stats_mu_);
  stats_.workers[w].lost = true;
}

std::vector<eval::FitnessRecord> RemoteFarm::dispatch(const std::vector<EvalJob>& jobs) {
  const auto t0 = Clock::now();
  const auto order = job_order(jobs);
  for (const auto& j : jobs) {
    if (!j.genome) throw ConfigError("job without a genome");
    // id 0 marks a plain window write on the wire and cannot be cached
    if (j.genome->id() == 0) throw ConfigError("remote jobs need a nonzero genome id");
    stickiness_units(j.stickiness);
  }
  std::vector<int> evictions(jobs.size(), 0);
  std::deque<std::size_t> pending(order.begin(), order.end());
  std::vector<std::optional<eval::FitnessRecord>> out(jobs.size());
  std::size_t done = 0;

  struct Slot {
    std::size_t worker;
    std::uint32_t module;
    std::optional<std::size_t> job;
  };
  std::vector<Slot> slots;
  for (std::size_t w = 0; w < workers_.size(); ++w)
    for (std::uint32_t m = 0; m < workers_[w]->client->module_count(); ++m) slots.push_back({w, m, std::nullopt});
  {
    std::lock_guard lock(events_mu_);
    completions_.clear();  // stale pushes from an earlier call
  }

  std::size_t in_flight = 0;
  std::uint64_t redispatched = 0;
  std::vector<std::uint64_t> frames(workers_.size(), 0), njobs(workers_.size(), 0);

  const auto requeue_worker = [&](std::size_t w) {
    for (auto& s : slots) {
      if (s.worker == w && s.job) {
        pending.push_front(*s.job);
        s.job.reset();
        --in_flight;
        ++redispatched;
      }
    }
  };
  const auto lose = [&](std::size_t w, const std::string& why) {
    mark_lost(w, why);
    requeue_worker(w);
  };
  const auto complete = [&](Slot& s, const eval::FitnessRecord& rec) {
    const std::size_t j = *s.job;
    s.job.reset();
    --in_flight;
    if (!matches(rec, jobs[j])) {
      // A stopped or foreign record: run the job again.
      pending.push_front(j);
      ++redispatched;
      return;
    }
    if (!out[j]) {
      out[j] = rec;
      ++done;
      frames[s.worker] += rec.frames;
      ++njobs[s.worker];
    }
  };
  const auto publish = [&] {
    std::lock_guard lock(stats_mu_);
    stats_.busy_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    for (std::size_t w = 0; w < workers_.size(); ++w) {
      stats_.workers[w].frames += frames[w];
      stats_.workers[w].jobs += njobs[w];
      stats_.frames += frames[w];
      stats_.jobs += njobs[w];
    }
    stats_.redispatched += redispatched;
    stats_.jobs_in_flight = 0;
    stats_.bytes_in = stats_.bytes_out = 0;
    for (const auto& w : workers_) {
      stats_.bytes_in += w->client->bytes_in();
      stats_.bytes_out += w->client->bytes_out();
    }
    refresh_rates(stats_);
  };

  while (done < jobs.size()) {
    for (std::size_t w = 0; w < workers_.size(); ++w)
      if (!workers_[w]->lost && !workers_[w]->client->alive()) lose(w, "connection closed");
    if (live_workers() == 0) {
      publish();
      throw DispatchError("all workers lost with " + std::to_string(jobs.size() - done) + " jobs unfinished",
                          std::move(out));
    }

    // Fill free modules.
    for (auto& s : slots) {
      if (pending.empty()) break;
      Worker& w = *workers_[s.worker];
      if (s.job || w.lost) continue;
      const std::size_t j = pending.front();
      const EvalJob& job = jobs[j];
      try {
        const std::uint64_t id = job.genome->id();
        if (!w.uploaded.contains(id)) {
          BulkWrite b;
          b.addr = eval::reg::kParamWindow;
          b.genome_id = id;
          b.data = weight_bytes(*job.genome);
          if (w.client->bulk_write(std::move(b)).status != 0)
            throw DispatchError("worker rejected genome " + std::to_string(id), std::move(out));
          w.uploaded.insert(id);
        }
        StartJob sj;
        sj.module = s.module;
        sj.genome_id = id;
        sj.eval_seed = job.seed;
        sj.game_id = job.env.game_id;
        sj.frame_cap = job.env.frame_cap;
        sj.stickiness = stickiness_units(job.stickiness);
        s.job = j;
        pending.pop_front();
        ++in_flight;
        const auto r = w.client->start_job(sj);
        if (r.status == static_cast<std::uint32_t>(WireStatus::not_cached)) {
          // Evicted from the worker cache: upload again on the next pass.
          if (++evictions[j] > 3) {
            publish();
            throw DispatchError("worker " + w.client->endpoint().str() + " keeps evicting genome " +
                                    std::to_string(id) + "; raise its cache size",
                                std::move(out));
          }
          w.uploaded.erase(id);
          s.job.reset();
          --in_flight;
          pending.push_front(j);
          continue;
        }
        if (r.status != 0) {
          publish();
          throw DispatchError("worker " + w.client->endpoint().str() + " refused job for genome " +
                                  std::to_string(id) + ": status " + std::to_string(r.status),
                              std::move(out));
        }
      } catch (const WorkerLost& e) {
        lose(s.worker, e.what());
      }
    }
    {
      std::lock_guard lock(stats_mu_);
      stats_.jobs_in_flight = in_flight;
      stats_.peak_in_flight = std::max(stats_.peak_in_flight, in_flight);
    }

    // Collect completions.
    if (options_.mode == CompletionMode::push) {
      std::deque<Completion> got;
      {
        std::unique_lock lock(events_mu_);
        const auto losses = loss_events_;
        events_cv_.wait_for(lock, std::chrono::milliseconds(100),
                            [&] { return !completions_.empty() || loss_events_ != losses; });
        got.swap(completions_);
      }
      for (const auto& c : got) {
        if (workers_[c.worker]->lost) continue;
        for (auto& s : slots) {
          if (s.worker == c.worker && s.module == c.module && s.job) {
            complete(s, c.record);
            break;
          }
        }
      }
    } else {
      bool progressed = false;
      for (auto& s : slots) {
        if (!s.job || workers_[s.worker]->lost) continue;
        try {
          const auto p = workers_[s.worker]->client->poll(s.module);
          if (p.record && p.module_status != static_cast<std::uint32_t>(eval::Status::running) &&
              p.module_status != static_cast<std::uint32_t>(eval::Status::idle)) {
            complete(s, *p.record);
            progressed = true;
          }
        } catch (const WorkerLost& e) {
          lose(s.worker, e.what());
        }
      }
      if (!progressed && options_.poll_interval.count() > 0) std::this_thread::sleep_for(options_.poll_interval);
    }
  }

  publish();
  std::vector<eval::FitnessRecord> records;
  records.reserve(out.size());
  for (auto& r : out) records.push_back(*r);
  return records;
}

FarmStats RemoteFarm::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

ga::Evaluator make_evaluator(JobRunner& runner, const env::EnvDescriptor& env, double stickiness) {
  return [&runner, env, stickiness](const std::vector<ga::EvalRequest>& reqs) {
    std::vector<EvalJob> jobs;
    jobs.reserve(reqs.size());
    for (const auto& r : reqs) jobs.push_back({r.genome, env, r.seed, stickiness, 0});
    const auto records = runner.dispatch(jobs);
    std::vector<ga::Evaluation> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back({static_cast<double>(rec.score), rec.frames});
    return out;
  };
}

}  // namespace dne::farm
