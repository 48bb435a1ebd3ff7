#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "dne/eval_module.h"
#include "dne/farm/socket.h"

namespace dne::farm {

struct WorkerOptions {
  Endpoint bind{"127.0.0.1", 0};
  int modules = 2;
  eval::ModuleConfig module_config;
  // Artificial delay before answering POLL and REG_READ, modelling a slow status bus.
  std::chrono::microseconds poll_latency{0};
  std::size_t genome_cache_limit = 2048;
  std::string name = "worker";
};

// Hosts evaluation modules behind the wire protocol. One accept thread, one
// thread per connection; each module runs its own episode thread.
class WorkerServer {
 public:
  explicit WorkerServer(WorkerOptions options);
  ~WorkerServer();
  WorkerServer(const WorkerServer&) = delete;
  WorkerServer& operator=(const WorkerServer&) = delete;

  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return Endpoint{options_.bind.host == "0.0.0.0" ? "127.0.0.1" : options_.bind.host, port_}; }
  int module_count() const { return static_cast<int>(modules_.size()); }
  std::size_t cached_genomes() const;

  // Closes the listener and every connection and stops running episodes.
  // Clients observe a dropped connection, as with a crashed node.
  void kill();
  // Blocks until kill() is called from another thread.
  void wait();

 private:
  struct Connection;

  void accept_loop();
  void serve(const std::shared_ptr<Connection>& conn);
  Message handle(const std::shared_ptr<Connection>& conn, Message request);
  void on_complete(std::size_t module, const eval::FitnessRecord& rec);
  std::shared_ptr<const std::vector<std::uint8_t>> cached(std::uint64_t id) const;

  WorkerOptions options_;
  std::vector<std::unique_ptr<eval::EvaluationModule>> modules_;
  Listener listener_;
  std::uint16_t port_ = 0;

  mutable std::mutex mu_;
  std::condition_variable stopped_cv_;
  bool stopped_ = false;
  std::vector<std::shared_ptr<Connection>> connections_;
  std::vector<std::weak_ptr<Connection>> owners_;  // per module: connection that started it
  std::unordered_map<std::uint64_t, std::shared_ptr<const std::vector<std::uint8_t>>> cache_;
  std::deque<std::uint64_t> cache_order_;

  std::thread accept_thread_;
};

}  // namespace dne::farm
