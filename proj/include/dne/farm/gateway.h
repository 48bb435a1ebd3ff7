#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <thread>

#include "dne/farm/socket.h"

namespace dne::farm {

class WorkerLost : public NetError {
 public:
  using NetError::NetError;
};

// Worker answered with an ERROR frame.
class RemoteError : public std::runtime_error {
 public:
  RemoteError(std::uint32_t code, const std::string& what) : std::runtime_error(what), code_(code) {}
  std::uint32_t code() const { return code_; }

 private:
  std::uint32_t code_;
};

// Client side of one worker connection. Requests are synchronous and answered in
// order; a reader thread routes replies to waiting callers and RESULT pushes to
// the callback. Safe to call from several threads.
class WorkerClient {
 public:
  struct Options {
    bool push = false;
    std::chrono::milliseconds connect_timeout{5000};
    std::function<void(const Result&)> on_result;  // reader thread
    std::function<void()> on_lost;                 // reader thread, once
  };

  WorkerClient(const Endpoint& ep, Options options);
  ~WorkerClient();
  WorkerClient(const WorkerClient&) = delete;
  WorkerClient& operator=(const WorkerClient&) = delete;

  std::uint32_t module_count() const { return module_count_; }
  const std::string& worker_name() const { return name_; }
  const Endpoint& endpoint() const { return ep_; }
  bool alive() const { return alive_.load(); }

  RegRead reg_read(std::uint32_t module, std::uint32_t addr);
  RegWrite reg_write(std::uint32_t module, std::uint32_t addr, std::uint64_t value);
  BulkWrite bulk_write(BulkWrite request);
  StartJob start_job(const StartJob& request);
  Poll poll(std::uint32_t module);

  // Raw exchange; throws WorkerLost, RemoteError.
  Message request(const Message& m);

  std::uint64_t bytes_in() const { return bytes_in_.load(); }
  std::uint64_t bytes_out() const { return bytes_out_.load(); }

  void close();

 private:
  void reader();
  void fail_all(const std::string& why);

  Endpoint ep_;
  Options options_;
  Socket sock_;
  std::uint32_t module_count_ = 0;
  std::string name_;

  std::mutex send_mu_;
  std::mutex pending_mu_;
  std::deque<std::promise<Message>> pending_;
  std::atomic<bool> alive_{true};
  std::atomic<std::uint64_t> bytes_in_{0};
  std::atomic<std::uint64_t> bytes_out_{0};
  std::thread reader_;
};

}  // namespace dne::farm
