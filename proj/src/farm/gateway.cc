#include "dne/farm/gateway.h"

#include <spdlog/spdlog.h>

namespace dne::farm {

WorkerClient::WorkerClient(const Endpoint& ep, Options options)
    : ep_(ep), options_(std::move(options)), sock_(connect_to(ep, options_.connect_timeout)) {
  // Handshake before the reader starts so the first reply is read inline.
  bytes_out_ += write_message(sock_, Hello{0, options_.push, "gateway"});
  std::uint64_t in = 0;
  const auto reply = read_message(sock_, &in);
  bytes_in_ += in;
  if (!reply) throw WorkerLost("worker " + ep.str() + " closed the connection during HELLO");
  if (const auto* e = std::get_if<Error>(&*reply)) throw RemoteError(e->code, e->message);
  const auto* h = std::get_if<Hello>(&*reply);
  if (!h || h->module_count == 0) throw NetError("worker " + ep.str() + " sent an invalid HELLO reply");
  module_count_ = h->module_count;
  name_ = h->name;
  reader_ = std::thread([this] { reader(); });
}

WorkerClient::~WorkerClient() {
  close();
  if (reader_.joinable()) reader_.join();
}

void WorkerClient::close() {
  std::lock_guard lock(send_mu_);
  sock_.shutdown();
}

void WorkerClient::fail_all(const std::string& why) {
  std::deque<std::promise<Message>> waiting;
  {
    std::lock_guard lock(pending_mu_);
    alive_ = false;
    waiting.swap(pending_);
  }
  for (auto& p : waiting) p.set_exception(std::make_exception_ptr(WorkerLost(why)));
}

void WorkerClient::reader() {
  std::string why = "worker " + ep_.str() + " closed the connection";
  for (;;) {
    std::optional<Message> m;
    try {
      std::uint64_t in = 0;
      m = read_message(sock_, &in);
      bytes_in_ += in;
    } catch (const std::exception& e) {
      why = "worker " + ep_.str() + ": " + e.what();
      break;
    }
    if (!m) break;
    if (const auto* r = std::get_if<Result>(&*m)) {
      if (options_.on_result) options_.on_result(*r);
      continue;
    }
    std::promise<Message> p;
    {
      std::lock_guard lock(pending_mu_);
      if (pending_.empty()) {
        // An ERROR frame without a request in flight precedes a disconnect.
        if (const auto* e = std::get_if<Error>(&*m)) why = "worker " + ep_.str() + ": " + e->message;
        continue;
      }
      p = std::move(pending_.front());
      pending_.pop_front();
    }
    p.set_value(std::move(*m));
  }
  spdlog::debug("gateway: lost {}: {}", ep_.str(), why);
  fail_all(why);
  if (options_.on_lost) options_.on_lost();
}

Message WorkerClient::request(const Message& m) {
  std::future<Message> reply;
  {
    std::lock_guard lock(send_mu_);
    {
      std::lock_guard plock(pending_mu_);
      if (!alive_) throw WorkerLost("worker " + ep_.str() + " is gone");
      pending_.emplace_back();
      reply = pending_.back().get_future();
    }
    try {
      bytes_out_ += write_message(sock_, m);
    } catch (const NetError& e) {
      // The reader observes the same failure and fails the pending promise.
      sock_.shutdown();
    }
  }
  Message r = reply.get();
  if (const auto* e = std::get_if<Error>(&r)) throw RemoteError(e->code, e->message);
  if (type_of(r) != type_of(m))
    throw NetError("worker " + ep_.str() + " answered " + to_string(type_of(m)) + " with " +
                   to_string(type_of(r)));
  return r;
}

RegRead WorkerClient::reg_read(std::uint32_t module, std::uint32_t addr) {
  return std::get<RegRead>(request(RegRead{module, addr, 0, 0}));
}

RegWrite WorkerClient::reg_write(std::uint32_t module, std::uint32_t addr, std::uint64_t value) {
  return std::get<RegWrite>(request(RegWrite{module, addr, value, 0}));
}

BulkWrite WorkerClient::bulk_write(BulkWrite req) { return std::get<BulkWrite>(request(req)); }

StartJob WorkerClient::start_job(const StartJob& req) { return std::get<StartJob>(request(req)); }

Poll WorkerClient::poll(std::uint32_t module) {
  Poll p;
  p.module = module;
  return std::get<Poll>(request(p));
}

}  // namespace dne::farm
