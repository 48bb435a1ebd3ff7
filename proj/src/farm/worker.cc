#include "dne/farm/worker.h"

#include <spdlog/spdlog.h>

#include "dne/error.h"

namespace dne::farm {

struct WorkerServer::Connection {
  Socket sock;
  std::mutex write_mu;
  std::atomic<bool> push{false};
  std::atomic<bool> open{true};
  std::thread thread;

  void send(const Message& m) {
    std::lock_guard lock(write_mu);
    if (!open) return;
    try {
      write_message(sock, m);
    } catch (const NetError&) {
      open = false;
    }
  }
};

WorkerServer::WorkerServer(WorkerOptions options) : options_(std::move(options)) {
  if (options_.modules < 1) throw ConfigError("worker.modules: must be at least 1");
  owners_.resize(static_cast<std::size_t>(options_.modules));
  for (int i = 0; i < options_.modules; ++i) {
    modules_.push_back(std::make_unique<eval::EvaluationModule>(options_.module_config));
    const auto idx = static_cast<std::size_t>(i);
    modules_.back()->set_completion_handler([this, idx](const eval::FitnessRecord& r) { on_complete(idx, r); });
  }
  listener_ = Listener::bind(options_.bind);
  port_ = listener_.port();
  accept_thread_ = std::thread([this] { accept_loop(); });
  spdlog::info("worker '{}' listening on {}:{} with {} modules", options_.name, options_.bind.host, port_,
               options_.modules);
}

WorkerServer::~WorkerServer() {
  kill();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    conns = connections_;
  }
  for (auto& c : conns)
    if (c->thread.joinable()) c->thread.join();
  // Modules are destroyed (and their threads joined) before the connections they may push to.
  modules_.clear();
}

void WorkerServer::kill() {
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    if (stopped_) return;
    stopped_ = true;
    conns = connections_;
  }
  listener_.close();
  for (auto& c : conns) {
    std::lock_guard lock(c->write_mu);
    c->open = false;
    c->sock.shutdown();
  }
  for (auto& m : modules_) {
    if (m->status() == eval::Status::running) m->register_write(eval::reg::kCommand, eval::reg::kCmdStop);
  }
  stopped_cv_.notify_all();
  spdlog::info("worker '{}' on port {} stopped", options_.name, port_);
}

void WorkerServer::wait() {
  std::unique_lock lock(mu_);
  stopped_cv_.wait(lock, [&] { return stopped_; });
}

std::size_t WorkerServer::cached_genomes() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

void WorkerServer::accept_loop() {
  for (;;) {
    Socket s;
    try {
      s = listener_.accept();
    } catch (const NetError&) {
      return;
    }
    auto conn = std::make_shared<Connection>();
    conn->sock = std::move(s);
    std::lock_guard lock(mu_);
    if (stopped_) return;
    // Reap finished connections.
    std::erase_if(connections_, [](const std::shared_ptr<Connection>& c) {
      if (c->open || !c->thread.joinable()) return false;
      c->thread.join();
      return true;
    });
    connections_.push_back(conn);
    conn->thread = std::thread([this, conn] { serve(conn); });
  }
}

void WorkerServer::serve(const std::shared_ptr<Connection>& conn) {
  for (;;) {
    std::optional<Message> m;
    try {
      m = read_message(conn->sock);
    } catch (const ProtocolError& e) {
      spdlog::warn("worker '{}': protocol error, dropping connection: {}", options_.name, e.what());
      conn->send(Error{static_cast<std::uint32_t>(e.code()), e.what()});
      break;
    } catch (const NetError&) {
      break;
    }
    if (!m) break;
    try {
      conn->send(handle(conn, std::move(*m)));
    } catch (const std::exception& e) {
      conn->send(Error{static_cast<std::uint32_t>(ErrorCode::internal), e.what()});
    }
  }
  std::lock_guard lock(conn->write_mu);
  conn->open = false;
  conn->sock.shutdown();
}

std::shared_ptr<const std::vector<std::uint8_t>> WorkerServer::cached(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  const auto it = cache_.find(id);
  return it == cache_.end() ? nullptr : it->second;
}

Message WorkerServer::handle(const std::shared_ptr<Connection>& conn, Message request) {
  const auto module_ok = [&](std::uint32_t m) { return m < modules_.size(); };
  const auto bad_module = static_cast<std::uint32_t>(WireStatus::bad_module);
  const auto code = [](eval::RegError e) { return static_cast<std::uint32_t>(e); };

  if (auto* h = std::get_if<Hello>(&request)) {
    conn->push = h->push;
    return Hello{static_cast<std::uint32_t>(modules_.size()), h->push, options_.name};
  }
  if (auto* r = std::get_if<RegRead>(&request)) {
    if (options_.poll_latency.count() > 0) std::this_thread::sleep_for(options_.poll_latency);
    if (!module_ok(r->module)) {
      r->status = bad_module;
      return *r;
    }
    const auto v = modules_[r->module]->register_read(r->addr);
    r->status = code(v.error);
    r->value = v.value;
    return *r;
  }
  if (auto* w = std::get_if<RegWrite>(&request)) {
    if (!module_ok(w->module)) {
      w->status = bad_module;
      return *w;
    }
    const auto e = modules_[w->module]->register_write(w->addr, w->value);
    if (e == eval::RegError::ok && w->addr == eval::reg::kCommand && (w->value & eval::reg::kCmdStart)) {
      std::lock_guard lock(mu_);
      owners_[w->module] = conn;
    }
    w->status = code(e);
    return *w;
  }
  if (auto* b = std::get_if<BulkWrite>(&request)) {
    if (b->genome_id != 0) {
      // Genome cache upload.
      if (b->addr != eval::reg::kParamWindow || b->data.size() != modules_[0]->param_window_size()) {
        b->status = code(eval::RegError::out_of_range);
      } else {
        std::lock_guard lock(mu_);
        if (!cache_.contains(b->genome_id)) {
          cache_.emplace(b->genome_id, std::make_shared<const std::vector<std::uint8_t>>(std::move(b->data)));
          cache_order_.push_back(b->genome_id);
          while (cache_order_.size() > options_.genome_cache_limit) {
            cache_.erase(cache_order_.front());
            cache_order_.pop_front();
          }
        }
        b->status = 0;
      }
      b->data.clear();
      return std::move(*b);
    }
    if (!module_ok(b->module)) {
      b->status = bad_module;
    } else {
      b->status = code(modules_[b->module]->window_write(b->addr, b->data));
    }
    b->data.clear();
    return std::move(*b);
  }
  if (auto* s = std::get_if<StartJob>(&request)) {
    if (!module_ok(s->module)) {
      s->status = bad_module;
      return *s;
    }
    const auto weights = cached(s->genome_id);
    if (!weights) {
      s->status = static_cast<std::uint32_t>(WireStatus::not_cached);
      return *s;
    }
    auto& m = *modules_[s->module];
    if (m.status() == eval::Status::running) {
      s->status = code(eval::RegError::busy);
      return *s;
    }
    eval::RegError e = m.register_write(eval::reg::kCommand, eval::reg::kCmdReset);
    if (e == eval::RegError::ok) e = m.window_write(eval::reg::kParamWindow, *weights);
    if (e == eval::RegError::ok) e = m.register_write(eval::reg::kGenomeId, s->genome_id);
    if (e == eval::RegError::ok) e = m.register_write(eval::reg::kGameId, s->game_id);
    if (e == eval::RegError::ok) e = m.register_write(eval::reg::kFrameCap, s->frame_cap);
    if (e == eval::RegError::ok) e = m.register_write(eval::reg::kEvalSeed, s->eval_seed);
    if (e == eval::RegError::ok) e = m.register_write(eval::reg::kStickiness, s->stickiness);
    if (e == eval::RegError::ok) {
      std::lock_guard lock(mu_);
      owners_[s->module] = conn;
    }
    if (e == eval::RegError::ok) e = m.register_write(eval::reg::kCommand, eval::reg::kCmdStart);
    s->status = code(e);
    return *s;
  }
  if (auto* p = std::get_if<Poll>(&request)) {
    if (options_.poll_latency.count() > 0) std::this_thread::sleep_for(options_.poll_latency);
    if (!module_ok(p->module)) {
      p->status = bad_module;
      return *p;
    }
    const auto& m = *modules_[p->module];
    const auto st = m.status();
    p->status = 0;
    p->module_status = static_cast<std::uint32_t>(st);
    p->record.reset();
    if (st != eval::Status::idle && st != eval::Status::running) p->record = m.last_record();
    return *p;
  }
  return Error{static_cast<std::uint32_t>(ErrorCode::bad_type),
               to_string(type_of(request)) + " is not a request"};
}

void WorkerServer::on_complete(std::size_t module, const eval::FitnessRecord& rec) {
  std::shared_ptr<Connection> owner;
  {
    std::lock_guard lock(mu_);
    owner = owners_[module].lock();
  }
  if (owner && owner->push) owner->send(Result{static_cast<std::uint32_t>(module), rec});
}

}  // namespace dne::farm
