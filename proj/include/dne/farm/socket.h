#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "dne/farm/protocol.h"

namespace dne::farm {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port"; throws ConfigError.
  static Endpoint parse(const std::string& text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

// Owning TCP socket; move-only.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void send_all(std::span<const std::uint8_t> data);
  // False on orderly EOF before the first byte; throws NetError on errors or EOF mid-buffer.
  bool recv_exact(std::span<std::uint8_t> data);
  // Wakes any thread blocked in recv on this socket.
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

class Listener {
 public:
  static Listener bind(const Endpoint& ep);
  Socket accept();  // throws NetError once closed
  std::uint16_t port() const { return port_; }
  void close();

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

// Frame I/O. read_message returns nullopt on orderly EOF between frames.
std::optional<Message> read_message(Socket& s, std::uint64_t* bytes_read = nullptr);
std::uint64_t write_message(Socket& s, const Message& m);

}  // namespace dne::farm
