#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dne/eval_module.h"

namespace dne::farm {

// Frame header: "INCF", u8 version, u8 message type, u32 payload length (LE).
inline constexpr std::array<char, 4> kMagic{'I', 'N', 'C', 'F'};
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::uint32_t kMaxPayload = 80u << 20;

enum class MsgType : std::uint8_t {
  hello = 1,
  reg_read = 2,
  reg_write = 3,
  bulk_write = 4,
  start_job = 5,
  poll = 6,
  result = 7,
  error = 8,
};

// Status codes carried in replies. Values below 0x100 are eval::RegError codes.
enum class WireStatus : std::uint32_t {
  ok = 0,
  not_cached = 0x100,  // START_JOB names a genome the worker does not hold
  bad_module = 0x101,
};

enum class ErrorCode : std::uint32_t {
  bad_magic = 1,
  bad_version = 2,
  bad_length = 3,
  bad_type = 4,
  malformed = 5,
  internal = 6,
};

// Client -> worker: module_count = 0, push = subscribe to RESULT messages.
// Worker -> client: module_count and the worker's name.
struct Hello {
  std::uint32_t module_count = 0;
  bool push = false;
  std::string name;
  friend bool operator==(const Hello&, const Hello&) = default;
};

// Request leaves status/value zero; the reply echoes module/addr.
struct RegRead {
  std::uint32_t module = 0;
  std::uint32_t addr = 0;
  std::uint32_t status = 0;
  std::uint64_t value = 0;
  friend bool operator==(const RegRead&, const RegRead&) = default;
};

struct RegWrite {
  std::uint32_t module = 0;
  std::uint32_t addr = 0;
  std::uint64_t value = 0;
  std::uint32_t status = 0;
  friend bool operator==(const RegWrite&, const RegWrite&) = default;
};

// Window bytes at addr. A nonzero genome_id on a full parameter-window write
// also stores the payload in the worker's genome cache; a repeated upload of a
// cached id is acknowledged without rewriting.
struct BulkWrite {
  std::uint32_t module = 0;
  std::uint32_t addr = 0;
  std::uint64_t genome_id = 0;
  std::vector<std::uint8_t> data;
  std::uint32_t status = 0;
  friend bool operator==(const BulkWrite&, const BulkWrite&) = default;
};

// Loads a cached genome into the module, programs the configuration registers
// and issues RESET|START.
struct StartJob {
  std::uint32_t module = 0;
  std::uint64_t genome_id = 0;
  std::uint64_t eval_seed = 0;
  std::uint32_t game_id = 0;
  std::uint32_t frame_cap = 0;
  std::uint32_t stickiness = 0;  // units of 1/65536
  std::uint32_t status = 0;
  friend bool operator==(const StartJob&, const StartJob&) = default;
};

// Reply carries the module status and, in a DONE state, the record.
struct Poll {
  std::uint32_t module = 0;
  std::uint32_t status = 0;
  std::uint32_t module_status = 0;
  std::optional<eval::FitnessRecord> record;
  friend bool operator==(const Poll&, const Poll&) = default;
};

// Worker -> client push when a module started by this connection finishes.
struct Result {
  std::uint32_t module = 0;
  eval::FitnessRecord record;
  friend bool operator==(const Result&, const Result&) = default;
};

struct Error {
  std::uint32_t code = 0;
  std::string message;
  friend bool operator==(const Error&, const Error&) = default;
};

using Message = std::variant<Hello, RegRead, RegWrite, BulkWrite, StartJob, Poll, Result, Error>;

MsgType type_of(const Message& m);
std::string to_string(MsgType t);

struct Header {
  std::uint8_t version = kProtocolVersion;
  MsgType type = MsgType::hello;
  std::uint32_t length = 0;
};

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Full frame (header + payload).
std::vector<std::uint8_t> encode(const Message& m);
// Validates magic, version, type and length; throws ProtocolError.
Header decode_header(std::span<const std::uint8_t> bytes);
Message decode_payload(MsgType type, std::span<const std::uint8_t> payload);
// Exactly one complete frame.
Message decode(std::span<const std::uint8_t> frame);

}  // namespace dne::farm
