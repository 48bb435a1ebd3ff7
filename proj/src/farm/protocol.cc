#include "dne/farm/protocol.h"

#include <cstring>

#include "dne/byte_io.h"
#include "dne/error.h"

namespace dne::farm {

namespace {

void put_record(ByteWriter& w, const eval::FitnessRecord& r) {
  w.u64(r.genome_id);
  w.i32(r.score);
  w.u32(r.frames);
  w.u8(static_cast<std::uint8_t>(r.termination));
  w.u64(r.eval_seed);
}

eval::FitnessRecord get_record(ByteReader& r) {
  eval::FitnessRecord rec;
  rec.genome_id = r.u64();
  rec.score = r.i32();
  rec.frames = r.u32();
  const auto t = r.u8();
  if (t > static_cast<std::uint8_t>(eval::Termination::stopped))
    throw ProtocolError(ErrorCode::malformed, "unknown termination code " + std::to_string(t));
  rec.termination = static_cast<eval::Termination>(t);
  rec.eval_seed = r.u64();
  return rec;
}

struct PayloadWriter {
  ByteWriter& w;
  void operator()(const Hello& m) {
    w.u32(m.module_count);
    w.u8(m.push ? 1 : 0);
    w.text(m.name);
  }
  void operator()(const RegRead& m) {
    w.u32(m.module);
    w.u32(m.addr);
    w.u32(m.status);
    w.u64(m.value);
  }
  void operator()(const RegWrite& m) {
    w.u32(m.module);
    w.u32(m.addr);
    w.u64(m.value);
    w.u32(m.status);
  }
  void operator()(const BulkWrite& m) {
    w.u32(m.module);
    w.u32(m.addr);
    w.u64(m.genome_id);
    w.u32(m.status);
    w.u32(static_cast<std::uint32_t>(m.data.size()));
    w.bytes(m.data);
  }
  void operator()(const StartJob& m) {
    w.u32(m.module);
    w.u64(m.genome_id);
    w.u64(m.eval_seed);
    w.u32(m.game_id);
    w.u32(m.frame_cap);
    w.u32(m.stickiness);
    w.u32(m.status);
  }
  void operator()(const Poll& m) {
    w.u32(m.module);
    w.u32(m.status);
    w.u32(m.module_status);
    w.u8(m.record ? 1 : 0);
    if (m.record) put_record(w, *m.record);
  }
  void operator()(const Result& m) {
    w.u32(m.module);
    put_record(w, m.record);
  }
  void operator()(const Error& m) {
    w.u32(m.code);
    w.text(m.message);
  }
};

}  // namespace

MsgType type_of(const Message& m) { return static_cast<MsgType>(m.index() + 1); }

std::string to_string(MsgType t) {
  switch (t) {
    case MsgType::hello: return "HELLO";
    case MsgType::reg_read: return "REG_READ";
    case MsgType::reg_write: return "REG_WRITE";
    case MsgType::bulk_write: return "BULK_WRITE";
    case MsgType::start_job: return "START_JOB";
    case MsgType::poll: return "POLL";
    case MsgType::result: return "RESULT";
    case MsgType::error: return "ERROR";
  }
  return "UNKNOWN(" + std::to_string(static_cast<int>(t)) + ")";
}

std::vector<std::uint8_t> encode(const Message& m) {
  ByteWriter w;
  w.magic(std::string_view(kMagic.data(), kMagic.size()));
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(type_of(m)));
  w.u32(0);  // patched below
  std::visit(PayloadWriter{w}, m);
  auto& buf = w.buffer();
  const auto len = static_cast<std::uint32_t>(buf.size() - kHeaderSize);
  if (len > kMaxPayload) throw ProtocolError(ErrorCode::bad_length, "payload exceeds the frame limit");
  for (int i = 0; i < 4; ++i) buf[6 + i] = static_cast<std::uint8_t>(len >> (8 * i));
  return w.take();
}

Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw ProtocolError(ErrorCode::malformed, "short header");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw ProtocolError(ErrorCode::bad_magic, "bad frame magic");
  Header h;
  h.version = bytes[4];
  if (h.version != kProtocolVersion)
    throw ProtocolError(ErrorCode::bad_version, "unsupported protocol version " + std::to_string(h.version));
  const auto t = bytes[5];
  if (t < static_cast<std::uint8_t>(MsgType::hello) || t > static_cast<std::uint8_t>(MsgType::error))
    throw ProtocolError(ErrorCode::bad_type, "unknown message type " + std::to_string(t));
  h.type = static_cast<MsgType>(t);
  h.length = static_cast<std::uint32_t>(bytes[6]) | static_cast<std::uint32_t>(bytes[7]) << 8 |
             static_cast<std::uint32_t>(bytes[8]) << 16 | static_cast<std::uint32_t>(bytes[9]) << 24;
  if (h.length > kMaxPayload) throw ProtocolError(ErrorCode::bad_length, "frame length exceeds the limit");
  return h;
}

Message decode_payload(MsgType type, std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Message m;
  try {
    switch (type) {
      case MsgType::hello: {
        Hello h;
        h.module_count = r.u32();
        h.push = r.u8() != 0;
        h.name = r.text();
        m = h;
        break;
      }
      case MsgType::reg_read: {
        RegRead x;
        x.module = r.u32();
        x.addr = r.u32();
        x.status = r.u32();
        x.value = r.u64();
        m = x;
        break;
      }
      case MsgType::reg_write: {
        RegWrite x;
        x.module = r.u32();
        x.addr = r.u32();
        x.value = r.u64();
        x.status = r.u32();
        m = x;
        break;
      }
      case MsgType::bulk_write: {
        BulkWrite x;
        x.module = r.u32();
        x.addr = r.u32();
        x.genome_id = r.u64();
        x.status = r.u32();
        const auto n = r.u32();
        const auto b = r.bytes(n);
        x.data.assign(b.begin(), b.end());
        m = std::move(x);
        break;
      }
      case MsgType::start_job: {
        StartJob x;
        x.module = r.u32();
        x.genome_id = r.u64();
        x.eval_seed = r.u64();
        x.game_id = r.u32();
        x.frame_cap = r.u32();
        x.stickiness = r.u32();
        x.status = r.u32();
        m = x;
        break;
      }
      case MsgType::poll: {
        Poll x;
        x.module = r.u32();
        x.status = r.u32();
        x.module_status = r.u32();
        const auto has = r.u8();
        if (has > 1) throw ProtocolError(ErrorCode::malformed, "bad record flag");
        if (has) x.record = get_record(r);
        m = x;
        break;
      }
      case MsgType::result: {
        Result x;
        x.module = r.u32();
        x.record = get_record(r);
        m = x;
        break;
      }
      case MsgType::error: {
        Error x;
        x.code = r.u32();
        x.message = r.text();
        m = x;
        break;
      }
      default:
        throw ProtocolError(ErrorCode::bad_type, "unknown message type");
    }
  } catch (const FormatError& e) {
    throw ProtocolError(ErrorCode::malformed, to_string(type) + " payload truncated");
  }
  if (r.remaining() != 0)
    throw ProtocolError(ErrorCode::malformed, to_string(type) + " payload has trailing bytes");
  return m;
}

Message decode(std::span<const std::uint8_t> frame) {
  const Header h = decode_header(frame);
  if (frame.size() != kHeaderSize + h.length)
    throw ProtocolError(ErrorCode::bad_length, "frame length does not match header");
  return decode_payload(h.type, frame.subspan(kHeaderSize));
}

}  // namespace dne::farm
