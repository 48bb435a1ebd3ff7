#include "dne/genome_io.h"

#include <fstream>
#include <iterator>

#include "dne/byte_io.h"
#include "dne/error.h"

namespace dne {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::uint8_t> weight_bytes(const net::Genome& genome) {
  ByteWriter w;
  w.buffer().reserve(genome.size() * 2);
  for (const auto v : genome.weights()) w.i16(v);
  return w.take();
}

std::vector<std::int16_t> weights_from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 2 != 0) throw FormatError("weight payload has odd length");
  ByteReader r(bytes);
  std::vector<std::int16_t> out(bytes.size() / 2);
  for (auto& v : out) v = r.i16();
  return out;
}

std::vector<std::uint8_t> encode_genome(const net::Genome& genome) {
  ByteWriter w;
  w.magic("GNOM");
  w.u32(kGenomeFormatVersion);
  w.u64(genome.size());
  w.bytes(weight_bytes(genome));
  return w.take();
}

net::Genome decode_genome(std::span<const std::uint8_t> bytes, std::uint64_t id) {
  ByteReader r(bytes);
  if (bytes.size() < 16 || !r.magic("GNOM")) throw FormatError("not a genome file (bad magic)");
  const auto version = r.u32();
  if (version != kGenomeFormatVersion)
    throw FormatError("unsupported genome file version " + std::to_string(version));
  const auto count = r.u64();
  if (r.remaining() != count * 2)
    throw FormatError("genome payload length does not match header parameter count");
  return net::Genome(id, weights_from_bytes(r.bytes(count * 2)));
}

void save_genome(const std::string& path, const net::Genome& genome) {
  write_file(path, encode_genome(genome));
}

net::Genome load_genome(const std::string& path, std::uint64_t id) {
  return decode_genome(read_file(path), id);
}

}  // namespace dne
