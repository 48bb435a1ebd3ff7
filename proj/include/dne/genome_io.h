#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dne/network.h"

namespace dne {

// GNOM file: 16-byte header ("GNOM", u32 version, u64 param count) followed by
// little-endian int16 weights in the canonical layout.
inline constexpr std::uint32_t kGenomeFormatVersion = 1;

std::vector<std::uint8_t> encode_genome(const net::Genome& genome);
// Throws FormatError on a bad header or truncated payload.
net::Genome decode_genome(std::span<const std::uint8_t> bytes, std::uint64_t id = 0);

void save_genome(const std::string& path, const net::Genome& genome);
net::Genome load_genome(const std::string& path, std::uint64_t id = 0);

// Raw weight bytes (no header), the layout of the evaluation module's parameter window.
std::vector<std::uint8_t> weight_bytes(const net::Genome& genome);
std::vector<std::int16_t> weights_from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace dne
