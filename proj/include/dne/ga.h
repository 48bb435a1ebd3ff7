#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dne/network.h"

namespace dne::ga {

struct GaConfig {
  int population = 1001;  // N, including the elite
  int truncation = 20;    // T
  int elites = 1;         // E; exactly one elite is carried over
  double sigma = 0.002;
  int reevals = 5;
  int generations = 0;    // G
  std::uint64_t master_seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const GaConfig&, const GaConfig&) = default;
};

struct EvalRequest {
  net::GenomePtr genome;
  std::uint64_t seed = 0;
};

struct Evaluation {
  double fitness = 0.0;
  std::uint64_t frames = 0;
};

// Evaluates a batch and returns results in request order. Must be a pure
// function of (genome, seed) per request; may throw to abort the generation.
using Evaluator = std::function<std::vector<Evaluation>(const std::vector<EvalRequest>&)>;

struct GenerationStats {
  int generation = 0;  // 1-based
  double elite_mean = 0.0;
  double topT_mean = 0.0;
  double pop_mean = 0.0;
  std::uint64_t frames = 0;
  double wall_seconds = 0.0;
  std::uint64_t elite_id = 0;

  friend bool operator==(const GenerationStats&, const GenerationStats&) = default;
};

// Everything needed to continue a run after `generation` completed generations:
// the elite, the ordered parent pool, and the stats so far. Every random draw is
// addressed by (master_seed, generation, slot), so the generation index is the
// whole RNG cursor.
struct Checkpoint {
  GaConfig config;
  int generation = 0;
  net::GenomePtr elite;
  double elite_fitness = 0.0;
  std::vector<net::GenomePtr> parents;  // top T of the ordered population, elite first
  std::vector<GenerationStats> stats;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

struct EvolveOptions {
  const net::NetworkSpec* spec = nullptr;  // default network when null
  std::function<void(const GenerationStats&)> on_generation;
  int checkpoint_interval = 0;  // generations between on_checkpoint calls; 0 = never
  std::function<void(const Checkpoint&)> on_checkpoint;
  const std::atomic<bool>* interrupt = nullptr;  // checked between generations
  std::optional<Checkpoint> resume;
};

struct EvolveResult {
  net::GenomePtr elite;
  double elite_fitness = 0.0;
  std::vector<GenerationStats> stats;
  std::vector<net::GenomePtr> population;  // final ordered population, elite first
  bool interrupted = false;
  bool aborted = false;  // evaluator failure; stats hold the completed generations
  std::string error;
};

// Uniform(-b, b) per layer with b = sqrt(6 / (fan_in + fan_out)),
// fan_in = kh*kw*C_in, fan_out = kh*kw*C_out, quantized to the weight format.
net::Genome xavier_init(std::uint64_t seed, const net::NetworkSpec& spec = net::default_spec(),
                        std::uint64_t id = 0);
double xavier_bound(const net::LayerSpec& layer);

// child = requantize(dequantize(parent) + sigma * eps), eps ~ N(0, I) keyed by seed.
net::Genome mutate(const net::Genome& parent, std::uint64_t seed, double sigma, std::uint64_t child_id);

// Parent slot in [0, T) for child `slot` of `generation`.
int select_parent(std::uint64_t master_seed, int generation, int slot, int truncation);

std::uint64_t genome_id(int generation, int slot);

EvolveResult evolve(const GaConfig& cfg, const Evaluator& evaluator, const EvolveOptions& options = {});

}  // namespace dne::ga
