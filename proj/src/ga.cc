#include "dne/ga.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "dne/byte_io.h"
#include "dne/counter_rng.h"
#include "dne/error.h"
#include "dne/fixed_point.h"

namespace dne::ga {

namespace {

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kParentTag = 0x9A7E;
constexpr std::uint64_t kMutateTag = 0x3707;
constexpr std::uint64_t kEvalTag = 0xE7A1;
constexpr std::uint64_t kReevalTag = 0xE7A2;
constexpr std::uint32_t kCheckpointVersion = 1;

struct Member {
  net::GenomePtr genome;
  double fitness = 0.0;
};

// Descending fitness, ascending id on ties.
bool ranks_before(const Member& a, const Member& b) {
  if (a.fitness != b.fitness) return a.fitness > b.fitness;
  return a.genome->id() < b.genome->id();
}

std::vector<Evaluation> run_batch(const Evaluator& evaluator, const std::vector<EvalRequest>& reqs) {
  auto out = evaluator(reqs);
  if (out.size() != reqs.size())
    throw std::runtime_error("evaluator returned " + std::to_string(out.size()) + " results for " +
                             std::to_string(reqs.size()) + " requests");
  return out;
}

void write_genome(ByteWriter& w, const net::Genome& g) {
  w.u64(g.id());
  w.u32(static_cast<std::uint32_t>(g.lineage().size()));
  for (const auto& e : g.lineage()) {
    w.u64(e.parent_id);
    w.u64(e.mutation_seed);
  }
  w.u64(g.size());
  for (const auto v : g.weights()) w.i16(v);
}

net::GenomePtr read_genome(ByteReader& r) {
  const auto id = r.u64();
  std::vector<net::LineageEntry> lineage(r.u32());
  for (auto& e : lineage) {
    e.parent_id = r.u64();
    e.mutation_seed = r.u64();
  }
  const auto n = r.u64();
  if (n > r.remaining() / 2) throw FormatError("checkpoint genome truncated");
  std::vector<std::int16_t> w(n);
  for (auto& v : w) v = r.i16();
  return std::make_shared<const net::Genome>(id, std::move(w), std::move(lineage));
}

std::uint64_t f64_bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, 8);
  return b;
}

double bits_f64(std::uint64_t b) {
  double v;
  std::memcpy(&v, &b, 8);
  return v;
}

}  // namespace

void GaConfig::validate() const {
  if (population < 2) throw ConfigError("ga.population: must be at least 2");
  if (truncation < 1 || truncation >= population)
    throw ConfigError("ga.truncation: must satisfy 1 <= T < population");
  if (elites != 1) throw ConfigError("ga.elites: exactly one elite is supported");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("ga.sigma: must be positive");
  if (reevals < 1) throw ConfigError("ga.reevals: must be at least 1");
  if (generations < 0) throw ConfigError("ga.generations: must be >= 0");
}

double xavier_bound(const net::LayerSpec& l) {
  const double fan_in = static_cast<double>(l.filter_h) * l.filter_w * l.in.c;
  const double fan_out = static_cast<double>(l.filter_h) * l.filter_w * l.out.c;
  return std::sqrt(6.0 / (fan_in + fan_out));
}

net::Genome xavier_init(std::uint64_t seed, const net::NetworkSpec& spec, std::uint64_t id) {
  std::vector<std::int16_t> w;
  w.reserve(spec.total_params);
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto& l = spec.layers[li];
    const double b = xavier_bound(l);
    const CounterRng rng(derive_key(seed, li));
    for (std::size_t i = 0; i < l.param_count(); ++i) {
      const double u = rng.uniform(li, i);
      w.push_back(static_cast<std::int16_t>(fixed::quantize_raw((2.0 * u - 1.0) * b, fixed::kWeightFormat)));
    }
  }
  return net::Genome(id, std::move(w));
}

net::Genome mutate(const net::Genome& parent, std::uint64_t seed, double sigma, std::uint64_t child_id) {
  const CounterRng rng(seed);
  const auto pw = parent.weights();
  std::vector<std::int16_t> w(pw.size());
  for (std::size_t i = 0; i < pw.size(); ++i) {
    const double x = fixed::dequantize_raw(pw[i], fixed::kWeightFormat.radix) + sigma * rng.normal(0, i);
    w[i] = static_cast<std::int16_t>(fixed::quantize_raw(x, fixed::kWeightFormat));
  }
  auto lineage = parent.lineage();
  lineage.push_back({parent.id(), seed});
  return net::Genome(child_id, std::move(w), std::move(lineage));
}

int select_parent(std::uint64_t master_seed, int generation, int slot, int truncation) {
  const CounterRng rng(derive_key(master_seed, kParentTag));
  return static_cast<int>(rng.below(static_cast<std::uint64_t>(generation), static_cast<std::uint64_t>(slot),
                                    static_cast<std::uint64_t>(truncation)));
}

std::uint64_t genome_id(int generation, int slot) {
  return (static_cast<std::uint64_t>(generation) << 32) | static_cast<std::uint32_t>(slot);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.magic("GACK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.config.population));
  w.u32(static_cast<std::uint32_t>(c.config.truncation));
  w.u32(static_cast<std::uint32_t>(c.config.elites));
  w.u64(f64_bits(c.config.sigma));
  w.u32(static_cast<std::uint32_t>(c.config.reevals));
  w.u32(static_cast<std::uint32_t>(c.config.generations));
  w.u64(c.config.master_seed);
  w.u32(static_cast<std::uint32_t>(c.generation));
  w.u64(f64_bits(c.elite_fitness));
  write_genome(w, *c.elite);
  w.u32(static_cast<std::uint32_t>(c.parents.size()));
  for (const auto& p : c.parents) write_genome(w, *p);
  w.u32(static_cast<std::uint32_t>(c.stats.size()));
  for (const auto& s : c.stats) {
    w.u32(static_cast<std::uint32_t>(s.generation));
    w.u64(f64_bits(s.elite_mean));
    w.u64(f64_bits(s.topT_mean));
    w.u64(f64_bits(s.pop_mean));
    w.u64(s.frames);
    w.u64(f64_bits(s.wall_seconds));
    w.u64(s.elite_id);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 8 || !r.magic("GACK")) throw FormatError("not a checkpoint (bad magic)");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  c.config.population = static_cast<int>(r.u32());
  c.config.truncation = static_cast<int>(r.u32());
  c.config.elites = static_cast<int>(r.u32());
  c.config.sigma = bits_f64(r.u64());
  c.config.reevals = static_cast<int>(r.u32());
  c.config.generations = static_cast<int>(r.u32());
  c.config.master_seed = r.u64();
  c.generation = static_cast<int>(r.u32());
  c.elite_fitness = bits_f64(r.u64());
  c.elite = read_genome(r);
  c.parents.resize(r.u32());
  for (auto& p : c.parents) p = read_genome(r);
  c.stats.resize(r.u32());
  for (auto& s : c.stats) {
    s.generation = static_cast<int>(r.u32());
    s.elite_mean = bits_f64(r.u64());
    s.topT_mean = bits_f64(r.u64());
    s.pop_mean = bits_f64(r.u64());
    s.frames = r.u64();
    s.wall_seconds = bits_f64(r.u64());
    s.elite_id = r.u64();
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const auto bytes = encode_checkpoint(c);
  write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

EvolveResult evolve(const GaConfig& cfg, const Evaluator& evaluator, const EvolveOptions& options) {
  cfg.validate();
  const net::NetworkSpec& spec = options.spec ? *options.spec : net::default_spec();
  const int N = cfg.population;
  const int T = cfg.truncation;
  const CounterRng eval_seeds(derive_key(cfg.master_seed, kEvalTag));
  const CounterRng reeval_seeds(derive_key(cfg.master_seed, kReevalTag));

  EvolveResult result;
  std::vector<net::GenomePtr> parents;
  int first = 1;
  if (options.resume) {
    const Checkpoint& c = *options.resume;
    GaConfig a = c.config, b = cfg;
    a.generations = b.generations = 0;
    if (!(a == b)) throw ConfigError("resume: checkpoint was written with a different GA configuration");
    if (!c.elite || c.parents.size() != static_cast<std::size_t>(T))
      throw ConfigError("resume: checkpoint parent pool does not match ga.truncation");
    result.elite = c.elite;
    result.elite_fitness = c.elite_fitness;
    result.stats = c.stats;
    parents = c.parents;
    first = c.generation + 1;
  }

  const auto make_checkpoint = [&](int generation) {
    Checkpoint c;
    c.config = cfg;
    c.generation = generation;
    c.elite = result.elite;
    c.elite_fitness = result.elite_fitness;
    c.parents = parents;
    c.stats = result.stats;
    return c;
  };

  for (int g = first; g <= cfg.generations; ++g) {
    if (options.interrupt && options.interrupt->load()) {
      result.interrupted = true;
      if (options.on_checkpoint && g > 1) options.on_checkpoint(make_checkpoint(g - 1));
      return result;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      // New individuals: N Xavier genomes in the first generation, N-1 children afterwards.
      std::vector<Member> fresh;
      const int count = g == 1 ? N : N - 1;
      fresh.reserve(count);
      for (int i = 0; i < count; ++i) {
        const std::uint64_t id = genome_id(g, i);
        if (g == 1) {
          const auto seed = derive_key(derive_key(cfg.master_seed, kInitTag), static_cast<std::uint64_t>(i));
          fresh.push_back({std::make_shared<const net::Genome>(xavier_init(seed, spec, id)), 0.0});
        } else {
          const auto& parent = *parents[select_parent(cfg.master_seed, g, i, T)];
          const auto seed = derive_key(derive_key(cfg.master_seed, kMutateTag), id);
          fresh.push_back({std::make_shared<const net::Genome>(mutate(parent, seed, cfg.sigma, id)), 0.0});
        }
      }

      std::vector<EvalRequest> reqs;
      reqs.reserve(fresh.size());
      for (int i = 0; i < count; ++i)
        reqs.push_back({fresh[i].genome, eval_seeds.bits64(static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(i))});
      const auto evals = run_batch(evaluator, reqs);
      std::uint64_t frames = 0;
      for (int i = 0; i < count; ++i) {
        fresh[i].fitness = evals[i].fitness;
        frames += evals[i].frames;
      }
      std::stable_sort(fresh.begin(), fresh.end(), ranks_before);

      // Elite candidates: the top T of this generation plus the previous elite.
      std::vector<net::GenomePtr> candidates;
      for (int i = 0; i < std::min(T, count); ++i) candidates.push_back(fresh[i].genome);
      if (g > 1) candidates.push_back(result.elite);
      reqs.clear();
      for (const auto& c : candidates)
        for (int j = 0; j < cfg.reevals; ++j)
          reqs.push_back({c, reeval_seeds.bits64(c->id(), (static_cast<std::uint64_t>(g) << 16) | static_cast<std::uint64_t>(j))});
      const auto re = run_batch(evaluator, reqs);
      std::vector<Member> scored;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        double sum = 0.0;
        for (int j = 0; j < cfg.reevals; ++j) {
          sum += re[c * cfg.reevals + j].fitness;
          frames += re[c * cfg.reevals + j].frames;
        }
        scored.push_back({candidates[c], sum / cfg.reevals});
      }
      const Member elite = *std::min_element(scored.begin(), scored.end(), ranks_before);

      // Ordered population: the elite once, then everyone else by fitness. A
      // dethroned previous elite stays in the population with its re-evaluated mean.
      std::vector<Member> rest;
      rest.reserve(N);
      for (auto& m : fresh)
        if (m.genome != elite.genome) rest.push_back(m);
      if (g > 1 && result.elite != elite.genome) rest.push_back(scored.back());
      std::stable_sort(rest.begin(), rest.end(), ranks_before);
      std::vector<Member> ordered;
      ordered.reserve(N);
      const auto own = std::find_if(fresh.begin(), fresh.end(), [&](const Member& m) { return m.genome == elite.genome; });
      ordered.push_back({elite.genome, own != fresh.end() ? own->fitness : elite.fitness});
      ordered.insert(ordered.end(), rest.begin(), rest.end());

      GenerationStats s;
      s.generation = g;
      s.elite_mean = elite.fitness;
      s.elite_id = elite.genome->id();
      double top = 0.0, all = 0.0;
      for (int i = 0; i < T; ++i) top += ordered[i].fitness;
      for (const auto& m : ordered) all += m.fitness;
      s.topT_mean = top / T;
      s.pop_mean = all / static_cast<double>(ordered.size());
      s.frames = frames;
      s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      result.elite = elite.genome;
      result.elite_fitness = elite.fitness;
      result.stats.push_back(s);
      parents.clear();
      for (int i = 0; i < T; ++i) parents.push_back(ordered[i].genome);
      result.population.clear();
      for (const auto& m : ordered) result.population.push_back(m.genome);
    } catch (const std::exception& e) {
      result.aborted = true;
      result.error = "generation " + std::to_string(g) + ": " + e.what();
      return result;
    }
    if (options.on_generation) options.on_generation(result.stats.back());
    if (options.on_checkpoint && options.checkpoint_interval > 0 && g % options.checkpoint_interval == 0)
      options.on_checkpoint(make_checkpoint(g));
  }
  return result;
}

}  // namespace dne::ga
