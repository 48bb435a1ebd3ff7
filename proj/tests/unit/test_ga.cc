#include <doctest.h>

#include <cmath>
#include <set>

#include "dne/error.h"
#include "dne/fixed_point.h"
#include "dne/ga.h"

using namespace dne;
using namespace dne::ga;

namespace {

net::NetworkSpec tiny_spec() {
  std::vector<net::LayerSpec> layers;
  layers.push_back(net::conv_layer({6, 6, 2}, 3, 1, 4, net::Activation::relu, 1, 1));
  layers.push_back(net::dense_layer(layers.back().out, 3, net::Activation::none, 1, 1));
  return net::NetworkSpec::build(std::move(layers));
}

double neg_norm2(const net::Genome& g) {
  double s = 0;
  for (const double w : g.dequantized()) s += w * w;
  return -s;
}

Evaluator analytic() {
  return [](const std::vector<EvalRequest>& reqs) {
    std::vector<Evaluation> out;
    for (const auto& r : reqs) out.push_back({neg_norm2(*r.genome), 1});
    return out;
  };
}

}  // namespace

TEST_SUITE("ga") {

TEST_CASE("config validation names the field") {
  GaConfig c;
  c.truncation = c.population;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("ga.truncation"), ConfigError);
  c = GaConfig{};
  c.elites = 2;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("ga.elites"), ConfigError);
  c = GaConfig{};
  c.sigma = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("ga.sigma"), ConfigError);
  c = GaConfig{};
  c.reevals = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(GaConfig{}.validate());
}

TEST_CASE("xavier init") {
  const auto& spec = net::default_spec();
  const auto a = xavier_init(9, spec), b = xavier_init(9, spec), c = xavier_init(10, spec);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  // fan_in = 8*8*4, fan_out = 8*8*32
  CHECK(xavier_bound(spec.layers[0]) == doctest::Approx(std::sqrt(6.0 / (256.0 + 2048.0))));
  std::size_t base = 0;
  for (const auto& l : spec.layers) {
    const double bound = xavier_bound(l) + fixed::kWeightFormat.step() / 2;
    double sum = 0, sumsq = 0;
    const std::size_t n = std::min<std::size_t>(l.param_count(), 10000);
    for (std::size_t i = 0; i < l.param_count(); ++i) {
      const double w = a.weights()[base + i] * fixed::kWeightFormat.step();
      REQUIRE(std::abs(w) <= bound);
      if (i < n) {
        sum += w;
        sumsq += w * w;
      }
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sumsq / n - mean * mean);
    CHECK(std::abs(mean) <= 3 * sd / std::sqrt(static_cast<double>(n)));
    // uniform on (-b, b) has standard deviation b / sqrt(3)
    CHECK(sd == doctest::Approx(xavier_bound(l) / std::sqrt(3.0)).epsilon(0.05));
    base += l.param_count();
  }
}

TEST_CASE("mutation") {
  const auto parent = xavier_init(1).with_id(5);
  const auto child = mutate(parent, 77, 0.002, 6);
  CHECK(child == mutate(parent, 77, 0.002, 6));
  CHECK(child.id() == 6);
  REQUIRE(child.lineage().size() == 1);
  CHECK(child.lineage()[0] == net::LineageEntry{5, 77});
  CHECK(mutate(parent, 77, 1e-12, 6).weights().size() == parent.size());
  const auto same = mutate(parent, 77, 1e-12, 6);
  CHECK(std::equal(same.weights().begin(), same.weights().end(), parent.weights().begin()));

  // the weight step is 2^-13, about 16 times smaller than sigma, so 5% is reachable
  CHECK(0.002 / fixed::kWeightFormat.step() > 16.0);
  double sumsq = 0;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    const double d = (child.weights()[i] - parent.weights()[i]) * fixed::kWeightFormat.step();
    sumsq += d * d;
  }
  const double sd = std::sqrt(sumsq / static_cast<double>(parent.size()));
  CHECK(sd == doctest::Approx(0.002).epsilon(0.05));
}

TEST_CASE("parent selection is uniform") {
  const int T = 20;
  std::vector<int> counts(T, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[select_parent(123, 2 + i / 1000, i % 1000, T)];
  double chi2 = 0;
  const double expect = static_cast<double>(n) / T;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 99.9th percentile of chi-square with 19 degrees of freedom
  CHECK(chi2 < 43.82);
  MESSAGE("chi-square " << chi2);
}

TEST_CASE("constant fitness keeps the first candidate") {
  GaConfig c;
  c.population = 6;
  c.truncation = 2;
  c.reevals = 2;
  c.generations = 4;
  c.master_seed = 3;
  const auto spec = tiny_spec();
  EvolveOptions o;
  o.spec = &spec;
  const auto r = evolve(c, [](const std::vector<EvalRequest>& reqs) {
    return std::vector<Evaluation>(reqs.size(), Evaluation{1.0, 2});
  }, o);
  CHECK(r.elite->id() == genome_id(1, 0));
  REQUIRE(r.stats.size() == 4);
  for (const auto& s : r.stats) {
    CHECK(s.elite_mean == 1.0);
    CHECK(s.topT_mean == 1.0);
    CHECK(s.pop_mean == 1.0);
  }
  CHECK(r.stats[0].frames == 2 * (6 + 2 * 2));
  CHECK(r.stats[1].frames == 2 * (5 + 3 * 2));
}

TEST_CASE("smallest instance") {
  GaConfig c;
  c.population = 2;
  c.truncation = 1;
  c.reevals = 1;
  c.generations = 1;
  const auto spec = tiny_spec();
  EvolveOptions o;
  o.spec = &spec;
  const auto r = evolve(c, analytic(), o);
  REQUIRE(r.population.size() == 2);
  CHECK(r.population[0] == r.elite);
  CHECK(r.population[1] != r.elite);
}

TEST_CASE("population size, single elite and monotone elite") {
  GaConfig c;
  c.population = 11;
  c.truncation = 3;
  c.reevals = 2;
  c.generations = 15;
  c.sigma = 0.01;
  c.master_seed = 5;
  const auto spec = tiny_spec();
  EvolveOptions o;
  o.spec = &spec;
  std::vector<std::size_t> sizes;
  const auto r = evolve(c, analytic(), o);
  REQUIRE(r.stats.size() == 15);
  for (std::size_t i = 1; i < r.stats.size(); ++i) CHECK(r.stats[i].elite_mean >= r.stats[i - 1].elite_mean);
  CHECK(r.population.size() == 11);
  std::set<std::uint64_t> ids;
  for (const auto& g : r.population) ids.insert(g->id());
  CHECK(ids.size() == 11);
  CHECK(r.stats.back().elite_mean > r.stats.front().elite_mean);
}

TEST_CASE("determinism and resume") {
  GaConfig c;
  c.population = 8;
  c.truncation = 3;
  c.reevals = 2;
  c.generations = 6;
  c.sigma = 0.01;
  c.master_seed = 11;
  const auto spec = tiny_spec();
  EvolveOptions o;
  o.spec = &spec;
  const auto full = evolve(c, analytic(), o);
  const auto again = evolve(c, analytic(), o);
  CHECK(*full.elite == *again.elite);

  std::optional<Checkpoint> saved;
  EvolveOptions first = o;
  first.checkpoint_interval = 3;
  first.on_checkpoint = [&](const Checkpoint& ck) {
    if (ck.generation == 3) saved = ck;
  };
  GaConfig half = c;
  half.generations = 3;
  evolve(half, analytic(), first);
  REQUIRE(saved.has_value());
  const auto restored = decode_checkpoint(encode_checkpoint(*saved));
  CHECK(restored.generation == 3);
  CHECK(restored.stats == saved->stats);
  CHECK(*restored.elite == *saved->elite);

  EvolveOptions second = o;
  second.resume = restored;
  const auto resumed = evolve(c, analytic(), second);
  CHECK(*resumed.elite == *full.elite);
  REQUIRE(resumed.stats.size() == full.stats.size());
  for (std::size_t i = 0; i < full.stats.size(); ++i) {
    CHECK(resumed.stats[i].elite_mean == full.stats[i].elite_mean);
    CHECK(resumed.stats[i].pop_mean == full.stats[i].pop_mean);
  }

  GaConfig other = c;
  other.master_seed = 12;
  EvolveOptions bad = o;
  bad.resume = restored;
  CHECK_THROWS_AS(evolve(other, analytic(), bad), ConfigError);
}

TEST_CASE("evaluator failure keeps completed generations") {
  GaConfig c;
  c.population = 5;
  c.truncation = 2;
  c.reevals = 1;
  c.generations = 5;
  const auto spec = tiny_spec();
  EvolveOptions o;
  o.spec = &spec;
  int calls = 0;
  const auto r = evolve(c, [&](const std::vector<EvalRequest>& reqs) {
    if (++calls == 5) throw std::runtime_error("worker pool lost");
    return std::vector<Evaluation>(reqs.size(), Evaluation{0.0, 1});
  }, o);
  CHECK(r.aborted);
  CHECK(r.stats.size() == 2);
  CHECK(r.error.find("generation 3") != std::string::npos);
}

TEST_CASE("interrupt checkpoints and returns") {
  GaConfig c;
  c.population = 5;
  c.truncation = 2;
  c.reevals = 1;
  c.generations = 10;
  const auto spec = tiny_spec();
  std::atomic<bool> stop{false};
  std::optional<Checkpoint> ck;
  EvolveOptions o;
  o.spec = &spec;
  o.interrupt = &stop;
  o.on_generation = [&](const GenerationStats& s) {
    if (s.generation == 2) stop = true;
  };
  o.on_checkpoint = [&](const Checkpoint& k) { ck = k; };
  const auto r = evolve(c, analytic(), o);
  CHECK(r.interrupted);
  CHECK(r.stats.size() == 2);
  REQUIRE(ck.has_value());
  CHECK(ck->generation == 2);
}

TEST_CASE("zero generations") {
  GaConfig c;
  c.population = 3;
  c.truncation = 1;
  c.generations = 0;
  const auto r = evolve(c, analytic());
  CHECK(r.stats.empty());
  CHECK(r.elite == nullptr);
}

}
