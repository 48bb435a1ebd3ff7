#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dne/fixed_point.h"

namespace dne::net {

inline constexpr int kActionCount = 18;

struct Shape3 {
  int h = 0, w = 0, c = 0;
  constexpr std::size_t size() const { return std::size_t(h) * w * c; }
  friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
};

enum class LayerKind { conv, dense };
enum class Activation { relu, none };

// A dense layer is stored as a valid convolution whose filter covers the whole
// input (filter = in.h x in.w, stride 1, output 1 x 1 x units).
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int filter_h = 0, filter_w = 0;
  int stride_h = 1, stride_w = 1;
  Shape3 in;
  Shape3 out;
  Activation activation = Activation::relu;
  int cpf = 1;  // channel parallelism factor (tiling hint only)
  int kpf = 1;  // kernel parallelism factor (tiling hint only)

  std::size_t fan_in() const { return std::size_t(filter_h) * filter_w * in.c; }
  std::size_t param_count() const { return fan_in() * out.c; }
};

LayerSpec conv_layer(Shape3 in, int filter, int stride, int out_channels, Activation act, int cpf,
                     int kpf);
LayerSpec dense_layer(Shape3 in, int units, Activation act, int cpf, int kpf);

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::size_t total_params = 0;

  // Validates the shape chain and computes total_params; throws ConfigError.
  static NetworkSpec build(std::vector<LayerSpec> layers);

  Shape3 input_shape() const { return layers.empty() ? Shape3{} : layers.front().in; }
  std::size_t output_size() const { return layers.empty() ? 0 : layers.back().out.size(); }
};

// 84x84x4 -> 20x20x32 -> 9x9x64 -> 7x7x64 -> 18, no biases.
const NetworkSpec& default_spec();

std::vector<std::size_t> param_shapes(const NetworkSpec& spec);

struct LineageEntry {
  std::uint64_t parent_id = 0;
  std::uint64_t mutation_seed = 0;
  friend bool operator==(const LineageEntry&, const LineageEntry&) = default;
};

// Flat weight vector in weight-format raw units. Canonical layout: layer-major,
// then output channel, input channel, filter row, filter column.
class Genome {
 public:
  Genome() = default;
  Genome(std::uint64_t id, std::vector<std::int16_t> weights, std::vector<LineageEntry> lineage = {})
      : id_(id), weights_(std::move(weights)), lineage_(std::move(lineage)) {}

  static Genome zeros(const NetworkSpec& spec, std::uint64_t id = 0) {
    return Genome(id, std::vector<std::int16_t>(spec.total_params, 0));
  }

  std::uint64_t id() const { return id_; }
  std::span<const std::int16_t> weights() const { return weights_; }
  const std::vector<LineageEntry>& lineage() const { return lineage_; }
  std::size_t size() const { return weights_.size(); }

  Genome with_id(std::uint64_t id) const { return Genome(id, weights_, lineage_); }

  std::vector<double> dequantized() const;

  friend bool operator==(const Genome&, const Genome&) = default;

 private:
  std::uint64_t id_ = 0;
  std::vector<std::int16_t> weights_;
  std::vector<LineageEntry> lineage_;
};

using GenomePtr = std::shared_ptr<const Genome>;

// Weights repacked for the inference kernel. Building one is O(params); reuse it
// across the inferences of an episode.
class Network {
 public:
  // Throws ConfigError if the genome length differs from spec.total_params.
  Network(const NetworkSpec& spec, const Genome& genome);

  // x: input activations, HWC, activation-format raw units. Returns the output
  // layer in activation-format raw units. Reentrant.
  std::vector<std::int16_t> forward(std::span<const std::int16_t> x) const;

  const NetworkSpec& spec() const { return spec_; }

 private:
  struct PackedLayer {
    std::vector<std::int16_t> weights;  // [out][kh][kw][in_c]
    std::int32_t max_abs_weight = 0;
  };

  NetworkSpec spec_;
  std::vector<PackedLayer> packed_;
};

std::vector<std::int16_t> forward(const NetworkSpec& spec, const Genome& genome,
                                  std::span<const std::int16_t> x);
std::vector<std::int16_t> forward(const Genome& genome, std::span<const std::int16_t> x);

// Same arithmetic evaluated in CPF x KPF tiles directly on the canonical layout
// with 64-bit accumulators, the loop order of the hardware pipeline.
std::vector<std::int16_t> forward_tiled(const NetworkSpec& spec, const Genome& genome,
                                        std::span<const std::int16_t> x);

// Double-precision reference with identical layer semantics (no requantization).
std::vector<double> forward_float(const NetworkSpec& spec, std::span<const double> weights,
                                  std::span<const double> x);
std::vector<double> forward_float(std::span<const double> weights, std::span<const double> x);

}  // namespace dne::net
