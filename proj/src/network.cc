#include "dne/network.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <string>

#include "dne/error.h"

namespace dne::net {

using fixed::kActivationFormat;
using fixed::kProductRadix;
using fixed::kWeightFormat;

LayerSpec conv_layer(Shape3 in, int filter, int stride, int out_channels, Activation act, int cpf,
                     int kpf) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.filter_h = l.filter_w = filter;
  l.stride_h = l.stride_w = stride;
  l.in = in;
  l.out = Shape3{(in.h - filter) / stride + 1, (in.w - filter) / stride + 1, out_channels};
  l.activation = act;
  l.cpf = cpf;
  l.kpf = kpf;
  return l;
}

LayerSpec dense_layer(Shape3 in, int units, Activation act, int cpf, int kpf) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.filter_h = in.h;
  l.filter_w = in.w;
  l.stride_h = l.stride_w = 1;
  l.in = in;
  l.out = Shape3{1, 1, units};
  l.activation = act;
  l.cpf = cpf;
  l.kpf = kpf;
  return l;
}

NetworkSpec NetworkSpec::build(std::vector<LayerSpec> layers) {
  NetworkSpec spec;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i + 1);
    if (l.filter_h <= 0 || l.filter_w <= 0 || l.stride_h <= 0 || l.stride_w <= 0)
      throw ConfigError(where + ": filter and stride must be positive");
    if (l.in.h < l.filter_h || l.in.w < l.filter_w)
      throw ConfigError(where + ": filter larger than input");
    const int oh = (l.in.h - l.filter_h) / l.stride_h + 1;
    const int ow = (l.in.w - l.filter_w) / l.stride_w + 1;
    if (l.out.h != oh || l.out.w != ow)
      throw ConfigError(where + ": output shape does not follow valid-convolution arithmetic");
    if (l.kind == LayerKind::dense && (oh != 1 || ow != 1))
      throw ConfigError(where + ": dense layer must cover its whole input");
    if (l.cpf <= 0 || l.kpf <= 0 || l.in.c % l.cpf != 0 || l.out.c % l.kpf != 0)
      throw ConfigError(where + ": CPF must divide input channels and KPF output channels");
    if (i > 0 && !(layers[i - 1].out == l.in))
      throw ConfigError(where + ": input shape does not match previous layer output");
    spec.total_params += l.param_count();
  }
  spec.layers = std::move(layers);
  return spec;
}

const NetworkSpec& default_spec() {
  static const NetworkSpec spec = [] {
    std::vector<LayerSpec> layers;
    layers.push_back(conv_layer({84, 84, 4}, 8, 4, 32, Activation::relu, 4, 32));
    layers.push_back(conv_layer(layers.back().out, 4, 2, 64, Activation::relu, 32, 4));
    layers.push_back(conv_layer(layers.back().out, 3, 1, 64, Activation::relu, 4, 32));
    layers.push_back(dense_layer(layers.back().out, kActionCount, Activation::none, 4, 1));
    return NetworkSpec::build(std::move(layers));
  }();
  return spec;
}

std::vector<std::size_t> param_shapes(const NetworkSpec& spec) {
  std::vector<std::size_t> counts;
  counts.reserve(spec.layers.size());
  for (const auto& l : spec.layers) counts.push_back(l.param_count());
  return counts;
}

std::vector<double> Genome::dequantized() const {
  std::vector<double> out(weights_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i)
    out[i] = fixed::dequantize_raw(weights_[i], kWeightFormat.radix);
  return out;
}

namespace {

void check_genome(const NetworkSpec& spec, const Genome& genome) {
  if (genome.size() != spec.total_params)
    throw ConfigError("genome has " + std::to_string(genome.size()) + " weights, network expects " +
                      std::to_string(spec.total_params));
}

void check_input(const NetworkSpec& spec, std::size_t n) {
  if (n != spec.input_shape().size())
    throw ConfigError("input tensor has " + std::to_string(n) + " values, network expects " +
                      std::to_string(spec.input_shape().size()));
}

// Canonical index of weight (o, c, kh, kw) within a layer.
inline std::size_t canonical_index(const LayerSpec& l, int o, int c, int kh, int kw) {
  return ((std::size_t(o) * l.in.c + c) * l.filter_h + kh) * l.filter_w + kw;
}

inline std::int16_t narrow(const LayerSpec& l, std::int64_t acc) {
  const std::int32_t raw = l.activation == Activation::relu
                               ? fixed::requantize_relu_raw(acc, kProductRadix, kActivationFormat)
                               : fixed::requantize_raw(acc, kProductRadix, kActivationFormat);
  return static_cast<std::int16_t>(raw);
}

// Exact only while sum |a_i * b_i| fits in int32; the caller proves that bound.
// Integer sums are order independent, so every clone returns identical results.
__attribute__((target_clones("avx2", "default")))
std::int32_t dot_i32(const std::int16_t* __restrict a, const std::int16_t* __restrict b, int n) {
  std::int32_t s = 0;
  for (int i = 0; i < n; ++i) s += std::int32_t{a[i]} * std::int32_t{b[i]};
  return s;
}

// Four output channels per pass over the patch; w holds four consecutive rows of n.
__attribute__((target_clones("avx2", "default")))
void dot4_i32(const std::int16_t* __restrict a, const std::int16_t* __restrict w, int n,
              std::int32_t* __restrict out) {
  const std::int16_t* w1 = w + n;
  const std::int16_t* w2 = w1 + n;
  const std::int16_t* w3 = w2 + n;
  std::int32_t s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  for (int i = 0; i < n; ++i) {
    const std::int32_t x = a[i];
    s0 += x * w[i];
    s1 += x * w1[i];
    s2 += x * w2[i];
    s3 += x * w3[i];
  }
  out[0] = s0;
  out[1] = s1;
  out[2] = s2;
  out[3] = s3;
}

std::int64_t dot_i64(const std::int16_t* __restrict a, const std::int16_t* __restrict b, int n) {
  std::int64_t s = 0;
  for (int i = 0; i < n; ++i) s += std::int64_t{std::int32_t{a[i]} * std::int32_t{b[i]}};
  return s;
}

}  // namespace

Network::Network(const NetworkSpec& spec, const Genome& genome) : spec_(spec) {
  check_genome(spec_, genome);
  const auto w = genome.weights();
  std::size_t base = 0;
  packed_.reserve(spec_.layers.size());
  for (const auto& l : spec_.layers) {
    PackedLayer p;
    p.weights.resize(l.param_count());
    const std::size_t k = l.fan_in();
    for (int o = 0; o < l.out.c; ++o) {
      for (int c = 0; c < l.in.c; ++c) {
        for (int kh = 0; kh < l.filter_h; ++kh) {
          for (int kw = 0; kw < l.filter_w; ++kw) {
            const std::int16_t v = w[base + canonical_index(l, o, c, kh, kw)];
            p.weights[o * k + (std::size_t(kh) * l.filter_w + kw) * l.in.c + c] = v;
            p.max_abs_weight = std::max(p.max_abs_weight, std::abs(std::int32_t{v}));
          }
        }
      }
    }
    base += l.param_count();
    packed_.push_back(std::move(p));
  }
}

std::vector<std::int16_t> Network::forward(std::span<const std::int16_t> x) const {
  check_input(spec_, x.size());
  std::vector<std::int16_t> cur(x.begin(), x.end());
  std::vector<std::int16_t> next;
  std::vector<std::int16_t> patch;
  for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
    const LayerSpec& l = spec_.layers[li];
    const PackedLayer& p = packed_[li];
    const int k = static_cast<int>(l.fan_in());
    const int row_len = l.filter_w * l.in.c;

    std::int32_t max_abs_act = 0;
    for (const auto v : cur) max_abs_act = std::max(max_abs_act, std::abs(std::int32_t{v}));
    const bool fits_i32 = std::int64_t{k} * p.max_abs_weight * max_abs_act <=
                          std::numeric_limits<std::int32_t>::max();

    next.assign(l.out.size(), 0);
    patch.resize(k);
    for (int oy = 0; oy < l.out.h; ++oy) {
      for (int ox = 0; ox < l.out.w; ++ox) {
        for (int kh = 0; kh < l.filter_h; ++kh) {
          const std::size_t src = (std::size_t(oy * l.stride_h + kh) * l.in.w + ox * l.stride_w) * l.in.c;
          std::memcpy(patch.data() + kh * row_len, cur.data() + src, sizeof(std::int16_t) * row_len);
        }
        std::int16_t* dst = next.data() + (std::size_t(oy) * l.out.w + ox) * l.out.c;
        int o = 0;
        if (fits_i32) {
          std::int32_t block[4];
          for (; o + 4 <= l.out.c; o += 4) {
            dot4_i32(patch.data(), p.weights.data() + std::size_t(o) * k, k, block);
            for (int j = 0; j < 4; ++j) dst[o + j] = narrow(l, block[j]);
          }
        }
        for (; o < l.out.c; ++o) {
          const std::int16_t* wo = p.weights.data() + std::size_t(o) * k;
          const std::int64_t acc = fits_i32 ? dot_i32(patch.data(), wo, k) : dot_i64(patch.data(), wo, k);
          dst[o] = narrow(l, acc);
        }
      }
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<std::int16_t> forward(const NetworkSpec& spec, const Genome& genome,
                                  std::span<const std::int16_t> x) {
  return Network(spec, genome).forward(x);
}

std::vector<std::int16_t> forward(const Genome& genome, std::span<const std::int16_t> x) {
  return forward(default_spec(), genome, x);
}

std::vector<std::int16_t> forward_tiled(const NetworkSpec& spec, const Genome& genome,
                                        std::span<const std::int16_t> x) {
  check_genome(spec, genome);
  check_input(spec, x.size());
  const auto w = genome.weights();
  std::vector<std::int16_t> cur(x.begin(), x.end());
  std::size_t base = 0;
  for (const auto& l : spec.layers) {
    std::vector<std::int64_t> acc(l.out.size(), 0);
    const auto in_at = [&](int y, int xx, int c) {
      return fixed::QValue(cur[(std::size_t(y) * l.in.w + xx) * l.in.c + c], kActivationFormat);
    };
    for (int o0 = 0; o0 < l.out.c; o0 += l.kpf) {
      for (int c0 = 0; c0 < l.in.c; c0 += l.cpf) {
        for (int oy = 0; oy < l.out.h; ++oy) {
          for (int ox = 0; ox < l.out.w; ++ox) {
            for (int o = o0; o < o0 + l.kpf; ++o) {
              fixed::Accumulator a{acc[(std::size_t(oy) * l.out.w + ox) * l.out.c + o], kProductRadix};
              for (int c = c0; c < c0 + l.cpf; ++c) {
                for (int kh = 0; kh < l.filter_h; ++kh) {
                  for (int kw = 0; kw < l.filter_w; ++kw) {
                    const fixed::QValue wv(w[base + canonical_index(l, o, c, kh, kw)], kWeightFormat);
                    a = fixed::mac(a, wv, in_at(oy * l.stride_h + kh, ox * l.stride_w + kw, c));
                  }
                }
              }
              acc[(std::size_t(oy) * l.out.w + ox) * l.out.c + o] = a.raw;
            }
          }
        }
      }
    }
    std::vector<std::int16_t> next(l.out.size());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = narrow(l, acc[i]);
    cur.swap(next);
    base += l.param_count();
  }
  return cur;
}

std::vector<double> forward_float(const NetworkSpec& spec, std::span<const double> weights,
                                  std::span<const double> x) {
  if (weights.size() != spec.total_params)
    throw ConfigError("forward_float: weight vector length does not match network");
  check_input(spec, x.size());
  std::vector<double> cur(x.begin(), x.end());
  std::size_t base = 0;
  for (const auto& l : spec.layers) {
    std::vector<double> next(l.out.size(), 0.0);
    for (int oy = 0; oy < l.out.h; ++oy) {
      for (int ox = 0; ox < l.out.w; ++ox) {
        for (int o = 0; o < l.out.c; ++o) {
          double s = 0.0;
          for (int c = 0; c < l.in.c; ++c) {
            for (int kh = 0; kh < l.filter_h; ++kh) {
              for (int kw = 0; kw < l.filter_w; ++kw) {
                const int iy = oy * l.stride_h + kh;
                const int ix = ox * l.stride_w + kw;
                s += weights[base + canonical_index(l, o, c, kh, kw)] *
                     cur[(std::size_t(iy) * l.in.w + ix) * l.in.c + c];
              }
            }
          }
          if (l.activation == Activation::relu) s = std::max(s, 0.0);
          next[(std::size_t(oy) * l.out.w + ox) * l.out.c + o] = s;
        }
      }
    }
    cur.swap(next);
    base += l.param_count();
  }
  return cur;
}

std::vector<double> forward_float(std::span<const double> weights, std::span<const double> x) {
  return forward_float(default_spec(), weights, x);
}

}  // namespace dne::net
