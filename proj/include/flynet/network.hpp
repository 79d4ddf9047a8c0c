#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flynet/error.hpp"
#include "flynet/layers.hpp"
#include "flynet/tensor.hpp"

namespace flynet {

enum class Arch { flynet, fcn };

inline std::string_view to_string(Arch a) { return a == Arch::flynet ? "flynet" : "fcn"; }

inline Arch arch_from_string(std::string_view s) {
  if (s == "flynet") return Arch::flynet;
  if (s == "fcn") return Arch::fcn;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

// One layer application. Input id -1 is the network input.
struct Node {
  LayerSpec spec;
  std::vector<int> inputs;
  std::string label;

  friend bool operator==(const Node&, const Node&) = default;
};

struct NetworkSpec {
  std::string name;
  Arch arch = Arch::flynet;
  std::size_t input_size = 128;
  std::size_t base_width = 64;
  std::vector<Node> nodes;  // topological order; the last node is the output
  int bottleneck = -1;      // output node of the deepest encoder group

  std::size_t param_count() const {
    std::size_t total = 0;
    for (const auto& n : nodes) total += n.spec.param_count();
    return total;
  }

  std::vector<int> param_layers() const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].spec.has_params()) ids.push_back(static_cast<int>(i));
    return ids;
  }

  // FNV-1a over the graph structure.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(static_cast<std::uint64_t>(arch));
    mix(input_size);
    mix(base_width);
    for (const auto& n : nodes) {
      mix(static_cast<std::uint64_t>(n.spec.kind));
      mix(n.spec.in_channels);
      mix(n.spec.out_channels);
      mix(n.spec.factor);
      for (int i : n.inputs) mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(i)));
    }
    return h;
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

template <std::floating_point T>
using ParamSet = std::map<int, LayerParams<T>>;

template <std::floating_point T>
ParamSet<T> zeros_like(const ParamSet<T>& params) {
  ParamSet<T> out;
  for (const auto& [id, p] : params)
    out.emplace(id, LayerParams<T>{Tensor4<T>(p.weights.shape()), std::vector<T>(p.bias.size(), T{0})});
  return out;
}

template <std::floating_point U, std::floating_point T>
ParamSet<U> cast_params(const ParamSet<T>& params) {
  ParamSet<U> out;
  for (const auto& [id, p] : params) out.emplace(id, p.template cast<U>());
  return out;
}

namespace detail {

class GraphBuilder {
 public:
  int add(LayerSpec spec, std::vector<int> inputs, std::string label) {
    nodes_.push_back({spec, std::move(inputs), std::move(label)});
    return static_cast<int>(nodes_.size()) - 1;
  }
  int conv_relu(std::size_t in_c, std::size_t out_c, int input, const std::string& label) {
    const int conv = add({LayerKind::conv3x3, in_c, out_c, 0}, {input}, label + ".conv");
    return add({LayerKind::relu, out_c, out_c, 0}, {conv}, label + ".relu");
  }
  std::vector<Node> take() { return std::move(nodes_); }

 private:
  std::vector<Node> nodes_;
};

inline void check_build_args(std::size_t input_size, std::size_t base_width) {
  require(input_size >= 16 && input_size % 16 == 0,
          "input_size must be a positive multiple of 16, got " + std::to_string(input_size));
  require(base_width >= 1, "base_width must be >= 1");
}

struct Encoder {
  int output = -1;
  std::vector<int> skips;  // outputs of groups 1..4 (before pooling)
  std::vector<std::size_t> channels;
};

// Five groups of two 3x3 conv+relu; groups 1-4 end with 2x2 max pooling.
inline Encoder build_encoder(GraphBuilder& g, std::size_t base_width) {
  Encoder enc;
  int prev = -1;
  std::size_t in_c = 1;
  for (std::size_t group = 1; group <= 5; ++group) {
    const std::size_t ch = base_width << (group - 1);
    const std::string name = "enc" + std::to_string(group);
    prev = g.conv_relu(in_c, ch, prev, name + ".a");
    prev = g.conv_relu(ch, ch, prev, name + ".b");
    enc.channels.push_back(ch);
    if (group < 5) {
      enc.skips.push_back(prev);
      prev = g.add({LayerKind::maxpool2, ch, ch, 0}, {prev}, name + ".pool");
    }
    in_c = ch;
  }
  enc.output = prev;
  return enc;
}

}  // namespace detail

// Encoder-decoder with skip concatenations and a 1x1 sigmoid head.
inline NetworkSpec make_flynet_spec(std::size_t input_size, std::size_t base_width) {
  detail::check_build_args(input_size, base_width);
  detail::GraphBuilder g;
  const auto enc = detail::build_encoder(g, base_width);
  int prev = enc.output;
  std::size_t in_c = enc.channels.back();
  for (std::size_t d = 1; d <= 4; ++d) {
    const std::size_t ch = in_c / 2;
    const std::size_t mirror = enc.channels[4 - d];
    const std::string name = "dec" + std::to_string(d);
    const int up = g.add({LayerKind::tconv2, in_c, ch, 0}, {prev}, name + ".up");
    const int cat = g.add({LayerKind::concat, ch + mirror, ch + mirror, 0},
                          {up, enc.skips[4 - d]}, name + ".concat");
    prev = g.conv_relu(ch + mirror, ch, cat, name + ".a");
    prev = g.conv_relu(ch, ch, prev, name + ".b");
    in_c = ch;
  }
  const int head = g.add({LayerKind::conv1x1, in_c, 1, 0}, {prev}, "head.conv");
  g.add({LayerKind::sigmoid, 1, 1, 0}, {head}, "head.sigmoid");
  NetworkSpec spec{"flynet", Arch::flynet, input_size, base_width, g.take(), enc.output};
  return spec;
}

// Same encoder; a 1x1 scoring conv followed by a single x16 bilinear upsampling.
inline NetworkSpec make_fcn_spec(std::size_t input_size, std::size_t base_width) {
  detail::check_build_args(input_size, base_width);
  detail::GraphBuilder g;
  const auto enc = detail::build_encoder(g, base_width);
  const int score = g.add({LayerKind::conv1x1, enc.channels.back(), 1, 0}, {enc.output}, "head.conv");
  const int up = g.add({LayerKind::bilinear_up, 1, 1, 16}, {score}, "head.upsample");
  g.add({LayerKind::sigmoid, 1, 1, 0}, {up}, "head.sigmoid");
  NetworkSpec spec{"fcn", Arch::fcn, input_size, base_width, g.take(), enc.output};
  return spec;
}

inline NetworkSpec make_spec(Arch arch, std::size_t input_size, std::size_t base_width) {
  return arch == Arch::flynet ? make_flynet_spec(input_size, base_width)
                              : make_fcn_spec(input_size, base_width);
}

template <std::floating_point T>
ParamSet<T> init_network(const NetworkSpec& spec, std::mt19937_64& rng) {
  ParamSet<T> params;
  for (int id : spec.param_layers()) params.emplace(id, init_params<T>(spec.nodes[static_cast<std::size_t>(id)].spec, rng));
  return params;
}

template <std::floating_point T>
std::pair<NetworkSpec, ParamSet<T>> build_flynet(std::size_t input_size, std::size_t base_width,
                                                 std::mt19937_64& rng) {
  auto spec = make_flynet_spec(input_size, base_width);
  auto params = init_network<T>(spec, rng);
  return {std::move(spec), std::move(params)};
}

template <std::floating_point T>
std::pair<NetworkSpec, ParamSet<T>> build_fcn_baseline(std::size_t input_size, std::size_t base_width,
                                                       std::mt19937_64& rng) {
  auto spec = make_fcn_spec(input_size, base_width);
  auto params = init_network<T>(spec, rng);
  return {std::move(spec), std::move(params)};
}

// ---------------------------------------------------------------------------
// Whole-network passes
// ---------------------------------------------------------------------------

template <std::floating_point T>
struct ForwardCache {
  std::uint64_t fingerprint = 0;
  Shape input_shape{};
  std::vector<Tensor4<T>> outputs;
  std::vector<LayerCache<T>> layers;
};

template <std::floating_point T>
struct NetworkGrads {
  ParamSet<T> params;
  Tensor4<T> input;
};

template <std::floating_point T>
std::pair<Tensor4<T>, ForwardCache<T>> forward(const NetworkSpec& spec, const ParamSet<T>& params,
                                               const Tensor4<T>& batch) {
  const Shape s = batch.shape();
  detail::require(s.c == 1 && s.h == spec.input_size && s.w == spec.input_size,
                  "forward: expected input (n,1," + std::to_string(spec.input_size) + "," +
                      std::to_string(spec.input_size) + "), got " + s.str());
  ForwardCache<T> cache;
  cache.fingerprint = spec.fingerprint();
  cache.input_shape = s;
  cache.outputs.resize(spec.nodes.size());
  cache.layers.resize(spec.nodes.size());
  auto input_of = [&](int id) -> const Tensor4<T>& {
    return id < 0 ? batch : cache.outputs[static_cast<std::size_t>(id)];
  };
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const Node& node = spec.nodes[i];
    const Tensor4<T>& x = input_of(node.inputs.front());
    std::pair<Tensor4<T>, LayerCache<T>> r;
    switch (node.spec.kind) {
      case LayerKind::conv3x3:
      case LayerKind::conv1x1: {
        const auto it = params.find(static_cast<int>(i));
        detail::require(it != params.end(), "forward: missing parameters for " + node.label);
        r = conv2d_forward(x, it->second, node.spec.kernel());
        break;
      }
      case LayerKind::tconv2: {
        const auto it = params.find(static_cast<int>(i));
        detail::require(it != params.end(), "forward: missing parameters for " + node.label);
        r = tconv2_forward(x, it->second);
        break;
      }
      case LayerKind::maxpool2: r = maxpool2_forward(x); break;
      case LayerKind::relu: r = activation_forward(x, Activation::relu); break;
      case LayerKind::sigmoid: r = activation_forward(x, Activation::sigmoid); break;
      case LayerKind::bilinear_up: r = bilinear_upsample(x, node.spec.factor); break;
      case LayerKind::concat: {
        const Tensor4<T>& b = input_of(node.inputs.at(1));
        r.first = concat_channels(x, b);
        r.second.in_shape = r.first.shape();
        r.second.split = x.shape().c;
        break;
      }
    }
    cache.outputs[i] = std::move(r.first);
    cache.layers[i] = std::move(r.second);
  }
  Tensor4<T> probs = cache.outputs.back();
  return {std::move(probs), std::move(cache)};
}

// Reverse-mode pass; also returns the gradient with respect to the input batch.
template <std::floating_point T>
NetworkGrads<T> backward(const NetworkSpec& spec, const ParamSet<T>& params, const ForwardCache<T>& cache,
                         const Tensor4<T>& dprobs) {
  detail::require(cache.fingerprint == spec.fingerprint() && cache.layers.size() == spec.nodes.size(),
                  "backward: cache was produced by a different network");
  detail::require(!cache.outputs.empty() && dprobs.shape() == cache.outputs.back().shape(),
                  "backward: dprobs shape " + dprobs.shape().str() + " does not match forward output");
  const std::size_t count = spec.nodes.size();
  std::vector<Tensor4<T>> grads(count);
  grads[count - 1] = dprobs;
  NetworkGrads<T> out;
  out.params = zeros_like(params);

  auto accumulate = [&](int id, Tensor4<T>&& g) {
    Tensor4<T>& dst = id < 0 ? out.input : grads[static_cast<std::size_t>(id)];
    if (dst.empty()) {
      dst = std::move(g);
    } else {
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
    }
  };

  for (std::size_t r = count; r-- > 0;) {
    const Node& node = spec.nodes[r];
    Tensor4<T> dy = std::move(grads[r]);
    if (dy.empty()) continue;
    const LayerCache<T>& lc = cache.layers[r];
    switch (node.spec.kind) {
      case LayerKind::conv3x3:
      case LayerKind::conv1x1:
      case LayerKind::tconv2: {
        const auto& p = params.at(static_cast<int>(r));
        auto g = node.spec.kind == LayerKind::tconv2 ? tconv2_backward(lc, p, dy)
                                                     : conv2d_backward(lc, p, dy);
        auto& dst = out.params.at(static_cast<int>(r));
        dst.weights = std::move(g.dw);
        dst.bias = std::move(g.db);
        accumulate(node.inputs.front(), std::move(g.dx));
        break;
      }
      case LayerKind::maxpool2: accumulate(node.inputs.front(), maxpool2_backward(lc, dy)); break;
      case LayerKind::relu:
        accumulate(node.inputs.front(), activation_backward(lc, dy, Activation::relu));
        break;
      case LayerKind::sigmoid:
        accumulate(node.inputs.front(), activation_backward(lc, dy, Activation::sigmoid));
        break;
      case LayerKind::bilinear_up:
        accumulate(node.inputs.front(), bilinear_upsample_backward(lc, dy));
        break;
      case LayerKind::concat: {
        auto [da, db] = split_channels(dy, lc.split);
        accumulate(node.inputs.front(), std::move(da));
        accumulate(node.inputs.at(1), std::move(db));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON form of the network graph (checkpoint header)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const LayerSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"in_channels", s.in_channels},
                     {"out_channels", s.out_channels},
                     {"factor", s.factor}};
}

inline void from_json(const nlohmann::json& j, LayerSpec& s) {
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  s.in_channels = j.at("in_channels").get<std::size_t>();
  s.out_channels = j.at("out_channels").get<std::size_t>();
  s.factor = j.at("factor").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const NetworkSpec& spec) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : spec.nodes)
    nodes.push_back({{"label", n.label}, {"layer", n.spec}, {"inputs", n.inputs}});
  j = nlohmann::json{{"name", spec.name},
                     {"arch", to_string(spec.arch)},
                     {"input_size", spec.input_size},
                     {"base_width", spec.base_width},
                     {"bottleneck", spec.bottleneck},
                     {"nodes", std::move(nodes)}};
}

inline void from_json(const nlohmann::json& j, NetworkSpec& spec) {
  spec.name = j.at("name").get<std::string>();
  spec.arch = arch_from_string(j.at("arch").get<std::string>());
  spec.input_size = j.at("input_size").get<std::size_t>();
  spec.base_width = j.at("base_width").get<std::size_t>();
  spec.bottleneck = j.at("bottleneck").get<int>();
  spec.nodes.clear();
  for (const auto& n : j.at("nodes"))
    spec.nodes.push_back({n.at("layer").get<LayerSpec>(), n.at("inputs").get<std::vector<int>>(),
                          n.at("label").get<std::string>()});
}

}  // namespace flynet
