#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <concepts>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "flynet/layers.hpp"
#include "flynet/loss.hpp"
#include "flynet/network.hpp"
#include "flynet/random.hpp"

namespace flynet {

struct GradcheckOptions {
  Precision precision = Precision::double_precision;
  std::size_t seeds = 3;
  std::uint64_t seed = 7;
  std::optional<double> step;             // default 1e-4 (double), 1e-2 (single)
  std::optional<double> layer_threshold;  // default 1e-4 (double), 1e-2 (single)
  std::optional<double> network_threshold;  // default 1e-3 (double), 1e-2 (single)
  std::optional<double> floor;            // smallest relative-error denominator; default 1e-8 (double), 1e-3 (single)
  std::size_t samples_per_tensor = 16;    // end-to-end coordinates checked per parameter tensor
  std::optional<LayerKind> fault;         // sign-flips the analytic weight gradient of this kind
};

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil crossed a relu/max-pool switch

  bool passed() const { return checked > 0 && max_rel_error < threshold; }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
  }
};

namespace detail {

inline double rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

struct Tolerances {
  double step;
  double layer;
  double network;
  double floor;
};

template <typename T>
Tolerances tolerances(const GradcheckOptions& o) {
  const bool dbl = std::is_same_v<T, double>;
  return {o.step.value_or(dbl ? 1e-4 : 1e-2), o.layer_threshold.value_or(dbl ? 1e-4 : 1e-2),
          o.network_threshold.value_or(dbl ? 1e-3 : 1e-2), o.floor.value_or(dbl ? 1e-8 : 1e-3)};
}

template <typename T>
double weighted_sum(const Tensor4<T>& y, const Tensor4<T>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += static_cast<double>(y[i]) * static_cast<double>(r[i]);
  return acc;
}

template <typename T>
Tensor4<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor4<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

// Central difference of f with respect to every entry of `values`, compared to `analytic`.
template <typename T>
void check_all(std::span<T> values, std::span<const T> analytic, const std::function<double()>& f,
               const Tolerances& tol, GradcheckEntry& entry) {
  const double step = tol.step;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T saved = values[i];
    values[i] = static_cast<T>(saved + step);
    const double up = f();
    values[i] = static_cast<T>(saved - step);
    const double down = f();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    entry.max_rel_error = std::max(entry.max_rel_error, rel_error(static_cast<double>(analytic[i]), numeric, tol.floor));
    ++entry.checked;
  }
}

// Hash of every relu on/off state and max-pool selection in a forward pass.
template <typename T>
std::uint64_t switch_signature(const NetworkSpec& spec, const ForwardCache<T>& cache) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    if (spec.nodes[i].spec.kind == LayerKind::relu) {
      for (T v : cache.outputs[i].data()) mix(v > T{0} ? 1U : 2U);
    } else if (spec.nodes[i].spec.kind == LayerKind::maxpool2) {
      for (auto a : cache.layers[i].argmax) mix(a);
    }
  }
  return h;
}


template <typename T>
void maybe_fault(const GradcheckOptions& o, LayerKind kind, LayerGrads<T>& g) {
  if (o.fault && *o.fault == kind)
    for (auto& v : g.dw.data()) v = -v;
}

template <typename T>
GradcheckEntry check_conv(const GradcheckOptions& o, LayerKind kind, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{std::string(to_string(kind)), 0.0, tol.layer};
  const LayerSpec spec{kind, 3, 4, 0};
  auto x = random_tensor<T>({2, 3, 5, 4}, rng);
  auto params = init_params<T>(spec, rng);
  for (auto& b : params.bias) b = static_cast<T>(std::uniform_real_distribution<double>(-0.5, 0.5)(rng));
  const auto [y, cache] = conv2d_forward(x, params, spec.kernel());
  const auto r = random_tensor<T>(y.shape(), rng);
  auto g = conv2d_backward(cache, params, r);
  maybe_fault(o, kind, g);
  auto f = [&] { return weighted_sum(conv2d_forward(x, params, spec.kernel()).first, r); };
  check_all<T>(x.data(), g.dx.data(), f, tol, e);
  check_all<T>(params.weights.data(), g.dw.data(), f, tol, e);
  check_all<T>(params.bias, g.db, f, tol, e);
  return e;
}

template <typename T>
GradcheckEntry check_tconv(const GradcheckOptions& o, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{"tconv2", 0.0, tol.layer};
  const LayerSpec spec{LayerKind::tconv2, 3, 2, 0};
  auto x = random_tensor<T>({2, 3, 3, 2}, rng);
  auto params = init_params<T>(spec, rng);
  for (auto& b : params.bias) b = static_cast<T>(std::uniform_real_distribution<double>(-0.5, 0.5)(rng));
  const auto [y, cache] = tconv2_forward(x, params);
  const auto r = random_tensor<T>(y.shape(), rng);
  auto g = tconv2_backward(cache, params, r);
  maybe_fault(o, LayerKind::tconv2, g);
  auto f = [&] { return weighted_sum(tconv2_forward(x, params).first, r); };
  check_all<T>(x.data(), g.dx.data(), f, tol, e);
  check_all<T>(params.weights.data(), g.dw.data(), f, tol, e);
  check_all<T>(params.bias, g.db, f, tol, e);
  return e;
}

template <typename T>
GradcheckEntry check_maxpool(const GradcheckOptions& o, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{"maxpool2", 0.0, tol.layer};
  // Distinct values spaced far beyond the step.
  Tensor4<T> x({2, 2, 4, 6});
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(0.05 * static_cast<double>(perm[i]) - 1.0);
  const auto [y, cache] = maxpool2_forward(x);
  const auto r = random_tensor<T>(y.shape(), rng);
  const auto dx = maxpool2_backward(cache, r);
  auto f = [&] { return weighted_sum(maxpool2_forward(x).first, r); };
  check_all<T>(x.data(), dx.data(), f, tol, e);
  return e;
}

template <typename T>
GradcheckEntry check_activation(const GradcheckOptions& o, Activation kind, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{kind == Activation::relu ? "relu" : "sigmoid", 0.0, tol.layer};
  auto x = random_tensor<T>({2, 3, 4, 4}, rng, -3.0, 3.0);
  if (kind == Activation::relu) {
    for (auto& v : x.data())
      if (std::abs(static_cast<double>(v)) < 10.0 * tol.step) v = static_cast<T>(v < 0 ? -0.5 : 0.5);
  }
  const auto [y, cache] = activation_forward(x, kind);
  const auto r = random_tensor<T>(y.shape(), rng);
  const auto dx = activation_backward(cache, r, kind);
  auto f = [&] { return weighted_sum(activation_forward(x, kind).first, r); };
  check_all<T>(x.data(), dx.data(), f, tol, e);
  return e;
}

template <typename T>
GradcheckEntry check_concat(const GradcheckOptions& o, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{"concat", 0.0, tol.layer};
  auto a = random_tensor<T>({2, 2, 3, 3}, rng);
  auto b = random_tensor<T>({2, 3, 3, 3}, rng);
  const auto r = random_tensor<T>({2, 5, 3, 3}, rng);
  const auto [da, db] = split_channels(r, 2);
  auto f = [&] { return weighted_sum(concat_channels(a, b), r); };
  check_all<T>(a.data(), da.data(), f, tol, e);
  check_all<T>(b.data(), db.data(), f, tol, e);
  return e;
}

template <typename T>
GradcheckEntry check_bilinear(const GradcheckOptions& o, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{"bilinear_up", 0.0, tol.layer};
  for (std::size_t factor : {2U, 3U, 16U}) {
    auto x = random_tensor<T>({2, 2, 3, 4}, rng);
    const auto [y, cache] = bilinear_upsample(x, factor);
    const auto r = random_tensor<T>(y.shape(), rng);
    const auto dx = bilinear_upsample_backward(cache, r);
    auto f = [&] { return weighted_sum(bilinear_upsample(x, factor).first, r); };
    check_all<T>(x.data(), dx.data(), f, tol, e);
  }
  return e;
}

inline std::vector<BinaryMask> random_masks(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  std::vector<BinaryMask> masks;
  for (std::size_t i = 0; i < n; ++i) {
    BinaryMask m(h, w);
    for (auto& v : m.data) v = coin(rng) ? 1 : 0;
    m.data[0] = 1;
    masks.push_back(std::move(m));
  }
  return masks;
}

template <typename T>
GradcheckEntry check_soft_iou(const GradcheckOptions& o, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{"soft_iou", 0.0, tol.layer};
  auto probs = random_tensor<T>({2, 1, 8, 8}, rng, 0.05, 0.95);
  const auto masks = random_masks(2, 8, 8, rng);
  const auto lv = soft_iou_loss(probs, std::span<const BinaryMask>(masks));
  auto f = [&] { return soft_iou_loss(probs, std::span<const BinaryMask>(masks)).loss; };
  check_all<T>(probs.data(), lv.dprobs.data(), f, tol, e);
  return e;
}

// Soft-IOU loss of a whole network; checks sampled parameters and input pixels.
template <typename T>
GradcheckEntry check_network(const GradcheckOptions& o, Arch arch, std::mt19937_64& rng) {
  const auto tol = tolerances<T>(o);
  GradcheckEntry e{std::string(to_string(arch)) + " end-to-end", 0.0, tol.network};
  const NetworkSpec spec = make_spec(arch, 16, 2);
  auto params = init_network<T>(spec, rng);
  for (auto& [id, p] : params)
    for (auto& b : p.bias) b = static_cast<T>(std::uniform_real_distribution<double>(-0.1, 0.1)(rng));
  auto x = random_tensor<T>({2, 1, 16, 16}, rng, 0.0, 1.0);
  const auto masks = random_masks(2, 16, 16, rng);
  const std::span<const BinaryMask> truth(masks);

  const auto [probs, cache] = forward(spec, params, x);
  const std::uint64_t base_sig = switch_signature(spec, cache);
  const auto lv = soft_iou_loss(probs, truth);
  auto grads = backward(spec, params, cache, lv.dprobs);
  if (o.fault) {
    for (auto& [id, g] : grads.params)
      if (spec.nodes[static_cast<std::size_t>(id)].spec.kind == *o.fault)
        for (auto& v : g.weights.data()) v = -v;
  }

  auto probe = [&](T& value, double analytic) {
    const T saved = value;
    value = static_cast<T>(saved + tol.step);
    const auto [pu, cu] = forward(spec, params, x);
    const bool up_ok = switch_signature(spec, cu) == base_sig;
    const double up = soft_iou_loss(pu, truth).loss;
    value = static_cast<T>(saved - tol.step);
    const auto [pd, cd] = forward(spec, params, x);
    const bool down_ok = switch_signature(spec, cd) == base_sig;
    const double down = soft_iou_loss(pd, truth).loss;
    value = saved;
    if (!up_ok || !down_ok) {
      ++e.skipped;
      return;
    }
    e.max_rel_error = std::max(e.max_rel_error, rel_error(analytic, (up - down) / (2.0 * tol.step), tol.floor));
    ++e.checked;
  };
  auto sample = [&](std::span<T> values, std::span<const T> analytic) {
    const std::size_t n = std::min(values.size(), o.samples_per_tensor);
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < n; ++i) probe(values[idx[i]], static_cast<double>(analytic[idx[i]]));
  };
  for (auto& [id, p] : params) {
    const auto& g = grads.params.at(id);
    sample(p.weights.data(), g.weights.data());
    sample(std::span<T>(p.bias), std::span<const T>(g.bias));
  }
  sample(x.data(), grads.input.data());
  return e;
}

template <typename T>
void merge(GradcheckEntry& into, const GradcheckEntry& e) {
  into.max_rel_error = std::max(into.max_rel_error, e.max_rel_error);
  into.checked += e.checked;
  into.skipped += e.skipped;
}

}  // namespace detail

// Every layer kind, the soft-IOU loss, and both networks end to end, over `seeds` seeds.
template <std::floating_point T>
GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  GradcheckReport report;
  auto add = [&](GradcheckEntry e) {
    for (auto& existing : report.entries) {
      if (existing.name == e.name) {
        detail::merge<T>(existing, e);
        return;
      }
    }
    report.entries.push_back(std::move(e));
  };
  for (std::size_t s = 0; s < o.seeds; ++s) {
    auto rng = derive_rng(o.seed, s);
    add(detail::check_conv<T>(o, LayerKind::conv3x3, rng));
    add(detail::check_conv<T>(o, LayerKind::conv1x1, rng));
    add(detail::check_maxpool<T>(o, rng));
    add(detail::check_tconv<T>(o, rng));
    add(detail::check_activation<T>(o, Activation::relu, rng));
    add(detail::check_activation<T>(o, Activation::sigmoid, rng));
    add(detail::check_concat<T>(o, rng));
    add(detail::check_bilinear<T>(o, rng));
    add(detail::check_soft_iou<T>(o, rng));
    add(detail::check_network<T>(o, Arch::flynet, rng));
    add(detail::check_network<T>(o, Arch::fcn, rng));
  }
  return report;
}

inline GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  return o.precision == Precision::double_precision ? run_gradcheck<double>(o) : run_gradcheck<float>(o);
}

}  // namespace flynet
