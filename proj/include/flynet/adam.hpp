#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>

#include "flynet/error.hpp"
#include "flynet/network.hpp"

namespace flynet {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

template <std::floating_point T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  std::uint64_t t = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <std::floating_point T>
AdamState<T> adam_init(const ParamSet<T>& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

namespace detail {

template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 double c1, double c2, const AdamHyper& h) {
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.epsilon);
  const T inv_c1 = static_cast<T>(1.0 / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T{1} - b1) * g;
    v[i] = b2 * v[i] + (T{1} - b2) * g * g;
    const T mhat = m[i] * inv_c1;
    const T vhat = v[i] * inv_c2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace detail

// One bias-corrected Adam step, in place.
template <std::floating_point T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, const AdamHyper& hyper) {
  detail::require(grads.size() == params.size() && state.m.size() == params.size(),
                  "adam_step: gradient/state keys do not match parameters");
  for (const auto& [id, p] : params) {
    const auto g = grads.find(id);
    detail::require(g != grads.end() && g->second.weights.shape() == p.weights.shape() &&
                        g->second.bias.size() == p.bias.size(),
                    "adam_step: gradient shape mismatch for layer " + std::to_string(id));
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (auto& [id, p] : params) {
    const auto& g = grads.at(id);
    auto& m = state.m.at(id);
    auto& v = state.v.at(id);
    detail::adam_update<T>(p.weights.data(), g.weights.data(), m.weights.data(), v.weights.data(), c1, c2,
                           hyper);
    detail::adam_update<T>(p.bias, g.bias, m.bias, v.bias, c1, c2, hyper);
  }
}

}  // namespace flynet
