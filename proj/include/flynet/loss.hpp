#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flynet/error.hpp"
#include "flynet/tensor.hpp"

namespace flynet {

// 1 = heart, 0 = elsewhere.
struct BinaryMask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width) : h(height), w(width), data(height * width, 0) {}

  std::size_t size() const noexcept { return data.size(); }
  std::uint8_t& at(std::size_t y, std::size_t x) noexcept { return data[y * w + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const noexcept { return data[y * w + x]; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto v : data) n += v;
    return n;
  }

  template <std::floating_point T = float>
  Tensor4<T> to_tensor() const {
    Tensor4<T> t({1, 1, h, w});
    for (std::size_t i = 0; i < data.size(); ++i) t[i] = static_cast<T>(data[i]);
    return t;
  }

  // Plane (n, c) of a tensor, 1 where value >= 0.5.
  template <std::floating_point T>
  static BinaryMask from_tensor(const Tensor4<T>& t, std::size_t n = 0, std::size_t c = 0) {
    BinaryMask m(t.shape().h, t.shape().w);
    auto src = t.plane(n, c);
    for (std::size_t i = 0; i < src.size(); ++i) m.data[i] = src[i] >= T{0.5} ? 1 : 0;
    return m;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// |pred & truth| / |pred | truth|; 1.0 when both are empty.
inline double hard_iou(const BinaryMask& pred, const BinaryMask& truth) {
  detail::require(pred.h == truth.h && pred.w == truth.w, "hard_iou: mask shapes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] & truth.data[i];
    uni += pred.data[i] | truth.data[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline constexpr double kSoftIouEpsilon = 1e-6;

template <std::floating_point T>
struct LossValue {
  double loss = 0.0;
  Tensor4<T> dprobs;
};

// Mean over the batch of 1 - I / (P + G - I + eps), with I = sum p*g, P = sum p, G = sum g.
template <std::floating_point T>
LossValue<T> soft_iou_loss(const Tensor4<T>& probs, std::span<const BinaryMask> truth) {
  const Shape s = probs.shape();
  detail::require(s.c == 1 && truth.size() == s.n,
                  "soft_iou_loss: expected one truth mask per single-channel prediction");
  LossValue<T> out{0.0, Tensor4<T>(s)};
  const double scale = 1.0 / static_cast<double>(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    const BinaryMask& g = truth[n];
    detail::require(g.h == s.h && g.w == s.w, "soft_iou_loss: mask shape does not match probs");
    auto p = probs.plane(n, 0);
    double inter = 0.0;
    double psum = 0.0;
    double gsum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pv = static_cast<double>(p[i]);
      inter += pv * g.data[i];
      psum += pv;
      gsum += g.data[i];
    }
    const double uni = psum + gsum - inter + kSoftIouEpsilon;
    const double iou = inter / uni;
    out.loss += scale * (1.0 - iou);
    // d iou / d p_i = (g_i * U - I * (1 - g_i)) / U^2
    const double inv_u2 = 1.0 / (uni * uni);
    const double d_pos = -scale * uni * inv_u2;
    const double d_neg = scale * inter * inv_u2;
    auto dp = out.dprobs.plane(n, 0);
    for (std::size_t i = 0; i < p.size(); ++i) dp[i] = static_cast<T>(g.data[i] ? d_pos : d_neg);
  }
  return out;
}

template <std::floating_point T>
std::vector<BinaryMask> binarize(const Tensor4<T>& probs, double threshold) {
  detail::require(threshold > 0.0 && threshold < 1.0, "binarize: threshold must lie in (0,1)");
  const Shape s = probs.shape();
  std::vector<BinaryMask> out;
  out.reserve(s.n * s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      BinaryMask m(s.h, s.w);
      auto src = probs.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i)
        m.data[i] = static_cast<double>(src[i]) >= threshold ? 1 : 0;
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace flynet
