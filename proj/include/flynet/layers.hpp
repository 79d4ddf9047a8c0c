#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flynet/error.hpp"
#include "flynet/tensor.hpp"

namespace flynet {

enum class LayerKind { conv3x3, conv1x1, maxpool2, tconv2, relu, sigmoid, concat, bilinear_up };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::conv1x1: return "conv1x1";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::tconv2: return "tconv2";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::concat: return "concat";
    case LayerKind::bilinear_up: return "bilinear_up";
  }
  return "unknown";
}

inline LayerKind layer_kind_from_string(std::string_view s) {
  for (LayerKind k : {LayerKind::conv3x3, LayerKind::conv1x1, LayerKind::maxpool2,
                      LayerKind::tconv2, LayerKind::relu, LayerKind::sigmoid, LayerKind::concat,
                      LayerKind::bilinear_up}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + std::string(s) + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t factor = 0;  // bilinear_up only

  bool has_params() const noexcept {
    return kind == LayerKind::conv3x3 || kind == LayerKind::conv1x1 || kind == LayerKind::tconv2;
  }
  std::size_t kernel() const noexcept {
    switch (kind) {
      case LayerKind::conv3x3: return 3;
      case LayerKind::conv1x1: return 1;
      case LayerKind::tconv2: return 2;
      default: return 0;
    }
  }
  Shape weight_shape() const noexcept {
    return {out_channels, in_channels, kernel(), kernel()};
  }
  std::size_t param_count() const noexcept {
    return has_params() ? weight_shape().size() + out_channels : 0;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

template <std::floating_point T>
struct LayerParams {
  Tensor4<T> weights;  // (out_c, in_c, kh, kw)
  std::vector<T> bias;

  std::size_t in_channels() const noexcept { return weights.shape().c; }
  std::size_t out_channels() const noexcept { return weights.shape().n; }

  template <std::floating_point U>
  LayerParams<U> cast() const {
    return {weights.template cast<U>(), std::vector<U>(bias.begin(), bias.end())};
  }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Saved state from one forward call.
template <std::floating_point T>
struct LayerCache {
  Tensor4<T> input;                  // conv / tconv
  Tensor4<T> output;                 // relu / sigmoid
  std::vector<std::uint32_t> argmax;  // maxpool2: flat input index per output element
  Shape in_shape{};
  std::size_t split = 0;   // concat: channels of the first operand
  std::size_t factor = 0;  // bilinear_up
};

template <std::floating_point T>
struct LayerGrads {
  Tensor4<T> dx;
  Tensor4<T> dw;
  std::vector<T> db;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// col[(c*9 + u*3 + v), y*w + x] = x[c, y+u-1, x+v-1], zero outside.
template <typename T>
void im2col3(const T* src, std::size_t channels, std::size_t h, std::size_t w, T* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = src + c * hw;
    for (std::size_t u = 0; u < 3; ++u) {
      for (std::size_t v = 0; v < 3; ++v) {
        T* row = col + ((c * 3 + u) * 3 + v) * hw;
        const long du = static_cast<long>(u) - 1;
        const long dv = static_cast<long>(v) - 1;
        for (std::size_t y = 0; y < h; ++y) {
          T* out = row + y * w;
          const long sy = static_cast<long>(y) + du;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(out, out + w, T{0});
            continue;
          }
          const T* in = plane + sy * static_cast<long>(w);
          if (dv < 0) {
            out[0] = T{0};
            std::copy(in, in + w - 1, out + 1);
          } else if (dv > 0) {
            std::copy(in + 1, in + w, out);
            out[w - 1] = T{0};
          } else {
            std::copy(in, in + w, out);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3(const T* col, std::size_t channels, std::size_t h, std::size_t w, T* dst) {
  const std::size_t hw = h * w;
  std::fill(dst, dst + channels * hw, T{0});
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = dst + c * hw;
    for (std::size_t u = 0; u < 3; ++u) {
      for (std::size_t v = 0; v < 3; ++v) {
        const T* row = col + ((c * 3 + u) * 3 + v) * hw;
        const long du = static_cast<long>(u) - 1;
        const long dv = static_cast<long>(v) - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + du;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const T* in = row + y * w;
          T* out = plane + sy * static_cast<long>(w);
          if (dv < 0) {
            for (std::size_t x = 1; x < w; ++x) out[x - 1] += in[x];
          } else if (dv > 0) {
            for (std::size_t x = 0; x + 1 < w; ++x) out[x + 1] += in[x];
          } else {
            for (std::size_t x = 0; x < w; ++x) out[x] += in[x];
          }
        }
      }
    }
  }
}

template <typename T>
void check_params(const LayerParams<T>& p, std::size_t kernel, const char* who) {
  const Shape ws = p.weights.shape();
  require(ws.h == kernel && ws.w == kernel,
          std::string(who) + ": expected " + std::to_string(kernel) + "x" +
              std::to_string(kernel) + " kernel, got weights " + ws.str());
  require(p.bias.size() == ws.n, std::string(who) + ": bias length does not match out_channels");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution, stride 1, same zero padding (kernel 3 pads 1, kernel 1 pads 0).
// ---------------------------------------------------------------------------

template <std::floating_point T>
std::pair<Tensor4<T>, LayerCache<T>> conv2d_forward(const Tensor4<T>& x, const LayerParams<T>& params,
                                                    std::size_t kernel) {
  detail::require(kernel == 1 || kernel == 3, "conv2d_forward: kernel must be 1 or 3");
  detail::check_params(params, kernel, "conv2d_forward");
  const Shape s = x.shape();
  detail::require(s.c == params.in_channels(),
                  "conv2d_forward: input has " + std::to_string(s.c) + " channels, layer expects " +
                      std::to_string(params.in_channels()));
  const std::size_t oc = params.out_channels();
  const std::size_t hw = s.plane();
  const std::size_t k = s.c * kernel * kernel;

  Tensor4<T> y({s.n, oc, s.h, s.w});
  detail::ConstMatMap<T> wmat(params.weights.raw(), static_cast<Eigen::Index>(oc),
                              static_cast<Eigen::Index>(k));
  std::vector<T> col(kernel == 3 ? k * hw : 0);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = x.item(n).data();
    if (kernel == 3) {
      detail::im2col3(src, s.c, s.h, s.w, col.data());
      src = col.data();
    }
    detail::ConstMatMap<T> cmat(src, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    detail::MatMap<T> ymat(y.item(n).data(), static_cast<Eigen::Index>(oc),
                           static_cast<Eigen::Index>(hw));
    ymat.noalias() = wmat * cmat;
    for (std::size_t o = 0; o < oc; ++o) ymat.row(static_cast<Eigen::Index>(o)).array() += params.bias[o];
  }
  LayerCache<T> cache;
  cache.input = x;
  cache.in_shape = s;
  return {std::move(y), std::move(cache)};
}

// Gradients of sum(dy * y) with respect to x, w and b.
template <std::floating_point T>
LayerGrads<T> conv2d_backward(const LayerCache<T>& cache, const LayerParams<T>& params,
                              const Tensor4<T>& dy) {
  const Shape s = cache.in_shape;
  const std::size_t kernel = params.weights.shape().h;
  const std::size_t oc = params.out_channels();
  detail::require(dy.shape() == Shape{s.n, oc, s.h, s.w},
                  "conv2d_backward: dy shape " + dy.shape().str() + " does not match output");
  const std::size_t hw = s.plane();
  const std::size_t k = s.c * kernel * kernel;

  LayerGrads<T> g{Tensor4<T>(s), Tensor4<T>(params.weights.shape()), std::vector<T>(oc, T{0})};
  detail::ConstMatMap<T> wmat(params.weights.raw(), static_cast<Eigen::Index>(oc),
                              static_cast<Eigen::Index>(k));
  detail::MatMap<T> dwmat(g.dw.raw(), static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(k));
  std::vector<T> col(kernel == 3 ? k * hw : 0);
  std::vector<T> dcol(kernel == 3 ? k * hw : 0);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = cache.input.item(n).data();
    if (kernel == 3) {
      detail::im2col3(src, s.c, s.h, s.w, col.data());
      src = col.data();
    }
    detail::ConstMatMap<T> cmat(src, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    detail::ConstMatMap<T> dymat(dy.item(n).data(), static_cast<Eigen::Index>(oc),
                                 static_cast<Eigen::Index>(hw));
    dwmat.noalias() += dymat * cmat.transpose();
    for (std::size_t o = 0; o < oc; ++o) {
      T acc{0};
      for (T v : dy.plane(n, o)) acc += v;
      g.db[o] += acc;
    }
    if (kernel == 3) {
      detail::MatMap<T> dcmat(dcol.data(), static_cast<Eigen::Index>(k),
                              static_cast<Eigen::Index>(hw));
      dcmat.noalias() = wmat.transpose() * dymat;
      detail::col2im3(dcol.data(), s.c, s.h, s.w, g.dx.item(n).data());
    } else {
      detail::MatMap<T> dxmat(g.dx.item(n).data(), static_cast<Eigen::Index>(k),
                              static_cast<Eigen::Index>(hw));
      dxmat.noalias() = wmat.transpose() * dymat;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties go to the first position in row-major order.
// ---------------------------------------------------------------------------

template <std::floating_point T>
std::pair<Tensor4<T>, LayerCache<T>> maxpool2_forward(const Tensor4<T>& x) {
  const Shape s = x.shape();
  detail::require(s.h % 2 == 0 && s.w % 2 == 0,
                  "maxpool2_forward: spatial dims must be even, got " + s.str());
  const Shape o{s.n, s.c, s.h / 2, s.w / 2};
  Tensor4<T> y(o);
  LayerCache<T> cache;
  cache.in_shape = s;
  cache.argmax.resize(o.size());
  std::size_t out = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < o.h; ++i) {
        for (std::size_t j = 0; j < o.w; ++j, ++out) {
          std::size_t best = base + 2 * i * s.w + 2 * j;
          const std::size_t cand[3] = {best + 1, best + s.w, best + s.w + 1};
          for (std::size_t idx : cand) {
            if (x[idx] > x[best]) best = idx;
          }
          y[out] = x[best];
          cache.argmax[out] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return {std::move(y), std::move(cache)};
}

template <std::floating_point T>
Tensor4<T> maxpool2_backward(const LayerCache<T>& cache, const Tensor4<T>& dy) {
  const Shape s = cache.in_shape;
  detail::require(dy.shape() == Shape{s.n, s.c, s.h / 2, s.w / 2},
                  "maxpool2_backward: dy shape " + dy.shape().str() + " does not match pooled shape");
  Tensor4<T> dx(s);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[cache.argmax[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Transposed convolution, 2x2 kernel, stride 2:
//   y[n,o,2i+u,2j+v] = b[o] + sum_c w[o,c,u,v] * x[n,c,i,j]
// ---------------------------------------------------------------------------

namespace detail {

// Rearranges (o, c, u, v) weights into a (o*4 + u*2 + v) x c matrix.
template <typename T>
RowMat<T> tconv_matrix(const LayerParams<T>& p) {
  const std::size_t oc = p.out_channels();
  const std::size_t ic = p.in_channels();
  RowMat<T> m(static_cast<Eigen::Index>(oc * 4), static_cast<Eigen::Index>(ic));
  for (std::size_t o = 0; o < oc; ++o)
    for (std::size_t c = 0; c < ic; ++c)
      for (std::size_t k = 0; k < 4; ++k)
        m(static_cast<Eigen::Index>(o * 4 + k), static_cast<Eigen::Index>(c)) =
            p.weights[(o * ic + c) * 4 + k];
  return m;
}

}  // namespace detail

template <std::floating_point T>
std::pair<Tensor4<T>, LayerCache<T>> tconv2_forward(const Tensor4<T>& x, const LayerParams<T>& params) {
  detail::check_params(params, 2, "tconv2_forward");
  const Shape s = x.shape();
  detail::require(s.c == params.in_channels(),
                  "tconv2_forward: input has " + std::to_string(s.c) + " channels, layer expects " +
                      std::to_string(params.in_channels()));
  const std::size_t oc = params.out_channels();
  const std::size_t hw = s.plane();
  const Shape os{s.n, oc, 2 * s.h, 2 * s.w};
  Tensor4<T> y(os);
  const auto wm = detail::tconv_matrix(params);
  detail::RowMat<T> z(static_cast<Eigen::Index>(oc * 4), static_cast<Eigen::Index>(hw));
  for (std::size_t n = 0; n < s.n; ++n) {
    detail::ConstMatMap<T> xm(x.item(n).data(), static_cast<Eigen::Index>(s.c),
                              static_cast<Eigen::Index>(hw));
    z.noalias() = wm * xm;
    for (std::size_t o = 0; o < oc; ++o) {
      auto dst = y.plane(n, o);
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t u = k / 2;
        const std::size_t v = k % 2;
        const T* row = z.data() + (o * 4 + k) * hw;
        for (std::size_t i = 0; i < s.h; ++i)
          for (std::size_t j = 0; j < s.w; ++j)
            dst[(2 * i + u) * os.w + 2 * j + v] = row[i * s.w + j] + params.bias[o];
      }
    }
  }
  LayerCache<T> cache;
  cache.input = x;
  cache.in_shape = s;
  return {std::move(y), std::move(cache)};
}

template <std::floating_point T>
LayerGrads<T> tconv2_backward(const LayerCache<T>& cache, const LayerParams<T>& params,
                              const Tensor4<T>& dy) {
  const Shape s = cache.in_shape;
  const std::size_t oc = params.out_channels();
  const std::size_t ic = params.in_channels();
  const Shape os{s.n, oc, 2 * s.h, 2 * s.w};
  detail::require(dy.shape() == os,
                  "tconv2_backward: dy shape " + dy.shape().str() + " does not match output " + os.str());
  const std::size_t hw = s.plane();
  LayerGrads<T> g{Tensor4<T>(s), Tensor4<T>(params.weights.shape()), std::vector<T>(oc, T{0})};
  const auto wm = detail::tconv_matrix(params);
  detail::RowMat<T> dz(static_cast<Eigen::Index>(oc * 4), static_cast<Eigen::Index>(hw));
  detail::RowMat<T> dwm = detail::RowMat<T>::Zero(static_cast<Eigen::Index>(oc * 4),
                                                  static_cast<Eigen::Index>(ic));
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < oc; ++o) {
      auto src = dy.plane(n, o);
      T acc{0};
      for (T v : src) acc += v;
      g.db[o] += acc;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t u = k / 2;
        const std::size_t v = k % 2;
        T* row = dz.data() + (o * 4 + k) * hw;
        for (std::size_t i = 0; i < s.h; ++i)
          for (std::size_t j = 0; j < s.w; ++j) row[i * s.w + j] = src[(2 * i + u) * os.w + 2 * j + v];
      }
    }
    detail::ConstMatMap<T> xm(cache.input.item(n).data(), static_cast<Eigen::Index>(ic),
                              static_cast<Eigen::Index>(hw));
    dwm.noalias() += dz * xm.transpose();
    detail::MatMap<T> dxm(g.dx.item(n).data(), static_cast<Eigen::Index>(ic),
                          static_cast<Eigen::Index>(hw));
    dxm.noalias() = wm.transpose() * dz;
  }
  for (std::size_t o = 0; o < oc; ++o)
    for (std::size_t c = 0; c < ic; ++c)
      for (std::size_t k = 0; k < 4; ++k)
        g.dw[(o * ic + c) * 4 + k] = dwm(static_cast<Eigen::Index>(o * 4 + k), static_cast<Eigen::Index>(c));
  return g;
}

// ---------------------------------------------------------------------------
// Activations. The cache keeps the output; relu'(0) is taken as 0.
// ---------------------------------------------------------------------------

enum class Activation { relu, sigmoid };

template <std::floating_point T>
std::pair<Tensor4<T>, LayerCache<T>> activation_forward(const Tensor4<T>& x, Activation kind) {
  Tensor4<T> y(x.shape());
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = T{1} / (T{1} + std::exp(-x[i]));
  }
  LayerCache<T> cache;
  cache.in_shape = x.shape();
  cache.output = y;
  return {std::move(y), std::move(cache)};
}

template <std::floating_point T>
Tensor4<T> activation_backward(const LayerCache<T>& cache, const Tensor4<T>& dy, Activation kind) {
  detail::require(dy.shape() == cache.in_shape, "activation_backward: shape mismatch");
  Tensor4<T> dx(dy.shape());
  const auto& y = cache.output;
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = y[i] > T{0} ? dy[i] : T{0};
  } else {
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * y[i] * (T{1} - y[i]);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Channel concatenation (a first) and its inverse split.
// ---------------------------------------------------------------------------

template <std::floating_point T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  detail::require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
                  "concat_channels: batch/spatial mismatch " + sa.str() + " vs " + sb.str());
  Tensor4<T> out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (std::size_t n = 0; n < sa.n; ++n) {
    auto dst = out.item(n);
    auto ia = a.item(n);
    auto ib = b.item(n);
    std::copy(ia.begin(), ia.end(), dst.begin());
    std::copy(ib.begin(), ib.end(), dst.begin() + static_cast<long>(ia.size()));
  }
  return out;
}

template <std::floating_point T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& dy, std::size_t first_channels) {
  const Shape s = dy.shape();
  detail::require(first_channels <= s.c, "split_channels: split point beyond channel count");
  Tensor4<T> a({s.n, first_channels, s.h, s.w});
  Tensor4<T> b({s.n, s.c - first_channels, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    auto src = dy.item(n);
    const auto cut = static_cast<long>(first_channels * s.plane());
    std::copy(src.begin(), src.begin() + cut, a.item(n).begin());
    std::copy(src.begin() + cut, src.end(), b.item(n).begin());
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Fixed bilinear upsampling. Output (i, j) samples the source at
// ((i + 0.5)/f - 0.5, (j + 0.5)/f - 0.5), clamped to the valid range.
// ---------------------------------------------------------------------------

namespace detail {

struct InterpTap {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double frac = 0.0;
};

inline std::vector<InterpTap> interp_taps(std::size_t src, std::size_t factor) {
  std::vector<InterpTap> taps(src * factor);
  const double hi = static_cast<double>(src - 1);
  for (std::size_t i = 0; i < taps.size(); ++i) {
    double pos = (static_cast<double>(i) + 0.5) / static_cast<double>(factor) - 0.5;
    pos = std::clamp(pos, 0.0, hi);
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    taps[i] = {i0, std::min(i0 + 1, src - 1), pos - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace detail

template <std::floating_point T>
std::pair<Tensor4<T>, LayerCache<T>> bilinear_upsample(const Tensor4<T>& x, std::size_t factor) {
  detail::require(factor >= 2, "bilinear_upsample: factor must be >= 2");
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  Tensor4<T> y(os);
  const auto ty = detail::interp_taps(s.h, factor);
  const auto tx = detail::interp_taps(s.w, factor);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = x.plane(n, c);
      auto dst = y.plane(n, c);
      for (std::size_t i = 0; i < os.h; ++i) {
        const auto& a = ty[i];
        const T fy = static_cast<T>(a.frac);
        for (std::size_t j = 0; j < os.w; ++j) {
          const auto& b = tx[j];
          const T fx = static_cast<T>(b.frac);
          const T top = (T{1} - fx) * src[a.i0 * s.w + b.i0] + fx * src[a.i0 * s.w + b.i1];
          const T bot = (T{1} - fx) * src[a.i1 * s.w + b.i0] + fx * src[a.i1 * s.w + b.i1];
          dst[i * os.w + j] = (T{1} - fy) * top + fy * bot;
        }
      }
    }
  }
  LayerCache<T> cache;
  cache.in_shape = s;
  cache.factor = factor;
  return {std::move(y), std::move(cache)};
}

template <std::floating_point T>
Tensor4<T> bilinear_upsample_backward(const LayerCache<T>& cache, const Tensor4<T>& dy) {
  const Shape s = cache.in_shape;
  const std::size_t f = cache.factor;
  const Shape os{s.n, s.c, s.h * f, s.w * f};
  detail::require(dy.shape() == os, "bilinear_upsample_backward: dy shape mismatch");
  Tensor4<T> dx(s);
  const auto ty = detail::interp_taps(s.h, f);
  const auto tx = detail::interp_taps(s.w, f);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = dy.plane(n, c);
      auto dst = dx.plane(n, c);
      for (std::size_t i = 0; i < os.h; ++i) {
        const auto& a = ty[i];
        const T fy = static_cast<T>(a.frac);
        for (std::size_t j = 0; j < os.w; ++j) {
          const auto& b = tx[j];
          const T fx = static_cast<T>(b.frac);
          const T g = src[i * os.w + j];
          dst[a.i0 * s.w + b.i0] += (T{1} - fy) * (T{1} - fx) * g;
          dst[a.i0 * s.w + b.i1] += (T{1} - fy) * fx * g;
          dst[a.i1 * s.w + b.i0] += fy * (T{1} - fx) * g;
          dst[a.i1 * s.w + b.i1] += fy * fx * g;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Initialization: He normal for conv3x3/tconv2, Glorot uniform for the 1x1
// sigmoid head, zero biases.
// ---------------------------------------------------------------------------

template <std::floating_point T>
LayerParams<T> init_params(const LayerSpec& spec, std::mt19937_64& rng) {
  detail::require(spec.has_params(),
                  "init_params: layer kind " + std::string(to_string(spec.kind)) + " has no parameters");
  const Shape ws = spec.weight_shape();
  LayerParams<T> p{Tensor4<T>(ws), std::vector<T>(spec.out_channels, T{0})};
  const double fan_in = static_cast<double>(ws.c * ws.h * ws.w);
  if (spec.kind == LayerKind::conv1x1) {
    const double fan_out = static_cast<double>(ws.n * ws.h * ws.w);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : p.weights.data()) v = static_cast<T>(dist(rng));
  } else {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : p.weights.data()) v = static_cast<T>(dist(rng));
  }
  return p;
}

}  // namespace flynet
