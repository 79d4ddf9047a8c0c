#pragma once

#include <algorithm>
#include <concepts>
#include <cstdlib>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flynet/error.hpp"

namespace flynet {

enum class Precision { single_precision, double_precision };

// Batch x channels x height x width.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

// Dense NCHW tensor, w fastest.
template <std::floating_point T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;

  explicit Tensor4(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}

  Tensor4(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    detail::require(data_.size() == shape_.size(),
                    "Tensor4: data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }

  static Tensor4 zeros(Shape s) { return Tensor4(s, T{0}); }
  static Tensor4 ones(Shape s) { return Tensor4(s, T{1}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[index(n, c, y, x)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[index(n, c, y, x)];
  }

  // Contiguous h*w plane for one (n, c).
  std::span<T> plane(std::size_t n, std::size_t c) noexcept {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const noexcept {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }

  // Contiguous c*h*w block for one batch item.
  std::span<T> item(std::size_t n) noexcept {
    const std::size_t len = shape_.c * shape_.plane();
    return {data_.data() + n * len, len};
  }
  std::span<const T> item(std::size_t n) const noexcept {
    const std::size_t len = shape_.c * shape_.plane();
    return {data_.data() + n * len, len};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <std::floating_point U>
  Tensor4<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor4<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

enum class ZipOp { add, sub, mul };

template <std::floating_point T>
Tensor4<T> zip_elementwise(const Tensor4<T>& a, const Tensor4<T>& b, ZipOp op) {
  detail::require(a.shape() == b.shape(), "zip_elementwise: shape mismatch " + a.shape().str() +
                                              " vs " + b.shape().str());
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case ZipOp::add: out[i] = a[i] + b[i]; break;
      case ZipOp::sub: out[i] = a[i] - b[i]; break;
      case ZipOp::mul: out[i] = a[i] * b[i]; break;
    }
  }
  return out;
}

// Flat-index-ascending summation; the accumulator is double regardless of T.
template <std::floating_point T>
double reduce_sum(const Tensor4<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += static_cast<double>(v);
  return acc;
}

// result[n,c,y,x] = a[n,c,y-dy,x-dx], zero outside.
template <std::floating_point T>
Tensor4<T> shift2d(const Tensor4<T>& a, long dy, long dx) {
  const Shape s = a.shape();
  const long h = static_cast<long>(s.h);
  const long w = static_cast<long>(s.w);
  detail::require(std::abs(dy) < h && std::abs(dx) < w,
                  "shift2d: shift (" + std::to_string(dy) + "," + std::to_string(dx) +
                      ") must be smaller than spatial dims " + s.str());
  Tensor4<T> out(s);
  const long y0 = std::max(0L, dy);
  const long y1 = std::min(h, h + dy);
  const long x0 = std::max(0L, dx);
  const long x1 = std::min(w, w + dx);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = a.plane(n, c);
      auto dst = out.plane(n, c);
      for (long y = y0; y < y1; ++y) {
        const T* from = src.data() + (y - dy) * w + (x0 - dx);
        std::copy(from, from + (x1 - x0), dst.data() + y * w + x0);
      }
    }
  }
  return out;
}

// Counter-clockwise by quarter_turns * 90 degrees in the (row down, col right) image plane.
template <std::floating_point T>
Tensor4<T> rotate90(const Tensor4<T>& a, int quarter_turns) {
  const Shape s = a.shape();
  detail::require(s.h == s.w, "rotate90: spatial dims must be square, got " + s.str());
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return a;
  const std::size_t m = s.h;
  Tensor4<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = a.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t y = 0; y < m; ++y) {
        for (std::size_t x = 0; x < m; ++x) {
          std::size_t ty = 0;
          std::size_t tx = 0;
          switch (q) {
            case 1: ty = m - 1 - x; tx = y; break;
            case 2: ty = m - 1 - y; tx = m - 1 - x; break;
            default: ty = x; tx = m - 1 - y; break;
          }
          dst[ty * m + tx] = src[y * m + x];
        }
      }
    }
  }
  return out;
}

template <std::floating_point T>
Tensor4<T> pad_zero(const Tensor4<T>& a, std::size_t p) {
  if (p == 0) return a;
  const Shape s = a.shape();
  const Shape o{s.n, s.c, s.h + 2 * p, s.w + 2 * p};
  Tensor4<T> out(o);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = a.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y) {
        std::copy(src.begin() + y * s.w, src.begin() + (y + 1) * s.w,
                  dst.begin() + (y + p) * o.w + p);
      }
    }
  }
  return out;
}

}  // namespace flynet
