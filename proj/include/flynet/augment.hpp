#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <vector>

#include "flynet/dataset.hpp"
#include "flynet/error.hpp"
#include "flynet/tensor.hpp"

namespace flynet {

// The eight training copies of one raw frame, in output order.
enum class AugmentVariant { original, shift_down, shift_up, shift_right, shift_left, rot90, rot180, rot270 };

inline constexpr std::size_t kAugmentCopies = 8;
inline constexpr int kMinShift = 10;
inline constexpr int kMaxShift = 50;

// One shift magnitude per direction (down, up, right, left).
using ShiftMagnitudes = std::array<int, 4>;

inline ShiftMagnitudes draw_shifts(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(kMinShift, kMaxShift);
  ShiftMagnitudes m{};
  for (auto& v : m) v = dist(rng);
  return m;
}

namespace detail {

inline BinaryMask mask_transform(const BinaryMask& m, long dy, long dx, int turns) {
  Tensor4<float> t = m.to_tensor();
  t = turns ? rotate90(t, turns) : shift2d(t, dy, dx);
  return BinaryMask::from_tensor(t);
}

}  // namespace detail

// Applies one variant to image and mask alike.
inline FramePair augment_variant(const FramePair& pair, AugmentVariant v, const ShiftMagnitudes& shifts) {
  long dy = 0;
  long dx = 0;
  int turns = 0;
  switch (v) {
    case AugmentVariant::original: return pair;
    case AugmentVariant::shift_down: dy = shifts[0]; break;
    case AugmentVariant::shift_up: dy = -shifts[1]; break;
    case AugmentVariant::shift_right: dx = shifts[2]; break;
    case AugmentVariant::shift_left: dx = -shifts[3]; break;
    case AugmentVariant::rot90: turns = 1; break;
    case AugmentVariant::rot180: turns = 2; break;
    case AugmentVariant::rot270: turns = 3; break;
  }
  FramePair out;
  out.image = turns ? rotate90(pair.image, turns) : shift2d(pair.image, dy, dx);
  out.mask = detail::mask_transform(pair.mask, dy, dx, turns);
  out.frame_index = pair.frame_index;
  out.stem = pair.stem;
  return out;
}

inline void check_augmentable(const FramePair& pair) {
  const Shape s = pair.image.shape();
  detail::require(s.h == s.w, "augment: frames must be square, got " + s.str());
  detail::require(s.h > static_cast<std::size_t>(kMaxShift),
                  "augment: frame of " + std::to_string(s.h) + " px is smaller than " +
                      std::to_string(kMaxShift + 1) + " px; shift range infeasible");
}

// Original, four shifted copies (down, up, right, left; zero fill) and three rotations.
inline std::vector<FramePair> augment(const FramePair& pair, std::mt19937_64& rng) {
  check_augmentable(pair);
  const ShiftMagnitudes shifts = draw_shifts(rng);
  std::vector<FramePair> out;
  out.reserve(kAugmentCopies);
  for (std::size_t i = 0; i < kAugmentCopies; ++i)
    out.push_back(augment_variant(pair, static_cast<AugmentVariant>(i), shifts));
  return out;
}

}  // namespace flynet
