#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flynet/dataset.hpp"
#include "flynet/error.hpp"
#include "flynet/random.hpp"

namespace flynet {

// Beating-heart phantom: a bright elliptical wall around a dark lumen in
// speckled tissue, with bright distractor structures and occasional wall gaps.
struct SynthParams {
  std::string id = "synth";
  Stage stage = Stage::larva;
  std::size_t n_frames = 60;
  std::size_t resolution = 64;
  double period_s = 0.5;
  double fps = 20.0;
  double phase = 0.0;        // radians
  double radius_mean = 11.0;  // vertical semi-axis, px
  double amplitude = 3.0;     // px
  double aspect = 1.2;        // horizontal / vertical semi-axis
  double center_dy = 0.0;     // offset from the frame centre, px
  double center_dx = 0.0;
  double wall_thickness = 2.5;
  double wall_brightness = 0.8;
  double lumen_level = 0.06;
  double background_level = 0.18;
  double speckle_sigma = 0.3;
  double boundary_gap_prob = 0.0;
  std::size_t distractor_count = 3;
  bool cover_glass = false;
  std::uint64_t seed = 0;
};

inline void validate(const SynthParams& p) {
  detail::require(p.radius_mean > p.amplitude && p.amplitude >= 0.0,
                  "synth: need radius_mean > amplitude >= 0");
  detail::require(p.boundary_gap_prob >= 0.0 && p.boundary_gap_prob <= 1.0,
                  "synth: boundary_gap_prob must lie in [0,1]");
  detail::require(p.fps > 0.0 && p.period_s > 0.0, "synth: fps and period_s must be positive");
  detail::require(p.resolution >= 8, "synth: resolution must be >= 8");
  detail::require(p.aspect > 0.0 && p.wall_thickness > 0.0 && p.speckle_sigma >= 0.0,
                  "synth: aspect and wall_thickness must be positive, speckle_sigma non-negative");
}

// Semi-axis along y at frame t.
inline double synth_radius(const SynthParams& p, double t) {
  return p.radius_mean + p.amplitude * std::sin(2.0 * std::numbers::pi * t / (p.fps * p.period_s) + p.phase);
}

namespace detail {

struct Blob {
  double y = 0, x = 0, sy = 1, sx = 1, amp = 0;
};

inline double blob_value(const Blob& b, double y, double x) {
  const double u = (y - b.y) / b.sy;
  const double v = (x - b.x) / b.sx;
  return b.amp * std::exp(-0.5 * (u * u + v * v));
}

}  // namespace detail

inline FlyDataset synth_generate(const SynthParams& p) {
  validate(p);
  const std::size_t res = p.resolution;
  const double cy = 0.5 * static_cast<double>(res - 1) + p.center_dy;
  const double cx = 0.5 * static_cast<double>(res - 1) + p.center_dx;
  const double b_max = p.radius_mean + p.amplitude;
  const double a_max = b_max * p.aspect;

  // Static anatomy from stream 0: tissue texture and distractors.
  auto rng = derive_rng(p.seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> tissue(res * res, p.background_level);
  for (int i = 0; i < 6; ++i) {
    const detail::Blob b{unit(rng) * res, unit(rng) * res, 4.0 + 6.0 * unit(rng), 4.0 + 6.0 * unit(rng),
                         (unit(rng) - 0.5) * 0.12};
    for (std::size_t y = 0; y < res; ++y)
      for (std::size_t x = 0; x < res; ++x)
        tissue[y * res + x] += detail::blob_value(b, static_cast<double>(y), static_cast<double>(x));
  }
  std::vector<double> bright(res * res, 0.0);
  for (std::size_t i = 0; i < p.distractor_count; ++i) {
    detail::Blob b;
    for (int attempt = 0; attempt < 100; ++attempt) {
      b.y = unit(rng) * res;
      b.x = unit(rng) * res;
      const double u = (b.x - cx) / (a_max + p.wall_thickness + 3.0);
      const double v = (b.y - cy) / (b_max + p.wall_thickness + 3.0);
      if (u * u + v * v > 1.0) break;
    }
    b.sy = 0.8 + 2.0 * unit(rng);
    b.sx = 0.8 + 2.0 * unit(rng);
    b.amp = 0.4 + 0.4 * unit(rng);
    for (std::size_t y = 0; y < res; ++y)
      for (std::size_t x = 0; x < res; ++x)
        bright[y * res + x] += detail::blob_value(b, static_cast<double>(y), static_cast<double>(x));
  }
  if (p.cover_glass) {
    const double row = 0.08 * static_cast<double>(res);
    for (std::size_t y = 0; y < res; ++y) {
      const double d = (static_cast<double>(y) - row) / 1.2;
      for (std::size_t x = 0; x < res; ++x) bright[y * res + x] += 0.6 * std::exp(-0.5 * d * d);
    }
  }

  FlyDataset ds{p.id, p.stage, p.fps, {}};
  ds.frames.reserve(p.n_frames);
  for (std::size_t t = 0; t < p.n_frames; ++t) {
    auto frng = derive_rng(p.seed, t + 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double b = synth_radius(p, static_cast<double>(t));
    const double a = b * p.aspect;
    const bool gap = u01(frng) < p.boundary_gap_prob;
    const double gap_centre = u01(frng) * 2.0 * std::numbers::pi;
    const double gap_half = 0.35 + 0.4 * u01(frng);

    GrayImage img{res, res, 255, std::vector<std::uint8_t>(res * res)};
    BinaryMask mask(res, res);
    for (std::size_t y = 0; y < res; ++y) {
      for (std::size_t x = 0; x < res; ++x) {
        const std::size_t i = y * res + x;
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double rho = std::sqrt((dx / a) * (dx / a) + (dy / b) * (dy / b));
        double v = tissue[i];
        if (rho <= 1.0) {
          mask.data[i] = 1;
          v = p.lumen_level;
        } else {
          const double d = std::sqrt(dx * dx + dy * dy) * (1.0 - 1.0 / rho);
          bool dimmed = false;
          if (gap) {
            double diff = std::remainder(std::atan2(dy, dx) - gap_centre, 2.0 * std::numbers::pi);
            dimmed = std::abs(diff) < gap_half;
          }
          if (!dimmed) {
            const double q = d / p.wall_thickness;
            v += (p.wall_brightness - v) * std::exp(-q * q);
          }
        }
        v += bright[i];
        v *= std::exp(p.speckle_sigma * gauss(frng) - 0.5 * p.speckle_sigma * p.speckle_sigma);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
    char stem[32];
    std::snprintf(stem, sizeof stem, "frame_%05zu", t);
    ds.frames.push_back({image_from_gray(img), std::move(mask), static_cast<std::int64_t>(t), stem});
  }
  return ds;
}

// Stage-typical phantom appearance at the given resolution.
inline SynthParams stage_regime(Stage stage, std::size_t resolution) {
  const double s = static_cast<double>(resolution) / 64.0;
  SynthParams p;
  p.stage = stage;
  p.resolution = resolution;
  switch (stage) {
    case Stage::larva:
      p.radius_mean = 12.0 * s; p.amplitude = 3.0 * s; p.aspect = 1.25; p.period_s = 0.45;
      p.wall_brightness = 0.85; p.speckle_sigma = 0.25; p.distractor_count = 4; p.cover_glass = true;
      break;
    case Stage::pupa:
      p.radius_mean = 11.0 * s; p.amplitude = 2.5 * s; p.aspect = 1.1; p.period_s = 0.6;
      p.wall_brightness = 0.75; p.speckle_sigma = 0.3; p.distractor_count = 5;
      break;
    case Stage::adult:
      p.radius_mean = 11.0 * s; p.amplitude = 3.0 * s; p.aspect = 1.2; p.period_s = 0.35;
      p.wall_brightness = 0.6; p.speckle_sigma = 0.35; p.distractor_count = 6;
      break;
  }
  p.wall_thickness = 2.5 * s;
  return p;
}

struct SynthCorpusOptions {
  std::size_t datasets_per_stage = 10;
  std::size_t n_frames = 60;
  std::size_t resolution = 64;
  double fps = 20.0;
  double boundary_gap_prob = 0.15;
  std::optional<double> period_s;  // overrides the per-stage heart period
  std::uint64_t seed = 1;
};

// Datasets "<stage>_<nn>" with per-fly jitter of size, shape, position and rate.
inline Corpus synth_corpus(const SynthCorpusOptions& opt) {
  detail::require(opt.n_frames >= 1, "synth_corpus: n_frames must be >= 1");
  Corpus corpus;
  for (Stage stage : kAllStages) {
    for (std::size_t i = 0; i < opt.datasets_per_stage; ++i) {
      const std::uint64_t stream = static_cast<std::uint64_t>(stage) * 100000 + i;
      auto rng = derive_rng(opt.seed, stream);
      std::uniform_real_distribution<double> jitter(-1.0, 1.0);
      SynthParams p = stage_regime(stage, opt.resolution);
      const double s = static_cast<double>(opt.resolution) / 64.0;
      p.radius_mean *= 1.0 + 0.1 * jitter(rng);
      p.aspect *= 1.0 + 0.08 * jitter(rng);
      p.center_dy = 5.0 * s * jitter(rng);
      p.center_dx = 5.0 * s * jitter(rng);
      p.period_s = opt.period_s ? *opt.period_s : p.period_s * (1.0 + 0.2 * jitter(rng));
      p.phase = std::numbers::pi * (1.0 + jitter(rng));
      p.n_frames = opt.n_frames;
      p.fps = opt.fps;
      p.boundary_gap_prob = opt.boundary_gap_prob;
      p.seed = rng();
      char id[32];
      std::snprintf(id, sizeof id, "%s_%02zu", std::string(to_string(stage)).c_str(), i);
      p.id = id;
      corpus.push_back(synth_generate(p));
    }
  }
  return corpus;
}

}  // namespace flynet
