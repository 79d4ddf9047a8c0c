#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flynet/error.hpp"
#include "flynet/loss.hpp"

namespace flynet {

inline double mask_area(const BinaryMask& m) { return static_cast<double>(m.count()); }

// Largest 4-connected component; ties go to the component holding the
// smallest row-major pixel index.
inline BinaryMask largest_component(const BinaryMask& m) {
  BinaryMask out(m.h, m.w);
  std::vector<std::int32_t> label(m.size(), -1);
  std::vector<std::size_t> stack;
  std::size_t best_size = 0;
  std::int32_t best_label = -1;
  std::int32_t next = 0;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m.data[start] || label[start] >= 0) continue;
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = next;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t y = i / m.w;
      const std::size_t x = i % m.w;
      auto visit = [&](std::size_t j) {
        if (m.data[j] && label[j] < 0) {
          label[j] = next;
          stack.push_back(j);
        }
      };
      if (y > 0) visit(i - m.w);
      if (y + 1 < m.h) visit(i + m.w);
      if (x > 0) visit(i - 1);
      if (x + 1 < m.w) visit(i + 1);
    }
    // strict > keeps the first-discovered component on ties
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
    ++next;
  }
  if (best_label >= 0)
    for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = label[i] == best_label ? 1 : 0;
  return out;
}

enum class DiameterMode { vertical_chord, equivalent_circle };

inline std::string_view to_string(DiameterMode m) {
  return m == DiameterMode::vertical_chord ? "vertical_chord" : "equivalent_circle";
}

inline DiameterMode diameter_mode_from_string(std::string_view s) {
  if (s == "vertical_chord") return DiameterMode::vertical_chord;
  if (s == "equivalent_circle") return DiameterMode::equivalent_circle;
  throw std::invalid_argument("unknown diameter mode '" + std::string(s) + "'");
}

inline double mask_diameter(const BinaryMask& mask, DiameterMode mode) {
  const BinaryMask c = largest_component(mask);
  if (mode == DiameterMode::equivalent_circle)
    return 2.0 * std::sqrt(mask_area(c) / std::numbers::pi);
  std::size_t best = 0;
  for (std::size_t x = 0; x < c.w; ++x) {
    std::size_t run = 0;
    for (std::size_t y = 0; y < c.h; ++y) {
      run = c.at(y, x) ? run + 1 : 0;
      best = std::max(best, run);
    }
  }
  return static_cast<double>(best);
}

struct TraceSample {
  std::int64_t frame_index = 0;
  double value = 0.0;
};

struct Trace {
  double fps = 0.0;
  std::vector<TraceSample> samples;

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(s.value);
    return v;
  }
};

inline void validate(const Trace& t) {
  detail::require(t.fps > 0.0, "trace: fps must be positive");
  for (std::size_t i = 1; i < t.samples.size(); ++i)
    detail::require(t.samples[i].frame_index > t.samples[i - 1].frame_index,
                    "trace: frame indices must increase strictly");
}

// Centered moving average; windows are truncated at the edges.
inline std::vector<double> moving_average(const std::vector<double>& v, std::size_t window) {
  detail::require(window >= 1 && window % 2 == 1, "moving_average: window must be odd and >= 1");
  const std::size_t half = window / 2;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    double acc = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) acc += v[j];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

struct Extrema {
  std::vector<std::int64_t> peaks;    // frame indices
  std::vector<std::int64_t> troughs;
};

namespace detail {

// Interior local maxima; a flat top counts once, at its left-middle sample.
inline std::vector<std::size_t> local_maxima(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  std::size_t i = 1;
  while (i + 1 < v.size()) {
    if (v[i] > v[i - 1]) {
      std::size_t j = i;
      while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
      if (j + 1 < v.size() && v[j + 1] < v[i]) out.push_back((i + j) / 2);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

// Height above the higher of the two lowest points reached before meeting
// a strictly higher sample (or the trace edge) on each side.
inline double prominence(const std::vector<double>& v, std::size_t peak) {
  const double h = v[peak];
  double left_min = h;
  for (std::size_t j = peak; j-- > 0;) {
    if (v[j] > h) break;
    left_min = std::min(left_min, v[j]);
  }
  double right_min = h;
  for (std::size_t j = peak + 1; j < v.size(); ++j) {
    if (v[j] > h) break;
    right_min = std::min(right_min, v[j]);
  }
  return h - std::max(left_min, right_min);
}

}  // namespace detail

inline Extrema trace_extrema(const Trace& trace, std::size_t smooth_window, double prominence_frac) {
  validate(trace);
  detail::require(smooth_window >= 1 && smooth_window % 2 == 1, "trace_extrema: smooth_window must be odd and >= 1");
  detail::require(prominence_frac > 0.0 && prominence_frac < 1.0, "trace_extrema: prominence_frac must lie in (0,1)");
  Extrema ex;
  const auto v = moving_average(trace.values(), smooth_window);
  if (v.size() < 3) return ex;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return ex;
  const double threshold = prominence_frac * range;

  std::vector<double> neg(v.size());
  std::transform(v.begin(), v.end(), neg.begin(), [](double x) { return -x; });

  struct Candidate {
    std::size_t pos;
    bool peak;
  };
  std::vector<Candidate> cands;
  for (std::size_t p : detail::local_maxima(v))
    if (detail::prominence(v, p) >= threshold) cands.push_back({p, true});
  for (std::size_t p : detail::local_maxima(neg))
    if (detail::prominence(neg, p) >= threshold) cands.push_back({p, false});
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.pos < b.pos; });

  // Enforce alternation: of consecutive same-type candidates keep the more extreme.
  std::vector<Candidate> kept;
  for (const auto& c : cands) {
    if (!kept.empty() && kept.back().peak == c.peak) {
      const bool more_extreme = c.peak ? v[c.pos] > v[kept.back().pos] : v[c.pos] < v[kept.back().pos];
      if (more_extreme) kept.back() = c;
      continue;
    }
    kept.push_back(c);
  }
  for (const auto& c : kept)
    (c.peak ? ex.peaks : ex.troughs).push_back(trace.samples[c.pos].frame_index);
  return ex;
}

struct CardiacReport {
  double edd_px = 0.0;
  double esd_px = 0.0;
  double fs = 0.0;
  std::optional<double> hr_bpm;
  std::string hr_absent_reason;
  std::size_t n_cycles = 0;
  std::vector<std::int64_t> peaks;
  std::vector<std::int64_t> troughs;
};

// EDD/ESD are means of the raw trace at detected peaks/troughs. Without
// extrema both fall back to the trace mean (no measurable shortening).
inline CardiacReport cardiac_params(const Trace& diameter, std::size_t smooth_window, double prominence_frac) {
  detail::require(!diameter.samples.empty(), "cardiac_params: empty trace");
  const Extrema ex = trace_extrema(diameter, smooth_window, prominence_frac);
  CardiacReport r;
  r.peaks = ex.peaks;
  r.troughs = ex.troughs;
  r.n_cycles = ex.peaks.size();

  auto value_at = [&](std::int64_t frame) {
    const auto it = std::lower_bound(diameter.samples.begin(), diameter.samples.end(), frame,
                                     [](const TraceSample& s, std::int64_t f) { return s.frame_index < f; });
    return it->value;
  };
  auto mean_at = [&](const std::vector<std::int64_t>& frames) {
    double acc = 0.0;
    for (auto f : frames) acc += value_at(f);
    return acc / static_cast<double>(frames.size());
  };
  double overall = 0.0;
  for (const auto& s : diameter.samples) overall += s.value;
  overall /= static_cast<double>(diameter.samples.size());

  r.edd_px = ex.peaks.empty() ? overall : mean_at(ex.peaks);
  r.esd_px = ex.troughs.empty() ? overall : mean_at(ex.troughs);
  if (ex.peaks.empty() != ex.troughs.empty()) {
    // one-sided extrema: the missing side is bounded by the observed one
    if (ex.peaks.empty()) r.edd_px = std::max(r.edd_px, r.esd_px);
    else r.esd_px = std::min(r.esd_px, r.edd_px);
  }
  // raw samples at smoothed extrema can cross on very noisy traces
  r.esd_px = std::min(r.esd_px, r.edd_px);
  r.fs = r.edd_px > 0.0 ? (r.edd_px - r.esd_px) / r.edd_px : 0.0;

  // Rate from the mean peak-to-peak interval.
  const double span_s = ex.peaks.size() < 2 ? 0.0 : static_cast<double>(ex.peaks.back() - ex.peaks.front()) / diameter.fps;
  if (ex.peaks.size() < 2) {
    r.hr_absent_reason = "fewer than 2 peaks detected (" + std::to_string(ex.peaks.size()) + ")";
  } else {
    r.hr_bpm = static_cast<double>(ex.peaks.size() - 1) / (span_s / 60.0);
  }
  return r;
}

}  // namespace flynet
