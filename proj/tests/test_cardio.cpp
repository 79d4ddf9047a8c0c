#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <queue>
#include <random>

#include "flynet/cardio.hpp"
#include "flynet/synth.hpp"

using namespace flynet;

namespace {

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(rows.size(), rows.front().size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x) m.at(y, x) = rows[y][x] == '#';
  return m;
}

Trace make_trace(const std::vector<double>& values, double fps) {
  Trace t{fps, {}};
  for (std::size_t i = 0; i < values.size(); ++i) t.samples.push_back({static_cast<std::int64_t>(i), values[i]});
  return t;
}

std::vector<double> sinusoid(std::size_t n, double fps, double hz, double mean, double amp) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = mean + amp * std::sin(2 * std::numbers::pi * hz * i / fps);
  return v;
}

// Pixels 4-reachable from `seed` within the mask.
std::size_t reachable(const BinaryMask& m, std::size_t seed) {
  std::vector<bool> seen(m.size());
  std::queue<std::size_t> q;
  q.push(seed);
  seen[seed] = true;
  std::size_t n = 0;
  while (!q.empty()) {
    const auto i = q.front();
    q.pop();
    ++n;
    const long y = static_cast<long>(i / m.w), x = static_cast<long>(i % m.w);
    for (auto [dy, dx] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
      const long yy = y + dy, xx = x + dx;
      if (yy < 0 || xx < 0 || yy >= static_cast<long>(m.h) || xx >= static_cast<long>(m.w)) continue;
      const auto j = static_cast<std::size_t>(yy) * m.w + static_cast<std::size_t>(xx);
      if (m.data[j] && !seen[j]) {
        seen[j] = true;
        q.push(j);
      }
    }
  }
  return n;
}

}  // namespace

TEST(MaskArea, Examples) {
  EXPECT_EQ(mask_area(BinaryMask(5, 5)), 0.0);
  EXPECT_EQ(mask_area(from_rows({"....", ".##.", ".##.", "...."})), 4.0);
  std::mt19937_64 rng(1);
  BinaryMask m(13, 17);
  std::size_t ones = 0;
  for (auto& v : m.data) ones += (v = rng() % 2);
  EXPECT_EQ(mask_area(m), static_cast<double>(ones));
}

TEST(LargestComponent, Examples) {
  const auto blob = from_rows({".##.", ".###", "...."});
  EXPECT_EQ(largest_component(blob), blob);
  EXPECT_EQ(largest_component(from_rows({"##...", "###..", ".....", "...##", "...#."})),
            from_rows({"##...", "###..", ".....", ".....", "....."}));
  EXPECT_EQ(largest_component(from_rows({".....", "...##", ".....", "##...", "....."})),
            from_rows({".....", "...##", ".....", ".....", "....."}));
  // diagonal contact does not connect
  EXPECT_EQ(largest_component(from_rows({"#..", ".#.", "..#"})), from_rows({"#..", "...", "..."}));
  EXPECT_EQ(largest_component(BinaryMask(3, 3)), BinaryMask(3, 3));
}

TEST(LargestComponent, RandomMaskProperties) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMask m(1 + rng() % 20, 1 + rng() % 20);
    const double density = (rng() % 100) / 100.0;
    for (auto& v : m.data) v = (rng() % 1000) / 1000.0 < density;
    const auto c = largest_component(m);
    ASSERT_LE(mask_area(c), mask_area(m));
    std::size_t first = m.size();
    for (std::size_t i = 0; i < m.size(); ++i) {
      ASSERT_LE(c.data[i], m.data[i]);
      if (c.data[i] && first == m.size()) first = i;
    }
    if (m.count() == 0) {
      ASSERT_EQ(c.count(), 0U);
      continue;
    }
    ASSERT_EQ(reachable(m, first), c.count());
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m.data[i]) ASSERT_LE(reachable(m, i), c.count());
  }
}

TEST(MaskDiameter, Examples) {
  BinaryMask bar(20, 5);
  for (std::size_t y = 3; y < 13; ++y) bar.at(y, 2) = 1;
  EXPECT_EQ(mask_diameter(bar, DiameterMode::vertical_chord), 10.0);
  for (std::size_t s : {1, 4, 9}) {
    BinaryMask sq(12, 12);
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) sq.at(y + 1, x + 2) = 1;
    EXPECT_NEAR(mask_diameter(sq, DiameterMode::equivalent_circle), 2 * std::sqrt(s * s / std::numbers::pi), 1e-12);
  }
  EXPECT_EQ(mask_diameter(BinaryMask(4, 4), DiameterMode::vertical_chord), 0.0);
  EXPECT_EQ(mask_diameter(BinaryMask(4, 4), DiameterMode::equivalent_circle), 0.0);
}

TEST(MaskDiameter, RasterizedEllipseChord) {
  const double a = 8, b = 12;
  BinaryMask m(40, 40);
  for (std::size_t y = 0; y < 40; ++y)
    for (std::size_t x = 0; x < 40; ++x) {
      const double dx = (x - 19.3) / a, dy = (y - 18.6) / b;
      m.at(y, x) = dx * dx + dy * dy <= 1.0;
    }
  // a taller but thinner stray structure must not win
  for (std::size_t y = 2; y < 38; ++y) m.at(y, 36) = 1;
  EXPECT_NEAR(mask_diameter(m, DiameterMode::vertical_chord), 2 * b + 1, 1.0);
  EXPECT_NEAR(mask_diameter(m, DiameterMode::equivalent_circle), 2 * std::sqrt(a * b), 0.5);
}

TEST(MaskDiameter, ModeNames) {
  for (auto mode : {DiameterMode::vertical_chord, DiameterMode::equivalent_circle})
    EXPECT_EQ(diameter_mode_from_string(to_string(mode)), mode);
  EXPECT_THROW(diameter_mode_from_string("horizontal"), std::invalid_argument);
}

TEST(MovingAverage, TruncatedEdges) {
  const auto v = moving_average({1, 2, 3, 4, 5}, 3);
  const std::vector<double> expected{1.5, 2, 3, 4, 4.5};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(v[i], expected[i]);
  EXPECT_EQ(moving_average({1, 7}, 1), (std::vector<double>{1, 7}));
  EXPECT_THROW(moving_average({1}, 2), std::invalid_argument);
}

TEST(TraceExtrema, PureSinusoid) {
  const auto t = make_trace(sinusoid(1000, 100, 1, 0, 1), 100);
  const auto ex = trace_extrema(t, 5, 0.1);
  ASSERT_EQ(ex.peaks.size(), 10U);
  ASSERT_EQ(ex.troughs.size(), 10U);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_NEAR(ex.peaks[k], 25 + 100 * static_cast<long>(k), 1);
    EXPECT_NEAR(ex.troughs[k], 75 + 100 * static_cast<long>(k), 1);
    EXPECT_LT(ex.peaks[k], ex.troughs[k]);
    if (k + 1 < 10) EXPECT_LT(ex.troughs[k], ex.peaks[k + 1]);
  }
}

TEST(TraceExtrema, ConstantTraceHasNone) {
  const auto ex = trace_extrema(make_trace(std::vector<double>(50, 3.0), 10), 5, 0.1);
  EXPECT_TRUE(ex.peaks.empty());
  EXPECT_TRUE(ex.troughs.empty());
}

TEST(TraceExtrema, RippleRejected) {
  auto v = sinusoid(1000, 100, 1, 0, 1);
  const auto ripple = sinusoid(1000, 100, 23, 0, 0.03);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += ripple[i];
  std::size_t raw_maxima = 0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) raw_maxima += v[i] > v[i - 1] && v[i] > v[i + 1];
  ASSERT_GT(raw_maxima, 10U);
  const auto ex = trace_extrema(make_trace(v, 100), 1, 0.1);
  ASSERT_EQ(ex.peaks.size(), 10U);
  ASSERT_EQ(ex.troughs.size(), 10U);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(ex.peaks[k], 25 + 100 * static_cast<long>(k), 4);
}

TEST(TraceExtrema, AlternationOnNoisyTraces) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0, 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    auto v = sinusoid(300, 30, 1.5, 5, 1);
    for (auto& x : v) x += noise(rng);
    const auto ex = trace_extrema(make_trace(v, 30), 3, 0.1);
    std::vector<std::pair<std::int64_t, bool>> merged;
    for (auto p : ex.peaks) merged.push_back({p, true});
    for (auto t : ex.troughs) merged.push_back({t, false});
    std::sort(merged.begin(), merged.end());
    for (std::size_t i = 1; i < merged.size(); ++i) ASSERT_NE(merged[i].second, merged[i - 1].second);
    const auto r = cardiac_params(make_trace(v, 30), 3, 0.1);
    ASSERT_LE(r.esd_px, r.edd_px);
    ASSERT_GE(r.fs, 0.0);
    ASSERT_LT(r.fs, 1.0);
  }
}

TEST(TraceExtrema, Preconditions) {
  const auto t = make_trace({1, 2, 1}, 10);
  EXPECT_THROW(trace_extrema(t, 4, 0.1), std::invalid_argument);
  EXPECT_THROW(trace_extrema(t, 3, 0.0), std::invalid_argument);
  EXPECT_THROW(trace_extrema(t, 3, 1.0), std::invalid_argument);
  EXPECT_THROW(trace_extrema(make_trace({1, 2}, 0), 1, 0.1), std::invalid_argument);
  Trace backwards{10, {{3, 1.0}, {2, 1.0}}};
  EXPECT_THROW(trace_extrema(backwards, 1, 0.1), std::invalid_argument);
  EXPECT_THROW(cardiac_params(Trace{10, {}}, 1, 0.1), std::invalid_argument);
}

TEST(CardiacParams, AnalyticSinusoid) {
  const auto r = cardiac_params(make_trace(sinusoid(1000, 100, 2, 10, 3), 100), 5, 0.1);
  EXPECT_NEAR(r.edd_px, 13.0, 0.02 * 13.0);
  EXPECT_NEAR(r.esd_px, 7.0, 0.02 * 7.0);
  EXPECT_NEAR(r.fs, 6.0 / 13.0, 0.02 * 6.0 / 13.0);
  ASSERT_TRUE(r.hr_bpm.has_value());
  EXPECT_NEAR(*r.hr_bpm, 120.0, 0.02 * 120.0);
  EXPECT_EQ(r.n_cycles, 20U);
  EXPECT_EQ(r.peaks.size(), 20U);
}

TEST(CardiacParams, ConstantTraceHasNoHeartRate) {
  const auto r = cardiac_params(make_trace(std::vector<double>(100, 9.0), 20), 5, 0.1);
  EXPECT_EQ(r.n_cycles, 0U);
  EXPECT_FALSE(r.hr_bpm.has_value());
  EXPECT_FALSE(r.hr_absent_reason.empty());
  EXPECT_EQ(r.edd_px, 9.0);
  EXPECT_EQ(r.esd_px, 9.0);
  EXPECT_EQ(r.fs, 0.0);
}

TEST(CardiacParams, Invariances) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0, 0.2);
  auto v = sinusoid(400, 40, 1.2, 12, 2);
  for (auto& x : v) x += noise(rng);
  const auto base = cardiac_params(make_trace(v, 40), 5, 0.1);
  ASSERT_TRUE(base.hr_bpm);
  auto scaled = v;
  for (auto& x : scaled) x *= 3.7;
  const auto s = cardiac_params(make_trace(scaled, 40), 5, 0.1);
  EXPECT_NEAR(s.fs, base.fs, 1e-12);
  EXPECT_NEAR(*s.hr_bpm, *base.hr_bpm, 1e-9);
  EXPECT_NEAR(s.edd_px, 3.7 * base.edd_px, 1e-9);
  const auto fast = cardiac_params(make_trace(v, 80), 5, 0.1);
  EXPECT_NEAR(*fast.hr_bpm, 2 * *base.hr_bpm, 1e-9);
  EXPECT_EQ(fast.fs, base.fs);
}

TEST(CardiacParams, SyntheticMasks) {
  SynthParams p;
  p.n_frames = 120;
  p.fps = 20;
  p.period_s = 0.5;
  auto trace_of = [](const FlyDataset& ds) {
    Trace t{ds.fps, {}};
    for (const auto& f : ds.frames) t.samples.push_back({f.frame_index, mask_diameter(f.mask, DiameterMode::vertical_chord)});
    return t;
  };
  const auto r = cardiac_params(trace_of(synth_generate(p)), 3, 0.1);
  ASSERT_TRUE(r.hr_bpm);
  EXPECT_NEAR(*r.hr_bpm, 120.0, 0.02 * 120.0);
  EXPECT_NEAR(r.edd_px, 2 * (p.radius_mean + p.amplitude) + 1, 1.5);
  p.amplitude = 0;
  const auto flat = cardiac_params(trace_of(synth_generate(p)), 3, 0.1);
  EXPECT_NEAR(flat.fs, 0.0, 1e-12);
  EXPECT_FALSE(flat.hr_bpm);
}

TEST(CardiacParams, HeartRateFromPartialCycles) {
  // 3.7 s of a 1 Hz beat: rate follows the peak spacing, not the trace length
  const auto r = cardiac_params(make_trace(sinusoid(185, 50, 1, 10, 2), 50), 3, 0.1);
  ASSERT_EQ(r.n_cycles, 4U);
  ASSERT_TRUE(r.hr_bpm);
  EXPECT_NEAR(*r.hr_bpm, 60.0, 0.6);
  const auto one = cardiac_params(make_trace(sinusoid(60, 50, 1, 10, 2), 50), 3, 0.1);
  EXPECT_EQ(one.n_cycles, 1U);
  EXPECT_FALSE(one.hr_bpm);
}
