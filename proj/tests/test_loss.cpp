#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "flynet/loss.hpp"
#include "oracles.hpp"

using namespace flynet;

namespace {

BinaryMask random_mask(std::size_t h, std::size_t w, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  BinaryMask m(h, w);
  for (auto& v : m.data) v = coin(rng) ? 1 : 0;
  return m;
}

BinaryMask block(std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t bh, std::size_t bw) {
  BinaryMask m(h, w);
  for (std::size_t y = y0; y < y0 + bh; ++y)
    for (std::size_t x = x0; x < x0 + bw; ++x) m.at(y, x) = 1;
  return m;
}

}  // namespace

TEST(HardIou, Examples) {
  const auto a = block(4, 4, 1, 1, 2, 2);
  EXPECT_EQ(hard_iou(a, a), 1.0);
  EXPECT_EQ(hard_iou(a, block(4, 4, 0, 3, 1, 1)), 0.0);
  // blocks sharing one 2x1 column
  EXPECT_DOUBLE_EQ(hard_iou(block(4, 4, 0, 0, 2, 2), block(4, 4, 0, 1, 2, 2)), 1.0 / 3.0);
  EXPECT_EQ(hard_iou(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0);
  EXPECT_THROW(hard_iou(BinaryMask(3, 3), BinaryMask(3, 4)), std::invalid_argument);
}

TEST(HardIou, MatchesPixelCountingOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_mask(9, 7, density(rng), rng);
    const auto b = random_mask(9, 7, density(rng), rng);
    const double v = hard_iou(a, b);
    ASSERT_EQ(v, oracle::iou(a, b));
    ASSERT_EQ(v, hard_iou(b, a));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(SoftIou, PerfectPrediction) {
  std::mt19937_64 rng(2);
  std::vector<BinaryMask> truth{random_mask(8, 8, 0.4, rng), random_mask(8, 8, 0.4, rng)};
  truth[0].data[0] = truth[1].data[0] = 1;
  Tensor4<double> probs({2, 1, 8, 8});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 64; ++i) probs.plane(n, 0)[i] = truth[n].data[i];
  EXPECT_LT(soft_iou_loss(probs, std::span<const BinaryMask>(truth)).loss, 1e-5);
}

TEST(SoftIou, HandExample) {
  std::vector<BinaryMask> truth{BinaryMask(2, 2)};
  truth[0].data = {1, 1, 0, 0};
  const auto lv = soft_iou_loss(Tensor4<double>({1, 1, 2, 2}, 0.5), std::span<const BinaryMask>(truth));
  EXPECT_NEAR(lv.loss, 1.0 - 1.0 / (3.0 + 1e-6), 1e-12);
  EXPECT_NEAR(lv.loss, 2.0 / 3.0, 1e-6);
  EXPECT_EQ(lv.dprobs.shape(), (Shape{1, 1, 2, 2}));
}

TEST(SoftIou, GradientSignsAndRange) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<BinaryMask> truth{random_mask(6, 6, 0.5, rng)};
  truth[0].data[0] = 1;
  truth[0].data[1] = 0;
  Tensor4<double> probs({1, 1, 6, 6});
  for (auto& v : probs.data()) v = u(rng);
  const auto lv = soft_iou_loss(probs, std::span<const BinaryMask>(truth));
  EXPECT_GE(lv.loss, 0.0);
  EXPECT_LE(lv.loss, 1.0);
  for (std::size_t i = 0; i < 36; ++i) {
    if (truth[0].data[i]) EXPECT_LT(lv.dprobs[i], 0.0);
    else EXPECT_GT(lv.dprobs[i], 0.0);
  }
}

TEST(SoftIou, EqualsHardIouOnBinaryInputs) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto pred = random_mask(10, 10, 0.5, rng);
    std::vector<BinaryMask> truth{random_mask(10, 10, 0.5, rng)};
    const double soft = 1.0 - soft_iou_loss(pred.to_tensor<double>(), std::span<const BinaryMask>(truth)).loss;
    ASSERT_NEAR(soft, hard_iou(pred, truth[0]), 1e-5);
  }
}

TEST(SoftIou, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<BinaryMask> truth{random_mask(5, 5, 0.5, rng)};
  Tensor4<double> probs({1, 1, 5, 5});
  for (auto& v : probs.data()) v = u(rng);
  std::vector<std::size_t> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<BinaryMask> truth2{BinaryMask(5, 5)};
  Tensor4<double> probs2({1, 1, 5, 5});
  for (std::size_t i = 0; i < 25; ++i) {
    truth2[0].data[i] = truth[0].data[perm[i]];
    probs2[i] = probs[perm[i]];
  }
  EXPECT_NEAR(soft_iou_loss(probs, std::span<const BinaryMask>(truth)).loss,
              soft_iou_loss(probs2, std::span<const BinaryMask>(truth2)).loss, 1e-14);
}

TEST(SoftIou, RejectsShapeMismatch) {
  std::vector<BinaryMask> truth{BinaryMask(4, 4)};
  EXPECT_THROW(soft_iou_loss(Tensor4<double>({1, 1, 4, 5}), std::span<const BinaryMask>(truth)), std::invalid_argument);
  EXPECT_THROW(soft_iou_loss(Tensor4<double>({2, 1, 4, 4}), std::span<const BinaryMask>(truth)), std::invalid_argument);
}

TEST(Binarize, ThresholdBoundary) {
  for (auto [p, expected] : {std::pair{0.9, 1}, std::pair{0.5, 1}, std::pair{0.499, 0}}) {
    const auto masks = binarize(Tensor4<double>({1, 1, 3, 3}, p), 0.5);
    ASSERT_EQ(masks.size(), 1U);
    for (auto v : masks[0].data) EXPECT_EQ(v, expected) << p;
  }
  EXPECT_THROW(binarize(Tensor4<double>({1, 1, 1, 1}), 1.0), std::invalid_argument);
}
