#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "crt/errors.hpp"
#include "crt/geometry.hpp"
#include "support.hpp"

namespace crt {
namespace {

void expect_feature(const GeometryFeature& f, std::array<double, 4> expected) {
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(f[i], expected[i]) << "component " << i;
}

TEST(GeometryFeature, DirectNormalization) {
  expect_feature(geometry_feature({10, 20, 30, 40}, 100, 100), {0.10, 0.20, 0.30, 0.40});
  expect_feature(geometry_feature({0, 0, 640, 480}, 640, 480), {0, 0, 1, 1});
  expect_feature(geometry_feature({160, 120, 480, 360}, 640, 480), {0.25, 0.25, 0.75, 0.75});
}

TEST(GeometryFeature, RejectsInvalidBoxes) {
  EXPECT_THROW(geometry_feature({30, 20, 10, 40}, 100, 100), ValidationError);
  EXPECT_THROW(geometry_feature({10, 20, 30, 20}, 100, 100), ValidationError);
  EXPECT_THROW(geometry_feature({-1, 20, 30, 40}, 100, 100), ValidationError);
  EXPECT_THROW(geometry_feature({10, 20, 130, 40}, 100, 100), ValidationError);
}

TEST(GeometryFeature, ComponentsInUnitIntervalAndOrdered) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double w = 10 + 1000 * u(rng), h = 10 + 1000 * u(rng);
    double x0 = w * u(rng), x1 = w * u(rng), y0 = h * u(rng), y1 = h * u(rng);
    if (x0 == x1 || y0 == y1) continue;
    const auto f = geometry_feature({std::min(x0, x1), std::min(y0, y1), std::max(x0, x1),
                                     std::max(y0, y1)},
                                    w, h);
    for (double c : f) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
    EXPECT_LT(f[0], f[2]);
    EXPECT_LT(f[1], f[3]);
  }
}

TEST(Displacement, HandEvaluatedExample) {
  const Displacement d = displacement({0, 0, 2, 2}, {1, 0, 3, 2});
  EXPECT_NEAR(d[0], std::log(0.5), 1e-15);
  EXPECT_NEAR(d[1], std::log(kDisplacementEpsilon / 2.0), 1e-15);
  EXPECT_EQ(d[2], 0.0);
  EXPECT_EQ(d[3], 0.0);
  EXPECT_NEAR(d[0], -0.6931, 1e-4);
  EXPECT_NEAR(d[1], -7.6009, 1e-4);
}

TEST(Displacement, SelfPairHasZeroSizeTerms) {
  const Displacement d = displacement({3, 4, 8, 10}, {3, 4, 8, 10});
  EXPECT_EQ(d[2], 0.0);
  EXPECT_EQ(d[3], 0.0);
  for (double c : d) EXPECT_TRUE(std::isfinite(c));
}

TEST(GeometricWeights, ZeroWeightGivesZeroMatrix) {
  const std::vector<BBox> boxes{{0, 0, 0.5, 0.5}, {0.2, 0.1, 0.9, 0.6}, {0.1, 0.5, 0.3, 0.9}};
  Tape tape;
  Var w = tape.constant(Tensor({kDefaultGeometryDim, 1}));
  for (double v : geometric_weights(boxes, w).value().data()) EXPECT_EQ(v, 0.0);
}

TEST(GeometricWeights, NonnegativeOnRandomInputs) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BBox> boxes;
    for (int k = 0; k < 5; ++k) {
      const double x = u(rng), y = u(rng);
      boxes.push_back({x, y, x + 0.05 + u(rng), y + 0.05 + u(rng)});
    }
    Tape tape;
    Var w = tape.constant(testing::random_tensor({kDefaultGeometryDim, 1}, rng));
    for (double v : geometric_weights(boxes, w).value().data()) EXPECT_GE(v, 0.0);
  }
}

TEST(GeometricWeights, IdenticalBoxesGiveConstantMatrix) {
  std::mt19937_64 rng(5);
  const std::vector<BBox> boxes(4, BBox{0.1, 0.2, 0.4, 0.6});
  Tape tape;
  Var w = tape.constant(testing::random_tensor({kDefaultGeometryDim, 1}, rng, 0.0, 1.0));
  const Tensor g = geometric_weights(boxes, w).value();
  for (double v : g.data()) EXPECT_EQ(v, g[0]);
  EXPECT_GT(g[0], 0.0);
}

TEST(GeometricWeights, EmbeddingLayout) {
  const Displacement d{0.3, -1.2, 0.0, 2.0};
  const auto e = embed_displacement(d, 64);
  ASSERT_EQ(e.size(), 64u);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t k = 0; k < 8; ++k) {
      const double angle = d[c] / std::pow(1000.0, static_cast<double>(k) / 8.0);
      EXPECT_DOUBLE_EQ(e[c * 8 + k], std::sin(angle));
      EXPECT_DOUBLE_EQ(e[32 + c * 8 + k], std::cos(angle));
    }
  }
  EXPECT_THROW(embed_displacement(d, 12), ConfigError);
}

TEST(GeometricWeights, AllHeadsColumnsMatchSingleHead) {
  std::mt19937_64 rng(6);
  const std::vector<BBox> boxes{{0, 0, 0.5, 0.5}, {0.2, 0.1, 0.9, 0.6}, {0.1, 0.5, 0.3, 0.9}};
  const Tensor w = testing::random_tensor({kDefaultGeometryDim, 2}, rng);
  Tape tape;
  const Tensor all =
      geometric_weights_all_heads(tape.constant(displacement_embeddings(boxes, 64)),
                                  tape.constant(w))
          .value();
  for (std::size_t h = 0; h < 2; ++h) {
    Tensor column({kDefaultGeometryDim, 1});
    for (std::size_t r = 0; r < kDefaultGeometryDim; ++r) column[r] = w(r, h);
    const Tensor single = geometric_weights(boxes, tape.constant(column)).value();
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(single[i], all(i, h));
  }
}

}  // namespace
}  // namespace crt
