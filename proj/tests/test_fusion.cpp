// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "rmot/fusion.hpp"
#include "support/oracles.hpp"

using namespace rmot::fusion;

namespace {

FusionInput random_input(std::mt19937_64& rng, Eigen::Index hw, Eigen::Index l, Eigen::Index d,
                         bool bias = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
  };
  FusionInput in{rnd(hw, d), rnd(l, d), rnd(hw, d), rnd(l, d), rnd(d, d), rnd(d, d), rnd(d, d),
                 {}, {}, {}};
  if (bias) {
    in.b_q = rnd(1, d).row(0);
    in.b_k = rnd(1, d).row(0);
    in.b_v = rnd(1, d).row(0);
  }
  return in;
}

}  // namespace

TEST(EarlyFuse, HandCaseIsTwenty) {
  const Matrix one = Matrix::Constant(1, 1, 1.0), zero = Matrix::Zero(1, 1);
  FusionInput in{Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 3.0), zero, zero, one, one,
                 one, {}, {}, {}};
  EXPECT_EQ(early_fuse(in)(0, 0), 20.0);
}

TEST(EarlyFuse, ZeroLanguageIsIdentity) {
  std::mt19937_64 rng(1);
  FusionInput in = random_input(rng, 6, 3, 8);
  in.linguistic.setZero();
  EXPECT_TRUE(early_fuse(in) == in.visual);
}

TEST(EarlyFuse, MatchesNaiveLoops) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index hw = 1 + rng() % 16, l = 1 + rng() % 16, d = 1 + rng() % 16;
    const FusionInput in = random_input(rng, hw, l, d, trial % 2 == 1);
    const Matrix fast = early_fuse(in);
    const Matrix slow = oracle::naive_early_fuse(in);
    ASSERT_EQ(fast.rows(), hw);
    ASSERT_EQ(fast.cols(), d);
    EXPECT_LE((fast - slow).cwiseAbs().maxCoeff(), 1e-10);
  }
  const FusionInput in = random_input(rng, 4, 3, 8);
  EXPECT_LE((early_fuse(in) - oracle::naive_early_fuse(in)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EarlyFuse, LinearInValueProjection) {
  std::mt19937_64 rng(3);
  const FusionInput in = random_input(rng, 5, 4, 6);
  FusionInput scaled = in;
  scaled.w_v *= 3.0;
  const Matrix attn = early_fuse(in) - in.visual;
  const Matrix attn3 = early_fuse(scaled) - in.visual;
  EXPECT_LE((attn3 - 3.0 * attn).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EarlyFuse, DimensionErrors) {
  std::mt19937_64 rng(4);
  FusionInput in = random_input(rng, 4, 3, 8);
  in.pos_visual = Matrix::Zero(3, 8);
  EXPECT_THROW(early_fuse(in), rmot::Error);
  in = random_input(rng, 4, 3, 8);
  in.w_k = Matrix::Zero(8, 7);
  EXPECT_THROW(early_fuse(in), rmot::Error);
  in = random_input(rng, 4, 3, 8);
  in.linguistic = Matrix::Zero(3, 5);
  EXPECT_THROW(early_fuse(in), rmot::Error);
}

TEST(EarlyFuse, SoftmaxVariantRowsAreConvex) {
  std::mt19937_64 rng(5);
  FusionInput in = random_input(rng, 3, 4, 4);
  in.w_v = Matrix::Identity(4, 4);
  in.linguistic = Matrix::Ones(4, 4);
  // Every value row is all ones, so any convex weighting adds exactly one.
  const Matrix out = early_fuse(in, {.softmax = true});
  EXPECT_LE((out - in.visual - Matrix::Ones(3, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SinusoidalPos, Properties) {
  const Matrix p = sinusoidal_pos(5, 8);
  for (Eigen::Index c = 0; c < 8; ++c) EXPECT_EQ(p(0, c), c % 2 == 0 ? 0.0 : 1.0);
  EXPECT_TRUE(p == sinusoidal_pos(5, 8));
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = i + 1; j < 5; ++j) EXPECT_GT((p.row(i) - p.row(j)).norm(), 1e-6);
  EXPECT_LE(p.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_THROW(sinusoidal_pos(5, 7), rmot::Error);
  EXPECT_THROW(sinusoidal_pos(5, 0), rmot::Error);

  const Matrix g = sinusoidal_pos(3, 4, 8);
  ASSERT_EQ(g.rows(), 12);
  // Row-major flattening: same image row shares the first half of channels.
  EXPECT_TRUE(g.row(4).head(4) == g.row(5).head(4));
  EXPECT_TRUE(g.row(1).tail(4) == g.row(5).tail(4));
  EXPECT_FALSE(g.row(4) == g.row(5));
}

TEST(NumericGrad, Identities) {
  std::mt19937_64 rng(6);
  const Matrix x = random_input(rng, 3, 1, 4).visual;
  const Matrix g1 = numeric_grad([](const Matrix& m) { return m.sum(); }, x);
  EXPECT_LE((g1 - Matrix::Ones(3, 4)).cwiseAbs().maxCoeff(), 1e-9);
  const Matrix g2 = numeric_grad([](const Matrix& m) { return 0.5 * m.squaredNorm(); }, x);
  EXPECT_LE((g2 - x).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(numeric_grad([](const Matrix&) { return std::nan(""); }, x), rmot::Error);
}

TEST(WeightGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const FusionInput in = random_input(rng, 4, 3, 5);
    const Matrix up = random_input(rng, 4, 1, 5).visual;
    auto objective = [&](Matrix FusionInput::*w) {
      return [&, w](const Matrix& m) {
        FusionInput probe = in;
        probe.*w = m;
        return (early_fuse(probe).array() * up.array()).sum();
      };
    };
    const auto g = early_fuse_weight_grad(in, up);
    const std::pair<Matrix FusionInput::*, const Matrix*> cases[] = {
        {&FusionInput::w_q, &g.w_q}, {&FusionInput::w_k, &g.w_k}, {&FusionInput::w_v, &g.w_v}};
    for (const auto& [field, analytic] : cases) {
      const Matrix fd = numeric_grad(objective(field), in.*field);
      const double scale = std::max(1e-3, analytic->cwiseAbs().maxCoeff());
      EXPECT_LE((fd - *analytic).cwiseAbs().maxCoeff() / scale, 1e-4);
    }
  }
}
