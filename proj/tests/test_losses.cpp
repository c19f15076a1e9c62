// SPDX-License-Identifier: Apache-2.0
#include "wireseg/loss/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "loss_oracles.hpp"
#include "testutil.hpp"
#include "wireseg/core/rng.hpp"

using namespace wireseg;
using namespace wireseg::test;

namespace {

LossConfig default_cfg() { return LossConfig{}; }

Tensor logits8x8(Rng& rng) { return random_tensor(8, 8, rng, -4.0, 4.0, false); }

std::vector<double> vec(const Tensor& t) { return t.values(); }

}  // namespace

TEST(DiceLoss, IdenticalBinaryPredictionIsZero) {
  Tensor t = Tensor::from(2, 2, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(dice_loss(t, t, 1e-6).item(), 0.0);
}

TEST(DiceLoss, AllZeroBothSidesIsZero) {
  Tensor z = Tensor::zeros(3, 3);
  EXPECT_DOUBLE_EQ(dice_loss(z, z, 1e-6).item(), 0.0);
}

TEST(DiceLoss, WorkedTwoByTwoCase) {
  Tensor pred = Tensor::from(2, 2, {1, 0, 0, 0});
  Tensor tgt = Tensor::from(2, 2, {1, 1, 0, 0});
  const double eps = 1e-6;
  const double expected = 1.0 - (2.0 + eps) / (3.0 + eps);
  EXPECT_NEAR(dice_loss(pred, tgt, eps).item(), expected, 1e-12);
  EXPECT_NEAR(expected, 1.0 / 3.0, 1e-6);
}

TEST(DiceLoss, MatchesOracleOnSeededCases) {
  Rng rng(101);
  for (int k = 0; k < 50; ++k) {
    Tensor pred = random_tensor(8, 8, rng, 0.0, 1.0);
    Tensor tgt = random_binary_tensor(8, 8, rng);
    const double got = dice_loss(pred, tgt, 1e-6).item();
    const double want = oracle_dice(vec(pred), vec(tgt), 1e-6);
    EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST(FocalLoss, ConfidentCorrectPredictionVanishes) {
  Tensor pred = Tensor::from(1, 1, {1.0 - 1e-6});
  Tensor tgt = Tensor::from(1, 1, {1.0});
  EXPECT_LT(focal_loss(pred, tgt, 2.0, 1e-6).item(), 1e-4);
}

TEST(FocalLoss, SinglePixelWorkedCase) {
  Tensor pred = Tensor::from(1, 1, {0.5});
  Tensor tgt1 = Tensor::from(1, 1, {1.0});
  Tensor tgt0 = Tensor::from(1, 1, {0.0});
  const double expected = -(0.25) * std::log(0.5);  // 0.17328679...
  EXPECT_NEAR(focal_loss(pred, tgt1, 2.0, 1e-6).item(), expected, 1e-9);
  EXPECT_NEAR(focal_loss(pred, tgt0, 2.0, 1e-6).item(), expected, 1e-9);
  EXPECT_NEAR(expected, 0.17329, 1e-5);
}

TEST(FocalLoss, MatchesOracleOnSeededCases) {
  Rng rng(102);
  for (int k = 0; k < 50; ++k) {
    Tensor pred = random_tensor(8, 8, rng, 0.001, 0.999);
    Tensor tgt = random_binary_tensor(8, 8, rng);
    const double got = focal_loss(pred, tgt, 2.0, 1e-6).item();
    const double want = oracle_focal(vec(pred), vec(tgt), 2.0, 1e-6);
    EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST(FocalLoss, RejectsNonBinaryTarget) {
  Tensor pred = Tensor::from(1, 1, {0.5});
  Tensor tgt = Tensor::from(1, 1, {0.3});
  EXPECT_THROW(focal_loss(pred, tgt, 2.0, 1e-6), std::invalid_argument);
}

TEST(TsLoss, NearIdentityWithConfidentTeacher) {
  Tensor tea = Tensor::from(2, 2, {10, -10, 10, -10});
  LossConfig cfg = default_cfg();
  Tensor loss = ts_loss(tea, tea, tea, cfg);
  EXPECT_LT(loss.item(), 1e-3);
}

TEST(TsLoss, LinearInBranches) {
  Rng rng(103);
  Tensor stu = logits8x8(rng);
  Tensor tea = logits8x8(rng);
  LossConfig cfg = default_cfg();
  cfg.lambda_ts = 1.0;
  cfg.lambda_ts_prime = 1.0;
  const double both = ts_loss(stu, stu, tea, cfg).item();
  cfg.lambda_ts_prime = 0.0;
  const double single = ts_loss(stu, stu, tea, cfg).item();
  EXPECT_NEAR(both, 2.0 * single, 1e-9);
}

TEST(TsLoss, MatchesOracleOnSeededCases) {
  Rng rng(104);
  LossConfig cfg = default_cfg();
  OracleLossParams oc;
  for (int k = 0; k < 50; ++k) {
    Tensor stu = logits8x8(rng), stu_aug = logits8x8(rng), tea = logits8x8(rng);
    const double got = ts_loss(stu, stu_aug, tea, cfg).item();
    const double want = oracle_ts(vec(stu), vec(stu_aug), vec(tea), oc);
    EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST(TsLoss, TeacherTargetCarriesNoGradient) {
  Rng rng(105);
  Tensor stu = random_tensor(4, 4, rng, -2, 2, true);
  Tensor stu_aug = random_tensor(4, 4, rng, -2, 2, true);
  Tensor tea = random_tensor(4, 4, rng, -2, 2, true);
  LossConfig cfg = default_cfg();
  ts_loss(stu, stu_aug, tea, cfg).backward();
  for (double g : tea.grads()) EXPECT_EQ(g, 0.0);
  double stu_norm = 0.0;
  for (double g : stu.grads()) stu_norm += std::abs(g);
  EXPECT_GT(stu_norm, 0.0);
}

TEST(WsLoss, AllEqualPredictionsCollapseToTwiceDice) {
  Rng rng(106);
  Tensor p = logits8x8(rng);
  Tensor y = random_binary_tensor(8, 8, rng);
  LossConfig cfg = default_cfg();  // all four lambdas 0.5
  const double got = ws_loss(p, p, p, p, y, cfg).item();
  const double dice = dice_loss(sigmoid(p), y, cfg.eps_dice).item();
  EXPECT_NEAR(got, 2.0 * dice, 1e-9);
}

TEST(WsLoss, ZeroLambdasGiveZero) {
  Rng rng(107);
  Tensor p = logits8x8(rng);
  Tensor y = random_binary_tensor(8, 8, rng);
  LossConfig cfg = default_cfg();
  cfg.lambda_ws_stu = cfg.lambda_ws_stu_prime = cfg.lambda_ws_tea = cfg.lambda_ws_tea_prime = 0.0;
  EXPECT_DOUBLE_EQ(ws_loss(p, p, p, p, y, cfg).item(), 0.0);
}

TEST(WsLoss, MatchesOracleOnSeededCases) {
  Rng rng(108);
  LossConfig cfg = default_cfg();
  OracleLossParams oc;
  for (int k = 0; k < 50; ++k) {
    Tensor a = logits8x8(rng), b = logits8x8(rng), c = logits8x8(rng), d = logits8x8(rng);
    Tensor y = random_binary_tensor(8, 8, rng);
    const double got = ws_loss(a, b, c, d, y, cfg).item();
    const double want = oracle_ws(vec(a), vec(b), vec(c), vec(d), vec(y), oc);
    EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST(PooledEmbedding, ConstantEmbeddingPoolsToItself) {
  const int n = 16, d = 8;
  Tensor tokens = Tensor::zeros(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) tokens.values()[i * d + j] = 0.25 * j;
  Tensor mask = Tensor::zeros(1, n);
  mask.values()[3] = 1.0;
  mask.values()[7] = 1.0;
  Tensor pool = pooled_positive_embedding(tokens, mask);
  for (int j = 0; j < d; ++j) EXPECT_NEAR(pool.values()[j], 0.25 * j, 1e-12);
}

TEST(PooledEmbedding, SingleCellPoolsToThatCell) {
  Rng rng(109);
  Tensor tokens = random_tensor(6, 4, rng);
  Tensor mask = Tensor::zeros(1, 6);
  mask.values()[2] = 1.0;
  Tensor pool = pooled_positive_embedding(tokens, mask);
  for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(pool.values()[j], tokens.value(2, j));
}

TEST(PooledEmbedding, EmptyMaskThrows) {
  Tensor tokens = Tensor::zeros(4, 4);
  Tensor mask = Tensor::zeros(1, 4);
  EXPECT_THROW(pooled_positive_embedding(tokens, mask), EmptyPoolError);
}

TEST(PooledEmbedding, MatchesWeightedMeanOracle) {
  Rng rng(110);
  for (int k = 0; k < 20; ++k) {
    Tensor tokens = random_tensor(12, 6, rng);
    Tensor mask = random_binary_tensor(1, 12, rng, 0.4);
    if (std::accumulate(mask.values().begin(), mask.values().end(), 0.0) == 0.0)
      mask.values()[0] = 1.0;
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 12; ++i)
      rows.push_back(std::vector<double>(tokens.values().begin() + i * 6,
                                         tokens.values().begin() + (i + 1) * 6));
    auto want = oracle_pool(rows, mask.values());
    Tensor got = pooled_positive_embedding(tokens, mask);
    for (int j = 0; j < 6; ++j)
      EXPECT_NEAR(got.values()[j], want[j], 1e-6 * std::max(1.0, std::abs(want[j])));
  }
}

TEST(EmbeddingConsistency, AllIdenticalVectorsGiveLogTwo) {
  Tensor v = Tensor::from(1, 4, {0.5, -0.5, 0.5, -0.5});
  std::vector<Tensor> stu{v, v}, tea{v, v};
  const double got = embedding_consistency_loss(stu, tea, 0.3).item();
  EXPECT_NEAR(got, std::log(2.0), 1e-9);
}

TEST(EmbeddingConsistency, OrthogonalCrossPairsWorkedCase) {
  Tensor e0 = Tensor::from(1, 4, {1, 0, 0, 0});
  Tensor e1 = Tensor::from(1, 4, {0, 1, 0, 0});
  std::vector<Tensor> stu{e0, e1}, tea{e0, e1};
  const double got = embedding_consistency_loss(stu, tea, 0.3).item();
  const double want = std::log(1.0 + std::exp(-1.0 / 0.3));
  EXPECT_NEAR(got, want, 1e-9);
  EXPECT_NEAR(want, 0.03505, 1e-5);
}

TEST(EmbeddingConsistency, SingleSampleFallbackIsCosineDistance) {
  Tensor v = Tensor::from(1, 3, {3, 0, 4});
  std::vector<Tensor> stu{v}, tea{v};
  EXPECT_NEAR(embedding_consistency_loss(stu, tea, 0.3).item(), 0.0, 1e-12);
}

TEST(EmbeddingConsistency, MatchesOracleBothForms) {
  Rng rng(111);
  for (int k = 0; k < 50; ++k) {
    const int B = 3, d = 8;
    std::vector<Tensor> stu, tea;
    std::vector<std::vector<double>> stu_v, tea_v;
    for (int i = 0; i < B; ++i) {
      stu.push_back(random_tensor(1, d, rng, -1, 1));
      tea.push_back(random_tensor(1, d, rng, -1, 1));
      stu_v.push_back(stu.back().values());
      tea_v.push_back(tea.back().values());
    }
    const double got_nce = embedding_consistency_loss(stu, tea, 0.3).item();
    const double want_nce = oracle_infonce(stu_v, tea_v, 0.3);
    EXPECT_NEAR(got_nce, want_nce, 1e-6 * std::max(1.0, std::abs(want_nce)));
    const double got_att =
        embedding_consistency_loss(stu, tea, 0.3, EmbeddingLossForm::attraction_only).item();
    const double want_att = oracle_attraction(stu_v, tea_v);
    EXPECT_NEAR(got_att, want_att, 1e-6 * std::max(1.0, std::abs(want_att)));
  }
}

TEST(EmbeddingConsistency, RejectsZeroVectorAndLengthMismatch) {
  Tensor z = Tensor::zeros(1, 4);
  Tensor v = Tensor::from(1, 4, {1, 0, 0, 0});
  std::vector<Tensor> a{v}, b{z};
  EXPECT_THROW(embedding_consistency_loss(a, b, 0.3), std::invalid_argument);
  std::vector<Tensor> c{v, v};
  EXPECT_THROW(embedding_consistency_loss(a, c, 0.3), std::invalid_argument);
}

TEST(PredConsistency, InvarianceGivesTinyLoss) {
  Tensor tea = Tensor::from(2, 2, {12, -12, 12, -12});
  LossConfig cfg = default_cfg();
  EXPECT_LT(pred_consistency_loss(tea, tea, cfg).item(), 1e-3);
}

TEST(PredConsistency, ComponentwiseHalfFocalHalfDice) {
  Rng rng(112);
  Tensor tea = logits8x8(rng), aug = logits8x8(rng);
  LossConfig cfg = default_cfg();
  const double got = pred_consistency_loss(tea, aug, cfg).item();
  Tensor target = sig_binarize(tea, cfg.binarize_threshold);
  const double f = focal_loss(sigmoid(aug), target, cfg.focal_exponent, cfg.prob_clamp).item();
  const double d = dice_loss(sigmoid(aug), target, cfg.eps_dice).item();
  EXPECT_NEAR(got, 0.5 * f + 0.5 * d, 1e-12);
}

TEST(PredConsistency, MatchesOracleOnSeededCases) {
  Rng rng(113);
  LossConfig cfg = default_cfg();
  OracleLossParams oc;
  for (int k = 0; k < 50; ++k) {
    Tensor tea = logits8x8(rng), aug = logits8x8(rng);
    const double got = pred_consistency_loss(tea, aug, cfg).item();
    const double want = oracle_pred_consistency(vec(tea), vec(aug), oc);
    EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST(TotalLoss, PaperWeightCombinations) {
  Tensor ts = Tensor::scalar(0.7), ws = Tensor::scalar(0.3), emb = Tensor::scalar(0.2),
         pred = Tensor::scalar(0.4);
  LossWeights warmup{0.0, 1.0, 0.5, 1.0};
  EXPECT_NEAR(total_loss(ts, ws, emb, pred, warmup).item(), 0.3 + 0.1 + 0.4, 1e-12);
  LossWeights selftrain{5.0, 0.0, 1.0, 0.0};
  EXPECT_NEAR(total_loss(ts, ws, emb, pred, selftrain).item(), 3.5 + 0.2, 1e-12);
  LossWeights zero{0.0, 0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(total_loss(ts, ws, emb, pred, zero).item(), 0.0);
}

TEST(TotalLoss, NaNPartAborts) {
  Tensor bad = Tensor::scalar(std::nan(""));
  Tensor ok = Tensor::scalar(0.0);
  LossWeights w{1, 1, 1, 1};
  EXPECT_THROW(total_loss(bad, ok, ok, ok, w), NonFiniteLossError);
}

// Analytic gradients vs central finite differences on 4x4 inputs.
TEST(LossGradients, DiceFocalTsWsEmbeddingAgainstFiniteDifferences) {
  Rng rng(114);
  const double tol = 1e-3;

  Tensor pred = random_tensor(4, 4, rng, 0.05, 0.95, true);
  Tensor tgt = random_binary_tensor(4, 4, rng);
  auto dice_fn = [&]() { return dice_loss(pred, tgt, 1e-6); };
  EXPECT_LT(grad_check(dice_fn, pred).max_rel_error, tol);

  auto focal_fn = [&]() { return focal_loss(pred, tgt, 2.0, 1e-6); };
  EXPECT_LT(grad_check(focal_fn, pred).max_rel_error, tol);

  LossConfig cfg = default_cfg();
  Tensor stu = random_tensor(4, 4, rng, -2, 2, true);
  Tensor stu_aug = random_tensor(4, 4, rng, -2, 2, true);
  Tensor tea = random_tensor(4, 4, rng, -2, 2, false);
  auto ts_fn = [&]() { return ts_loss(stu, stu_aug, tea, cfg); };
  EXPECT_LT(grad_check(ts_fn, stu).max_rel_error, tol);
  EXPECT_LT(grad_check(ts_fn, stu_aug).max_rel_error, tol);

  Tensor y = random_binary_tensor(4, 4, rng);
  Tensor t1 = random_tensor(4, 4, rng, -2, 2, true);
  Tensor t2 = random_tensor(4, 4, rng, -2, 2, true);
  auto ws_fn = [&]() { return ws_loss(stu, stu_aug, t1, t2, y, cfg); };
  EXPECT_LT(grad_check(ws_fn, t1).max_rel_error, tol);
  EXPECT_LT(grad_check(ws_fn, t2).max_rel_error, tol);

  Tensor sa = random_tensor(1, 4, rng, -1, 1, true);
  Tensor sb = random_tensor(1, 4, rng, -1, 1, true);
  Tensor ta = random_tensor(1, 4, rng, -1, 1, true);
  Tensor tb = random_tensor(1, 4, rng, -1, 1, true);
  auto emb_fn = [&]() {
    std::vector<Tensor> s{sa, sb}, t{ta, tb};
    return embedding_consistency_loss(s, t, 0.3);
  };
  EXPECT_LT(grad_check(emb_fn, sa).max_rel_error, tol);
  EXPECT_LT(grad_check(emb_fn, ta).max_rel_error, tol);
}
