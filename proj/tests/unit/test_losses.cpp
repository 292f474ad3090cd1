#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "smorm/error.hpp"
#include "smorm/gradcheck.hpp"
#include "smorm/losses.hpp"
#include "smorm/train.hpp"

using namespace smorm;

namespace {

double naive_bt(double d) { return -std::log(1.0 / (1.0 + std::exp(-d))); }

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<PairwiseRecord> toy_pairs(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<PairwiseRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({random_vec(d, rng), random_vec(d, rng), 0, i, "t"});
  return out;
}

std::vector<AttributeRecord> toy_attrs(std::size_t n, std::size_t d, std::size_t K, Rng& rng) {
  std::vector<AttributeRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({random_vec(d, rng), random_vec(K, rng), i, "t"});
  return out;
}

}  // namespace

TEST(BtLoss, ClosedForms) {
  EXPECT_NEAR(bt_loss(0.0, 0.0), 0.6931471805599453, 1e-15);
  EXPECT_NEAR(bt_loss(std::log(3.0), 0.0), 0.28768207245178093, 1e-15);
  const double big = bt_loss(0.0, 1000.0);
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_LT(std::abs(big - 1000.0), 1e-300 + 1000.0 * std::numeric_limits<double>::epsilon());
  EXPECT_EQ(bt_loss(1000.0, 0.0), 0.0);
}

TEST(BtLoss, MatchesNaiveFormulaInRange) {
  for (double d = -30.0; d <= 30.0; d += 0.01) EXPECT_NEAR(bt_loss(d, 0.0), naive_bt(d), 1e-12) << d;
}

TEST(BtLoss, SymmetricSumAtLeastTwoLn2) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double a = 5 * rng.normal(), b = 5 * rng.normal();
    EXPECT_GE(bt_loss(a, b) + bt_loss(b, a), 2 * std::log(2.0) - 1e-15);
  }
  EXPECT_NEAR(bt_loss(0.3, 0.3) + bt_loss(0.3, 0.3), 2 * std::log(2.0), 1e-15);
}

TEST(BtLoss, ShiftInvariant) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.normal(), b = rng.normal(), c = 10 * rng.normal();
    EXPECT_NEAR(bt_loss(a, b), bt_loss(a + c, b + c), 1e-12);
  }
}

TEST(MarginAndSmoothing, ReduceToBt) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double a = 3 * rng.normal(), b = 3 * rng.normal();
    EXPECT_DOUBLE_EQ(margin_loss(a, b, 0.0), bt_loss(a, b));
    EXPECT_NEAR(label_smooth_loss(a, b, 0.0), bt_loss(a, b), 1e-15);
  }
  EXPECT_NEAR(label_smooth_loss(0.0, 0.0, 0.5), std::log(2.0), 1e-15);
  EXPECT_NEAR(margin_loss(2.0, 0.0, 2.0), std::log(2.0), 1e-15);
}

TEST(LabelSmoothing, HalfIsFlatOptimum) {
  // With ε = ½ the objective is symmetric in Δ, so Δ = 0 is the minimum.
  for (double d : {-2.0, -0.5, 0.5, 3.0}) EXPECT_GT(label_smooth_loss(d, 0.0, 0.5), std::log(2.0));
}

TEST(MseLoss, Basics) {
  Vec t{1.0, 2.0, 3.0};
  EXPECT_EQ(mse_loss(t, t), 0.0);
  EXPECT_EQ(mse_loss(Vec{2.0, 3.0, 4.0}, t), 3.0);
  Rng rng(4);
  Vec p = random_vec(5, rng), q = random_vec(5, rng);
  double s = 0;
  for (int i = 0; i < 5; ++i) s += (p[i] - q[i]) * (p[i] - q[i]);
  EXPECT_NEAR(mse_loss(p, q), s, 1e-15);
  EXPECT_THROW(mse_loss(p, t), DimensionMismatch);
}

TEST(Ensemble, Aggregate) {
  EXPECT_EQ(ensemble_aggregate(Vec{2.0}, EnsembleMode::mean), 2.0);
  EXPECT_EQ(ensemble_aggregate(Vec{2.0}, EnsembleMode::min), 2.0);
  EXPECT_EQ(ensemble_aggregate(Vec{1.0, 3.0}, EnsembleMode::mean), 2.0);
  EXPECT_EQ(ensemble_aggregate(Vec{1.0, 3.0}, EnsembleMode::min), 1.0);
  EXPECT_THROW(ensemble_aggregate(Vec{}, EnsembleMode::mean), EmptyInput);
}

TEST(TapeLosses, MatchScalarVersions) {
  Mat d{{-3.0}, {0.0}, {0.7}, {25.0}};
  ad::Tape tape;
  ad::Var v = tape.constant(d);
  double bt = 0, mg = 0, ls = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    bt += bt_loss(d(i, 0), 0.0) / 4;
    mg += margin_loss(d(i, 0), 0.0, 0.5) / 4;
    ls += label_smooth_loss(d(i, 0), 0.0, 0.1) / 4;
  }
  EXPECT_NEAR(ad::bt_loss(v).scalar(), bt, 1e-15);
  EXPECT_NEAR(ad::margin_loss(v, 0.5).scalar(), mg, 1e-15);
  EXPECT_NEAR(ad::label_smooth_loss(v, 0.1).scalar(), ls, 1e-15);
}

class JointLossTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(5);
    model = SmormModel(MlpConfig{4, {6}, 5, Activation::tanh}, 3, rng);
    pairs = toy_pairs(4, 4, rng);
    attrs = toy_attrs(4, 4, 3, rng);
  }
  double eval(const LossConfig& cfg, std::span<const AttributeRecord> m) {
    ad::Tape tape;
    auto p = ad::bind(tape, model.params(), false);
    return joint_loss(tape, p, model, pairs, m, cfg).total.scalar();
  }
  SmormModel model;
  std::vector<PairwiseRecord> pairs;
  std::vector<AttributeRecord> attrs;
};

TEST_F(JointLossTest, MatchesHandAssembledSum) {
  LossConfig cfg{.mode = TrainingMode::smorm, .lambda_multi = 0.7};
  double bt = 0, mse = 0;
  for (const auto& r : pairs) bt += bt_loss(model.score(r.input_chosen, Strategy::F), model.score(r.input_rejected, Strategy::F));
  for (const auto& a : attrs) mse += mse_loss(model.attribute_scores(Mat::row(a.input)).row_vec(0), a.scores);
  EXPECT_NEAR(eval(cfg, attrs), bt / 4 + 0.7 * mse / 4, 1e-12);
}

TEST_F(JointLossTest, LambdaZeroIsPureBt) {
  LossConfig joint{.mode = TrainingMode::smorm, .lambda_multi = 0.0};
  LossConfig single{.mode = TrainingMode::single_only};
  EXPECT_NEAR(eval(joint, attrs), eval(single, attrs), 1e-15);
}

TEST_F(JointLossTest, PerfectAttributeTargetsLeaveBtTerm) {
  std::vector<AttributeRecord> exact = attrs;
  for (auto& a : exact) a.scores = model.attribute_scores(Mat::row(a.input)).row_vec(0);
  LossConfig joint{.mode = TrainingMode::smorm, .lambda_multi = 3.0};
  LossConfig single{.mode = TrainingMode::single_only};
  EXPECT_NEAR(eval(joint, exact), eval(single, exact), 1e-15);
}

TEST_F(JointLossTest, EveryModePassesGradCheck) {
  for (TrainingMode mode : {TrainingMode::smorm, TrainingMode::single_only, TrainingMode::multi_only, TrainingMode::margin,
                            TrainingMode::label_smooth}) {
    LossConfig cfg{.mode = mode, .lambda_multi = 0.5, .margin = 0.3, .label_smooth_eps = 0.1};
    LossBuilder f = [&](ad::Tape& t, const ad::BoundParams& p) {
      return joint_loss(t, p, model, pairs, attrs, cfg).total;
    };
    Rng rng(6);
    auto res = grad_check(f, model.params(), 1e-5, rng);
    EXPECT_LT(res.max_rel_error, 1e-5) << to_string(mode);
  }
}

TEST_F(JointLossTest, EmptyBatchRejected) {
  LossConfig cfg;
  ad::Tape tape;
  auto p = ad::bind(tape, model.params(), false);
  EXPECT_THROW(joint_loss(tape, p, model, {}, attrs, cfg), EmptyBatch);
}
