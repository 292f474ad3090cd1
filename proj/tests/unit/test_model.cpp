#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "smorm/checkpoint.hpp"
#include "smorm/error.hpp"
#include "smorm/losses.hpp"
#include "smorm/synthworld.hpp"
#include "smorm/train.hpp"

using namespace smorm;

namespace {

Mat random_inputs(std::size_t n, std::size_t d, Rng& rng) {
  Mat m(n, d);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

GoldWorld axis_world(std::size_t K, std::size_t agg_index) {
  GoldWorld w;
  w.d_z = K;
  w.K = K;
  w.attribute_map.W = Mat::identity(K) * 2.0;
  w.attribute_map.bias = Vec(K, 0.0);
  w.aggregation = Vec(K, 0.0);
  w.aggregation[agg_index] = 1.0;
  w.noise_cov = Mat::identity(K + 1) * 0.05;
  w.finalize();
  return w;
}

bool same_except_gate(const ad::ParamStore& a, const ad::ParamStore& b) {
  for (const auto& [name, m] : a)
    if (name.rfind("gate.", 0) != 0 && !(m == b.at(name))) return false;
  return true;
}

}  // namespace

TEST(Model, MIsMeanOfFAndL) {
  Rng rng(1);
  SmormModel m(MlpConfig{5, {7}, 4, Activation::tanh}, 3, rng);
  Mat x = random_inputs(20, 5, rng);
  Vec f = m.score_batch(x, Strategy::F), l = m.score_batch(x, Strategy::L), mm = m.score_batch(x, Strategy::M);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(mm[i], 0.5 * (f[i] + l[i]), 1e-15);
}

TEST(Model, SingleAttributeWithSharedHeadCollapsesStrategies) {
  Rng rng(2);
  SmormModel m(MlpConfig{3, {5}, 4, Activation::tanh}, 1, rng);
  m.params().at("head.multi") = m.params().at("head.single");
  Mat x = random_inputs(10, 3, rng);
  Vec f = m.score_batch(x, Strategy::F);
  EXPECT_EQ(m.score_batch(x, Strategy::L), f);
  EXPECT_EQ(m.score_batch(x, Strategy::M), f);
}

TEST(Model, UniformGateEqualsL) {
  Rng rng(3);
  SmormModel m(MlpConfig{3, {5}, 4, Activation::tanh}, 3, rng, true);
  for (double& x : m.params().at("gate.W1").data()) x = 0.0;
  Mat x = random_inputs(10, 3, rng);
  Vec g = m.score_batch(x, Strategy::Gated), l = m.score_batch(x, Strategy::L);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(g[i], l[i], 1e-14);
}

TEST(Model, SingleAttributeGateIsConstantOne) {
  Rng rng(4);
  SmormModel m(MlpConfig{3, {5}, 4, Activation::tanh}, 1, rng, true);
  Mat x = random_inputs(10, 3, rng);
  Mat g = m.gate_from_features(m.embed(x));
  for (double v : g.data()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(m.score_batch(x, Strategy::Gated), m.score_batch(x, Strategy::L));
}

TEST(Model, GatedNeedsGate) {
  Rng rng(5);
  SmormModel m(MlpConfig{3, {}, 2, Activation::tanh}, 2, rng);
  EXPECT_THROW(m.score(Vec{1, 2, 3}, Strategy::Gated), MissingGating);
}

TEST(Model, PositiveScalingPreservesPreferences) {
  Rng rng(6);
  SmormModel m(MlpConfig{4, {6}, 3, Activation::tanh}, 2, rng);
  SmormModel s = m;
  for (double& x : s.params().at("head.single").data()) x *= 3.7;
  Mat a = random_inputs(200, 4, rng), b = random_inputs(200, 4, rng);
  Vec fa = m.score_batch(a, Strategy::F), fb = m.score_batch(b, Strategy::F);
  Vec ga = s.score_batch(a, Strategy::F), gb = s.score_batch(b, Strategy::F);
  for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(fa[i] > fb[i], ga[i] + 1.5 > gb[i] + 1.5);
}

TEST(Model, EnsembleAggregates) {
  Rng rng(7);
  SmormModel a(MlpConfig{3, {4}, 2, Activation::tanh}, 2, rng), b(MlpConfig{3, {4}, 2, Activation::tanh}, 2, rng);
  Mat x = random_inputs(8, 3, rng);
  Vec sa = a.score_batch(x, Strategy::F), sb = b.score_batch(x, Strategy::F);
  Ensemble mean{{&a, &b}, EnsembleMode::mean, Strategy::F};
  Ensemble mn{{&a, &b}, EnsembleMode::min, Strategy::F};
  Vec em = mean.score_batch(x), en = mn.score_batch(x);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(em[i], 0.5 * (sa[i] + sb[i]), 1e-15);
    EXPECT_EQ(en[i], std::min(sa[i], sb[i]));
  }
  Ensemble lone{{&a}, EnsembleMode::mean, Strategy::F};
  EXPECT_THROW(lone.score_batch(x), MissingEnsembleMembers);
}

TEST(Model, BaselineSmAveragesTwoModels) {
  Rng rng(8);
  SmormModel s(MlpConfig{3, {4}, 2, Activation::tanh}, 2, rng), m(MlpConfig{3, {4}, 2, Activation::tanh}, 2, rng);
  Mat x = random_inputs(5, 3, rng);
  Vec out = baseline_sm_scores(s, m, x);
  Vec f = s.score_batch(x, Strategy::F), l = m.score_batch(x, Strategy::L);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(out[i], 0.5 * (f[i] + l[i]), 1e-15);
}

TEST(Model, StandardizationZScoresHeads) {
  Rng rng(9);
  SmormModel m(MlpConfig{3, {4}, 2, Activation::tanh}, 2, rng);
  Mat x = random_inputs(500, 3, rng);
  calibrate_standardization(m, x);
  Vec s = m.score_batch(x, Strategy::M);
  double mean = 0;
  for (double v : s) mean += v / 500;
  EXPECT_NEAR(mean, 0.0, 1e-12);
}

class TrainTest : public ::testing::Test {
 protected:
  void SetUp() override {
    world = make_correlated_world(CorrelatedWorldConfig{.d_z = 6, .K = 3, .hidden = 8});
    Rng rng(10);
    pairs = gen_pairwise(world, 200, standard_prompts(6), rng);
    attrs = gen_multiattr(world, 150, standard_prompts(6), rng);
    Rng init(11);
    model = SmormModel(MlpConfig{6, {8}, 5, Activation::tanh}, 3, init);
  }
  GoldWorld world;
  std::vector<PairwiseRecord> pairs;
  std::vector<AttributeRecord> attrs;
  SmormModel model;
};

TEST_F(TrainTest, ZeroStepsLeavesModelUnchanged) {
  SmormModel m = model;
  auto h = train(m, pairs, attrs, LossConfig{}, AdamConfig{}, TrainSchedule{.steps = 0});
  EXPECT_TRUE(h.step.empty());
  EXPECT_EQ(m.params(), model.params());
}

TEST_F(TrainTest, SameSeedIsBitIdentical) {
  TrainSchedule ts{.steps = 60, .batch_s = 8, .batch_m = 8, .seed = 4};
  SmormModel a = model, b = model;
  auto ha = train(a, pairs, attrs, LossConfig{}, AdamConfig{}, ts);
  auto hb = train(b, pairs, attrs, LossConfig{}, AdamConfig{}, ts);
  EXPECT_EQ(ha, hb);
  EXPECT_EQ(checkpoint_to_string(a), checkpoint_to_string(b));
  ts.seed = 5;
  SmormModel c = model;
  train(c, pairs, attrs, LossConfig{}, AdamConfig{}, ts);
  EXPECT_NE(c.params(), a.params());
}

TEST_F(TrainTest, MissingDataForModeIsRejected) {
  SmormModel m = model;
  EXPECT_THROW(train(m, pairs, {}, LossConfig{}, AdamConfig{}, TrainSchedule{.steps = 1}), EmptyBatch);
  LossConfig single{.mode = TrainingMode::single_only};
  EXPECT_NO_THROW(train(m, pairs, {}, single, AdamConfig{}, TrainSchedule{.steps = 1}));
}

TEST(Train, SeparablePairsDriveBtLossDown) {
  Rng rng(12);
  std::vector<PairwiseRecord> pairs;
  for (std::uint64_t i = 0; i < 128; ++i) {
    Vec a{rng.normal(), rng.normal()}, b{rng.normal(), rng.normal()};
    if (a[0] - a[1] < b[0] - b[1]) std::swap(a, b);
    a[0] += 0.5;
    pairs.push_back({a, b, 0, i, "t"});
  }
  Rng init(13);
  SmormModel m(MlpConfig{2, {}, 2, Activation::tanh}, 1, init);
  AdamConfig ac{.learning_rate = 0.05, .warmup_fraction = 0.0, .schedule = LrSchedule::constant};
  train(m, pairs, {}, LossConfig{.mode = TrainingMode::single_only}, ac, TrainSchedule{.steps = 500, .batch_s = 32});
  double loss = 0;
  for (const auto& p : pairs) loss += bt_loss(m.score(p.input_chosen, Strategy::F), m.score(p.input_rejected, Strategy::F));
  EXPECT_LT(loss / pairs.size(), 0.1);
}

TEST(TrainGating, LearnsTheDecisiveAttribute) {
  GoldWorld w = axis_world(3, 0);
  Rng rng(14);
  auto pairs = gen_pairwise(w, 1000, standard_prompts(3), rng);
  auto attrs = gen_multiattr(w, 1000, standard_prompts(3), rng);
  Rng init(15);
  SmormModel m(MlpConfig{3, {16}, 8, Activation::tanh}, 3, init);
  AdamConfig ac{.learning_rate = 1e-2};
  train(m, pairs, attrs, LossConfig{}, ac, TrainSchedule{.steps = 800, .batch_s = 32, .batch_m = 32, .seed = 1});
  const SmormModel before = m;
  train_gating(m, pairs, ac, TrainSchedule{.steps = 800, .batch_s = 32, .seed = 2});
  EXPECT_TRUE(same_except_gate(before.params(), m.params()));
  Mat x = Mat::from_rows(sample_latents(w, 2000, standard_prompts(3), rng));
  Mat g = m.gate_from_features(m.embed(x));
  double mass = 0;
  for (std::size_t i = 0; i < g.rows(); ++i) mass += g(i, 0) / g.rows();
  EXPECT_GE(mass, 0.8);
}

TEST_F(TrainTest, CheckpointRoundTripScoresIdentically) {
  SmormModel m = model;
  train(m, pairs, attrs, LossConfig{}, AdamConfig{}, TrainSchedule{.steps = 20, .batch_s = 8, .batch_m = 8});
  Rng gate_rng(3);
  m.add_gating(gate_rng);
  calibrate_standardization(m, Mat::from_rows(std::vector<Vec>{pairs[0].input_chosen, pairs[1].input_chosen, pairs[2].input_rejected}));
  SmormModel back = checkpoint_from_string(checkpoint_to_string(m));
  EXPECT_EQ(back, m);
  Mat x = Mat::from_rows(std::vector<Vec>{pairs[5].input_chosen, pairs[6].input_rejected});
  for (Strategy s : {Strategy::F, Strategy::L, Strategy::M, Strategy::Gated}) EXPECT_EQ(back.score_batch(x, s), m.score_batch(x, s));

  const auto path = std::filesystem::temp_directory_path() / "smorm_model_ckpt.json";
  save_checkpoint(path.string(), m);
  EXPECT_EQ(load_checkpoint(path.string()), m);
  std::filesystem::remove(path);
}

TEST_F(TrainTest, CorruptOrBumpedCheckpointIsRejected) {
  const std::string text = checkpoint_to_string(model);
  EXPECT_THROW(checkpoint_from_string(text.substr(0, text.size() / 2)), SchemaMismatch);
  auto j = nlohmann::json::parse(text);
  j["schema"] = "smorm-lab/checkpoint/v2";
  EXPECT_THROW(checkpoint_from_string(j.dump()), SchemaMismatch);
  auto k = nlohmann::json::parse(text);
  k["tensors"][0]["rows"] = 999;
  EXPECT_THROW(checkpoint_from_string(k.dump()), SchemaMismatch);
}
