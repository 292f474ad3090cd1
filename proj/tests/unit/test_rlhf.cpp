#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "smorm/error.hpp"
#include "smorm/rlhf.hpp"
#include "smorm/stats.hpp"
#include "smorm/train.hpp"

using namespace smorm;

namespace {

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Naive GAE: A_t = Σ_{l≥0} (γλ)^l δ_{t+l}.
Vec naive_gae(const Vec& r, const Vec& v, double lambda, double gamma) {
  const std::size_t T = r.size();
  Vec out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t l = t; l < T; ++l) {
      const double next = l + 1 < T ? v[l + 1] : 0.0;
      const double delta = r[l] + gamma * next - v[l];
      out[t] += std::pow(gamma * lambda, static_cast<double>(l - t)) * delta;
    }
  return out;
}

TrajectoryLog synthetic_log(std::size_t n, auto proxy_fn, auto gold_fn) {
  TrajectoryLog log;
  for (std::size_t s = 0; s < n; ++s) {
    log.step.push_back(s);
    log.kl.push_back(0.01 * s);
    log.proxy.push_back(proxy_fn(s));
    log.gold.push_back(gold_fn(s));
    log.attributes.push_back({1.0, gold_fn(s)});
  }
  return log;
}

class SpuriousPolicyTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    sw = new SpuriousWorld(make_spurious_world(SpuriousConfig{}));
    Rng rng(7);
    prompts = new Mat(Mat::from_rows(sample_latents(sw->world, 512, sw->ood_dist, rng)));
  }
  static void TearDownTestSuite() {
    delete sw;
    delete prompts;
  }
  SyntheticPolicy fresh_policy(std::uint64_t seed = 11) const {
    Rng rng(seed);
    return SyntheticPolicy(sw->world.d_z, {16}, Vec(sw->world.d_z, 1.0), sw->world.feature_bound, rng);
  }
  BatchScorer gold_scorer() const {
    const GoldWorld* w = &sw->world;
    return [w](const Mat& z) { return true_overall_batch(*w, z); };
  }
  static SpuriousWorld* sw;
  static Mat* prompts;
};

SpuriousWorld* SpuriousPolicyTest::sw = nullptr;
Mat* SpuriousPolicyTest::prompts = nullptr;

}  // namespace

TEST(KlBon, FormulaValues) {
  EXPECT_EQ(kl_bon(1), 0.0);
  EXPECT_NEAR(kl_bon(2), 0.19314718055994531, 1e-15);
  // ln 405 − 404/405, evaluated at 30 digits.
  EXPECT_NEAR(kl_bon(405), 5.0063562029090083, 1e-12);
  EXPECT_NEAR(kl_bon(1000), 5.9087552789821371, 1e-12);
  EXPECT_THROW(kl_bon(0), InvalidN);
}

TEST(KlBon, StrictlyIncreasing) {
  for (long long n = 1; n < 1000; ++n) EXPECT_LT(kl_bon(n), kl_bon(n + 1)) << n;
}

TEST(BonNValues, LogSpacedAndDistinct) {
  auto v = default_n_values();
  EXPECT_EQ(v.front(), 1u);
  EXPECT_EQ(v.back(), 405u);
  EXPECT_EQ(v.size(), 12u);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_LT(v[i - 1], v[i]);
}

TEST(Gae, SingleStep) {
  EXPECT_DOUBLE_EQ(gae_advantages(Vec{2.0}, Vec{0.5}, 0.95, 1.0)[0], 1.5);
}

TEST(Gae, UnitLambdaGammaIsReturnMinusValue) {
  Vec r{1.0, -0.5, 2.0, 0.25}, v{0.3, 0.1, -0.2, 0.4};
  Vec a = gae_advantages(r, v, 1.0, 1.0);
  for (std::size_t t = 0; t < 4; ++t) {
    double ret = 0;
    for (std::size_t l = t; l < 4; ++l) ret += r[l];
    EXPECT_NEAR(a[t], ret - v[t], 1e-14);
  }
}

TEST(Gae, MatchesNaiveDoubleLoop) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Vec r = random_vec(10, rng), v = random_vec(10, rng);
    const double lambda = rng.uniform(0.5, 1.0), gamma = rng.uniform(0.8, 1.0);
    Vec a = gae_advantages(r, v, lambda, gamma), ref = naive_gae(r, v, lambda, gamma);
    for (std::size_t t = 0; t < 10; ++t) EXPECT_NEAR(a[t], ref[t], 1e-12);
  }
  EXPECT_THROW(gae_advantages(Vec{1.0}, Vec{1.0, 2.0}, 0.9, 1.0), LengthMismatch);
}

TEST(Policy, LogProbIsDiagonalGaussian) {
  Rng rng(2);
  SyntheticPolicy pol(3, {4}, Vec{0.5, 1.0, 2.0}, 10.0, rng);
  Mat P{{0.1, 0.2, 0.3}, {-1.0, 0.0, 1.0}};
  Mat A{{0.4, -0.2, 1.0}, {0.0, 0.0, 0.0}};
  Vec lp = pol.log_prob(P, A);
  const double sd[3] = {0.5, 1.0, 2.0};
  for (std::size_t i = 0; i < 2; ++i) {
    double ref = 0;
    for (std::size_t j = 0; j < 3; ++j)
      ref += -0.5 * std::pow(A(i, j) / sd[j], 2) - std::log(sd[j]) - 0.5 * std::log(2 * std::numbers::pi);
    EXPECT_NEAR(lp[i], ref, 1e-13);
  }
  ad::Tape tape;
  auto b = ad::bind(tape, pol.params(), false);
  Mat on_tape = pol.log_prob(b, P, A).value();
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(on_tape(i, 0), lp[i], 1e-14);
  EXPECT_EQ(pol.kl_to_reference(P), 0.0);
  EXPECT_EQ(pol.drift(), 0.0);
}

TEST(Policy, KlClosedFormForShiftedMean) {
  Rng rng(3);
  SyntheticPolicy pol(2, {}, Vec{1.0, 1.0}, 10.0, rng);
  pol.params().at("mean.b0") = Mat{{0.6, -0.8}};
  // KL(N(μ,1)‖N(0,1)) = ½‖μ‖² = 0.5.
  EXPECT_NEAR(pol.kl_to_reference(Mat{{0.0, 0.0}, {1.0, 1.0}}), 0.5, 1e-15);
}

TEST(Policy, ResponsesStayInBall) {
  Rng rng(4);
  SyntheticPolicy pol(3, {4}, Vec(3, 5.0), 2.0, rng);
  for (int i = 0; i < 200; ++i) EXPECT_LE(norm2(pol.sample(Vec{1.0, 1.0, 1.0}, rng)), 2.0 + 1e-12);
}

TEST_F(SpuriousPolicyTest, BonSelectRules) {
  SyntheticPolicy pol = fresh_policy();
  const Vec p = prompts->row_vec(0);
  Rng r1(5), r2(5);
  auto one = bon_select(pol, p, 1, gold_scorer(), r1);
  EXPECT_EQ(one.index, 0u);
  EXPECT_EQ(one.response, pol.sample(p, r2));

  BatchScorer flat = [](const Mat& z) { return Vec(z.rows(), 3.0); };
  Rng r3(6);
  EXPECT_EQ(bon_select(pol, p, 10, flat, r3).index, 0u);

  for (int t = 0; t < 20; ++t) {
    Rng r(100 + t);
    auto sel = bon_select(pol, p, 64, gold_scorer(), r);
    ASSERT_EQ(sel.candidate_scores.size(), 64u);
    EXPECT_EQ(sel.proxy, *std::max_element(sel.candidate_scores.begin(), sel.candidate_scores.end()));
    EXPECT_EQ(sel.proxy, sel.candidate_scores[sel.index]);
  }
  Rng r4(7);
  EXPECT_THROW(bon_select(pol, p, 0, flat, r4), InvalidN);
}

TEST_F(SpuriousPolicyTest, BonSweepNestedPoolsAreMonotone) {
  SyntheticPolicy pol = fresh_policy();
  Mat P = Mat::from_rows(std::vector<Vec>{prompts->row_vec(0), prompts->row_vec(1), prompts->row_vec(2)});
  auto sweep = bon_sweep(pol, P, {1, 2, 4, 8, 16, 64}, gold_scorer(), sw->world, 9);
  for (std::size_t i = 1; i < sweep.n_values.size(); ++i) {
    EXPECT_GE(sweep.proxy[i], sweep.proxy[i - 1]);
    EXPECT_GE(sweep.gold[i], sweep.gold[i - 1]);
    EXPECT_EQ(sweep.kl[i], kl_bon(static_cast<long long>(sweep.n_values[i])));
  }
  auto single = bon_sweep(pol, P, {1}, gold_scorer(), sw->world, 9);
  EXPECT_EQ(single.n_values.size(), 1u);
  EXPECT_EQ(single.kl[0], 0.0);
  EXPECT_EQ(single.gold[0], sweep.gold[0]);
  EXPECT_THROW(bon_sweep(pol, P, {4, 2}, gold_scorer(), sw->world, 9), InvalidN);
}

TEST_F(SpuriousPolicyTest, ZeroLearningRateKeepsPolicy) {
  SyntheticPolicy pol = fresh_policy();
  const ad::ParamStore before = pol.params();
  PpoConfig cfg{.epochs = 2, .learning_rate = 0.0};
  auto log = ppo_train(pol, gold_scorer(), sw->world, *prompts, cfg, 3);
  EXPECT_EQ(pol.params(), before);
  EXPECT_EQ(pol.drift(), 0.0);
  for (double k : log.kl) EXPECT_EQ(k, 0.0);
}

TEST_F(SpuriousPolicyTest, PpoIsDeterministic) {
  PpoConfig cfg{.epochs = 2};
  SyntheticPolicy a = fresh_policy(), b = fresh_policy();
  auto la = ppo_train(a, gold_scorer(), sw->world, *prompts, cfg, 4);
  auto lb = ppo_train(b, gold_scorer(), sw->world, *prompts, cfg, 4);
  EXPECT_EQ(la.proxy, lb.proxy);
  EXPECT_EQ(la.gold, lb.gold);
  EXPECT_EQ(la.kl, lb.kl);
  EXPECT_EQ(a.params(), b.params());
}

TEST_F(SpuriousPolicyTest, GoldProxyImprovesGoldSteadily) {
  SyntheticPolicy pol = fresh_policy();
  PpoConfig cfg{.epochs = 25};
  auto log = ppo_train(pol, gold_scorer(), sw->world, *prompts, cfg, 5);
  ASSERT_EQ(log.size(), 200u);
  Vec idx(log.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
  EXPECT_GT(spearman(log.gold, idx), 0.9);
  EXPECT_FALSE(detect_hacking(log).hacked);
}

TEST_F(SpuriousPolicyTest, KlPenaltyShrinksDrift) {
  double prev = std::numeric_limits<double>::infinity();
  for (double coef : {0.0, 1.0, 10.0}) {
    SyntheticPolicy pol = fresh_policy();
    PpoConfig cfg{.epochs = 5, .kl_coef = coef};
    ppo_train(pol, gold_scorer(), sw->world, *prompts, cfg, 6);
    EXPECT_LT(pol.drift(), prev) << coef;
    prev = pol.drift();
  }
}

TEST_F(SpuriousPolicyTest, WinRateOfIdenticalPoliciesIsHalf) {
  SyntheticPolicy a = fresh_policy(), b = fresh_policy();
  EXPECT_EQ(win_rate(a, b, *prompts, sw->world, 8), 0.5);
  EXPECT_THROW(win_rate(a, b, Mat(0, a.dim()), sw->world, 8), EmptyInput);
}

TEST(DetectHacking, RisingTogetherIsNotHacking) {
  auto log = synthetic_log(400, [](std::size_t s) { return 0.01 * s; }, [](std::size_t s) { return 0.005 * s; });
  EXPECT_FALSE(detect_hacking(log).hacked);
}

TEST(DetectHacking, ConstantSeriesIsNotHacking) {
  auto log = synthetic_log(400, [](std::size_t) { return 1.0; }, [](std::size_t) { return 1.0; });
  auto v = detect_hacking(log);
  EXPECT_FALSE(v.hacked);
  EXPECT_FALSE(v.divergence_step.has_value());
}

TEST(DetectHacking, FindsConstructedChangePoint) {
  const std::size_t change = 300, window = 50;
  auto log = synthetic_log(
      600, [](std::size_t s) { return 0.02 * s; },
      [&](std::size_t s) { return s < change ? 0.01 * s : 0.01 * change - 0.03 * (s - change); });
  auto v = detect_hacking(log, window, 3);
  ASSERT_TRUE(v.hacked);
  ASSERT_TRUE(v.divergence_step.has_value());
  EXPECT_NEAR(static_cast<double>(*v.divergence_step), static_cast<double>(change), static_cast<double>(window));
  EXPECT_GT(v.final_proxy_slope, 0.0);
  EXPECT_LT(v.final_gold_slope, 0.0);
}

TEST(DetectHacking, ShortLogThrows) {
  auto log = synthetic_log(60, [](std::size_t s) { return double(s); }, [](std::size_t s) { return double(s); });
  EXPECT_THROW(detect_hacking(log, 50), TooShort);
}

TEST(Curves, NormalizationStartsAtZero) {
  Vec n = normalize_curve(Vec{2.5, 3.0, 1.0});
  EXPECT_EQ(n, (Vec{0.0, 0.5, -1.5}));
  auto log = synthetic_log(10, [](std::size_t s) { return s; }, [](std::size_t s) { return 2.0 * s; });
  auto tr = attribute_trajectory(log);
  ASSERT_EQ(tr.size(), 2u);
  EXPECT_EQ(tr[0], Vec(10, 0.0));
  EXPECT_EQ(tr[1].front(), 0.0);
  EXPECT_EQ(tr[1].back(), 18.0);
}

TEST(DiffStats, OracleScoresSeparateChosenFromRejected) {
  GoldWorld w = make_correlated_world(CorrelatedWorldConfig{.d_z = 6, .K = 3});
  Rng rng(9);
  auto pairs = gen_pairwise(w, 3000, standard_prompts(6), rng);
  Mat c(pairs.size(), 3), r(pairs.size(), 3);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Vec a = true_attributes(w, pairs[i].input_chosen), b = true_attributes(w, pairs[i].input_rejected);
    for (std::size_t k = 0; k < 3; ++k) {
      c(i, k) = a[k];
      r(i, k) = b[k];
    }
  }
  for (const auto& s : pairwise_diff_stats(c, r)) EXPECT_GT(s.mean, 0.0);
}

TEST(DiffStats, RandomModelHasNoSignal) {
  GoldWorld w = make_correlated_world(CorrelatedWorldConfig{.d_z = 6, .K = 3});
  Rng rng(10);
  auto pairs = gen_pairwise(w, 3000, standard_prompts(6), rng);
  // Random chosen/rejected orientation removes any label signal.
  for (auto& p : pairs)
    if (rng.uniform() < 0.5) std::swap(p.input_chosen, p.input_rejected);
  Rng init(11);
  SmormModel m(MlpConfig{6, {8}, 4, Activation::tanh}, 3, init);
  for (const auto& s : pairwise_diff_stats(m, pairs))
    EXPECT_LT(std::abs(s.mean), 3.0 * std::sqrt(s.variance / pairs.size()));
}

TEST(StyleUtility, DecompositionIdentity) {
  Rng rng(12);
  SmormModel m(MlpConfig{4, {6}, 5, Activation::tanh}, 4, rng);
  for (int t = 0; t < 50; ++t) {
    PairwiseRecord p{random_vec(4, rng), random_vec(4, rng), 0, 0, "t"};
    auto [du, ds] = style_utility_decomposition(m, p, {0, 2}, {1, 3});
    const double dl = m.score(p.input_chosen, Strategy::L) - m.score(p.input_rejected, Strategy::L);
    EXPECT_NEAR(du + ds, 4.0 * dl, 1e-12);
    auto [all_u, none] = style_utility_decomposition(m, p, {0, 1, 2, 3}, {});
    EXPECT_EQ(none, 0.0);
    EXPECT_NEAR(all_u, 4.0 * dl, 1e-12);
  }
  PairwiseRecord same{Vec{1, 2, 3, 4}, Vec{1, 2, 3, 4}, 0, 0, "t"};
  auto [du, ds] = style_utility_decomposition(m, same, {0, 1}, {2, 3});
  EXPECT_EQ(du, 0.0);
  EXPECT_EQ(ds, 0.0);
  EXPECT_THROW(style_utility_decomposition(m, same, {0, 1}, {1, 2, 3}), BadPartition);
  EXPECT_THROW(style_utility_decomposition(m, same, {0, 1}, {2}), BadPartition);
}
