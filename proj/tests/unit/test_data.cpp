#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "smorm/error.hpp"
#include "smorm/losses.hpp"
#include "smorm/parallel.hpp"
#include "smorm/records.hpp"
#include "smorm/stats.hpp"
#include "smorm/synthworld.hpp"

using namespace smorm;
namespace fs = std::filesystem;

namespace {

// r = W z + bias with the given aggregation and diagonal noise.
GoldWorld linear_world(Mat W, Vec bias, Vec agg, double noise) {
  GoldWorld w;
  w.d_z = W.cols();
  w.K = W.rows();
  w.attribute_map.kind = AttributeMap::Kind::linear;
  w.attribute_map.W = std::move(W);
  w.attribute_map.bias = std::move(bias);
  w.aggregation = std::move(agg);
  w.noise_cov = Mat::identity(w.K + 1) * noise;
  w.finalize();
  return w;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("smorm_test_" + name + "_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

struct ThreadCap {
  int saved = max_threads();
  explicit ThreadCap(int n) { set_max_threads(n); }
  ~ThreadCap() { set_max_threads(saved); }
};

}  // namespace

TEST(GoldScores, NoiselessLinearWorld) {
  GoldWorld w = linear_world(Mat{{1.0, 2.0}, {-1.0, 0.5}, {0.0, 3.0}}, Vec{0.1, 0.2, 0.3}, Vec{0.5, 0.25, 0.25}, 0.0);
  Rng rng(1);
  auto g = gold_scores(w, Vec{2.0, -1.0}, rng);
  // W z + b = (0.1, −2.3, −2.7); r_s = 0.05 − 0.575 − 0.675.
  EXPECT_NEAR(g.r[0], 0.1, 1e-15);
  EXPECT_NEAR(g.r[1], -2.3, 1e-15);
  EXPECT_NEAR(g.r[2], -2.7, 1e-15);
  EXPECT_NEAR(g.r_s, -1.2, 1e-15);
  EXPECT_EQ(g.g_m, g.r);
  EXPECT_EQ(g.g_s, g.r_s);
}

TEST(GoldScores, SingleAggregationWeightPicksFirstAttribute) {
  GoldWorld w = linear_world(Mat{{1.0, 0.0}, {0.0, 1.0}}, Vec{0.0, 0.0}, Vec{1.0, 0.0}, 0.0);
  EXPECT_EQ(true_overall(w, Vec{3.5, -9.0}), 3.5);
}

TEST(GenPairwise, TiesAreCoinFlips) {
  GoldWorld w = linear_world(Mat{{1.0, 0.0}}, Vec{0.0}, Vec{1.0}, 0.0);
  Rng rng(2);
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += sample_preference(w, Vec{0.3, 0.1}, Vec{0.3, 0.1}, rng) == 0;
  EXPECT_NEAR(zeros / 10000.0, 0.5, 0.02);
}

TEST(GenPairwise, GapOfFourMatchesSigmoid) {
  GoldWorld w = linear_world(Mat{{1.0, 0.0}}, Vec{0.0}, Vec{1.0}, 0.0);
  Rng rng(3);
  int chosen_a = 0;
  for (int i = 0; i < 10000; ++i) chosen_a += make_pair(w, Vec{4.0, 0.0}, Vec{0.0, 0.0}, rng, i, "t").label == 0;
  EXPECT_NEAR(chosen_a / 10000.0, 0.98201379003790845, 0.005);
}

TEST(GenPairwise, ChosenRateWithinThreeStandardErrors) {
  GoldWorld w = linear_world(Mat{{1.0, 0.0}}, Vec{0.0}, Vec{1.0}, 0.0);
  Rng rng(4);
  const int n = 4000;
  for (int b = 0; b < 10; ++b) {
    const double gap = -3.0 + 0.6 * b;
    const double p = sigmoid(gap);
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += sample_preference(w, Vec{gap, 0.0}, Vec{0.0, 0.0}, rng) == 0;
    EXPECT_LT(std::abs(hits / double(n) - p), 3.0 * std::sqrt(p * (1 - p) / n)) << gap;
  }
}

TEST(GenPairwise, DeterministicAndThreadIndependent) {
  CorrelatedWorldConfig cfg;
  GoldWorld w = make_correlated_world(cfg);
  auto dist = standard_prompts(cfg.d_z);
  std::vector<PairwiseRecord> a, b;
  {
    ThreadCap cap(1);
    Rng r(5);
    a = gen_pairwise(w, 300, dist, r);
  }
  {
    ThreadCap cap(4);
    Rng r(5);
    b = gen_pairwise(w, 300, dist, r);
  }
  EXPECT_EQ(a, b);
}

TEST(GenMultiattr, NoiselessScoresEqualAttributeMap) {
  GoldWorld w = make_correlated_world(CorrelatedWorldConfig{.attr_noise = 0.0, .overall_noise = 0.0});
  Rng rng(6);
  for (const auto& r : gen_multiattr(w, 50, standard_prompts(w.d_z), rng))
    EXPECT_EQ(r.scores, true_attributes(w, r.input));
}

TEST(GenMultiattr, DiagonalNoiseVariance) {
  GoldWorld w = linear_world(Mat{{0.0, 0.0}, {0.0, 0.0}}, Vec{0.0, 0.0}, Vec{0.5, 0.5}, 0.25);
  Rng rng(7);
  auto recs = gen_multiattr(w, 10000, standard_prompts(2), rng);
  for (std::size_t k = 0; k < 2; ++k) {
    Vec s;
    for (const auto& r : recs) s.push_back(r.scores[k]);
    EXPECT_NEAR(variance(s), 0.25, 0.02);
  }
}

TEST(GenMultiattr, SingleAttributeWorld) {
  GoldWorld w = make_correlated_world(CorrelatedWorldConfig{.K = 1});
  Rng rng(8);
  auto recs = gen_multiattr(w, 5, standard_prompts(w.d_z), rng);
  for (const auto& r : recs) EXPECT_EQ(r.scores.size(), 1u);
}

TEST(Latents, RespectFeatureBound) {
  CorrelatedWorldConfig cfg;
  cfg.feature_bound = 3.0;
  GoldWorld w = make_correlated_world(cfg);
  Rng rng(9);
  for (const Vec& z : sample_latents(w, 2000, standard_prompts(w.d_z, 2.0), rng)) EXPECT_LE(norm2(z), 3.0 + 1e-12);
}

TEST(CorrelatedWorld, AttributesCorrelateWithOverall) {
  GoldWorld w = make_correlated_world(CorrelatedWorldConfig{.d_z = 16, .K = 3, .hidden = 32});
  Rng rng(10);
  Mat z = Mat::from_rows(sample_latents(w, 5000, standard_prompts(16), rng));
  Vec rs = true_overall_batch(w, z);
  Mat r = true_attributes_batch(w, z);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_GT(pearson(r.col_vec(k), rs), 0.3);
}

TEST(SpuriousWorld, GuaranteesHoldOnFreshSamples) {
  SpuriousConfig cfg;
  SpuriousWorld sw = make_spurious_world(cfg);
  Rng rng(12345);
  EXPECT_GE(spurious_correlation(sw.world, cfg.spurious_index, sw.train_dist, 10000, rng), 0.9);
  EXPECT_LE(spurious_correlation(sw.world, cfg.spurious_index, sw.ood_dist, 10000, rng), 0.1);
}

TEST(SpuriousWorld, UnconfoundedAtRhoZero) {
  SpuriousConfig cfg;
  cfg.rho = 0.0;
  SpuriousWorld sw = make_spurious_world(cfg);
  Rng rng(99);
  EXPECT_LE(std::abs(spurious_correlation(sw.world, cfg.spurious_index, sw.train_dist, 10000, rng)), 0.1);
  EXPECT_LE(std::abs(spurious_correlation(sw.world, cfg.spurious_index, sw.ood_dist, 10000, rng)), 0.1);
}

TEST(SpuriousWorld, SeedsGiveDifferentValidWorlds) {
  SpuriousConfig a, b;
  a.seed = 3;
  b.seed = 4;
  SpuriousWorld wa = make_spurious_world(a), wb = make_spurious_world(b);
  EXPECT_NE(wa.world.attribute_map.w2, wb.world.attribute_map.w2);
  EXPECT_GE(wa.train_corr, 0.9);
  EXPECT_GE(wb.train_corr, 0.9);
  EXPECT_LE(wa.ood_corr, 0.1);
  EXPECT_LE(wb.ood_corr, 0.1);
}

TEST(SpuriousWorld, RejectsBadConfig) {
  SpuriousConfig cfg;
  cfg.spurious_index = 9;
  EXPECT_THROW(make_spurious_world(cfg), InvalidArgument);
}

TEST(Records, EmptyRoundTrip) {
  fs::path d = temp_dir("empty");
  write_records((d / "p.tsv").string(), std::vector<PairwiseRecord>{}, 3, 2);
  DatasetHeader h;
  EXPECT_TRUE(read_pairs((d / "p.tsv").string(), &h).empty());
  EXPECT_EQ(h.d_z, 3u);
  std::ofstream((d / "zero.tsv").string()).close();
  EXPECT_TRUE(read_attrs((d / "zero.tsv").string()).empty());
  fs::remove_all(d);
}

TEST(Records, RoundTripIsBitExact) {
  fs::path d = temp_dir("roundtrip");
  Rng rng(11);
  std::vector<PairwiseRecord> pairs;
  std::vector<AttributeRecord> attrs;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    Vec a(4), b(4), s(3);
    for (double& x : a) x = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    for (double& x : b) x = rng.normal();
    for (double& x : s) x = rng.normal() / 3.0;
    pairs.push_back({a, b, static_cast<int>(i % 2), i, "id"});
    attrs.push_back({a, s, i, "ood"});
  }
  write_records((d / "p.tsv").string(), pairs, 4, 3);
  write_records((d / "a.tsv").string(), attrs, 4, 3);
  EXPECT_EQ(read_pairs((d / "p.tsv").string()), pairs);
  EXPECT_EQ(read_attrs((d / "a.tsv").string()), attrs);
  fs::remove_all(d);
}

TEST(Records, MalformedLineReportsLineNumber) {
  fs::path d = temp_dir("malformed");
  Rng rng(12);
  std::vector<AttributeRecord> attrs;
  for (std::uint64_t i = 0; i < 10; ++i) attrs.push_back({{rng.normal(), rng.normal()}, {rng.normal()}, i, "id"});
  const std::string path = (d / "a.tsv").string();
  write_records(path, attrs, 2, 1);
  std::vector<std::string> lines;
  {
    std::ifstream in(path);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  lines[6] = "6\tid\t0.5,abc\t1.0";  // line 7 of the file
  {
    std::ofstream out(path);
    for (const auto& l : lines) out << l << '\n';
  }
  try {
    read_attrs(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
  EXPECT_THROW(read_pairs(path), ParseError);  // wrong kind in the header
  EXPECT_THROW(read_pairs((d / "missing.tsv").string()), IoError);
  fs::remove_all(d);
}
