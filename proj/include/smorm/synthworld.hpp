#pragma once

// Synthetic gold worlds. A latent z ∈ ℝ^{d_z} stands for a prompt/response
// pair; the hidden scorer maps it to K attribute scores r*(z) and an overall
// score r_s*(z). Labeled scores add Gaussian noise ε ~ N(0, Σ) whose index 0
// belongs to the overall label and 1..K to the attributes.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smorm/mlp.hpp"
#include "smorm/records.hpp"
#include "smorm/rng.hpp"
#include "smorm/tensor.hpp"

namespace smorm {

struct AttributeMap {
  enum class Kind { linear, mlp };
  Kind kind = Kind::linear;
  // linear: r = W z + bias, W is out×d_z
  Mat W;
  Vec bias;
  // mlp: r = w2 act(w1 z + b1) + b2, w1 is H×d_z, w2 is out×H
  Mat w1, w2;
  Vec b1, b2;
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return kind == Kind::linear ? W.cols() : w1.cols(); }
  std::size_t output_dim() const { return kind == Kind::linear ? W.rows() : w2.rows(); }
  Vec apply(std::span<const double> z) const;
  void validate() const;
};

struct GoldWorld {
  std::size_t d_z = 0;
  std::size_t K = 0;
  AttributeMap attribute_map;
  Vec aggregation;  // simplex weights, r_s* = aggregationᵀ r*
  Mat noise_cov;    // (K+1)×(K+1)
  double feature_bound = 10.0;
  // When set, r_s* comes from this scalar map instead of the aggregation;
  // used to build worlds whose attributes carry no preference signal.
  std::optional<AttributeMap> preference_map;

  // Validates invariants and caches the noise factor. Must be called after
  // any field changes.
  void finalize();
  const Mat& noise_factor() const { return noise_factor_; }

 private:
  Mat noise_factor_;  // V √Λ with Σ = V Λ Vᵀ
};

struct GoldScores {
  double g_s = 0.0;
  Vec g_m;
  double r_s = 0.0;  // noiseless
  Vec r;             // noiseless
};

GoldScores gold_scores(const GoldWorld& world, std::span<const double> z, Rng& rng);
// Noiseless only.
Vec true_attributes(const GoldWorld& world, std::span<const double> z);
double true_overall(const GoldWorld& world, std::span<const double> z);
Vec true_overall_batch(const GoldWorld& world, const Mat& zs);
Mat true_attributes_batch(const GoldWorld& world, const Mat& zs);

struct MixtureComponent {
  Vec mean;
  Vec scale;
  double weight = 1.0;
};

struct PromptDistribution {
  std::string tag = "id";
  Vec mean;
  Vec scale;
  std::vector<MixtureComponent> mixture;  // overrides mean/scale when non-empty

  void validate(std::size_t d_z) const;
  // Diagonal Gaussian (or mixture) draw, projected onto the ball of radius
  // `bound` when it falls outside.
  Vec sample(Rng& rng, double bound) const;
};

Vec project_to_ball(Vec z, double bound);

// Preference label for the ordered pair (a, b): 0 if a is chosen. Uses the
// noiseless overall score, P(a ≻ b) = σ(r_s*(a) − r_s*(b)).
int sample_preference(const GoldWorld& world, std::span<const double> a, std::span<const double> b, Rng& rng);
PairwiseRecord make_pair(const GoldWorld& world, Vec a, Vec b, Rng& rng, std::uint64_t id, const std::string& tag);

// Record i uses its own stream derived from a master seed drawn from `rng`,
// so output does not depend on thread scheduling.
std::vector<PairwiseRecord> gen_pairwise(const GoldWorld& world, std::size_t n, const PromptDistribution& dist,
                                         Rng& rng);
std::vector<AttributeRecord> gen_multiattr(const GoldWorld& world, std::size_t n, const PromptDistribution& dist,
                                           Rng& rng);

std::vector<Vec> sample_latents(const GoldWorld& world, std::size_t n, const PromptDistribution& dist, Rng& rng);

// Random world with a two-layer attribute map whose attributes all load on a
// common direction, so they correlate positively with the overall score.
struct CorrelatedWorldConfig {
  std::size_t d_z = 8;
  std::size_t K = 3;
  std::size_t hidden = 16;
  Activation activation = Activation::tanh;
  double shared_weight = 0.7;  // 0 = independent attributes, 1 = identical
  double attr_noise = 0.25;    // σ_kk
  double overall_noise = 0.25; // σ_00
  double feature_bound = 10.0;
  bool independent_preference = false;  // negative control: r_s* ignores the attributes
  std::uint64_t seed = 1;
};
GoldWorld make_correlated_world(const CorrelatedWorldConfig& cfg);
PromptDistribution standard_prompts(std::size_t d_z, double scale = 1.0, const std::string& tag = "id");

// A verbosity-like attribute v that the overall score rewards, and a penalty
// −η·relu(v − τ) on every utility attribute once v passes a threshold τ. The
// training distribution keeps v below τ, where v dominates the variance of
// r_s*; the OOD distribution straddles τ, where extra v hurts.
struct SpuriousConfig {
  std::size_t K = 4;
  std::size_t spurious_index = 3;  // attribute index of v, 0-based
  double rho = 0.9;
  double utility_scale = 1.0;
  double spurious_gain = 2.0;  // attribute r_v = gain · v
  double penalty = 1.5;        // η
  double threshold = 0.0;      // τ
  double id_offset = 4.0;      // training v is centered at τ − id_offset
  double ood_offset = 0.0;     // OOD v is centered at τ − ood_offset
  double ood_scale = 1.0;
  double attr_noise = 0.1;
  double feature_bound = 12.0;
  std::uint64_t seed = 7;
  std::size_t check_samples = 10000;
  std::size_t max_retries = 20;
};

struct SpuriousWorld {
  GoldWorld world;
  PromptDistribution train_dist;
  PromptDistribution ood_dist;
  // Broad distribution for the attribute dataset: covers both sides of τ.
  PromptDistribution attr_dist;
  double train_corr = 0.0;
  double ood_corr = 0.0;
  std::size_t attempts = 0;
};

// corr(r*_v, r_s*) on fresh draws.
double spurious_correlation(const GoldWorld& world, std::size_t spurious_index, const PromptDistribution& dist,
                            std::size_t n, Rng& rng);

SpuriousWorld make_spurious_world(const SpuriousConfig& cfg);

}  // namespace smorm
