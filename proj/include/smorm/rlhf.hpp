#pragma once

// Desk-scale RLHF: a conditional Gaussian policy over response latents,
// Best-of-N selection, a horizon-1 PPO against a proxy scorer, and the
// diagnostics used to spot reward hacking.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smorm/adam.hpp"
#include "smorm/model.hpp"
#include "smorm/synthworld.hpp"

namespace smorm {

// Response z = ball(p + a) with a ~ N(μ_φ(p), diag σ²). μ_φ is an MLP whose
// output layer starts at zero, so the initial policy adds pure noise.
class SyntheticPolicy {
 public:
  SyntheticPolicy() = default;
  SyntheticPolicy(std::size_t d_z, std::vector<std::size_t> hidden, const Vec& init_std, double feature_bound,
                  Rng& rng);

  std::size_t dim() const { return mean_cfg_.output_dim; }
  double feature_bound() const { return bound_; }
  const MlpConfig& mean_config() const { return mean_cfg_; }

  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const ad::ParamStore& reference() const { return ref_; }

  Mat action_means(const Mat& prompts) const;
  Mat reference_means(const Mat& prompts) const;
  Vec log_std() const { return params_.at("log_std").row_vec(0); }
  Vec reference_log_std() const { return ref_.at("log_std").row_vec(0); }

  Vec sample_action(std::span<const double> prompt, Rng& rng) const;
  Vec respond(std::span<const double> prompt, std::span<const double> action) const;
  Vec sample(std::span<const double> prompt, Rng& rng) const { return respond(prompt, sample_action(prompt, rng)); }

  // log density of each action row under the current / reference policy.
  Vec log_prob(const Mat& prompts, const Mat& actions) const;
  Vec reference_log_prob(const Mat& prompts, const Mat& actions) const;
  // Tape version over bound current parameters.
  ad::Var log_prob(const ad::BoundParams& p, const Mat& prompts, const Mat& actions) const;

  // Mean over prompts of the closed-form KL(π(·|p) ‖ π_ref(·|p)).
  double kl_to_reference(const Mat& prompts) const;
  // ‖φ − φ_ref‖₂ over all parameters.
  double drift() const;

 private:
  MlpConfig mean_cfg_;
  double bound_ = 10.0;
  ad::ParamStore params_;
  ad::ParamStore ref_;
};

// log n − (n − 1)/n
double kl_bon(long long n);

struct BonSelection {
  Vec response;
  double proxy = 0.0;
  std::size_t index = 0;
  Vec candidate_scores;
};

// Argmax of the proxy over n fresh samples; ties go to the lowest index.
BonSelection bon_select(const SyntheticPolicy& policy, std::span<const double> prompt, std::size_t n,
                        const BatchScorer& proxy, Rng& rng);

struct BoNSweep {
  std::vector<std::size_t> n_values;
  Vec kl;
  Vec proxy;
  Vec gold;
  std::vector<Vec> attributes;  // per n, mean noiseless attribute scores
};

// 12 log-spaced integers from 1 to 405.
std::vector<std::size_t> default_n_values(std::size_t max_n = 405, std::size_t points = 12);

// One candidate pool of size max(n_values) per prompt; each n selects within
// the first n candidates, so the pools are nested.
BoNSweep bon_sweep(const SyntheticPolicy& policy, const Mat& prompts, const std::vector<std::size_t>& n_values,
                   const BatchScorer& proxy, const GoldWorld& world, std::uint64_t seed);

struct BonVerdict {
  bool hacked = false;
  double gold_drop = 0.0;       // max(gold) − gold at the largest n
  double spearman_gold_logn = 0.0;
  bool proxy_rising = false;
};
BonVerdict bon_verdict(const BoNSweep& sweep, double min_drop = 0.1);

// Generalized advantage estimation over one episode; the value after the
// final step is taken as 0.
Vec gae_advantages(std::span<const double> rewards, std::span<const double> values, double gae_lambda, double gamma);

struct PpoConfig {
  std::size_t epochs = 1;        // passes over the prompt set
  std::size_t batch_size = 64;
  std::size_t inner_epochs = 4;
  double clip_range = 0.2;
  double gae_lambda = 0.95;
  double gamma = 1.0;
  double learning_rate = 1e-3;
  double kl_coef = 0.0;
  bool normalize_advantages = true;
  void validate() const;
};

struct TrajectoryLog {
  std::vector<std::size_t> step;
  Vec kl;
  Vec proxy;
  Vec gold;
  std::vector<Vec> attributes;  // per step, K noiseless attribute means
  std::uint64_t seed = 0;
  std::string proxy_id;
  std::string world_id;
  std::string tag;
  std::size_t size() const { return step.size(); }
};

TrajectoryLog ppo_train(SyntheticPolicy& policy, const BatchScorer& proxy, const GoldWorld& world, const Mat& prompts,
                        const PpoConfig& cfg, std::uint64_t seed);

struct HackingVerdict {
  bool hacked = false;
  std::optional<std::size_t> divergence_step;
  double final_proxy_slope = 0.0;
  double final_gold_slope = 0.0;
};

// Least-squares slopes over windows of `window` steps at stride window/2.
// Hacked when the last `persistence` windows all have proxy slope > 0 and
// gold slope < 0. The divergence step is the center of the first window of
// the first such run.
HackingVerdict detect_hacking(const TrajectoryLog& log, std::size_t window = 50, std::size_t persistence = 3);

Vec normalize_curve(std::span<const double> series);
std::vector<Vec> attribute_trajectory(const TrajectoryLog& log);

struct DiffStat {
  double mean = 0.0;
  double variance = 0.0;
};
// Each attribute is standardized over the pooled chosen and rejected scores,
// then chosen − rejected differences are summarized.
std::vector<DiffStat> pairwise_diff_stats(const Mat& chosen_scores, const Mat& rejected_scores);
std::vector<DiffStat> pairwise_diff_stats(const SmormModel& model, std::span<const PairwiseRecord> pairs);

// Chosen − rejected attribute differences summed within the utility and
// style index sets; the two sums add up to K·ΔL.
std::pair<double, double> style_utility_decomposition(const SmormModel& model, const PairwiseRecord& pair,
                                                      const std::vector<std::size_t>& utility_idx,
                                                      const std::vector<std::size_t>& style_idx);

// One sample per policy per prompt from a shared stream; A wins when its
// noiseless gold score is higher, ties count ½.
double win_rate(const SyntheticPolicy& a, const SyntheticPolicy& b, const Mat& prompts, const GoldWorld& world,
                std::uint64_t seed);

}  // namespace smorm
