#pragma once

// The joint reward model: a shared MLP backbone f_θ, a Bradley-Terry head
// w_S (d×1), a K-attribute regression head w_M (d×K) and an optional gate
// d → max(16, K) → K with a softmax output.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smorm/autodiff.hpp"
#include "smorm/losses.hpp"
#include "smorm/mlp.hpp"
#include "smorm/records.hpp"
#include "smorm/rng.hpp"

namespace smorm {

enum class TrainingMode { smorm, single_only, multi_only, margin, label_smooth };
TrainingMode parse_training_mode(const std::string& s);
std::string to_string(TrainingMode m);

struct LossConfig {
  TrainingMode mode = TrainingMode::smorm;
  double lambda_multi = 1.0;
  double margin = 0.0;
  double label_smooth_eps = 0.1;

  void validate() const;
  bool uses_pairs() const { return mode != TrainingMode::multi_only; }
  bool uses_attrs() const { return mode == TrainingMode::smorm; }
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

enum class Strategy { F, L, M, Gated };
Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

// Optional z-scoring of the two heads before M-averaging. Raw averaging is the
// default; see calibrate_standardization.
struct HeadStandardization {
  double mean_f = 0.0, sd_f = 1.0;
  double mean_l = 0.0, sd_l = 1.0;
  friend bool operator==(const HeadStandardization&, const HeadStandardization&) = default;
};

class SmormModel {
 public:
  SmormModel() = default;
  SmormModel(const MlpConfig& backbone, std::size_t K, Rng& rng, bool with_gating = false);

  const MlpConfig& backbone() const { return backbone_; }
  std::size_t K() const { return K_; }
  std::size_t embedding_dim() const { return backbone_.output_dim; }
  std::size_t input_dim() const { return backbone_.input_dim; }
  bool has_gating() const { return params_.contains("gate.W0"); }

  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  void add_gating(Rng& rng);

  std::size_t step = 0;
  std::string rng_state;
  LossConfig loss;
  std::optional<HeadStandardization> m_standardization;

  // Tape-free batch paths; rows are samples.
  Mat embed(const Mat& inputs) const;
  Vec single_scores_from_features(const Mat& features) const;  // F
  Mat attribute_scores_from_features(const Mat& features) const;  // n×K, w_Mᵀf
  Mat gate_from_features(const Mat& features) const;              // n×K simplex rows

  Vec score_batch(const Mat& inputs, Strategy strategy) const;
  double score(const Vec& input, Strategy strategy) const;
  Mat attribute_scores(const Mat& inputs) const { return attribute_scores_from_features(embed(inputs)); }

  // Tape paths.
  ad::Var embed(const ad::BoundParams& p, ad::Var inputs) const;
  static ad::Var single_head(const ad::BoundParams& p, ad::Var features);
  static ad::Var multi_head(const ad::BoundParams& p, ad::Var features);
  ad::Var gate(const ad::BoundParams& p, ad::Var features) const;

  friend bool operator==(const SmormModel&, const SmormModel&) = default;

 private:
  MlpConfig backbone_;
  std::size_t K_ = 0;
  ad::ParamStore params_;
};

// Fits the z-scoring of F and L on `inputs` and enables it for M.
void calibrate_standardization(SmormModel& model, const Mat& inputs);

Mat stack_inputs(std::span<const Vec> inputs);

using BatchScorer = std::function<Vec(const Mat&)>;

BatchScorer make_scorer(const SmormModel& model, Strategy strategy);

struct Ensemble {
  std::vector<const SmormModel*> members;
  EnsembleMode mode = EnsembleMode::mean;
  Strategy member_strategy = Strategy::F;
  Vec score_batch(const Mat& inputs) const;
};

// "Baseline SM": ½(F of a single-only model + L of a multi-only model).
Vec baseline_sm_scores(const SmormModel& single_model, const SmormModel& multi_model, const Mat& inputs);

}  // namespace smorm
