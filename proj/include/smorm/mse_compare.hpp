#pragma once

// Multi-seed comparison of held-out error for single-only, multi-only and
// joint training on identical data and identical initializations.

#include "smorm/synthworld.hpp"
#include "smorm/train.hpp"

namespace smorm {

struct MseCompareConfig {
  MlpConfig backbone;
  std::size_t n_S = 2000;
  std::size_t n_M = 2000;
  std::size_t n_eval = 2000;
  std::size_t seeds = 20;
  TrainSchedule schedule;  // seed field ignored; each run derives its own
  AdamConfig adam;
  double lambda_multi = 1.0;
  std::uint64_t seed = 1;
};

struct RegimeResult {
  Vec mse_s;     // held-out MSE of centered F scores against centered r_s*
  Vec mse_m;     // held-out per-attribute MSE of w_Mᵀf against r*
  Vec pref_acc;  // agreement of F with the sign of Δr_s* on held-out pairs
};

struct MseComparisonReport {
  RegimeResult single, multi, smorm;
  std::size_t seeds = 0;
  std::size_t wins_s = 0;  // seeds where smorm MSE_S < single MSE_S
  std::size_t wins_m = 0;  // seeds where smorm MSE_M < multi MSE_M
  double p_s = 1.0, p_m = 1.0;
  bool significant_s = false, significant_m = false;
  // corr(r_s*, mean r*) on the evaluation set; near zero means the
  // positive-correlation assumption fails and no ordering is claimed.
  double attribute_correlation = 0.0;
  bool assumption_failed = false;
};

MseComparisonReport compare_mse_empirical(const GoldWorld& world, const PromptDistribution& dist,
                                          const MseCompareConfig& cfg);

// Held-out metrics of one model (used by the comparison and the λ sweep).
struct HeldOutMetrics {
  double mse_s = 0.0;
  double mse_m = 0.0;
  double pref_acc = 0.0;
};
HeldOutMetrics evaluate_held_out(const SmormModel& model, const GoldWorld& world, const Mat& eval_inputs);

}  // namespace smorm
