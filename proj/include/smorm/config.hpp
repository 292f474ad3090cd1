#pragma once

// Run configuration: one flat INI file with sections [run], [world], [data],
// [model], [train], [bon], [ppo], [verify] and [sweep]. Every key has a
// default; unknown sections or keys are a ConfigError.

#include <cstdint>
#include <string>
#include <vector>

#include "smorm/adam.hpp"
#include "smorm/mlp.hpp"
#include "smorm/model.hpp"
#include "smorm/rlhf.hpp"
#include "smorm/synthworld.hpp"
#include "smorm/train.hpp"

namespace smorm {

inline constexpr const char* kConfigSchema = "smorm-lab/config/v1";

struct RunSection {
  std::string schema = kConfigSchema;
  std::uint64_t seed = 1;
};

// kind: correlated | spurious | pure_sorm. pure_sorm is a correlated world
// whose attributes are identically zero while the preference still varies.
struct WorldSection {
  std::string kind = "correlated";
  std::uint64_t seed = 7;
  // correlated / pure_sorm
  std::size_t d_z = 16;
  std::size_t K = 3;
  std::size_t hidden = 32;
  Activation activation = Activation::tanh;
  double shared_weight = 0.7;
  double attr_noise = 1.0;
  double overall_noise = 0.25;
  bool independent_preference = false;
  double prompt_scale = 1.0;
  double ood_scale = 2.0;  // OOD prompts spread this much wider
  // spurious (d_z = K)
  double rho = 0.9;
  std::size_t spurious_index = 3;
  double spurious_gain = 2.0;
  double penalty = 1.5;
  double threshold = 0.0;
  double id_offset = 4.0;
  double ood_offset = 0.0;
  double ood_v_scale = 1.0;
  double spurious_noise = 0.1;
  // both
  double feature_bound = 12.0;
};

struct DataSection {
  std::size_t n_train_pairs = 2000;
  std::size_t n_train_attrs = 2000;
  std::size_t n_eval = 1000;
};

struct ModelSection {
  std::vector<std::size_t> hidden{32};
  std::size_t embed_dim = 16;
  Activation activation = Activation::tanh;
  bool gating = false;
};

struct TrainSection {
  TrainingMode mode = TrainingMode::smorm;
  double lambda_multi = 1.0;
  double margin = 0.0;
  double label_smooth_eps = 0.1;
  std::size_t steps = 1500;
  std::size_t batch_s = 32;
  std::size_t batch_m = 32;
  AdamConfig adam{.learning_rate = 3e-3};
  std::size_t gating_steps = 500;
};

struct BonSection {
  std::size_t n_max = 405;
  std::size_t n_points = 12;
  std::size_t n_prompts = 500;
  std::string prompts = "ood";  // id | ood
  double policy_std = 1.0;
  std::vector<std::size_t> policy_hidden{16};
  double min_drop = 0.1;
  Strategy strategy = Strategy::F;
  EnsembleMode ensemble = EnsembleMode::mean;
};

struct PpoSection {
  PpoConfig ppo{.epochs = 25};
  std::size_t n_prompts = 512;
  std::string prompts = "ood";
  double policy_std = 1.0;
  std::vector<std::size_t> policy_hidden{16};
  std::size_t window = 50;
  std::size_t persistence = 3;
  std::size_t win_rate_prompts = 500;
  Strategy strategy = Strategy::F;
  EnsembleMode ensemble = EnsembleMode::mean;
};

struct VerifySection {
  std::size_t n_moment = 20000;
  std::size_t n_heldout = 10000;
  std::size_t lemma_pairs = 100000;
  double lemma_error_sd = 0.3;
  std::size_t fisher_samples = 500;
  double ridge = 0.0;
  double tolerance = 1e-9;
  std::size_t theorem2_seeds = 0;  // 0 skips the multi-seed comparison
};

struct SweepSection {
  std::string parameter = "lambda_multi";
  std::vector<double> values{0.01, 0.1, 1.0, 10.0};
  std::vector<double> inner{0.1, 1.0};
  double max_inner_spread = 0.10;  // accuracy points
  double edge_drop = 0.02;         // edge value this far below the inner mean is flagged
};

struct RunConfig {
  RunSection run;
  WorldSection world;
  DataSection data;
  ModelSection model;
  TrainSection train;
  BonSection bon;
  PpoSection ppo;
  VerifySection verify;
  SweepSection sweep;

  // Field-level checks; throws ConfigError naming the offending key.
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Every key, in a fixed order, with its resolved value.
std::string config_to_ini(const RunConfig& cfg);
// Applies one `section.key=value` override.
void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);

// Objects the config describes.
GoldWorld build_world(const RunConfig& cfg);
// Spurious worlds carry their own train/OOD/attribute distributions; the
// others use standard prompts of prompt_scale (id, attr) and
// prompt_scale·ood_scale (ood).
struct WorldBundle {
  GoldWorld world;
  PromptDistribution id_dist, ood_dist, attr_dist;
};
WorldBundle build_world_bundle(const RunConfig& cfg);
MlpConfig backbone_config(const RunConfig& cfg, std::size_t d_z);
LossConfig loss_config(const RunConfig& cfg);
TrainSchedule train_schedule(const RunConfig& cfg);

}  // namespace smorm
