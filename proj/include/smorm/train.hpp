#pragma once

#include <span>
#include <vector>

#include "smorm/adam.hpp"
#include "smorm/model.hpp"

namespace smorm {

struct JointLoss {
  ad::Var total;
  ad::Var pair_term;  // BT (or margin / label-smoothed) batch mean; zero node if unused
  ad::Var mse_term;   // mean summed squared error; zero node if unused
};

// Eq.-5 style objective: mean pairwise loss over batch_S plus lambda_multi
// times the mean squared attribute error over batch_M. In single-objective
// modes the other term is absent.
JointLoss joint_loss(ad::Tape& tape, const ad::BoundParams& p, const SmormModel& model,
                     std::span<const PairwiseRecord> batch_s, std::span<const AttributeRecord> batch_m,
                     const LossConfig& cfg);

// Epoch-wise sampling without replacement; reshuffles at each pass.
class Shuffler {
 public:
  Shuffler(std::size_t n, Rng rng);
  std::size_t next();
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

struct TrainSchedule {
  std::size_t steps = 1000;
  std::size_t batch_s = 16;
  std::size_t batch_m = 16;
  std::uint64_t seed = 0;
};

struct TrainingHistory {
  std::vector<std::size_t> step;
  Vec bt_loss;
  Vec mse_loss;
  Vec total;
  friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;
};

// Trains backbone and heads (never the gate). Each step draws one batch from
// each dataset the mode uses, with independent shufflers; the smaller set
// simply cycles more often.
TrainingHistory train(SmormModel& model, std::span<const PairwiseRecord> data_s,
                      std::span<const AttributeRecord> data_m, const LossConfig& loss_cfg,
                      const AdamConfig& adam_cfg, const TrainSchedule& schedule);

// Fits only the gate with BT loss on Gated scores; backbone and heads are
// constants on the tape. Adds gating parameters if absent.
TrainingHistory train_gating(SmormModel& model, std::span<const PairwiseRecord> data_s,
                             const AdamConfig& adam_cfg, const TrainSchedule& schedule);

}  // namespace smorm
