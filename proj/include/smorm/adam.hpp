#pragma once

#include <cstddef>
#include <string>

#include "smorm/autodiff.hpp"

namespace smorm {

enum class LrSchedule { constant, cosine };

LrSchedule parse_schedule(const std::string& s);
std::string to_string(LrSchedule s);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double warmup_fraction = 0.03;
  LrSchedule schedule = LrSchedule::cosine;

  void validate() const;
};

struct AdamState {
  ad::ParamStore m;
  ad::ParamStore v;
  std::size_t t = 0;  // completed updates

  static AdamState zeros_like(const ad::ParamStore& params);
};

// Learning rate at `step` (0-based) of `total_steps`: linear warmup over
// ceil(warmup_fraction·total) steps, then constant or cosine decay to 0.
double scheduled_lr(const AdamConfig& cfg, std::size_t step, std::size_t total_steps);

// One AdamW update in place. Weight decay is decoupled: θ ← θ − lr·wd·θ before
// the moment step, and never enters m or v.
void adam_step(ad::ParamStore& params, const ad::Gradient& grads, AdamState& state,
               const AdamConfig& cfg, std::size_t step_index, std::size_t total_steps);

}  // namespace smorm
