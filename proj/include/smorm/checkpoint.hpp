#pragma once

// Checkpoints are JSON documents:
//
//   { "schema": "smorm-lab/checkpoint/v1",
//     "backbone": {"input_dim", "hidden", "output_dim", "activation"},
//     "K", "step", "rng_state",
//     "loss": {"mode", "lambda_multi", "margin", "label_smooth_eps"},
//     "m_standardization": null | {"mean_f", "sd_f", "mean_l", "sd_l"},
//     "tensors": [{"name", "rows", "cols", "data": [...]}] }
//
// Doubles are printed in shortest round-trip form, so loading reproduces every
// parameter bit for bit.

#include <string>

#include "smorm/model.hpp"

namespace smorm {

inline constexpr const char* kCheckpointSchema = "smorm-lab/checkpoint/v1";

std::string checkpoint_to_string(const SmormModel& model);
SmormModel checkpoint_from_string(const std::string& text);

void save_checkpoint(const std::string& path, const SmormModel& model);
SmormModel load_checkpoint(const std::string& path);

}  // namespace smorm
