#pragma once

#include <string>
#include <vector>

#include "smorm/autodiff.hpp"
#include "smorm/rng.hpp"

namespace smorm {

enum class Activation { tanh, relu };

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);

// Hidden layers apply the activation; the output layer is linear. Layer l
// stores W{l} (fan_in × fan_out) and b{l} (1 × fan_out), so H = X W + b.
struct MlpConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  Activation activation = Activation::tanh;

  std::size_t num_layers() const { return hidden.size() + 1; }
  void validate() const;
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
void init_mlp(ad::ParamStore& store, const MlpConfig& cfg, Rng& rng, const std::string& prefix);

// Batched forward on the tape: rows of `inputs` are samples.
ad::Var forward_features(const ad::BoundParams& params, const MlpConfig& cfg, ad::Var inputs,
                         const std::string& prefix);

// Tape-free forward; bit-identical to the tape path.
Mat forward_features(const ad::ParamStore& params, const MlpConfig& cfg, const Mat& inputs,
                     const std::string& prefix);
Vec forward_features(const ad::ParamStore& params, const MlpConfig& cfg, const Vec& input,
                     const std::string& prefix);

}  // namespace smorm
