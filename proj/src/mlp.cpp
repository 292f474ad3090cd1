#include "smorm/mlp.hpp"

#include <cmath>

#include "smorm/error.hpp"
#include "smorm/kernels.hpp"

namespace smorm {

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw InvalidArgument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

void MlpConfig::validate() const {
  if (input_dim == 0 || output_dim == 0) throw InvalidArgument("MlpConfig: dims must be >= 1");
  for (auto h : hidden)
    if (h == 0) throw InvalidArgument("MlpConfig: hidden widths must be >= 1");
}

namespace {

std::vector<std::size_t> layer_dims(const MlpConfig& cfg) {
  std::vector<std::size_t> dims{cfg.input_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.output_dim);
  return dims;
}

std::string wname(const std::string& prefix, std::size_t l) { return prefix + ".W" + std::to_string(l); }
std::string bname(const std::string& prefix, std::size_t l) { return prefix + ".b" + std::to_string(l); }

}  // namespace

void init_mlp(ad::ParamStore& store, const MlpConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  const auto dims = layer_dims(cfg);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    Mat w(dims[l], dims[l + 1]);
    for (double& x : w.data()) x = rng.uniform(-bound, bound);
    store.add(wname(prefix, l), std::move(w));
    store.add(bname(prefix, l), Mat(1, dims[l + 1]));
  }
}

ad::Var forward_features(const ad::BoundParams& params, const MlpConfig& cfg, ad::Var inputs,
                         const std::string& prefix) {
  if (inputs.cols() != cfg.input_dim)
    throw DimensionMismatch("forward_features: input dim " + std::to_string(inputs.cols()) +
                            " != " + std::to_string(cfg.input_dim));
  ad::Var h = inputs;
  for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
    h = ad::add(ad::matmul(h, params[wname(prefix, l)]), params[bname(prefix, l)]);
    if (l + 1 < cfg.num_layers()) h = cfg.activation == Activation::tanh ? ad::tanh(h) : ad::relu(h);
  }
  return h;
}

Mat forward_features(const ad::ParamStore& params, const MlpConfig& cfg, const Mat& inputs,
                     const std::string& prefix) {
  if (inputs.cols() != cfg.input_dim)
    throw DimensionMismatch("forward_features: input dim " + std::to_string(inputs.cols()) +
                            " != " + std::to_string(cfg.input_dim));
  Mat h = inputs;
  for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
    Mat z = kernels::matmul(h, params.at(wname(prefix, l)));
    const Mat& b = params.at(bname(prefix, l));
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) = z(i, j) + b(0, j);
    if (l + 1 < cfg.num_layers()) {
      for (double& x : z.data()) {
        if (cfg.activation == Activation::tanh) {
          x = std::tanh(x);
        } else {
          x = x > 0.0 ? x : 0.0;
        }
      }
    }
    h = std::move(z);
  }
  return h;
}

Vec forward_features(const ad::ParamStore& params, const MlpConfig& cfg, const Vec& input,
                     const std::string& prefix) {
  return forward_features(params, cfg, Mat::row(input), prefix).row_vec(0);
}

}  // namespace smorm
