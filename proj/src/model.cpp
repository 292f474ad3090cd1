#include "smorm/model.hpp"

#include <algorithm>
#include <cmath>

#include "smorm/error.hpp"
#include "smorm/kernels.hpp"

namespace smorm {

TrainingMode parse_training_mode(const std::string& s) {
  if (s == "smorm") return TrainingMode::smorm;
  if (s == "single_only") return TrainingMode::single_only;
  if (s == "multi_only") return TrainingMode::multi_only;
  if (s == "margin") return TrainingMode::margin;
  if (s == "label_smooth") return TrainingMode::label_smooth;
  throw InvalidArgument("unknown training mode '" + s + "'");
}

std::string to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::smorm: return "smorm";
    case TrainingMode::single_only: return "single_only";
    case TrainingMode::multi_only: return "multi_only";
    case TrainingMode::margin: return "margin";
    case TrainingMode::label_smooth: return "label_smooth";
  }
  return "?";
}

void LossConfig::validate() const {
  if (!(lambda_multi >= 0.0) || !std::isfinite(lambda_multi)) throw InvalidArgument("lambda_multi must be >= 0");
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw InvalidArgument("margin must be >= 0");
  if (!(label_smooth_eps >= 0.0 && label_smooth_eps < 0.5))
    throw InvalidArgument("label_smooth_eps must lie in [0, 0.5)");
}

Strategy parse_strategy(const std::string& s) {
  if (s == "F") return Strategy::F;
  if (s == "L") return Strategy::L;
  if (s == "M") return Strategy::M;
  if (s == "gated" || s == "Gated") return Strategy::Gated;
  throw InvalidArgument("unknown strategy '" + s + "'");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::F: return "F";
    case Strategy::L: return "L";
    case Strategy::M: return "M";
    case Strategy::Gated: return "gated";
  }
  return "?";
}

namespace {

MlpConfig gate_config(std::size_t d, std::size_t K) {
  return MlpConfig{d, {std::max<std::size_t>(16, K)}, K, Activation::tanh};
}

Mat add_row_bias(Mat z, const Mat& b) {
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) = z(i, j) + b(0, j);
  return z;
}

}  // namespace

SmormModel::SmormModel(const MlpConfig& backbone, std::size_t K, Rng& rng, bool with_gating)
    : backbone_(backbone), K_(K) {
  backbone_.validate();
  if (K == 0) throw InvalidArgument("SmormModel: K must be >= 1");
  init_mlp(params_, backbone_, rng, "backbone");
  const std::size_t d = backbone_.output_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Mat ws(d, 1), wm(d, K);
  for (double& x : ws.data()) x = rng.uniform(-bound, bound);
  for (double& x : wm.data()) x = rng.uniform(-bound, bound);
  params_.add("head.single", std::move(ws));
  params_.add("head.multi", std::move(wm));
  if (with_gating) add_gating(rng);
}

void SmormModel::add_gating(Rng& rng) {
  if (has_gating()) return;
  init_mlp(params_, gate_config(embedding_dim(), K_), rng, "gate");
}

Mat SmormModel::embed(const Mat& inputs) const {
  return forward_features(params_, backbone_, inputs, "backbone");
}

Vec SmormModel::single_scores_from_features(const Mat& features) const {
  return kernels::matmul(features, params_.at("head.single")).storage();
}

Mat SmormModel::attribute_scores_from_features(const Mat& features) const {
  return kernels::matmul(features, params_.at("head.multi"));
}

Mat SmormModel::gate_from_features(const Mat& features) const {
  if (!has_gating()) throw MissingGating("model has no gating parameters");
  Mat h = add_row_bias(kernels::matmul(features, params_.at("gate.W0")), params_.at("gate.b0"));
  for (double& x : h.data()) x = std::tanh(x);
  Mat z = add_row_bias(kernels::matmul(h, params_.at("gate.W1")), params_.at("gate.b1"));
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row_span(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& x : row) {
      x = std::exp(x - mx);
      total += x;
    }
    for (double& x : row) x /= total;
  }
  return z;
}

Vec SmormModel::score_batch(const Mat& inputs, Strategy strategy) const {
  if (strategy == Strategy::Gated && !has_gating()) throw MissingGating("Gated strategy needs gating parameters");
  const Mat f = embed(inputs);
  const std::size_t n = f.rows();
  if (strategy == Strategy::F) return single_scores_from_features(f);

  const Mat attrs = attribute_scores_from_features(f);
  Vec out(n);
  if (strategy == Strategy::Gated) {
    const Mat g = gate_from_features(f);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K_; ++k) acc += g(i, k) * attrs(i, k);
      out[i] = acc;
    }
    return out;
  }
  const double inv_k = 1.0 / static_cast<double>(K_);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < K_; ++k) acc += attrs(i, k);
    out[i] = acc * inv_k;
  }
  if (strategy == Strategy::L) return out;

  const Vec fs = single_scores_from_features(f);
  for (std::size_t i = 0; i < n; ++i) {
    if (m_standardization) {
      const auto& s = *m_standardization;
      out[i] = 0.5 * ((fs[i] - s.mean_f) / s.sd_f + (out[i] - s.mean_l) / s.sd_l);
    } else {
      out[i] = 0.5 * (fs[i] + out[i]);
    }
  }
  return out;
}

double SmormModel::score(const Vec& input, Strategy strategy) const {
  return score_batch(Mat::row(input), strategy)[0];
}

ad::Var SmormModel::embed(const ad::BoundParams& p, ad::Var inputs) const {
  return forward_features(p, backbone_, inputs, "backbone");
}

ad::Var SmormModel::single_head(const ad::BoundParams& p, ad::Var features) {
  return ad::matmul(features, p["head.single"]);
}

ad::Var SmormModel::multi_head(const ad::BoundParams& p, ad::Var features) {
  return ad::matmul(features, p["head.multi"]);
}

ad::Var SmormModel::gate(const ad::BoundParams& p, ad::Var features) const {
  if (!p.contains("gate.W0")) throw MissingGating("gating parameters are not bound");
  ad::Var h = ad::tanh(ad::add(ad::matmul(features, p["gate.W0"]), p["gate.b0"]));
  return ad::softmax_rows(ad::add(ad::matmul(h, p["gate.W1"]), p["gate.b1"]));
}

void calibrate_standardization(SmormModel& model, const Mat& inputs) {
  if (inputs.rows() < 2) throw InsufficientSamples("calibrate_standardization needs >= 2 inputs");
  model.m_standardization.reset();
  const Vec f = model.score_batch(inputs, Strategy::F);
  const Vec l = model.score_batch(inputs, Strategy::L);
  auto moments = [](const Vec& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = std::sqrt(var / static_cast<double>(v.size()));
    if (!(sd > 0.0)) sd = 1.0;
  };
  HeadStandardization s;
  moments(f, s.mean_f, s.sd_f);
  moments(l, s.mean_l, s.sd_l);
  model.m_standardization = s;
}

Mat stack_inputs(std::span<const Vec> inputs) {
  if (inputs.empty()) return Mat();
  return Mat::from_rows(inputs);
}

BatchScorer make_scorer(const SmormModel& model, Strategy strategy) {
  if (strategy == Strategy::Gated && !model.has_gating()) throw MissingGating("Gated strategy needs gating parameters");
  return [&model, strategy](const Mat& inputs) { return model.score_batch(inputs, strategy); };
}

Vec Ensemble::score_batch(const Mat& inputs) const {
  if (members.size() < 2) throw MissingEnsembleMembers("ensemble needs >= 2 members");
  std::vector<Vec> per_member;
  for (const auto* m : members) per_member.push_back(m->score_batch(inputs, member_strategy));
  Vec out(inputs.rows());
  Vec scratch(members.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < members.size(); ++j) scratch[j] = per_member[j][i];
    out[i] = ensemble_aggregate(scratch, mode);
  }
  return out;
}

Vec baseline_sm_scores(const SmormModel& single_model, const SmormModel& multi_model, const Mat& inputs) {
  const Vec f = single_model.score_batch(inputs, Strategy::F);
  const Vec l = multi_model.score_batch(inputs, Strategy::L);
  Vec out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = 0.5 * (f[i] + l[i]);
  return out;
}

}  // namespace smorm
