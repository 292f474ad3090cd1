#include "smorm/losses.hpp"

#include <algorithm>
#include <cmath>

#include "smorm/error.hpp"

namespace smorm {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return -(std::max(0.0, -x) + std::log1p(std::exp(-std::abs(x)))); }

double bt_loss(double score_chosen, double score_rejected) {
  return -log_sigmoid(score_chosen - score_rejected);
}

double margin_loss(double score_chosen, double score_rejected, double margin) {
  return -log_sigmoid(score_chosen - score_rejected - margin);
}

double label_smooth_loss(double score_chosen, double score_rejected, double eps) {
  const double delta = score_chosen - score_rejected;
  return -(1.0 - eps) * log_sigmoid(delta) - eps * log_sigmoid(-delta);
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw DimensionMismatch("mse_loss: " + std::to_string(pred.size()) + " predictions vs " +
                            std::to_string(target.size()) + " targets");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    s += e * e;
  }
  return s;
}

EnsembleMode parse_ensemble_mode(const std::string& s) {
  if (s == "mean") return EnsembleMode::mean;
  if (s == "min") return EnsembleMode::min;
  throw InvalidArgument("unknown ensemble mode '" + s + "'");
}

double ensemble_aggregate(std::span<const double> scores, EnsembleMode mode) {
  if (scores.empty()) throw EmptyInput("ensemble_aggregate: no scores");
  if (mode == EnsembleMode::min) return *std::min_element(scores.begin(), scores.end());
  double s = 0.0;
  for (double x : scores) s += x;
  return s / static_cast<double>(scores.size());
}

namespace ad {

Var bt_loss(Var delta) { return neg(mean(log_sigmoid(delta))); }

Var margin_loss(Var delta, double margin) {
  return neg(mean(log_sigmoid(add_scalar(delta, -margin))));
}

Var label_smooth_loss(Var delta, double eps) {
  Var pos = scale(log_sigmoid(delta), -(1.0 - eps));
  Var negv = scale(log_sigmoid(neg(delta)), -eps);
  return mean(add(pos, negv));
}

Var mse_loss(Var pred, const Mat& target) {
  if (!pred.value().same_shape(target)) throw DimensionMismatch("mse_loss: shape mismatch");
  Var err = sub(pred, pred.tape->constant(target));
  return mean(sum_cols(square(err)));
}

}  // namespace ad

}  // namespace smorm
