#pragma once

#include <span>
#include <string>

#include "smorm/autodiff.hpp"

namespace smorm {

double sigmoid(double x);
double log_sigmoid(double x);  // −log(1 + e^{−x}), overflow-stable

// −log σ(s_c − s_r) as max(0, −Δ) + log1p(e^{−|Δ|}).
double bt_loss(double score_chosen, double score_rejected);
// −log σ(Δ − m)
double margin_loss(double score_chosen, double score_rejected, double margin);
// −(1 − ε) log σ(Δ) − ε log σ(−Δ)
double label_smooth_loss(double score_chosen, double score_rejected, double eps);
// ‖pred − target‖², summed over attributes.
double mse_loss(std::span<const double> pred, std::span<const double> target);

enum class EnsembleMode { mean, min };
EnsembleMode parse_ensemble_mode(const std::string& s);
double ensemble_aggregate(std::span<const double> scores, EnsembleMode mode);

// Batched tape versions. `delta` is an n×1 column of s_c − s_r; each returns
// the batch mean as a 1×1 node.
namespace ad {
Var bt_loss(Var delta);
Var margin_loss(Var delta, double margin);
Var label_smooth_loss(Var delta, double eps);
// Mean over rows of the per-row squared error summed over columns.
Var mse_loss(Var pred, const Mat& target);
}  // namespace ad

}  // namespace smorm
