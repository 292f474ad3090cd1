#pragma once

// Population quantities behind the implicit multi-attribute bound, the
// pairwise-error lemma, and the Fisher-information comparison of training
// regimes.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smorm/model.hpp"
#include "smorm/tensor.hpp"

namespace smorm {

struct MomentReport {
  Vec mu_S;      // E[f_c − f_r]
  Mat Sigma_S;   // E[(f_c − f_r)(f_c − f_r)ᵀ]
  Mat Sigma_M;   // E[f_m f_mᵀ]
  Mat C_M;       // E[f_m rᵀ], d×K
  double B = 0.0;  // max feature norm seen
  double lambda_min_S = 0.0;
  double lambda_min_M = 0.0;
  std::size_t n_S = 0, n_M = 0;
  bool degenerate_S = false;  // Σ_S not positive definite
};

// Requires n_S, n_M ≥ d + 1.
MomentReport estimate_moments(std::span<const Vec> f_chosen, std::span<const Vec> f_rejected,
                              std::span<const Vec> f_m, std::span<const Vec> r);

struct PopulationHeads {
  Vec w_S;  // Σ_S⁻¹ μ_S
  Mat w_M;  // Σ_M⁻¹ C_M
};

// SingularCovariance when a covariance is not PD and ridge = 0.
PopulationHeads population_heads(const MomentReport& m, double ridge = 0.0);

struct CouplingReport {
  Vec mu_tilde;   // Σ_S^{-1/2} μ_S
  Mat C_tilde;    // Σ_S^{1/2} Σ_M⁻¹ C_M
  Mat E;          // C̃ − μ̃ βᵀ, Eᵀμ̃ = 0
  Vec alpha;      // μ_Sᵀ Σ_M⁻¹ C_M
  Vec beta;       // α / (μ_Sᵀ Σ_S⁻¹ μ_S)
  double c = 0.0;           // max{0, 1ᵀβ} / K
  double one_t_alpha = 0.0;
  double E_op = 0.0;
  double eps = 0.0;         // B ‖E‖_op / √λ_min(Σ_S)
  double eps_proof = 0.0;   // eps / K
  double eps_rigorous = 0.0;  // eps / √K
  double B = 0.0;
  double lambda_min_S = 0.0;
  bool pure_sorm = false;   // C_M = 0: no multi-attribute signal, c = 0
};

// `B_override` > 0 replaces the moment report's B (e.g. to cover evaluation
// embeddings as well).
CouplingReport coupling(const MomentReport& m, std::uint64_t seed = 0x5eed, double B_override = 0.0);

struct AssumptionCheck {
  bool lambda_ok = false;      // λ_min(Σ_S) > threshold
  bool correlation_ok = false; // 1ᵀα ≥ 0
  bool bounded_ok = false;     // every evaluated embedding within B
  bool all() const { return lambda_ok && correlation_ok && bounded_ok; }
};

AssumptionCheck check_assumptions(const CouplingReport& c, std::span<const Vec> eval, double lambda_threshold = 1e-6);

struct Theorem1Report {
  std::size_t n = 0;
  std::size_t violations = 0;             // r_m ≥ c r_s − ε/K
  std::size_t violations_rigorous = 0;    // r_m ≥ c r_s − ε/√K
  std::size_t violations_statement = 0;   // r_m ≥ c r_s − ε
  double min_slack = 0.0;
  double min_slack_rigorous = 0.0;
  double min_slack_statement = 0.0;
  double max_abs_residual = 0.0;          // max |r_m − (1ᵀβ/K) r_s|
  bool pure_sorm = false;
};

Theorem1Report verify_theorem1(const Vec& w_S, const Mat& w_M, const CouplingReport& c, std::span<const Vec> eval,
                               double tol = 1e-9);

struct LemmaReport {
  std::size_t pairs = 0;
  std::size_t single_violations = 0;
  std::size_t multi_violations = 0;
  double single_min_slack = 0.0;
  double multi_min_slack = 0.0;
  double single_max_slack = 0.0;
  double multi_max_slack = 0.0;
  // Expectation forms: mean lhs against ¼√(2·MSE) and √(2·MSE).
  double single_mean_lhs = 0.0, single_expect_rhs = 0.0;
  double multi_mean_lhs = 0.0, multi_expect_rhs = 0.0;
};

// Per-pair checks |σ(Δr_s) − σ(Δg_s)| ≤ ¼√(2(e_A² + e_B²)) and
// |Δr_m − Δg_m| ≤ √(2(e_A² + e_B²)) with e = prediction − gold.
LemmaReport verify_lemma1(std::span<const double> r_s, std::span<const double> r_m, std::span<const double> g_s,
                          std::span<const double> g_m, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                          double tol = 1e-12);

// Per-sample gradients. grads[i][k] is ∇ r_k(y_i) over a parameter subset,
// with k = 0 the overall head and 1..K the attribute heads.
using HeadGradients = std::vector<std::vector<Vec>>;

struct FisherReport {
  Mat I_single, I_multi, I_hybrid;
  Mat Delta;  // I_hybrid − I_single
  double lambda_min_Delta = 0.0;
  double g0_delta_g0 = 0.0;  // mean over samples of g₀ᵀ Δ g₀
  Mat Cov_single, Cov_multi, Cov_hybrid;  // I⁻¹ / n; empty if not requested
  std::size_t n = 0, p = 0;
  double ridge = 0.0;
};

// sigma has K + 1 entries, σ_00 first. With invert = true the covariances are
// formed; SingularFisher when a Fisher is singular and ridge = 0.
FisherReport fisher_matrices(const HeadGradients& grads, std::span<const double> sigma, bool invert = false,
                             double ridge = 0.0);

double predict_mse(const Mat& cov, std::span<const double> grad, double sigma_00);

// Default subset: last backbone layer plus both heads.
std::vector<std::string> default_fisher_subset(const SmormModel& model);
HeadGradients head_gradients(const SmormModel& model, const Mat& inputs, const std::vector<std::string>& subset);

}  // namespace smorm
