#include "smorm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smorm/error.hpp"
#include "smorm/kernels.hpp"
#include "smorm/losses.hpp"

namespace smorm {

MomentReport estimate_moments(std::span<const Vec> f_chosen, std::span<const Vec> f_rejected,
                              std::span<const Vec> f_m, std::span<const Vec> r) {
  if (f_chosen.size() != f_rejected.size()) throw LengthMismatch("estimate_moments: chosen/rejected counts differ");
  if (f_m.size() != r.size()) throw LengthMismatch("estimate_moments: feature/target counts differ");
  if (f_chosen.empty() || f_m.empty()) throw InsufficientSamples("estimate_moments: no samples");
  const std::size_t d = f_chosen.front().size();
  if (f_chosen.size() < d + 1 || f_m.size() < d + 1)
    throw InsufficientSamples("estimate_moments: need at least d + 1 = " + std::to_string(d + 1) +
                              " samples per dataset");

  MomentReport m;
  m.n_S = f_chosen.size();
  m.n_M = f_m.size();
  std::vector<Vec> diffs(m.n_S);
  for (std::size_t i = 0; i < m.n_S; ++i) {
    if (f_chosen[i].size() != d || f_rejected[i].size() != d)
      throw DimensionMismatch("estimate_moments: embedding dims differ");
    diffs[i] = sub(f_chosen[i], f_rejected[i]);
  }
  m.mu_S = Vec(d, 0.0);
  for (const auto& v : diffs)
    for (std::size_t j = 0; j < d; ++j) m.mu_S[j] += v[j];
  for (double& x : m.mu_S) x /= static_cast<double>(m.n_S);
  m.Sigma_S = covariance(diffs, false);
  m.Sigma_M = covariance(f_m, false);

  const std::size_t K = r.front().size();
  for (std::size_t i = 0; i < m.n_M; ++i)
    if (f_m[i].size() != d || r[i].size() != K) throw DimensionMismatch("estimate_moments: attribute sample dims differ");
  m.C_M = kernels::cross_sum(Mat::from_rows(f_m), Mat::from_rows(r)) * (1.0 / static_cast<double>(m.n_M));

  for (const auto* set : {&f_chosen, &f_rejected, &f_m})
    for (const auto& v : *set) m.B = std::max(m.B, norm2(v));
  m.lambda_min_S = sym_eigen(m.Sigma_S).eigenvalues.front();
  m.lambda_min_M = sym_eigen(m.Sigma_M).eigenvalues.front();
  m.degenerate_S = !(m.lambda_min_S > kSingularThreshold);
  return m;
}

PopulationHeads population_heads(const MomentReport& m, double ridge) {
  try {
    PopulationHeads h;
    h.w_S = matvec(ridge_inverse(m.Sigma_S, ridge), m.mu_S);
    h.w_M = matmul(ridge_inverse(m.Sigma_M, ridge), m.C_M);
    return h;
  } catch (const SingularMatrix& e) {
    throw SingularCovariance(std::string("population_heads: ") + e.what());
  }
}

CouplingReport coupling(const MomentReport& m, std::uint64_t seed, double B_override) {
  CouplingReport c;
  Mat s_inv_half, s_half, sm_inv;
  try {
    s_inv_half = inv_sqrt(m.Sigma_S);
    sm_inv = ridge_inverse(m.Sigma_M, 0.0);
  } catch (const SingularMatrix& e) {
    throw SingularCovariance(std::string("coupling: ") + e.what());
  }
  s_half = sqrt_psd(m.Sigma_S);
  const std::size_t K = m.C_M.cols();

  c.mu_tilde = matvec(s_inv_half, m.mu_S);
  c.C_tilde = matmul(s_half, matmul(sm_inv, m.C_M));
  const double mu2 = dot(c.mu_tilde, c.mu_tilde);
  if (!(mu2 > 0.0)) throw SingularCovariance("coupling: μ_S = 0, the preference direction is undefined");

  c.alpha = matvec_t(c.C_tilde, c.mu_tilde);
  c.beta = scaled(c.alpha, 1.0 / mu2);
  c.E = c.C_tilde - outer(c.mu_tilde, c.beta);
  c.one_t_alpha = 0.0;
  double one_t_beta = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    c.one_t_alpha += c.alpha[k];
    one_t_beta += c.beta[k];
  }
  c.c = std::max(0.0, one_t_beta) / static_cast<double>(K);
  c.pure_sorm = frobenius(m.C_M) == 0.0;

  Rng rng(seed);
  c.E_op = operator_norm(c.E, rng);
  c.B = B_override > 0.0 ? B_override : m.B;
  c.lambda_min_S = m.lambda_min_S;
  c.eps = c.B * c.E_op / std::sqrt(m.lambda_min_S);
  c.eps_proof = c.eps / static_cast<double>(K);
  c.eps_rigorous = c.eps / std::sqrt(static_cast<double>(K));
  return c;
}

AssumptionCheck check_assumptions(const CouplingReport& c, std::span<const Vec> eval, double lambda_threshold) {
  AssumptionCheck a;
  a.lambda_ok = c.lambda_min_S > lambda_threshold;
  a.correlation_ok = c.one_t_alpha >= 0.0;
  a.bounded_ok = true;
  for (const auto& f : eval)
    if (norm2(f) > c.B) a.bounded_ok = false;
  return a;
}

Theorem1Report verify_theorem1(const Vec& w_S, const Mat& w_M, const CouplingReport& c, std::span<const Vec> eval,
                               double tol) {
  Theorem1Report rep;
  rep.n = eval.size();
  rep.pure_sorm = c.pure_sorm;
  rep.min_slack = rep.min_slack_rigorous = rep.min_slack_statement = std::numeric_limits<double>::infinity();
  const std::size_t K = w_M.cols();
  double one_t_beta = 0.0;
  for (double b : c.beta) one_t_beta += b;
  for (const auto& f : eval) {
    const double r_s = dot(w_S, f);
    const Vec attrs = matvec_t(w_M, f);
    double r_m = 0.0;
    for (double a : attrs) r_m += a;
    r_m /= static_cast<double>(K);
    const double base = r_m - c.c * r_s;
    const double s_proof = base + c.eps_proof;
    const double s_rig = base + c.eps_rigorous;
    const double s_stat = base + c.eps;
    if (s_proof < -tol) ++rep.violations;
    if (s_rig < -tol) ++rep.violations_rigorous;
    if (s_stat < -tol) ++rep.violations_statement;
    rep.min_slack = std::min(rep.min_slack, s_proof);
    rep.min_slack_rigorous = std::min(rep.min_slack_rigorous, s_rig);
    rep.min_slack_statement = std::min(rep.min_slack_statement, s_stat);
    rep.max_abs_residual =
        std::max(rep.max_abs_residual, std::abs(r_m - one_t_beta / static_cast<double>(K) * r_s));
  }
  return rep;
}

LemmaReport verify_lemma1(std::span<const double> r_s, std::span<const double> r_m, std::span<const double> g_s,
                          std::span<const double> g_m, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                          double tol) {
  const std::size_t n = r_s.size();
  if (r_m.size() != n || g_s.size() != n || g_m.size() != n) throw LengthMismatch("verify_lemma1: score lengths differ");
  LemmaReport rep;
  rep.pairs = pairs.size();
  rep.single_min_slack = rep.multi_min_slack = std::numeric_limits<double>::infinity();
  rep.single_max_slack = rep.multi_max_slack = -std::numeric_limits<double>::infinity();
  double sum_ls = 0.0, sum_lm = 0.0, mse_s = 0.0, mse_m = 0.0;
  for (const auto& [a, b] : pairs) {
    if (a >= n || b >= n) throw InvalidArgument("verify_lemma1: pair index out of range");
    const double es_a = r_s[a] - g_s[a], es_b = r_s[b] - g_s[b];
    const double em_a = r_m[a] - g_m[a], em_b = r_m[b] - g_m[b];

    const double lhs_s = std::abs(sigmoid(r_s[a] - r_s[b]) - sigmoid(g_s[a] - g_s[b]));
    const double rhs_s = 0.25 * std::sqrt(2.0 * (es_a * es_a + es_b * es_b));
    const double lhs_m = std::abs((r_m[a] - r_m[b]) - (g_m[a] - g_m[b]));
    const double rhs_m = std::sqrt(2.0 * (em_a * em_a + em_b * em_b));

    const double slack_s = rhs_s - lhs_s;
    const double slack_m = rhs_m - lhs_m;
    if (slack_s < -tol) ++rep.single_violations;
    if (slack_m < -tol) ++rep.multi_violations;
    rep.single_min_slack = std::min(rep.single_min_slack, slack_s);
    rep.multi_min_slack = std::min(rep.multi_min_slack, slack_m);
    rep.single_max_slack = std::max(rep.single_max_slack, slack_s);
    rep.multi_max_slack = std::max(rep.multi_max_slack, slack_m);
    sum_ls += lhs_s;
    sum_lm += lhs_m;
    mse_s += 0.5 * (es_a * es_a + es_b * es_b);
    mse_m += 0.5 * (em_a * em_a + em_b * em_b);
  }
  if (!pairs.empty()) {
    const double np = static_cast<double>(pairs.size());
    rep.single_mean_lhs = sum_ls / np;
    rep.multi_mean_lhs = sum_lm / np;
    rep.single_expect_rhs = 0.25 * std::sqrt(2.0 * mse_s / np);
    rep.multi_expect_rhs = std::sqrt(2.0 * mse_m / np);
  }
  return rep;
}

FisherReport fisher_matrices(const HeadGradients& grads, std::span<const double> sigma, bool invert, double ridge) {
  if (grads.empty()) throw EmptyInput("fisher_matrices: no samples");
  const std::size_t heads = grads.front().size();
  if (heads < 2) throw InvalidArgument("fisher_matrices: need the overall head and >= 1 attribute head");
  if (sigma.size() != heads) throw DimensionMismatch("fisher_matrices: sigma must have K + 1 entries");
  for (double s : sigma)
    if (!(s > 0.0)) throw InvalidArgument("fisher_matrices: noise variances must be > 0");
  const std::size_t n = grads.size();
  const std::size_t p = grads.front().front().size();

  FisherReport rep;
  rep.n = n;
  rep.p = p;
  rep.ridge = ridge;
  rep.I_single = Mat(p, p);
  rep.I_multi = Mat(p, p);
  for (std::size_t k = 0; k < heads; ++k) {
    Mat G(n, p);
    for (std::size_t i = 0; i < n; ++i) {
      if (grads[i].size() != heads || grads[i][k].size() != p)
        throw DimensionMismatch("fisher_matrices: ragged gradient input");
      std::copy(grads[i][k].begin(), grads[i][k].end(), G.row_span(i).begin());
    }
    Mat term = kernels::outer_sum(G) * (1.0 / (static_cast<double>(n) * sigma[k]));
    if (k == 0) {
      rep.I_single = std::move(term);
    } else {
      rep.I_multi += term;
    }
  }
  rep.I_hybrid = rep.I_single + rep.I_multi;
  rep.Delta = rep.I_hybrid - rep.I_single;
  rep.lambda_min_Delta = sym_eigen(rep.Delta).eigenvalues.front();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += dot(grads[i][0], matvec(rep.Delta, grads[i][0]));
  rep.g0_delta_g0 = acc / static_cast<double>(n);

  if (invert) {
    const double inv_n = 1.0 / static_cast<double>(n);
    try {
      rep.Cov_single = ridge_inverse(rep.I_single, ridge) * inv_n;
      rep.Cov_multi = ridge_inverse(rep.I_multi, ridge) * inv_n;
      rep.Cov_hybrid = ridge_inverse(rep.I_hybrid, ridge) * inv_n;
    } catch (const SingularMatrix& e) {
      throw SingularFisher(std::string("fisher_matrices: ") + e.what());
    }
  }
  return rep;
}

double predict_mse(const Mat& cov, std::span<const double> grad, double sigma_00) {
  if (cov.rows() != grad.size() || cov.cols() != grad.size())
    throw DimensionMismatch("predict_mse: covariance and gradient dims differ");
  return dot(grad, matvec(cov, grad)) + sigma_00;
}

std::vector<std::string> default_fisher_subset(const SmormModel& model) {
  const std::size_t last = model.backbone().num_layers() - 1;
  return {"backbone.W" + std::to_string(last), "backbone.b" + std::to_string(last), "head.single", "head.multi"};
}

HeadGradients head_gradients(const SmormModel& model, const Mat& inputs, const std::vector<std::string>& subset) {
  for (const auto& name : subset)
    if (!model.params().contains(name)) throw InvalidArgument("head_gradients: unknown parameter '" + name + "'");
  const std::size_t K = model.K();
  HeadGradients out(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    ad::Tape tape;
    auto bound = ad::bind(tape, model.params(), true);
    ad::Var f = model.embed(bound, tape.constant(Mat::row(inputs.row_span(i))));
    ad::Var r0 = SmormModel::single_head(bound, f);
    ad::Var attrs = SmormModel::multi_head(bound, f);
    out[i].resize(K + 1);
    for (std::size_t k = 0; k <= K; ++k) {
      ad::Var target = r0;
      if (k > 0) {
        Mat onehot(1, K);
        onehot(0, k - 1) = 1.0;
        target = ad::sum(ad::mul(attrs, tape.constant(onehot)));
      }
      tape.backward(target);
      const ad::Gradient g = ad::collect_gradient(tape, bound, model.params());
      Vec flat;
      for (const auto& name : subset) {
        const auto& m = g.at(name);
        flat.insert(flat.end(), m.data().begin(), m.data().end());
      }
      out[i][k] = std::move(flat);
    }
  }
  return out;
}

}  // namespace smorm
