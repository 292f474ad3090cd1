#include "smorm/rlhf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "smorm/error.hpp"
#include "smorm/parallel.hpp"
#include "smorm/stats.hpp"
#include "smorm/train.hpp"

namespace smorm {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ½ log 2π

}  // namespace

SyntheticPolicy::SyntheticPolicy(std::size_t d_z, std::vector<std::size_t> hidden, const Vec& init_std,
                                 double feature_bound, Rng& rng)
    : mean_cfg_{d_z, std::move(hidden), d_z, Activation::tanh}, bound_(feature_bound) {
  if (init_std.size() != d_z) throw DimensionMismatch("SyntheticPolicy: init_std must have d_z entries");
  init_mlp(params_, mean_cfg_, rng, "mean");
  const std::size_t last = mean_cfg_.num_layers() - 1;
  for (double& x : params_.at("mean.W" + std::to_string(last)).data()) x = 0.0;
  Mat ls(1, d_z);
  for (std::size_t j = 0; j < d_z; ++j) {
    if (!(init_std[j] > 0.0)) throw InvalidArgument("SyntheticPolicy: stds must be > 0");
    ls(0, j) = std::log(init_std[j]);
  }
  params_.add("log_std", std::move(ls));
  ref_ = params_;
}

Mat SyntheticPolicy::action_means(const Mat& prompts) const {
  return forward_features(params_, mean_cfg_, prompts, "mean");
}

Mat SyntheticPolicy::reference_means(const Mat& prompts) const {
  return forward_features(ref_, mean_cfg_, prompts, "mean");
}

Vec SyntheticPolicy::sample_action(std::span<const double> prompt, Rng& rng) const {
  const Vec mu = action_means(Mat::row(prompt)).row_vec(0);
  const Vec ls = log_std();
  Vec a(mu.size());
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = mu[j] + std::exp(ls[j]) * rng.normal();
  return a;
}

Vec SyntheticPolicy::respond(std::span<const double> prompt, std::span<const double> action) const {
  return project_to_ball(add(prompt, action), bound_);
}

namespace {

Vec gaussian_log_prob(const Mat& means, const Vec& ls, const Mat& actions) {
  Vec out(actions.rows());
  double ls_sum = 0.0;
  for (double x : ls) ls_sum += x;
  for (std::size_t i = 0; i < actions.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < actions.cols(); ++j) {
      const double z = (actions(i, j) - means(i, j)) * std::exp(-ls[j]);
      acc += -0.5 * z * z;
    }
    out[i] = acc - ls_sum - kHalfLog2Pi * static_cast<double>(actions.cols());
  }
  return out;
}

}  // namespace

Vec SyntheticPolicy::log_prob(const Mat& prompts, const Mat& actions) const {
  return gaussian_log_prob(action_means(prompts), log_std(), actions);
}

Vec SyntheticPolicy::reference_log_prob(const Mat& prompts, const Mat& actions) const {
  return gaussian_log_prob(reference_means(prompts), reference_log_std(), actions);
}

ad::Var SyntheticPolicy::log_prob(const ad::BoundParams& p, const Mat& prompts, const Mat& actions) const {
  ad::Tape& tape = *p["log_std"].tape;
  ad::Var mu = forward_features(p, mean_cfg_, tape.constant(prompts), "mean");
  ad::Var ls = p["log_std"];
  ad::Var z = ad::mul(ad::sub(tape.constant(actions), mu), ad::exp(ad::neg(ls)));
  ad::Var quad = ad::sum_cols(ad::scale(ad::square(z), -0.5));
  return ad::add_scalar(ad::sub(quad, ad::sum(ls)), -kHalfLog2Pi * static_cast<double>(actions.cols()));
}

double SyntheticPolicy::kl_to_reference(const Mat& prompts) const {
  if (prompts.rows() == 0) return 0.0;
  const Mat mu = action_means(prompts);
  const Mat mu_ref = reference_means(prompts);
  const Vec ls = log_std();
  const Vec ls_ref = reference_log_std();
  double total = 0.0;
  for (std::size_t i = 0; i < prompts.rows(); ++i) {
    double kl = 0.0;
    for (std::size_t j = 0; j < ls.size(); ++j) {
      const double var = std::exp(2.0 * ls[j]);
      const double var_ref = std::exp(2.0 * ls_ref[j]);
      const double dm = mu(i, j) - mu_ref(i, j);
      kl += ls_ref[j] - ls[j] + (var + dm * dm) / (2.0 * var_ref) - 0.5;
    }
    total += kl;
  }
  return total / static_cast<double>(prompts.rows());
}

double SyntheticPolicy::drift() const {
  double s = 0.0;
  auto it = ref_.begin();
  for (const auto& [name, m] : params_) {
    const auto r = it->second.data();
    for (std::size_t i = 0; i < m.size(); ++i) s += (m.data()[i] - r[i]) * (m.data()[i] - r[i]);
    ++it;
  }
  return std::sqrt(s);
}

double kl_bon(long long n) {
  if (n < 1) throw InvalidN("kl_bon: n must be >= 1, got " + std::to_string(n));
  const double x = static_cast<double>(n);
  return std::log(x) - (x - 1.0) / x;
}

BonSelection bon_select(const SyntheticPolicy& policy, std::span<const double> prompt, std::size_t n,
                        const BatchScorer& proxy, Rng& rng) {
  if (n == 0) throw InvalidN("bon_select: n must be >= 1");
  std::vector<Vec> cands(n);
  for (auto& c : cands) c = policy.sample(prompt, rng);
  BonSelection out;
  out.candidate_scores = proxy(Mat::from_rows(cands));
  for (std::size_t i = 1; i < n; ++i)
    if (out.candidate_scores[i] > out.candidate_scores[out.index]) out.index = i;
  out.proxy = out.candidate_scores[out.index];
  out.response = cands[out.index];
  return out;
}

std::vector<std::size_t> default_n_values(std::size_t max_n, std::size_t points) {
  if (max_n == 0 || points == 0) throw InvalidN("default_n_values: empty range");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = points == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    const auto n = static_cast<std::size_t>(std::llround(std::exp(t * std::log(static_cast<double>(max_n)))));
    if (out.empty() || n > out.back()) out.push_back(n);
  }
  return out;
}

BoNSweep bon_sweep(const SyntheticPolicy& policy, const Mat& prompts, const std::vector<std::size_t>& n_values,
                   const BatchScorer& proxy, const GoldWorld& world, std::uint64_t seed) {
  if (n_values.empty()) throw InvalidN("bon_sweep: no n values");
  for (std::size_t i = 0; i < n_values.size(); ++i)
    if (n_values[i] == 0 || (i && n_values[i] <= n_values[i - 1]))
      throw InvalidN("bon_sweep: n values must be positive and strictly ascending");
  if (prompts.rows() == 0) throw EmptyInput("bon_sweep: no prompts");
  const std::size_t P = prompts.rows();
  const std::size_t V = n_values.size();
  const std::size_t max_n = n_values.back();
  const std::size_t K = world.K;

  std::vector<Vec> sel_proxy(P, Vec(V)), sel_gold(P, Vec(V));
  std::vector<Mat> sel_attr(P, Mat(V, K));
  parallel_for(P, [&](std::size_t i) {
    Rng rng(derive_seed(seed, 51, i));
    const auto prompt = prompts.row_span(i);
    std::vector<Vec> cands(max_n);
    for (auto& c : cands) c = policy.sample(prompt, rng);
    const Vec scores = proxy(Mat::from_rows(cands));
    std::size_t best = 0;
    std::size_t next = 0;
    for (std::size_t v = 0; v < V; ++v) {
      for (; next < n_values[v]; ++next)
        if (scores[next] > scores[best]) best = next;
      const Vec r = true_attributes(world, cands[best]);
      sel_proxy[i][v] = scores[best];
      sel_gold[i][v] = true_overall(world, cands[best]);
      std::copy(r.begin(), r.end(), sel_attr[i].row_span(v).begin());
    }
  });

  BoNSweep out;
  out.n_values = n_values;
  out.kl.resize(V);
  out.proxy.assign(V, 0.0);
  out.gold.assign(V, 0.0);
  out.attributes.assign(V, Vec(K, 0.0));
  for (std::size_t v = 0; v < V; ++v) {
    out.kl[v] = kl_bon(static_cast<long long>(n_values[v]));
    for (std::size_t i = 0; i < P; ++i) {
      out.proxy[v] += sel_proxy[i][v];
      out.gold[v] += sel_gold[i][v];
      for (std::size_t k = 0; k < K; ++k) out.attributes[v][k] += sel_attr[i](v, k);
    }
    out.proxy[v] /= static_cast<double>(P);
    out.gold[v] /= static_cast<double>(P);
    for (double& a : out.attributes[v]) a /= static_cast<double>(P);
  }
  return out;
}

BonVerdict bon_verdict(const BoNSweep& sweep, double min_drop) {
  BonVerdict v;
  if (sweep.gold.empty()) return v;
  v.proxy_rising = sweep.proxy.back() > sweep.proxy.front();
  v.gold_drop = *std::max_element(sweep.gold.begin(), sweep.gold.end()) - sweep.gold.back();
  v.hacked = v.proxy_rising && v.gold_drop >= min_drop;
  if (sweep.gold.size() >= 2) {
    Vec logn(sweep.n_values.size());
    for (std::size_t i = 0; i < logn.size(); ++i) logn[i] = std::log(static_cast<double>(sweep.n_values[i]));
    v.spearman_gold_logn = spearman(sweep.gold, logn);
  }
  return v;
}

Vec gae_advantages(std::span<const double> rewards, std::span<const double> values, double gae_lambda, double gamma) {
  if (rewards.size() != values.size()) throw LengthMismatch("gae_advantages: rewards and values differ in length");
  Vec adv(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double next_value = t + 1 < values.size() ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + gamma * gae_lambda * running;
    adv[t] = running;
  }
  return adv;
}

void PpoConfig::validate() const {
  if (!(clip_range > 0.0 && clip_range < 1.0)) throw InvalidArgument("clip_range must lie in (0, 1)");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw InvalidArgument("gae_lambda must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
  if (!(kl_coef >= 0.0)) throw InvalidArgument("kl_coef must be >= 0");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
  if (batch_size == 0 || inner_epochs == 0 || epochs == 0) throw InvalidArgument("ppo batch/epoch counts must be >= 1");
}

TrajectoryLog ppo_train(SyntheticPolicy& policy, const BatchScorer& proxy, const GoldWorld& world, const Mat& prompts,
                        const PpoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (prompts.rows() == 0) throw EmptyInput("ppo_train: no prompts");
  if (prompts.cols() != policy.dim()) throw DimensionMismatch("ppo_train: prompt dim differs from policy");
  const std::size_t n = prompts.rows();
  const std::size_t b = std::min(cfg.batch_size, n);
  const std::size_t steps = cfg.epochs * ((n + b - 1) / b);
  const std::size_t d = policy.dim();
  const std::size_t K = world.K;

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.warmup_fraction = 0.0;
  adam.schedule = LrSchedule::constant;
  AdamState state = AdamState::zeros_like(policy.params());
  Shuffler order(n, Rng(derive_seed(seed, 70)));

  TrajectoryLog log;
  log.seed = seed;
  for (std::size_t step = 0; step < steps; ++step) {
    Rng rng(derive_seed(seed, 71, step));
    Mat P(b, d), A(b, d), Z(b, d);
    for (std::size_t i = 0; i < b; ++i) {
      const auto src = prompts.row_span(order.next());
      std::copy(src.begin(), src.end(), P.row_span(i).begin());
    }
    for (std::size_t i = 0; i < b; ++i) {
      const Vec a = policy.sample_action(P.row_span(i), rng);
      const Vec z = policy.respond(P.row_span(i), a);
      std::copy(a.begin(), a.end(), A.row_span(i).begin());
      std::copy(z.begin(), z.end(), Z.row_span(i).begin());
    }
    const Vec scores = proxy(Z);
    const Vec logp_old = policy.log_prob(P, A);
    const Vec logp_ref = policy.reference_log_prob(P, A);

    Vec rewards(b);
    for (std::size_t i = 0; i < b; ++i) rewards[i] = scores[i] - cfg.kl_coef * (logp_old[i] - logp_ref[i]);
    const double baseline = mean(rewards);
    Vec adv(b);
    for (std::size_t i = 0; i < b; ++i) {
      const double r[1] = {rewards[i]};
      const double v[1] = {baseline};
      adv[i] = gae_advantages(r, v, cfg.gae_lambda, cfg.gamma)[0];
    }
    if (cfg.normalize_advantages && b > 1) {
      const double sd = std::sqrt(variance(adv));
      if (sd > 0.0)
        for (double& x : adv) x /= sd;
    }

    // Log the batch that is about to drive the update.
    const Mat gold_attrs = true_attributes_batch(world, Z);
    const Vec gold = true_overall_batch(world, Z);
    log.step.push_back(step);
    log.kl.push_back(policy.kl_to_reference(P));
    log.proxy.push_back(mean(scores));
    log.gold.push_back(mean(gold));
    Vec attr_mean(K, 0.0);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < K; ++k) attr_mean[k] += gold_attrs(i, k);
    for (double& x : attr_mean) x /= static_cast<double>(b);
    log.attributes.push_back(std::move(attr_mean));

    const Mat adv_col = Mat::column(adv);
    const Mat old_col = Mat::column(logp_old);
    for (std::size_t epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      ad::Tape tape;
      auto bound = ad::bind(tape, policy.params(), true);
      ad::Var logp = policy.log_prob(bound, P, A);
      ad::Var ratio = ad::exp(ad::sub(logp, tape.constant(old_col)));
      ad::Var advv = tape.constant(adv_col);
      ad::Var s1 = ad::mul(ratio, advv);
      ad::Var s2 = ad::mul(ad::clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range), advv);
      ad::Var loss = ad::neg(ad::mean(ad::minimum(s1, s2)));
      if (!std::isfinite(loss.scalar()))
        throw NonFiniteLoss("ppo_train: non-finite surrogate at step " + std::to_string(step) + " (mean reward " +
                            std::to_string(baseline) + ", kl " + std::to_string(log.kl.back()) + ")");
      tape.backward(loss);
      adam_step(policy.params(), ad::collect_gradient(tape, bound, policy.params()), state, adam, step, steps);
    }
  }
  return log;
}

HackingVerdict detect_hacking(const TrajectoryLog& log, std::size_t window, std::size_t persistence) {
  if (window < 2) throw InvalidArgument("detect_hacking: window must be >= 2");
  if (log.size() < 2 * window)
    throw TooShort("detect_hacking: log has " + std::to_string(log.size()) + " steps, need " +
                   std::to_string(2 * window));
  if (persistence == 0) persistence = 1;
  const std::size_t stride = std::max<std::size_t>(1, window / 2);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= log.size(); s += stride) starts.push_back(s);
  if (starts.back() + window < log.size()) starts.push_back(log.size() - window);

  std::vector<bool> diverge(starts.size());
  HackingVerdict v;
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const double ps = ls_slope(std::span<const double>(log.proxy).subspan(starts[w], window));
    const double gs = ls_slope(std::span<const double>(log.gold).subspan(starts[w], window));
    diverge[w] = ps > 0.0 && gs < 0.0;
    v.final_proxy_slope = ps;
    v.final_gold_slope = gs;
  }
  const std::size_t need = std::min(persistence, diverge.size());
  v.hacked = std::all_of(diverge.end() - static_cast<std::ptrdiff_t>(need), diverge.end(), [](bool x) { return x; });
  for (std::size_t w = 0; w + need <= diverge.size(); ++w) {
    bool run = true;
    for (std::size_t j = 0; j < need; ++j) run = run && diverge[w + j];
    if (run) {
      v.divergence_step = log.step[starts[w] + window / 2];
      break;
    }
  }
  return v;
}

Vec normalize_curve(std::span<const double> series) {
  Vec out(series.begin(), series.end());
  if (out.empty()) return out;
  const double first = out.front();
  for (double& x : out) x -= first;
  return out;
}

std::vector<Vec> attribute_trajectory(const TrajectoryLog& log) {
  if (log.attributes.empty()) return {};
  const std::size_t K = log.attributes.front().size();
  std::vector<Vec> out(K, Vec(log.attributes.size()));
  for (std::size_t t = 0; t < log.attributes.size(); ++t)
    for (std::size_t k = 0; k < K; ++k) out[k][t] = log.attributes[t][k];
  for (auto& s : out) s = normalize_curve(s);
  return out;
}

std::vector<DiffStat> pairwise_diff_stats(const Mat& chosen_scores, const Mat& rejected_scores) {
  if (!chosen_scores.same_shape(rejected_scores)) throw DimensionMismatch("pairwise_diff_stats: shape mismatch");
  const std::size_t n = chosen_scores.rows();
  if (n == 0) throw EmptyInput("pairwise_diff_stats: no pairs");
  const std::size_t K = chosen_scores.cols();
  std::vector<DiffStat> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    Vec pooled(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      pooled[i] = chosen_scores(i, k);
      pooled[n + i] = rejected_scores(i, k);
    }
    const double sd = std::sqrt(variance(pooled));
    const double scale = sd > 0.0 ? 1.0 / sd : 0.0;
    Vec diffs(n);
    for (std::size_t i = 0; i < n; ++i) diffs[i] = (chosen_scores(i, k) - rejected_scores(i, k)) * scale;
    out[k] = {mean(diffs), variance(diffs)};
  }
  return out;
}

std::vector<DiffStat> pairwise_diff_stats(const SmormModel& model, std::span<const PairwiseRecord> pairs) {
  if (!model.params().contains("head.multi")) throw MissingMultiHead("pairwise_diff_stats: model has no multi head");
  std::vector<Vec> c, r;
  for (const auto& p : pairs) {
    c.push_back(p.input_chosen);
    r.push_back(p.input_rejected);
  }
  if (c.empty()) throw EmptyInput("pairwise_diff_stats: no pairs");
  return pairwise_diff_stats(model.attribute_scores(Mat::from_rows(c)), model.attribute_scores(Mat::from_rows(r)));
}

std::pair<double, double> style_utility_decomposition(const SmormModel& model, const PairwiseRecord& pair,
                                                      const std::vector<std::size_t>& utility_idx,
                                                      const std::vector<std::size_t>& style_idx) {
  const std::size_t K = model.K();
  std::set<std::size_t> seen;
  for (const auto* set : {&utility_idx, &style_idx})
    for (std::size_t k : *set)
      if (k >= K || !seen.insert(k).second) throw BadPartition("index sets must partition 0..K-1");
  if (seen.size() != K) throw BadPartition("index sets must cover every attribute");
  const Vec c = model.attribute_scores(Mat::row(pair.input_chosen)).row_vec(0);
  const Vec r = model.attribute_scores(Mat::row(pair.input_rejected)).row_vec(0);
  double du = 0.0, ds = 0.0;
  for (std::size_t k : utility_idx) du += c[k] - r[k];
  for (std::size_t k : style_idx) ds += c[k] - r[k];
  return {du, ds};
}

double win_rate(const SyntheticPolicy& a, const SyntheticPolicy& b, const Mat& prompts, const GoldWorld& world,
                std::uint64_t seed) {
  if (prompts.rows() == 0) throw EmptyInput("win_rate: no prompts");
  double wins = 0.0;
  for (std::size_t i = 0; i < prompts.rows(); ++i) {
    Rng ra(derive_seed(seed, 61, i));
    Rng rb(derive_seed(seed, 61, i));
    const double ga = true_overall(world, a.sample(prompts.row_span(i), ra));
    const double gb = true_overall(world, b.sample(prompts.row_span(i), rb));
    if (ga > gb) {
      wins += 1.0;
    } else if (ga == gb) {
      wins += 0.5;
    }
  }
  return wins / static_cast<double>(prompts.rows());
}

}  // namespace smorm
