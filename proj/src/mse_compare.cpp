#include "smorm/mse_compare.hpp"

#include <algorithm>

#include "smorm/error.hpp"
#include "smorm/parallel.hpp"
#include "smorm/stats.hpp"

namespace smorm {

HeldOutMetrics evaluate_held_out(const SmormModel& model, const GoldWorld& world, const Mat& eval_inputs) {
  const std::size_t n = eval_inputs.rows();
  if (n < 2) throw InsufficientSamples("evaluate_held_out needs >= 2 inputs");
  const Mat feats = model.embed(eval_inputs);
  const Vec f = model.single_scores_from_features(feats);
  const Mat attrs = model.attribute_scores_from_features(feats);
  const Vec gold = true_overall_batch(world, eval_inputs);
  const Mat gold_attrs = true_attributes_batch(world, eval_inputs);

  // Pairwise-trained scores are only defined up to a shift.
  const double mf = mean(f), mg = mean(gold);
  HeldOutMetrics m;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (f[i] - mf) - (gold[i] - mg);
    m.mse_s += e * e;
    for (std::size_t k = 0; k < model.K(); ++k) {
      const double ek = attrs(i, k) - gold_attrs(i, k);
      m.mse_m += ek * ek;
    }
  }
  m.mse_s /= static_cast<double>(n);
  m.mse_m /= static_cast<double>(n * model.K());
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i + 1 < n; i += 2) {
    const double dp = f[i] - f[i + 1];
    const double dg = gold[i] - gold[i + 1];
    if (dg == 0.0) continue;
    ++total;
    if ((dp > 0.0) == (dg > 0.0) && dp != 0.0) ++agree;
  }
  m.pref_acc = total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
  return m;
}

MseComparisonReport compare_mse_empirical(const GoldWorld& world, const PromptDistribution& dist,
                                          const MseCompareConfig& cfg) {
  if (cfg.seeds < 10) throw InsufficientSamples("compare_mse_empirical needs >= 10 seeds, got " + std::to_string(cfg.seeds));
  if (cfg.backbone.input_dim != world.d_z) throw DimensionMismatch("backbone input_dim must equal world d_z");
  const std::size_t S = cfg.seeds;
  MseComparisonReport rep;
  rep.seeds = S;
  for (auto* r : {&rep.single, &rep.multi, &rep.smorm}) {
    r->mse_s.assign(S, 0.0);
    r->mse_m.assign(S, 0.0);
    r->pref_acc.assign(S, 0.0);
  }

  parallel_for(S, [&](std::size_t s) {
    Rng data_rng(derive_seed(cfg.seed, 41, s));
    const auto pairs = gen_pairwise(world, cfg.n_S, dist, data_rng);
    const auto attrs = gen_multiattr(world, cfg.n_M, dist, data_rng);
    const Mat eval = Mat::from_rows(sample_latents(world, cfg.n_eval, dist, data_rng));
    Rng init_rng(derive_seed(cfg.seed, 42, s));
    const SmormModel init(cfg.backbone, world.K, init_rng);
    TrainSchedule sched = cfg.schedule;
    sched.seed = derive_seed(cfg.seed, 43, s);

    auto run = [&](TrainingMode mode, RegimeResult& out) {
      SmormModel m = init;
      LossConfig lc;
      lc.mode = mode;
      lc.lambda_multi = cfg.lambda_multi;
      train(m, pairs, attrs, lc, cfg.adam, sched);
      const HeldOutMetrics h = evaluate_held_out(m, world, eval);
      out.mse_s[s] = h.mse_s;
      out.mse_m[s] = h.mse_m;
      out.pref_acc[s] = h.pref_acc;
    };
    run(TrainingMode::single_only, rep.single);
    run(TrainingMode::multi_only, rep.multi);
    run(TrainingMode::smorm, rep.smorm);
  });

  for (std::size_t s = 0; s < S; ++s) {
    if (rep.smorm.mse_s[s] < rep.single.mse_s[s]) ++rep.wins_s;
    if (rep.smorm.mse_m[s] < rep.multi.mse_m[s]) ++rep.wins_m;
  }
  rep.p_s = sign_test_p(rep.wins_s, S);
  rep.p_m = sign_test_p(rep.wins_m, S);
  rep.significant_s = rep.p_s < 0.05;
  rep.significant_m = rep.p_m < 0.05;

  Rng check(derive_seed(cfg.seed, 44));
  const Mat probe = Mat::from_rows(sample_latents(world, std::max<std::size_t>(cfg.n_eval, 1000), dist, check));
  const Vec gold = true_overall_batch(world, probe);
  const Mat ga = true_attributes_batch(world, probe);
  Vec avg(probe.rows());
  for (std::size_t i = 0; i < probe.rows(); ++i) {
    double a = 0.0;
    for (std::size_t k = 0; k < world.K; ++k) a += ga(i, k);
    avg[i] = a / static_cast<double>(world.K);
  }
  rep.attribute_correlation = pearson(gold, avg);
  rep.assumption_failed = rep.attribute_correlation < 0.1;
  return rep;
}

}  // namespace smorm
