#include "smorm/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <sstream>

#include "smorm/checkpoint.hpp"
#include "smorm/error.hpp"
#include "smorm/mse_compare.hpp"
#include "smorm/parallel.hpp"
#include "smorm/stats.hpp"
#include "smorm/theory.hpp"

#ifndef SMORM_LAB_VERSION
#define SMORM_LAB_VERSION "unknown"
#endif

namespace smorm::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Seed streams. Each command draws everything from derive_seed(run.seed, s).
enum Stream : std::uint64_t {
  kSplitTrainPairs = 201,
  kSplitTrainAttrs,
  kSplitIdPairs,
  kSplitIdAttrs,
  kSplitOodPairs,
  kSplitOodAttrs,
  kModelInit = 102,
  kMoments = 301,
  kHeldOut,
  kLemma,
  kFisher,
  kFisherModel,
  kTheorem2,
  kBonPrompts = 401,
  kBonPolicy,
  kBonSweep,
  kPpoPrompts = 501,
  kPpoPolicy,
  kPpoTrain,
  kWinPrompts,
  kWinSample,
};

std::string num(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

json jnum(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json jvec(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(jnum(x));
  return a;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path.string(), j.dump(2) + "\n"); }

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw InvalidArgument("csv row width differs from header");
    rows_.push_back(cells);
  }
  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
      out += "\n";
    };
    line(columns_);
    for (const auto& r : rows_) line(r);
    return out;
  }
  void save(const fs::path& path) const { write_file_atomic(path.string(), str()); }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
}

// Resolved config plus a run log. Nothing time-dependent goes into either,
// so artifacts stay byte-identical across reruns.
void write_run_files(const RunConfig& cfg, const fs::path& out, const std::string& command, json extra = json::object()) {
  prepare_out(out);
  write_file_atomic((out / "config.ini").string(), config_to_ini(cfg));
  json log;
  log["tool"] = "smorm-lab";
  log["version"] = SMORM_LAB_VERSION;
  log["command"] = command;
  log["seed"] = cfg.run.seed;
  log["world_seed"] = cfg.world.seed;
  log["config_schema"] = cfg.run.schema;
  for (auto& [k, v] : extra.items()) log[k] = v;
  write_json(out / "run.json", log);
}

std::vector<std::string> attr_columns(std::size_t K) {
  std::vector<std::string> cols;
  for (std::size_t k = 1; k <= K; ++k) cols.push_back("attr_" + std::to_string(k));
  return cols;
}

std::string dist_tag(const PromptDistribution& d) { return d.tag; }

struct Splits {
  std::vector<PairwiseRecord> train_pairs, id_pairs, ood_pairs;
  std::vector<AttributeRecord> train_attrs, id_attrs, ood_attrs;
};

Splits generate_splits(const RunConfig& cfg, const WorldBundle& b) {
  const auto seed = cfg.run.seed;
  const auto& w = b.world;
  Splits s;
  Rng r1(derive_seed(seed, kSplitTrainPairs));
  s.train_pairs = gen_pairwise(w, cfg.data.n_train_pairs, b.id_dist, r1);
  Rng r2(derive_seed(seed, kSplitTrainAttrs));
  s.train_attrs = gen_multiattr(w, cfg.data.n_train_attrs, b.attr_dist, r2);
  Rng r3(derive_seed(seed, kSplitIdPairs));
  s.id_pairs = gen_pairwise(w, cfg.data.n_eval, b.id_dist, r3);
  Rng r4(derive_seed(seed, kSplitIdAttrs));
  s.id_attrs = gen_multiattr(w, cfg.data.n_eval, b.id_dist, r4);
  Rng r5(derive_seed(seed, kSplitOodPairs));
  s.ood_pairs = gen_pairwise(w, cfg.data.n_eval, b.ood_dist, r5);
  Rng r6(derive_seed(seed, kSplitOodAttrs));
  s.ood_attrs = gen_multiattr(w, cfg.data.n_eval, b.ood_dist, r6);
  return s;
}

Mat attr_inputs(const std::vector<AttributeRecord>& recs) {
  std::vector<Vec> rows;
  rows.reserve(recs.size());
  for (const auto& r : recs) rows.push_back(r.input);
  return Mat::from_rows(rows);
}

Mat pair_inputs(const std::vector<PairwiseRecord>& recs) {
  std::vector<Vec> rows;
  rows.reserve(2 * recs.size());
  for (const auto& r : recs) rows.push_back(r.input_chosen);
  for (const auto& r : recs) rows.push_back(r.input_rejected);
  return Mat::from_rows(rows);
}

json metrics_json(const HeldOutMetrics& m) {
  json j;
  j["mse_s"] = jnum(m.mse_s);
  j["mse_m"] = jnum(m.mse_m);
  j["pref_acc"] = jnum(m.pref_acc);
  return j;
}

// Same init stream, schedule and data as the train command, so a one-point
// sweep reproduces it.
SmormModel train_model(const RunConfig& cfg, std::size_t d_z, std::size_t K, const std::vector<PairwiseRecord>& pairs,
                       const std::vector<AttributeRecord>& attrs, TrainingHistory* hist_out) {
  Rng init(derive_seed(cfg.run.seed, kModelInit));
  SmormModel model(backbone_config(cfg, d_z), K, init);
  const LossConfig lc = loss_config(cfg);
  TrainingHistory hist = train(model, pairs, attrs, lc, cfg.train.adam, train_schedule(cfg));
  if (cfg.model.gating) {
    TrainSchedule gs = train_schedule(cfg);
    gs.steps = cfg.train.gating_steps;
    gs.seed = derive_seed(gs.seed, 7);
    train_gating(model, pairs, cfg.train.adam, gs);
  }
  if (lc.mode == TrainingMode::smorm && !pairs.empty() && cfg.train.steps > 0)
    calibrate_standardization(model, pair_inputs(pairs));
  if (hist_out) *hist_out = std::move(hist);
  return model;
}

void require_matching_world(const GoldWorld& world, std::size_t d_z, std::size_t K, const std::string& what) {
  if (world.d_z != d_z || world.K != K)
    throw ConfigError(what + " has d_z=" + std::to_string(d_z) + ", K=" + std::to_string(K) +
                      " but the configured world has d_z=" + std::to_string(world.d_z) +
                      ", K=" + std::to_string(world.K));
}

// Proxy scorer built from one or more checkpoints, or the gold pseudo-checkpoint.
struct Proxy {
  std::vector<std::unique_ptr<SmormModel>> models;
  BatchScorer scorer;
  std::string id;
};

Proxy load_proxy(const std::vector<std::string>& checkpoints, const GoldWorld& world, Strategy strategy,
                 EnsembleMode mode) {
  if (checkpoints.empty()) throw ConfigError("at least one --checkpoint is required");
  Proxy p;
  if (checkpoints.size() == 1 && checkpoints[0] == kGold) {
    p.scorer = [&world](const Mat& z) { return true_overall_batch(world, z); };
    p.id = kGold;
    return p;
  }
  for (const auto& path : checkpoints) {
    if (!fs::exists(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
    p.models.push_back(std::make_unique<SmormModel>(load_checkpoint(path)));
    require_matching_world(world, p.models.back()->input_dim(), p.models.back()->K(), "checkpoint '" + path + "'");
    p.id += (p.id.empty() ? "" : "+") + fs::path(path).parent_path().filename().string();
  }
  if (p.models.size() == 1) {
    p.scorer = make_scorer(*p.models[0], strategy);
  } else {
    auto ens = std::make_shared<Ensemble>();
    for (const auto& m : p.models) ens->members.push_back(m.get());
    ens->mode = mode;
    ens->member_strategy = strategy;
    p.scorer = [ens](const Mat& z) { return ens->score_batch(z); };
  }
  return p;
}

Mat sample_prompts(const WorldBundle& b, const std::string& which, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto& dist = which == "id" ? b.id_dist : b.ood_dist;
  return Mat::from_rows(sample_latents(b.world, n, dist, rng));
}

double tail_mean(std::span<const double> v, std::size_t n) {
  if (v.empty()) return 0.0;
  n = std::min(n, v.size());
  return mean(v.subspan(v.size() - n));
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  const fs::path out(out_dir);
  const WorldBundle b = build_world_bundle(cfg);
  const Splits s = generate_splits(cfg, b);
  write_run_files(cfg, out, "gen-data");
  const std::size_t d = b.world.d_z, K = b.world.K;
  write_records((out / "train.pairs.tsv").string(), s.train_pairs, d, K);
  write_records((out / "train.attrs.tsv").string(), s.train_attrs, d, K);
  write_records((out / "id_eval.pairs.tsv").string(), s.id_pairs, d, K);
  write_records((out / "id_eval.attrs.tsv").string(), s.id_attrs, d, K);
  write_records((out / "ood_eval.pairs.tsv").string(), s.ood_pairs, d, K);
  write_records((out / "ood_eval.attrs.tsv").string(), s.ood_attrs, d, K);

  json m;
  m["world"] = cfg.world.kind;
  m["d_z"] = d;
  m["K"] = K;
  json files = json::array();
  auto add = [&files](const std::string& name, const std::string& kind, std::size_t n, const std::string& tag) {
    files.push_back({{"file", name}, {"kind", kind}, {"records", n}, {"distribution", tag}});
  };
  add("train.pairs.tsv", "pairs", s.train_pairs.size(), dist_tag(b.id_dist));
  add("train.attrs.tsv", "attrs", s.train_attrs.size(), dist_tag(b.attr_dist));
  add("id_eval.pairs.tsv", "pairs", s.id_pairs.size(), dist_tag(b.id_dist));
  add("id_eval.attrs.tsv", "attrs", s.id_attrs.size(), dist_tag(b.id_dist));
  add("ood_eval.pairs.tsv", "pairs", s.ood_pairs.size(), dist_tag(b.ood_dist));
  add("ood_eval.attrs.tsv", "attrs", s.ood_attrs.size(), dist_tag(b.ood_dist));
  m["files"] = files;
  write_json(out / "manifest.json", m);
}

void cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
  const fs::path data(data_dir), out(out_dir);
  const LossConfig lc = loss_config(cfg);
  const bool need_attrs = lc.mode == TrainingMode::smorm || lc.mode == TrainingMode::multi_only;
  const fs::path pairs_path = data / "train.pairs.tsv", attrs_path = data / "train.attrs.tsv";
  if (lc.uses_pairs() && !fs::exists(pairs_path))
    throw ConfigError("mode " + to_string(lc.mode) + " needs '" + pairs_path.string() + "'");
  if (need_attrs && !fs::exists(attrs_path))
    throw ConfigError("mode " + to_string(lc.mode) + " needs '" + attrs_path.string() + "'");

  DatasetHeader hp, ha;
  std::vector<PairwiseRecord> pairs;
  std::vector<AttributeRecord> attrs;
  if (lc.uses_pairs()) pairs = read_pairs(pairs_path.string(), &hp);
  if (need_attrs) attrs = read_attrs(attrs_path.string(), &ha);
  const DatasetHeader& h = lc.uses_pairs() ? hp : ha;
  if (lc.uses_pairs() && need_attrs && (hp.d_z != ha.d_z || hp.K != ha.K))
    throw ConfigError("pairs and attrs files disagree on d_z or K");
  const WorldBundle b = build_world_bundle(cfg);
  require_matching_world(b.world, h.d_z, h.K, "dataset");

  TrainingHistory hist;
  const SmormModel model = train_model(cfg, h.d_z, h.K, pairs, attrs, &hist);
  write_run_files(cfg, out, "train", {{"data", data.string()}, {"mode", to_string(lc.mode)}});
  save_checkpoint((out / "checkpoint.json").string(), model);

  CsvTable t({"step", "bt_loss", "mse_loss", "total"});
  for (std::size_t i = 0; i < hist.step.size(); ++i)
    t.row({std::to_string(hist.step[i]), num(hist.bt_loss[i]), num(hist.mse_loss[i]), num(hist.total[i])});
  t.save(out / "history.csv");
  json side;
  side["columns"] = {"step", "bt_loss", "mse_loss", "total"};
  side["rows"] = hist.step.size();
  side["mode"] = to_string(lc.mode);
  side["seed"] = cfg.run.seed;
  side["schedule_seed"] = train_schedule(cfg).seed;
  side["init_seed"] = derive_seed(cfg.run.seed, kModelInit);
  write_json(out / "history.json", side);

  json ev;
  for (const std::string split : {"id_eval", "ood_eval"}) {
    const fs::path p = data / (split + ".attrs.tsv");
    if (!fs::exists(p)) continue;
    const auto recs = read_attrs(p.string());
    if (recs.size() < 2) continue;
    ev[split] = metrics_json(evaluate_held_out(model, b.world, attr_inputs(recs)));
  }
  write_json(out / "eval.json", ev);
}

void cmd_verify(const RunConfig& cfg, const std::string& checkpoint, const std::string& out_dir) {
  const fs::path out(out_dir);
  const auto& vc = cfg.verify;
  if (vc.theorem2_seeds > 0 && vc.theorem2_seeds < 10)
    throw ConfigError("verify.theorem2_seeds must be 0 or >= 10, got " + std::to_string(vc.theorem2_seeds));
  const WorldBundle b = build_world_bundle(cfg);
  const GoldWorld& world = b.world;
  const bool population = checkpoint == kPopulation;
  std::optional<SmormModel> model;
  if (!population) {
    if (!fs::exists(checkpoint)) throw ConfigError("checkpoint '" + checkpoint + "' does not exist");
    model = load_checkpoint(checkpoint);
    require_matching_world(world, model->input_dim(), model->K(), "checkpoint");
  }
  auto features = [&](const Mat& z) { return population ? z : model->embed(z); };
  auto rows = [](const Mat& m) {
    std::vector<Vec> v(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m.row_vec(i);
    return v;
  };
  write_run_files(cfg, out, "verify", {{"target", checkpoint}});

  // Moments: preference-ordered pairs for Σ_S, μ_S and attribute samples with
  // noiseless targets for Σ_M, C_M.
  Rng mr(derive_seed(cfg.run.seed, kMoments));
  const auto za = sample_latents(world, vc.n_moment, b.id_dist, mr);
  const auto zb = sample_latents(world, vc.n_moment, b.id_dist, mr);
  std::vector<Vec> chosen(vc.n_moment), rejected(vc.n_moment);
  for (std::size_t i = 0; i < vc.n_moment; ++i) {
    const bool a_wins = sample_preference(world, za[i], zb[i], mr) == 0;
    chosen[i] = a_wins ? za[i] : zb[i];
    rejected[i] = a_wins ? zb[i] : za[i];
  }
  const auto zm = sample_latents(world, vc.n_moment, b.attr_dist, mr);
  const Mat zm_mat = Mat::from_rows(zm);
  const auto fc = rows(features(Mat::from_rows(chosen)));
  const auto fr = rows(features(Mat::from_rows(rejected)));
  const auto fm = rows(features(zm_mat));
  const auto rm = rows(true_attributes_batch(world, zm_mat));
  const MomentReport mom = estimate_moments(fc, fr, fm, rm);
  const PopulationHeads heads = population_heads(mom, vc.ridge);

  Rng hr(derive_seed(cfg.run.seed, kHeldOut));
  const Mat z_eval = Mat::from_rows(sample_latents(world, vc.n_heldout, b.id_dist, hr));
  const auto f_eval = rows(features(z_eval));
  double B = mom.B;
  for (const auto& f : f_eval) B = std::max(B, norm2(f));
  const CouplingReport cp = coupling(mom, derive_seed(cfg.run.seed, kMoments, 1), B);
  const AssumptionCheck ac = check_assumptions(cp, f_eval);

  auto t1_json = [&](const Theorem1Report& r) {
    json j;
    j["n"] = r.n;
    j["violations"] = r.violations;
    j["violations_rigorous"] = r.violations_rigorous;
    j["violations_statement"] = r.violations_statement;
    j["min_slack"] = jnum(r.min_slack);
    j["min_slack_rigorous"] = jnum(r.min_slack_rigorous);
    j["min_slack_statement"] = jnum(r.min_slack_statement);
    j["max_abs_residual"] = jnum(r.max_abs_residual);
    return j;
  };
  json t1;
  t1["target"] = checkpoint;
  t1["features"] = population ? "latent" : "checkpoint embedding";
  t1["assumptions"] = {{"lambda_min_S", jnum(cp.lambda_min_S)},
                       {"lambda_ok", ac.lambda_ok},
                       {"one_t_alpha", jnum(cp.one_t_alpha)},
                       {"correlation_ok", ac.correlation_ok},
                       {"B", jnum(cp.B)},
                       {"bounded_ok", ac.bounded_ok},
                       {"all", ac.all()}};
  t1["c"] = jnum(cp.c);
  t1["beta"] = jvec(cp.beta);
  t1["alpha"] = jvec(cp.alpha);
  t1["E_op"] = jnum(cp.E_op);
  t1["eps"] = jnum(cp.eps);
  t1["eps_over_K"] = jnum(cp.eps_proof);
  t1["eps_over_sqrt_K"] = jnum(cp.eps_rigorous);
  t1["pure_sorm"] = cp.pure_sorm;
  if (cp.pure_sorm) t1["note"] = "C_M = 0: no multi-attribute signal, the bound degenerates to c = 0";
  t1["population_heads"] = t1_json(verify_theorem1(heads.w_S, heads.w_M, cp, f_eval, vc.tolerance));
  if (model) {
    const Mat& ws = model->params().at("head.single");
    t1["trained_heads"] = t1_json(verify_theorem1(ws.col_vec(0), model->params().at("head.multi"), cp, f_eval,
                                                  vc.tolerance));
  }
  write_json(out / "theorem1.json", t1);

  // Lemma: population mode perturbs the gold scores with Gaussian errors;
  // with a checkpoint the model's own F and L scores are the predictions.
  Rng lr(derive_seed(cfg.run.seed, kLemma));
  const std::size_t n_items = 2 * vc.lemma_pairs;
  const Mat z_lemma = Mat::from_rows(sample_latents(world, n_items, b.id_dist, lr));
  const Vec g_s = true_overall_batch(world, z_lemma);
  const Mat g_attr = true_attributes_batch(world, z_lemma);
  Vec g_m(n_items), r_s(n_items), r_m(n_items);
  for (std::size_t i = 0; i < n_items; ++i) g_m[i] = mean(g_attr.row_span(i));
  if (model) {
    r_s = model->score_batch(z_lemma, Strategy::F);
    r_m = model->score_batch(z_lemma, Strategy::L);
  } else {
    for (std::size_t i = 0; i < n_items; ++i) {
      r_s[i] = g_s[i] + vc.lemma_error_sd * lr.normal();
      r_m[i] = g_m[i] + vc.lemma_error_sd * lr.normal();
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs(vc.lemma_pairs);
  for (std::size_t i = 0; i < vc.lemma_pairs; ++i) pairs[i] = {2 * i, 2 * i + 1};
  const LemmaReport lm = verify_lemma1(r_s, r_m, g_s, g_m, pairs);
  json l1;
  l1["pairs"] = lm.pairs;
  l1["predictions"] = model ? "checkpoint F and L scores" : "gold plus Gaussian error";
  l1["single"] = {{"violations", lm.single_violations},
                  {"min_slack", jnum(lm.single_min_slack)},
                  {"max_slack", jnum(lm.single_max_slack)},
                  {"mean_lhs", jnum(lm.single_mean_lhs)},
                  {"expectation_rhs", jnum(lm.single_expect_rhs)}};
  l1["multi"] = {{"violations", lm.multi_violations},
                 {"min_slack", jnum(lm.multi_min_slack)},
                 {"max_slack", jnum(lm.multi_max_slack)},
                 {"mean_lhs", jnum(lm.multi_mean_lhs)},
                 {"expectation_rhs", jnum(lm.multi_expect_rhs)}};
  write_json(out / "lemma1.json", l1);

  // Fisher ordering on the checkpoint, or on a fresh model of the configured shape.
  SmormModel fm_model;
  if (model) {
    fm_model = *model;
  } else {
    Rng ir(derive_seed(cfg.run.seed, kFisherModel));
    fm_model = SmormModel(backbone_config(cfg, world.d_z), world.K, ir);
  }
  Rng fr_rng(derive_seed(cfg.run.seed, kFisher));
  const Mat z_f = Mat::from_rows(sample_latents(world, vc.fisher_samples, b.id_dist, fr_rng));
  const auto subset = default_fisher_subset(fm_model);
  const HeadGradients grads = head_gradients(fm_model, z_f, subset);
  Vec sigma(world.K + 1);
  for (std::size_t k = 0; k <= world.K; ++k) sigma[k] = world.noise_cov(k, k);
  const FisherReport fisher = fisher_matrices(grads, sigma);
  json fj;
  fj["model"] = model ? checkpoint : "fresh initialization";
  fj["parameter_subset"] = subset;
  fj["n"] = fisher.n;
  fj["p"] = fisher.p;
  fj["lambda_min_delta"] = jnum(fisher.lambda_min_Delta);
  fj["psd_ok"] = fisher.lambda_min_Delta >= -1e-10;
  fj["g0_delta_g0"] = jnum(fisher.g0_delta_g0);
  fj["note"] = "Fisher matrices use the listed parameter subset, not every shared parameter";
  write_json(out / "fisher.json", fj);

  if (vc.theorem2_seeds > 0) {
    MseCompareConfig mc;
    mc.backbone = backbone_config(cfg, world.d_z);
    mc.n_S = cfg.data.n_train_pairs;
    mc.n_M = cfg.data.n_train_attrs;
    mc.n_eval = cfg.data.n_eval;
    mc.seeds = vc.theorem2_seeds;
    mc.schedule = train_schedule(cfg);
    mc.adam = cfg.train.adam;
    mc.lambda_multi = cfg.train.lambda_multi;
    mc.seed = derive_seed(cfg.run.seed, kTheorem2);
    const MseComparisonReport r = compare_mse_empirical(world, b.id_dist, mc);
    json t2;
    t2["seeds"] = r.seeds;
    t2["mse_s"] = {{"single_only", jvec(r.single.mse_s)}, {"smorm", jvec(r.smorm.mse_s)}};
    t2["mse_m"] = {{"multi_only", jvec(r.multi.mse_m)}, {"smorm", jvec(r.smorm.mse_m)}};
    t2["wins_s"] = r.wins_s;
    t2["wins_m"] = r.wins_m;
    t2["p_s"] = jnum(r.p_s);
    t2["p_m"] = jnum(r.p_m);
    t2["significant_s"] = r.significant_s;
    t2["significant_m"] = r.significant_m;
    t2["attribute_correlation"] = jnum(r.attribute_correlation);
    t2["assumption_failed"] = r.assumption_failed;
    write_json(out / "theorem2.json", t2);
  }
}

void cmd_bon(const RunConfig& cfg, const std::vector<std::string>& checkpoints, const std::string& out_dir) {
  const fs::path out(out_dir);
  const auto& bc = cfg.bon;
  const WorldBundle b = build_world_bundle(cfg);
  const Proxy proxy = load_proxy(checkpoints, b.world, bc.strategy, bc.ensemble);
  const Mat prompts = sample_prompts(b, bc.prompts, bc.n_prompts, derive_seed(cfg.run.seed, kBonPrompts));
  if (prompts.rows() == 0) throw ConfigError("bon.n_prompts must be >= 1");
  Rng pr(derive_seed(cfg.run.seed, kBonPolicy));
  const SyntheticPolicy policy(b.world.d_z, bc.policy_hidden, Vec(b.world.d_z, bc.policy_std), b.world.feature_bound,
                               pr);
  const auto n_values = default_n_values(bc.n_max, bc.n_points);
  const std::uint64_t sweep_seed = derive_seed(cfg.run.seed, kBonSweep);
  const BoNSweep sw = bon_sweep(policy, prompts, n_values, proxy.scorer, b.world, sweep_seed);
  const BonVerdict v = bon_verdict(sw, bc.min_drop);

  write_run_files(cfg, out, "bon", {{"checkpoints", checkpoints}});
  std::vector<std::string> cols{"n", "kl", "proxy", "gold"};
  for (auto& c : attr_columns(b.world.K)) cols.push_back(c);
  CsvTable t(cols);
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    std::vector<std::string> r{std::to_string(n_values[i]), num(sw.kl[i]), num(sw.proxy[i]), num(sw.gold[i])};
    for (double a : sw.attributes[i]) r.push_back(num(a));
    t.row(r);
  }
  t.save(out / "bon.csv");
  json j;
  j["columns"] = cols;
  j["proxy"] = proxy.id;
  j["strategy"] = to_string(bc.strategy);
  j["prompts"] = bc.prompts;
  j["n_prompts"] = bc.n_prompts;
  j["seeds"] = {{"run", cfg.run.seed},
                {"prompts", derive_seed(cfg.run.seed, kBonPrompts)},
                {"policy", derive_seed(cfg.run.seed, kBonPolicy)},
                {"sweep", sweep_seed}};
  j["verdict"] = {{"hacked", v.hacked},
                  {"gold_drop", jnum(v.gold_drop)},
                  {"spearman_gold_logn", jnum(v.spearman_gold_logn)},
                  {"proxy_rising", v.proxy_rising},
                  {"min_drop", jnum(bc.min_drop)}};
  write_json(out / "bon.json", j);
}

void cmd_ppo(const RunConfig& cfg, const std::vector<std::string>& checkpoints, const std::string& out_dir) {
  const fs::path out(out_dir);
  const auto& pc = cfg.ppo;
  const WorldBundle b = build_world_bundle(cfg);
  const Proxy proxy = load_proxy(checkpoints, b.world, pc.strategy, pc.ensemble);
  const Mat prompts = sample_prompts(b, pc.prompts, pc.n_prompts, derive_seed(cfg.run.seed, kPpoPrompts));
  if (prompts.rows() == 0) throw ConfigError("ppo.n_prompts must be >= 1");
  Rng pr(derive_seed(cfg.run.seed, kPpoPolicy));
  const SyntheticPolicy initial(b.world.d_z, pc.policy_hidden, Vec(b.world.d_z, pc.policy_std),
                                b.world.feature_bound, pr);
  SyntheticPolicy policy = initial;
  const std::uint64_t train_seed = derive_seed(cfg.run.seed, kPpoTrain);
  TrajectoryLog log = ppo_train(policy, proxy.scorer, b.world, prompts, pc.ppo, train_seed);
  log.proxy_id = proxy.id;
  log.world_id = cfg.world.kind + ":" + std::to_string(cfg.world.seed);
  log.tag = pc.prompts;
  const HackingVerdict hv = detect_hacking(log, pc.window, pc.persistence);
  const Mat win_prompts = sample_prompts(b, pc.prompts, pc.win_rate_prompts, derive_seed(cfg.run.seed, kWinPrompts));
  const double wr = win_prompts.rows() ? win_rate(policy, initial, win_prompts, b.world,
                                                  derive_seed(cfg.run.seed, kWinSample))
                                       : std::nan("");

  write_run_files(cfg, out, "ppo", {{"checkpoints", checkpoints}});
  std::vector<std::string> cols{"step", "kl", "proxy", "gold"};
  for (auto& c : attr_columns(b.world.K)) cols.push_back(c);
  CsvTable t(cols);
  for (std::size_t i = 0; i < log.size(); ++i) {
    std::vector<std::string> r{std::to_string(log.step[i]), num(log.kl[i]), num(log.proxy[i]), num(log.gold[i])};
    for (double a : log.attributes[i]) r.push_back(num(a));
    t.row(r);
  }
  t.save(out / "trajectory.csv");

  const Vec gold_n = normalize_curve(log.gold);
  const Vec proxy_n = normalize_curve(log.proxy);
  json j;
  j["columns"] = cols;
  j["proxy"] = log.proxy_id;
  j["world"] = log.world_id;
  j["prompts"] = log.tag;
  j["strategy"] = to_string(pc.strategy);
  j["steps"] = log.size();
  j["seeds"] = {{"run", cfg.run.seed},
                {"prompts", derive_seed(cfg.run.seed, kPpoPrompts)},
                {"policy", derive_seed(cfg.run.seed, kPpoPolicy)},
                {"train", train_seed}};
  json verdict = {{"hacked", hv.hacked},
                  {"divergence_step", hv.divergence_step ? json(*hv.divergence_step) : json(nullptr)},
                  {"final_proxy_slope", jnum(hv.final_proxy_slope)},
                  {"final_gold_slope", jnum(hv.final_gold_slope)},
                  {"window", pc.window},
                  {"persistence", pc.persistence}};
  j["verdict"] = verdict;
  j["final_gold_gain"] = jnum(tail_mean(gold_n, 10));
  j["final_proxy_gain"] = jnum(tail_mean(proxy_n, 10));
  j["final_kl"] = jnum(log.kl.empty() ? 0.0 : log.kl.back());
  j["drift"] = jnum(policy.drift());
  j["win_rate_vs_initial"] = jnum(wr);
  write_json(out / "ppo.json", j);
}

void cmd_sweep(const RunConfig& cfg, const std::string& out_dir) {
  const fs::path out(out_dir);
  const auto& sc = cfg.sweep;
  if (sc.values.empty()) throw ConfigError("sweep.values must not be empty");
  const WorldBundle b = build_world_bundle(cfg);
  const Splits s = generate_splits(cfg, b);
  const Mat id_eval = attr_inputs(s.id_attrs);
  const Mat ood_eval = attr_inputs(s.ood_attrs);
  if (id_eval.rows() < 2) throw ConfigError("data.n_eval must be >= 2 for a sweep");
  write_run_files(cfg, out, "sweep");

  const std::size_t V = sc.values.size();
  std::vector<RunConfig> grid(V, cfg);
  for (std::size_t i = 0; i < V; ++i) {
    grid[i].train.lambda_multi = sc.values[i];
    write_file_atomic((out / ("grid_" + std::to_string(i) + ".ini")).string(), config_to_ini(grid[i]));
  }
  std::vector<HeldOutMetrics> id_m(V), ood_m(V);
  parallel_for(V, [&](std::size_t i) {
    const SmormModel m = train_model(grid[i], b.world.d_z, b.world.K, s.train_pairs, s.train_attrs, nullptr);
    id_m[i] = evaluate_held_out(m, b.world, id_eval);
    if (ood_eval.rows() >= 2) ood_m[i] = evaluate_held_out(m, b.world, ood_eval);
  });

  CsvTable t({"lambda_multi", "pref_acc_id", "pref_acc_ood", "mse_s", "mse_m"});
  for (std::size_t i = 0; i < V; ++i)
    t.row({num(sc.values[i]), num(id_m[i].pref_acc), num(ood_m[i].pref_acc), num(id_m[i].mse_s), num(id_m[i].mse_m)});
  t.save(out / "sweep.csv");

  // Inner-grid spread and edge degradation, on ID pairwise accuracy of F.
  Vec inner_acc;
  for (std::size_t i = 0; i < V; ++i)
    if (std::find(sc.inner.begin(), sc.inner.end(), sc.values[i]) != sc.inner.end()) inner_acc.push_back(id_m[i].pref_acc);
  json j;
  j["parameter"] = sc.parameter;
  j["values"] = sc.values;
  j["inner"] = sc.inner;
  j["strategy"] = "F";
  if (!inner_acc.empty()) {
    const auto [lo, hi] = std::minmax_element(inner_acc.begin(), inner_acc.end());
    const double spread = *hi - *lo;
    const double inner_mean = mean(inner_acc);
    j["inner_spread"] = jnum(spread);
    j["inner_stable"] = spread < sc.max_inner_spread;
    json edges = json::array();
    for (std::size_t i = 0; i < V; ++i) {
      if (std::find(sc.inner.begin(), sc.inner.end(), sc.values[i]) != sc.inner.end()) continue;
      const double drop = inner_mean - id_m[i].pref_acc;
      edges.push_back({{"lambda_multi", sc.values[i]},
                       {"pref_acc_id", jnum(id_m[i].pref_acc)},
                       {"drop_vs_inner_mean", jnum(drop)},
                       {"degraded", drop > sc.edge_drop}});
    }
    j["edges"] = edges;
  } else {
    j["inner_spread"] = nullptr;
    j["inner_stable"] = nullptr;
    j["edges"] = json::array();
  }
  write_json(out / "sweep.json", j);
}

namespace {

struct Curve {
  std::string name;
  std::string x_column;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

Curve read_curve(const fs::path& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  Curve c;
  c.name = name;
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (c.columns.empty()) {
      c.columns = cells;
      c.x_column = cells.at(0);
      continue;
    }
    if (cells.size() != c.columns.size()) throw ParseError(lineno, path.string() + ": wrong number of cells");
    std::vector<double> row;
    for (const auto& cell : cells) {
      double x = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw ParseError(lineno, path.string() + ": bad number '" + cell + "'");
      row.push_back(x);
    }
    c.rows.push_back(std::move(row));
  }
  return c;
}

}  // namespace

void cmd_report(const std::vector<std::string>& runs, const std::string& out_dir) {
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  const fs::path out(out_dir);
  const std::vector<std::pair<std::string, std::string>> known{
      {"bon.csv", "bon"}, {"trajectory.csv", "ppo"}, {"history.csv", "history"}, {"sweep.csv", "sweep"}};

  CsvTable t({"run_id", "curve", "x", "metric", "value"});
  json summary = json::array();
  std::map<std::string, int> seen_ids;
  for (const auto& r : runs) {
    const fs::path dir(r);
    if (!fs::is_directory(dir)) throw ConfigError("run directory '" + r + "' does not exist");
    std::string id = fs::path(r).lexically_normal().filename().string();
    if (id.empty() || id == ".") id = fs::path(r).lexically_normal().parent_path().filename().string();
    if (const int k = seen_ids[id]++; k > 0) id += "#" + std::to_string(k);
    json entry;
    entry["run_id"] = id;
    entry["path"] = r;
    json curves = json::array();
    for (const auto& [file, name] : known) {
      if (!fs::exists(dir / file)) continue;
      const Curve c = read_curve(dir / file, name);
      for (std::size_t col = 1; col < c.columns.size(); ++col) {
        const double first = c.rows.empty() ? 0.0 : c.rows.front()[col];
        for (const auto& row : c.rows) t.row({id, name, num(row[0]), c.columns[col], num(row[col] - first)});
      }
      curves.push_back({{"curve", name}, {"x", c.x_column}, {"rows", c.rows.size()}});
    }
    entry["curves"] = curves;
    for (const std::string v : {"bon.json", "ppo.json", "sweep.json", "theorem1.json", "theorem2.json"}) {
      if (!fs::exists(dir / v)) continue;
      std::ifstream in(dir / v);
      try {
        entry[v] = json::parse(in);
      } catch (const json::exception& e) {
        throw ParseError(1, (dir / v).string() + ": " + e.what());
      }
    }
    summary.push_back(entry);
  }
  prepare_out(out);
  t.save(out / "report.csv");
  json j;
  j["normalization"] = "each metric series minus its first value";
  j["runs"] = summary;
  write_json(out / "report.json", j);
}

int run(int argc, char** argv) {
  CLI::App app{"smorm-lab: synthetic reward-model experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(SMORM_LAB_VERSION));

  std::string config_path, out_dir, mode, strategy, data_dir, verify_target = kPopulation;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> checkpoints, overrides, run_dirs;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file (defaults when omitted)");
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "master seed, overrides [run] seed");
    sub->add_option("--set", overrides, "section.key=value override, repeatable");
  };
  auto* gen = app.add_subcommand("gen-data", "generate train / ID-eval / OOD-eval datasets");
  common(gen);
  auto* trn = app.add_subcommand("train", "train a reward model");
  common(trn);
  trn->add_option("--data", data_dir, "directory written by gen-data")->required();
  trn->add_option("--mode", mode, "smorm | single_only | multi_only | margin | label_smooth");
  auto* ver = app.add_subcommand("verify", "check the theory against population or trained heads");
  common(ver);
  ver->add_option("--checkpoint", verify_target, "checkpoint.json or 'population'");
  auto* bon = app.add_subcommand("bon", "Best-of-N sweep against a proxy");
  common(bon);
  bon->add_option("--checkpoint", checkpoints, "proxy checkpoint(s) or 'gold'")->required();
  bon->add_option("--strategy", strategy, "F | L | M | gated");
  auto* ppo = app.add_subcommand("ppo", "PPO against a proxy");
  common(ppo);
  ppo->add_option("--checkpoint", checkpoints, "proxy checkpoint(s) or 'gold'")->required();
  ppo->add_option("--strategy", strategy, "F | L | M | gated");
  auto* swp = app.add_subcommand("sweep", "lambda_multi sweep");
  common(swp);
  auto* rep = app.add_subcommand("report", "merge run directories into normalized long-format curves");
  rep->add_option("--out", out_dir, "output directory")->required();
  rep->add_option("runs", run_dirs, "run directories")->required();

  auto fail = [](const std::string& kind, const std::string& msg, int code) {
    json e;
    e["error"] = kind;
    e["message"] = msg;
    e["exit_code"] = code;
    std::cerr << e.dump() << "\n";
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what(), 2);
  }

  try {
    if (rep->parsed()) {
      cmd_report(run_dirs, out_dir);
      return 0;
    }
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      const auto dot = o.find('.');
      if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("--set expects section.key=value, got '" + o + "'");
      set_config_value(cfg, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
    }
    if (seed) cfg.run.seed = *seed;
    if (!mode.empty()) set_config_value(cfg, "train", "mode", mode);
    if (!strategy.empty()) {
      set_config_value(cfg, "bon", "strategy", strategy);
      set_config_value(cfg, "ppo", "strategy", strategy);
    }
    cfg.validate();

    if (gen->parsed()) cmd_gen_data(cfg, out_dir);
    if (trn->parsed()) cmd_train(cfg, data_dir, out_dir);
    if (ver->parsed()) cmd_verify(cfg, verify_target, out_dir);
    if (bon->parsed()) cmd_bon(cfg, checkpoints, out_dir);
    if (ppo->parsed()) cmd_ppo(cfg, checkpoints, out_dir);
    if (swp->parsed()) cmd_sweep(cfg, out_dir);
    return 0;
  } catch (const ConfigError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 3);
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), 3);
  }
}

}  // namespace smorm::cli
