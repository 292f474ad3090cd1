#include "smorm/train.hpp"

#include <cmath>
#include <numeric>

#include "smorm/error.hpp"

namespace smorm {

namespace {

bool is_gate(const std::string& name) { return name.rfind("gate.", 0) == 0; }

ad::ParamStore select(const ad::ParamStore& all, bool gate) {
  ad::ParamStore out;
  for (const auto& [name, value] : all)
    if (is_gate(name) == gate) out.add(name, value);
  return out;
}

void write_back(ad::ParamStore& all, const ad::ParamStore& part) {
  for (const auto& [name, value] : part) all.at(name) = value;
}

Mat pair_inputs(std::span<const PairwiseRecord> batch) {
  // Chosen rows first, then rejected rows, so one backbone pass serves both.
  Mat x(2 * batch.size(), batch.front().input_chosen.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::copy(batch[i].input_chosen.begin(), batch[i].input_chosen.end(), x.row_span(i).begin());
    std::copy(batch[i].input_rejected.begin(), batch[i].input_rejected.end(),
              x.row_span(batch.size() + i).begin());
  }
  return x;
}

ad::Var pairwise_objective(ad::Var delta, const LossConfig& cfg) {
  switch (cfg.mode) {
    case TrainingMode::margin: return ad::margin_loss(delta, cfg.margin);
    case TrainingMode::label_smooth: return ad::label_smooth_loss(delta, cfg.label_smooth_eps);
    default: return ad::bt_loss(delta);
  }
}

template <class R>
std::vector<R> gather(std::span<const R> data, Shuffler& sh, std::size_t count) {
  std::vector<R> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(data[sh.next()]);
  return out;
}

}  // namespace

JointLoss joint_loss(ad::Tape& tape, const ad::BoundParams& p, const SmormModel& model,
                     std::span<const PairwiseRecord> batch_s, std::span<const AttributeRecord> batch_m,
                     const LossConfig& cfg) {
  const bool want_s = cfg.uses_pairs();
  const bool want_m = cfg.mode == TrainingMode::smorm || cfg.mode == TrainingMode::multi_only;
  if (want_s && batch_s.empty()) throw EmptyBatch("joint_loss: empty pairwise batch in mode " + to_string(cfg.mode));
  if (want_m && batch_m.empty()) throw EmptyBatch("joint_loss: empty attribute batch in mode " + to_string(cfg.mode));

  JointLoss out{tape.scalar(0.0), tape.scalar(0.0), tape.scalar(0.0)};
  if (want_s) {
    const std::size_t n = batch_s.size();
    ad::Var scores = SmormModel::single_head(p, model.embed(p, tape.constant(pair_inputs(batch_s))));
    ad::Var delta = ad::sub(ad::slice_rows(scores, 0, n), ad::slice_rows(scores, n, n));
    out.pair_term = pairwise_objective(delta, cfg);
  }
  if (want_m) {
    std::vector<Vec> xs, ys;
    for (const auto& r : batch_m) {
      if (r.scores.size() != model.K()) throw DimensionMismatch("joint_loss: attribute record K differs from model");
      xs.push_back(r.input);
      ys.push_back(r.scores);
    }
    ad::Var pred = SmormModel::multi_head(p, model.embed(p, tape.constant(Mat::from_rows(xs))));
    out.mse_term = ad::mse_loss(pred, Mat::from_rows(ys));
  }
  if (want_s && want_m) {
    out.total = ad::add(out.pair_term, ad::scale(out.mse_term, cfg.lambda_multi));
  } else if (want_s) {
    out.total = out.pair_term;
  } else {
    out.total = out.mse_term;
  }
  return out;
}

Shuffler::Shuffler(std::size_t n, Rng rng) : order_(n), rng_(std::move(rng)) {
  if (n == 0) throw EmptyInput("Shuffler: empty dataset");
  std::iota(order_.begin(), order_.end(), 0);
  reshuffle();
}

void Shuffler::reshuffle() {
  for (std::size_t i = order_.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng_.below(i));
    std::swap(order_[i - 1], order_[j]);
  }
  pos_ = 0;
}

std::size_t Shuffler::next() {
  if (pos_ == order_.size()) {
    ++epoch_;
    reshuffle();
  }
  return order_[pos_++];
}

TrainingHistory train(SmormModel& model, std::span<const PairwiseRecord> data_s,
                      std::span<const AttributeRecord> data_m, const LossConfig& loss_cfg,
                      const AdamConfig& adam_cfg, const TrainSchedule& schedule) {
  loss_cfg.validate();
  adam_cfg.validate();
  const bool want_s = loss_cfg.uses_pairs();
  const bool want_m = loss_cfg.mode == TrainingMode::smorm || loss_cfg.mode == TrainingMode::multi_only;
  TrainingHistory hist;
  model.loss = loss_cfg;
  if (schedule.steps == 0) return hist;
  if (want_s && data_s.empty()) throw EmptyBatch("train: no pairwise data for mode " + to_string(loss_cfg.mode));
  if (want_m && data_m.empty()) throw EmptyBatch("train: no attribute data for mode " + to_string(loss_cfg.mode));
  if (schedule.batch_s == 0 || schedule.batch_m == 0) throw InvalidArgument("train: batch sizes must be >= 1");

  std::optional<Shuffler> sh_s, sh_m;
  if (want_s) sh_s.emplace(data_s.size(), Rng(derive_seed(schedule.seed, 1)));
  if (want_m) sh_m.emplace(data_m.size(), Rng(derive_seed(schedule.seed, 2)));

  ad::ParamStore trainable = select(model.params(), false);
  AdamState state = AdamState::zeros_like(trainable);

  for (std::size_t s = 0; s < schedule.steps; ++s) {
    std::vector<PairwiseRecord> bs;
    std::vector<AttributeRecord> bm;
    if (want_s) bs = gather(data_s, *sh_s, schedule.batch_s);
    if (want_m) bm = gather(data_m, *sh_m, schedule.batch_m);

    ad::Tape tape;
    auto bound = ad::bind(tape, trainable, true);
    JointLoss jl = joint_loss(tape, bound, model, bs, bm, loss_cfg);
    const double total = jl.total.scalar();
    if (!std::isfinite(total)) throw NonFiniteLoss("train: non-finite loss at step " + std::to_string(s));
    tape.backward(jl.total);
    const ad::Gradient g = ad::collect_gradient(tape, bound, trainable);
    adam_step(trainable, g, state, adam_cfg, s, schedule.steps);

    hist.step.push_back(model.step + s);
    hist.bt_loss.push_back(jl.pair_term.scalar());
    hist.mse_loss.push_back(jl.mse_term.scalar());
    hist.total.push_back(total);
  }
  write_back(model.params(), trainable);
  model.step += schedule.steps;
  Rng tail(derive_seed(schedule.seed, 3, model.step));
  model.rng_state = tail.serialize();
  return hist;
}

TrainingHistory train_gating(SmormModel& model, std::span<const PairwiseRecord> data_s,
                             const AdamConfig& adam_cfg, const TrainSchedule& schedule) {
  adam_cfg.validate();
  TrainingHistory hist;
  if (!model.has_gating()) {
    Rng init(derive_seed(schedule.seed, 4));
    model.add_gating(init);
  }
  if (schedule.steps == 0) return hist;
  if (data_s.empty()) throw EmptyBatch("train_gating: no pairwise data");

  // The backbone and heads are frozen, so features and attribute scores of
  // every record can be computed once.
  const Mat x = pair_inputs(data_s);
  const Mat feats = model.embed(x);
  const Mat attrs = model.attribute_scores_from_features(feats);
  const std::size_t n = data_s.size();

  ad::ParamStore gate_params = select(model.params(), true);
  AdamState state = AdamState::zeros_like(gate_params);
  Shuffler sh(n, Rng(derive_seed(schedule.seed, 5)));

  for (std::size_t s = 0; s < schedule.steps; ++s) {
    const std::size_t b = schedule.batch_s;
    Mat bf(2 * b, feats.cols()), ba(2 * b, attrs.cols());
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t r = sh.next();
      for (std::size_t half = 0; half < 2; ++half) {
        const std::size_t src = r + half * n;
        const std::size_t dst = i + half * b;
        std::copy(feats.row_span(src).begin(), feats.row_span(src).end(), bf.row_span(dst).begin());
        std::copy(attrs.row_span(src).begin(), attrs.row_span(src).end(), ba.row_span(dst).begin());
      }
    }
    ad::Tape tape;
    auto bound = ad::bind(tape, gate_params, true);
    ad::Var gate = model.gate(bound, tape.constant(bf));
    ad::Var scores = ad::sum_cols(ad::mul(gate, tape.constant(ba)));
    ad::Var loss = ad::bt_loss(ad::sub(ad::slice_rows(scores, 0, b), ad::slice_rows(scores, b, b)));
    const double value = loss.scalar();
    if (!std::isfinite(value)) throw NonFiniteLoss("train_gating: non-finite loss at step " + std::to_string(s));
    tape.backward(loss);
    adam_step(gate_params, ad::collect_gradient(tape, bound, gate_params), state, adam_cfg, s, schedule.steps);
    hist.step.push_back(s);
    hist.bt_loss.push_back(value);
    hist.mse_loss.push_back(0.0);
    hist.total.push_back(value);
  }
  write_back(model.params(), gate_params);
  return hist;
}

}  // namespace smorm
