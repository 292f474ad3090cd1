#include "smorm/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "smorm/error.hpp"

namespace smorm {

LrSchedule parse_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  throw InvalidArgument("unknown schedule '" + s + "'");
}

std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "cosine"; }

void AdamConfig::validate() const {
  // lr = 0 is accepted: it freezes the parameters, which PPO tests rely on.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw InvalidArgument("learning_rate must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidArgument("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw InvalidArgument("warmup_fraction must lie in [0, 1)");
}

AdamState AdamState::zeros_like(const ad::ParamStore& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

double scheduled_lr(const AdamConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return cfg.learning_rate;
  const auto warmup =
      static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup)
    return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (cfg.schedule == LrSchedule::constant) return cfg.learning_rate;
  const double span = static_cast<double>(total_steps - warmup);
  if (span <= 0.0) return cfg.learning_rate;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adam_step(ad::ParamStore& params, const ad::Gradient& grads, AdamState& state,
               const AdamConfig& cfg, std::size_t step_index, std::size_t total_steps) {
  if (!params.congruent(grads) || !params.congruent(state.m) || !params.congruent(state.v))
    throw ShapeMismatch("adam_step: parameters, gradients and moments differ in layout");
  const double lr = scheduled_lr(cfg, step_index, total_steps);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  auto g_it = grads.begin();
  auto m_it = state.m.begin();
  auto v_it = state.v.begin();
  for (auto p_it = params.begin(); p_it != params.end(); ++p_it, ++g_it, ++m_it, ++v_it) {
    auto p = p_it->second.data();
    auto g = g_it->second.data();
    auto m = m_it->second.data();
    auto v = v_it->second.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      if (lr == 0.0) continue;
      if (cfg.weight_decay != 0.0) p[i] -= lr * cfg.weight_decay * p[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace smorm
