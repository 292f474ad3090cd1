#include "smorm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "smorm/error.hpp"

namespace smorm {

namespace {

struct Eval {
  double value;
  std::uint64_t signature;
};

Eval evaluate(const LossBuilder& loss, const ad::ParamStore& params) {
  ad::Tape tape;
  auto bound = ad::bind(tape, params, false);
  ad::Var out = loss(tape, bound);
  if (out.rows() != 1 || out.cols() != 1) throw NotScalar("grad_check: loss is not 1x1");
  return {out.scalar(), tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, ad::ParamStore params, double eps, Rng& rng,
                           std::size_t max_coords) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw InvalidArgument("grad_check: eps must lie in [1e-7, 1e-3]");

  ad::Tape tape;
  auto bound = ad::bind(tape, params, true);
  ad::Var out = loss(tape, bound);
  tape.backward(out);
  const ad::Gradient grad = ad::collect_gradient(tape, bound, params);
  const std::uint64_t base_sig = tape.branch_signature();

  std::vector<double> analytic;
  analytic.reserve(params.parameter_count());
  for (const auto& [name, g] : grad) analytic.insert(analytic.end(), g.data().begin(), g.data().end());

  std::vector<std::size_t> coords(analytic.size());
  std::iota(coords.begin(), coords.end(), 0);
  const std::size_t budget = std::max<std::size_t>(200, max_coords);
  if (coords.size() > budget) {
    // Partial Fisher-Yates: the first `budget` slots become a uniform sample.
    for (std::size_t i = 0; i < budget; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(coords.size() - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(budget);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  for (std::size_t c : coords) {
    double& x = params.coord(c);
    const double orig = x;
    x = orig + eps;
    const Eval plus = evaluate(loss, params);
    x = orig - eps;
    const Eval minus = evaluate(loss, params);
    x = orig;
    if (plus.signature != base_sig || minus.signature != base_sig) {
      ++result.skipped_kinks;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * eps);
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace smorm
