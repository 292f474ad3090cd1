#include "smorm/synthworld.hpp"

#include <algorithm>
#include <cmath>

#include "smorm/error.hpp"
#include "smorm/losses.hpp"
#include "smorm/parallel.hpp"

namespace smorm {

Vec AttributeMap::apply(std::span<const double> z) const {
  if (z.size() != input_dim())
    throw DimensionMismatch("attribute map expects dim " + std::to_string(input_dim()) + ", got " +
                            std::to_string(z.size()));
  if (kind == Kind::linear) {
    Vec r = matvec(W, z);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += bias[k];
    return r;
  }
  Vec h = matvec(w1, z);
  for (std::size_t j = 0; j < h.size(); ++j) {
    const double a = h[j] + b1[j];
    h[j] = activation == Activation::relu ? std::max(0.0, a) : std::tanh(a);
  }
  Vec r = matvec(w2, h);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] += b2[k];
  return r;
}

void AttributeMap::validate() const {
  if (kind == Kind::linear) {
    if (W.empty() || bias.size() != W.rows()) throw InvalidArgument("linear attribute map: bias/W mismatch");
    if (!all_finite(W.data()) || !all_finite(bias)) throw InvalidArgument("attribute map is not finite");
    return;
  }
  if (w1.empty() || w2.empty() || b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows())
    throw InvalidArgument("mlp attribute map: inconsistent shapes");
  if (!all_finite(w1.data()) || !all_finite(w2.data()) || !all_finite(b1) || !all_finite(b2))
    throw InvalidArgument("attribute map is not finite");
}

void GoldWorld::finalize() {
  if (d_z == 0 || K == 0) throw InvalidArgument("GoldWorld: d_z and K must be >= 1");
  attribute_map.validate();
  if (attribute_map.input_dim() != d_z || attribute_map.output_dim() != K)
    throw DimensionMismatch("GoldWorld: attribute map shape does not match d_z/K");
  if (aggregation.size() != K) throw DimensionMismatch("GoldWorld: aggregation length must be K");
  double total = 0.0;
  for (double w : aggregation) {
    if (!(w >= 0.0)) throw InvalidArgument("GoldWorld: aggregation weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("GoldWorld: aggregation weights must sum to 1");
  if (noise_cov.rows() != K + 1 || noise_cov.cols() != K + 1)
    throw DimensionMismatch("GoldWorld: noise_cov must be (K+1)x(K+1)");
  if (!(feature_bound > 0.0)) throw InvalidArgument("GoldWorld: feature_bound must be > 0");
  if (preference_map) {
    preference_map->validate();
    if (preference_map->input_dim() != d_z || preference_map->output_dim() != 1)
      throw DimensionMismatch("GoldWorld: preference map must be d_z -> 1");
  }
  const EigenResult e = sym_eigen(noise_cov);
  if (e.eigenvalues.front() < -1e-10) throw InvalidArgument("GoldWorld: noise_cov is not PSD");
  noise_factor_ = Mat(K + 1, K + 1);
  for (std::size_t i = 0; i <= K; ++i)
    for (std::size_t j = 0; j <= K; ++j)
      noise_factor_(i, j) = e.eigenvectors(i, j) * std::sqrt(std::max(0.0, e.eigenvalues[j]));
}

Vec true_attributes(const GoldWorld& world, std::span<const double> z) {
  if (z.size() != world.d_z) throw DimensionMismatch("input dim differs from world d_z");
  return world.attribute_map.apply(z);
}

namespace {

double overall_from(const GoldWorld& world, std::span<const double> z, const Vec& r) {
  if (world.preference_map) return world.preference_map->apply(z)[0];
  return dot(world.aggregation, r);
}

}  // namespace

double true_overall(const GoldWorld& world, std::span<const double> z) {
  return overall_from(world, z, true_attributes(world, z));
}

GoldScores gold_scores(const GoldWorld& world, std::span<const double> z, Rng& rng) {
  GoldScores out;
  out.r = true_attributes(world, z);
  out.r_s = overall_from(world, z, out.r);
  Vec n(world.K + 1);
  for (double& x : n) x = rng.normal();
  const Vec eps = matvec(world.noise_factor(), n);
  out.g_s = out.r_s + eps[0];
  out.g_m = out.r;
  for (std::size_t k = 0; k < world.K; ++k) out.g_m[k] += eps[k + 1];
  return out;
}

Vec true_overall_batch(const GoldWorld& world, const Mat& zs) {
  Vec out(zs.rows());
  parallel_for(zs.rows(), [&](std::size_t i) { out[i] = true_overall(world, zs.row_span(i)); });
  return out;
}

Mat true_attributes_batch(const GoldWorld& world, const Mat& zs) {
  Mat out(zs.rows(), world.K);
  parallel_for(zs.rows(), [&](std::size_t i) {
    const Vec r = true_attributes(world, zs.row_span(i));
    std::copy(r.begin(), r.end(), out.row_span(i).begin());
  });
  return out;
}

void PromptDistribution::validate(std::size_t d_z) const {
  auto check = [&](const Vec& m, const Vec& s) {
    if (m.size() != d_z || s.size() != d_z) throw DimensionMismatch("prompt distribution dim differs from d_z");
    for (double x : s)
      if (!(x > 0.0)) throw InvalidArgument("prompt distribution scales must be > 0");
  };
  if (mixture.empty()) {
    check(mean, scale);
    return;
  }
  double total = 0.0;
  for (const auto& c : mixture) {
    check(c.mean, c.scale);
    if (!(c.weight >= 0.0)) throw InvalidArgument("mixture weights must be >= 0");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("mixture weights must sum to 1");
}

Vec project_to_ball(Vec z, double bound) {
  const double n = norm2(z);
  if (n > bound)
    for (double& x : z) x *= bound / n;
  return z;
}

Vec PromptDistribution::sample(Rng& rng, double bound) const {
  const Vec* m = &mean;
  const Vec* s = &scale;
  if (!mixture.empty()) {
    double u = rng.uniform();
    std::size_t pick = mixture.size() - 1;
    for (std::size_t c = 0; c < mixture.size(); ++c) {
      if (u < mixture[c].weight) {
        pick = c;
        break;
      }
      u -= mixture[c].weight;
    }
    m = &mixture[pick].mean;
    s = &mixture[pick].scale;
  }
  Vec z(m->size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (*m)[i] + (*s)[i] * rng.normal();
  return project_to_ball(std::move(z), bound);
}

int sample_preference(const GoldWorld& world, std::span<const double> a, std::span<const double> b, Rng& rng) {
  const double p = sigmoid(true_overall(world, a) - true_overall(world, b));
  return rng.uniform() < p ? 0 : 1;
}

PairwiseRecord make_pair(const GoldWorld& world, Vec a, Vec b, Rng& rng, std::uint64_t id, const std::string& tag) {
  PairwiseRecord r;
  r.label = sample_preference(world, a, b, rng);
  r.input_chosen = r.label == 0 ? std::move(a) : std::move(b);
  r.input_rejected = r.label == 0 ? std::move(b) : std::move(a);
  r.id = id;
  r.tag = tag;
  return r;
}

std::vector<PairwiseRecord> gen_pairwise(const GoldWorld& world, std::size_t n, const PromptDistribution& dist,
                                         Rng& rng) {
  dist.validate(world.d_z);
  const std::uint64_t master = rng.next_u64();
  std::vector<PairwiseRecord> out(n);
  parallel_for(n, [&](std::size_t i) {
    Rng r(derive_seed(master, 11, i));
    Vec a = dist.sample(r, world.feature_bound);
    Vec b = dist.sample(r, world.feature_bound);
    out[i] = make_pair(world, std::move(a), std::move(b), r, i, dist.tag);
  });
  return out;
}

std::vector<AttributeRecord> gen_multiattr(const GoldWorld& world, std::size_t n, const PromptDistribution& dist,
                                           Rng& rng) {
  dist.validate(world.d_z);
  const std::uint64_t master = rng.next_u64();
  std::vector<AttributeRecord> out(n);
  parallel_for(n, [&](std::size_t i) {
    Rng r(derive_seed(master, 12, i));
    AttributeRecord rec;
    rec.input = dist.sample(r, world.feature_bound);
    rec.scores = gold_scores(world, rec.input, r).g_m;
    rec.id = i;
    rec.tag = dist.tag;
    out[i] = std::move(rec);
  });
  return out;
}

std::vector<Vec> sample_latents(const GoldWorld& world, std::size_t n, const PromptDistribution& dist, Rng& rng) {
  dist.validate(world.d_z);
  const std::uint64_t master = rng.next_u64();
  std::vector<Vec> out(n);
  parallel_for(n, [&](std::size_t i) {
    Rng r(derive_seed(master, 13, i));
    out[i] = dist.sample(r, world.feature_bound);
  });
  return out;
}

PromptDistribution standard_prompts(std::size_t d_z, double scale, const std::string& tag) {
  PromptDistribution d;
  d.tag = tag;
  d.mean = Vec(d_z, 0.0);
  d.scale = Vec(d_z, scale);
  return d;
}

GoldWorld make_correlated_world(const CorrelatedWorldConfig& cfg) {
  if (cfg.d_z < 2 || cfg.K == 0 || cfg.hidden == 0) throw InvalidArgument("correlated world: bad dimensions");
  if (!(cfg.shared_weight >= 0.0 && cfg.shared_weight <= 1.0))
    throw InvalidArgument("correlated world: shared_weight must lie in [0, 1]");
  Rng rng(derive_seed(cfg.seed, 21));
  GoldWorld w;
  w.d_z = cfg.d_z;
  w.K = cfg.K;
  w.feature_bound = cfg.feature_bound;

  // The negative control keeps attributes on the first half of the latent and
  // the preference on the second half, so they are independent under any
  // product prompt distribution.
  const std::size_t attr_dims = cfg.independent_preference ? cfg.d_z / 2 : cfg.d_z;
  AttributeMap m;
  m.kind = AttributeMap::Kind::mlp;
  m.activation = cfg.activation;
  m.w1 = Mat(cfg.hidden, cfg.d_z);
  m.b1 = Vec(cfg.hidden);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(attr_dims));
  for (std::size_t h = 0; h < cfg.hidden; ++h) {
    for (std::size_t j = 0; j < attr_dims; ++j) m.w1(h, j) = in_scale * rng.normal();
    m.b1[h] = 0.1 * rng.normal();
  }
  Vec shared(cfg.hidden);
  for (double& x : shared) x = rng.normal();
  m.w2 = Mat(cfg.K, cfg.hidden);
  m.b2 = Vec(cfg.K, 0.0);
  const double own = std::sqrt(1.0 - cfg.shared_weight * cfg.shared_weight);
  for (std::size_t k = 0; k < cfg.K; ++k) {
    Vec row(cfg.hidden);
    for (std::size_t h = 0; h < cfg.hidden; ++h) row[h] = cfg.shared_weight * shared[h] + own * rng.normal();
    const double n = norm2(row);
    for (std::size_t h = 0; h < cfg.hidden; ++h) m.w2(k, h) = 2.0 * row[h] / n;
  }
  w.attribute_map = std::move(m);
  w.aggregation = Vec(cfg.K, 1.0 / static_cast<double>(cfg.K));
  w.noise_cov = Mat(cfg.K + 1, cfg.K + 1);
  w.noise_cov(0, 0) = cfg.overall_noise;
  for (std::size_t k = 1; k <= cfg.K; ++k) w.noise_cov(k, k) = cfg.attr_noise;

  if (cfg.independent_preference) {
    AttributeMap p;
    p.kind = AttributeMap::Kind::linear;
    p.W = Mat(1, cfg.d_z);
    p.bias = Vec{0.0};
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.d_z - attr_dims));
    for (std::size_t j = attr_dims; j < cfg.d_z; ++j) p.W(0, j) = s * rng.normal();
    w.preference_map = std::move(p);
  }
  w.finalize();
  return w;
}

double spurious_correlation(const GoldWorld& world, std::size_t spurious_index, const PromptDistribution& dist,
                            std::size_t n, Rng& rng) {
  const auto zs = sample_latents(world, n, dist, rng);
  Vec a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec r = true_attributes(world, zs[i]);
    a[i] = r[spurious_index];
    b[i] = overall_from(world, zs[i], r);
  }
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

// Builds one candidate world for a given seed. Latent layout: utility dims
// 0..K-2 then the verbosity dim v, which is latent index K-1.
SpuriousWorld build_spurious(const SpuriousConfig& cfg, std::uint64_t seed) {
  const std::size_t K = cfg.K;
  const std::size_t nu = K - 1;
  const std::size_t d_z = K;
  const std::size_t vdim = K - 1;
  const bool confounded = cfg.rho > 0.0;
  // ρ = 0 keeps v as an attribute but drops it from the overall score.
  const double gain = confounded ? cfg.spurious_gain : 1.0;
  const double eta = confounded ? cfg.penalty : 0.0;
  Rng rng(seed);

  // Utility attributes mix the utility latents with random positive-leaning
  // unit rows.
  Mat A(nu, nu);
  for (std::size_t k = 0; k < nu; ++k) {
    Vec row(nu);
    for (std::size_t j = 0; j < nu; ++j) row[j] = (j == k ? 1.0 : 0.0) + 0.3 * rng.normal();
    const double n = norm2(row);
    for (std::size_t j = 0; j < nu; ++j) A(k, j) = row[j] / n;
  }

  // Hidden units: relu(±u_j), relu(±v), relu(v − τ). Identity pieces are
  // rebuilt as relu(x) − relu(−x).
  const std::size_t H = 2 * nu + 3;
  AttributeMap m;
  m.kind = AttributeMap::Kind::mlp;
  m.activation = Activation::relu;
  m.w1 = Mat(H, d_z);
  m.b1 = Vec(H, 0.0);
  for (std::size_t j = 0; j < nu; ++j) {
    m.w1(2 * j, j) = 1.0;
    m.w1(2 * j + 1, j) = -1.0;
  }
  m.w1(2 * nu, vdim) = 1.0;
  m.w1(2 * nu + 1, vdim) = -1.0;
  m.w1(2 * nu + 2, vdim) = 1.0;
  m.b1[2 * nu + 2] = -cfg.threshold;

  m.w2 = Mat(K, H);
  m.b2 = Vec(K, 0.0);
  std::size_t uk = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (k == cfg.spurious_index) {
      m.w2(k, 2 * nu) = gain;
      m.w2(k, 2 * nu + 1) = -gain;
      continue;
    }
    for (std::size_t j = 0; j < nu; ++j) {
      m.w2(k, 2 * j) = A(uk, j);
      m.w2(k, 2 * j + 1) = -A(uk, j);
    }
    m.w2(k, 2 * nu + 2) = -eta;
    ++uk;
  }

  SpuriousWorld out;
  GoldWorld& w = out.world;
  w.d_z = d_z;
  w.K = K;
  w.feature_bound = cfg.feature_bound;
  w.attribute_map = std::move(m);
  w.aggregation = Vec(K, 1.0 / static_cast<double>(K));
  if (!confounded) {
    w.aggregation.assign(K, 1.0 / static_cast<double>(nu));
    w.aggregation[cfg.spurious_index] = 0.0;
  }
  w.noise_cov = Mat::identity(K + 1) * cfg.attr_noise;
  w.finalize();

  // Spread of v in training so that corr(r_v, r_s*) clears ρ with margin:
  // corr² = g²σ_v² / (g²σ_v² + σ_u²‖Aᵀ1‖²).
  Vec col_sum(nu, 0.0);
  for (std::size_t k = 0; k < nu; ++k)
    for (std::size_t j = 0; j < nu; ++j) col_sum[j] += A(k, j);
  const double util_sd = cfg.utility_scale * norm2(col_sum);
  double v_sd = cfg.utility_scale;
  if (confounded) {
    const double target = std::min(0.999, cfg.rho + 0.25 * (1.0 - cfg.rho));
    v_sd = target / std::sqrt(1.0 - target * target) * util_sd / gain;
  }

  auto make = [&](const std::string& tag, double v_mean, double vs) {
    PromptDistribution d;
    d.tag = tag;
    d.mean = Vec(d_z, 0.0);
    d.scale = Vec(d_z, cfg.utility_scale);
    d.mean[vdim] = v_mean;
    d.scale[vdim] = vs;
    return d;
  };
  const double id_mean = confounded ? cfg.threshold - cfg.id_offset : 0.0;
  const double ood_mean = confounded ? cfg.threshold - cfg.ood_offset : 0.0;
  out.train_dist = make("id", id_mean, v_sd);
  out.ood_dist = make("ood", ood_mean, confounded ? cfg.ood_scale : cfg.utility_scale);
  PromptDistribution broad = make("attr", 0.0, 1.0);
  broad.mixture = {{out.train_dist.mean, out.train_dist.scale, 0.5},
                   {out.ood_dist.mean, out.ood_dist.scale, 0.5}};
  broad.mixture[1].scale[vdim] *= 1.5;
  out.attr_dist = broad;
  return out;
}

}  // namespace

SpuriousWorld make_spurious_world(const SpuriousConfig& cfg) {
  if (cfg.K < 2) throw InvalidArgument("spurious world needs K >= 2");
  if (cfg.spurious_index >= cfg.K) throw InvalidArgument("spurious_index out of range");
  if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) throw InvalidArgument("rho must lie in [0, 1)");
  if (cfg.check_samples < 10) throw InvalidArgument("check_samples too small");
  for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    SpuriousWorld sw = build_spurious(cfg, derive_seed(cfg.seed, 31, attempt));
    Rng check(derive_seed(cfg.seed, 32, attempt));
    sw.train_corr = spurious_correlation(sw.world, cfg.spurious_index, sw.train_dist, cfg.check_samples, check);
    sw.ood_corr = spurious_correlation(sw.world, cfg.spurious_index, sw.ood_dist, cfg.check_samples, check);
    sw.attempts = attempt + 1;
    const bool ok = cfg.rho > 0.0 ? (sw.train_corr >= cfg.rho && sw.ood_corr <= 0.1)
                                  : (std::abs(sw.train_corr) <= 0.1 && std::abs(sw.ood_corr) <= 0.1);
    if (ok) return sw;
  }
  throw ConstructionFailed("make_spurious_world: correlation checks failed after " +
                           std::to_string(cfg.max_retries) + " retries");
}

}  // namespace smorm
