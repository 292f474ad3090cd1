#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace smorm {

// splitmix64 finalizer; used to derive independent per-record / per-seed
// streams from a master seed so parallel generation is order independent.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(master ^ mix64(stream + 0x632be59bd9b4e019ULL)) + index);
}

// Deterministic generator. The standard library distributions are
// implementation-defined, so uniform and normal draws are derived here from
// raw engine output to keep datasets identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via the Box-Muller transform, caching the spare draw.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace smorm
