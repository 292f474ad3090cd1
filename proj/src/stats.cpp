#include "smorm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "smorm/error.hpp"

namespace smorm {

double mean(std::span<const double> x) {
  if (x.empty()) throw EmptyInput("mean of empty sequence");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson: length mismatch");
  if (x.size() < 2) throw InsufficientSamples("pearson needs >= 2 points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

Vec average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Vec ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("spearman: length mismatch");
  return pearson(average_ranks(x), average_ranks(y));
}

double ls_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("ls_slope: length mismatch");
  if (x.size() < 2) throw InsufficientSamples("ls_slope needs >= 2 points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

double ls_slope(std::span<const double> y) {
  Vec x(y.size());
  std::iota(x.begin(), x.end(), 0.0);
  return ls_slope(x, y);
}

double sign_test_p(std::size_t wins, std::size_t n) {
  if (wins > n) throw InvalidArgument("sign_test_p: wins > n");
  if (n <= 1000) {
    // Σ_{k ≥ wins} C(n, k) / 2ⁿ; the coefficients are exact integers while
    // they stay below 2⁵³, so small-n tails come out exact.
    double c = 1.0, tail = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k >= wins) tail += c;
      c = c * static_cast<double>(n - k) / static_cast<double>(k + 1);
    }
    return std::min(1.0, std::ldexp(tail, -static_cast<int>(n)));
  }
  double p = 0.0;
  for (std::size_t k = wins; k <= n; ++k) {
    const double lc = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                      std::lgamma(static_cast<double>(n - k) + 1.0);
    p += std::exp(lc - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, p);
}

}  // namespace smorm
