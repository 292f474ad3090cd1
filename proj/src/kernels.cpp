#include "smorm/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "smorm/error.hpp"
#include "smorm/parallel.hpp"

namespace smorm {

namespace {
int g_max_threads = -1;

int threads_from_env() {
  int available = 1;
#ifdef _OPENMP
  available = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("SMORM_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(std::min<long>(v, available));
  }
  return available;
}
}  // namespace

int max_threads() {
  if (g_max_threads < 0) g_max_threads = threads_from_env();
  return g_max_threads;
}

void set_max_threads(int n) { g_max_threads = n < 1 ? 1 : n; }

namespace kernels {

namespace {

constexpr std::size_t kParallelWork = 1u << 15;

void check_weights(const Mat& rows, std::span<const double> weights) {
  if (!weights.empty() && weights.size() != rows.rows())
    throw DimensionMismatch("outer_sum: weight count differs from row count");
}

inline double weighted(double w, double a, double b) { return (w * a) * b; }

}  // namespace

Mat outer_sum(const Mat& rows, std::span<const double> weights) {
  check_weights(rows, weights);
  const std::size_t d = rows.cols();
  const std::size_t n = rows.rows();
  const std::size_t entries = d * (d + 1) / 2;
  if (entries * n < kParallelWork) return serial::outer_sum(rows, weights);

  // One output row per task, streaming the samples in order so each entry
  // sees the same accumulation sequence as the serial loop.
  Mat out(d, d);
  parallel_for(d, [&](std::size_t i) {
    auto o = out.row_span(i);
    for (std::size_t s = 0; s < n; ++s) {
      auto x = rows.row_span(s);
      if (weights.empty()) {
        for (std::size_t j = i; j < d; ++j) o[j] += x[i] * x[j];
      } else {
        for (std::size_t j = i; j < d; ++j) o[j] += weighted(weights[s], x[i], x[j]);
      }
    }
  });
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) out(i, j) = out(j, i);
  return out;
}

Mat cross_sum(const Mat& xs, const Mat& ys) {
  if (xs.rows() != ys.rows()) throw DimensionMismatch("cross_sum: row counts differ");
  const std::size_t dx = xs.cols();
  const std::size_t dy = ys.cols();
  const std::size_t n = xs.rows();
  if (dx * dy * n < kParallelWork) return serial::cross_sum(xs, ys);
  Mat out(dx, dy);
  parallel_for(dx, [&](std::size_t i) {
    auto o = out.row_span(i);
    for (std::size_t s = 0; s < n; ++s) {
      const double xi = xs(s, i);
      auto y = ys.row_span(s);
      for (std::size_t j = 0; j < dy; ++j) o[j] += xi * y[j];
    }
  });
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  if (a.rows() * a.cols() * b.cols() < kParallelWork) return serial::matmul(a, b);
  Mat out(a.rows(), b.cols());
  parallel_for(a.rows(), [&](std::size_t i) {
    auto o = out.row_span(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row_span(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * brow[j];
    }
  });
  return out;
}

namespace serial {

Mat outer_sum(const Mat& rows, std::span<const double> weights) {
  check_weights(rows, weights);
  const std::size_t d = rows.cols();
  Mat out(d, d);
  for (std::size_t s = 0; s < rows.rows(); ++s) {
    auto x = rows.row_span(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        if (weights.empty()) {
          out(i, j) += x[i] * x[j];
        } else {
          out(i, j) += weighted(weights[s], x[i], x[j]);
        }
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) out(i, j) = out(j, i);
  return out;
}

Mat cross_sum(const Mat& xs, const Mat& ys) {
  if (xs.rows() != ys.rows()) throw DimensionMismatch("cross_sum: row counts differ");
  Mat out(xs.cols(), ys.cols());
  for (std::size_t s = 0; s < xs.rows(); ++s)
    for (std::size_t i = 0; i < xs.cols(); ++i)
      for (std::size_t j = 0; j < ys.cols(); ++j) out(i, j) += xs(s, i) * ys(s, j);
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row_span(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row_span(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

}  // namespace serial
}  // namespace kernels
}  // namespace smorm
