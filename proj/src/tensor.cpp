#include "smorm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smorm/error.hpp"
#include "smorm/kernels.hpp"

namespace smorm {

Mat::Mat(std::size_t rows, std::size_t cols, Vec data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw DimensionMismatch("Mat: data length != rows*cols");
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionMismatch("Mat: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::diagonal(std::span<const double> diag) {
  Mat m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Mat Mat::column(std::span<const double> v) { return Mat(v.size(), 1, Vec(v.begin(), v.end())); }

Mat Mat::row(std::span<const double> v) { return Mat(1, v.size(), Vec(v.begin(), v.end())); }

Mat Mat::from_rows(std::span<const Vec> rows) {
  if (rows.empty()) return {};
  Mat m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw DimensionMismatch("from_rows: ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row_span(i).begin());
  }
  return m;
}

Vec Mat::row_vec(std::size_t r) const {
  auto s = row_span(r);
  return {s.begin(), s.end()};
}

Vec Mat::col_vec(std::size_t c) const {
  Vec v(rows_);
  for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
  return v;
}

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Mat& Mat::operator+=(const Mat& other) {
  if (!same_shape(other)) throw DimensionMismatch("Mat +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Mat& Mat::operator-=(const Mat& other) {
  if (!same_shape(other)) throw DimensionMismatch("Mat -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Mat& Mat::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Mat operator+(Mat a, const Mat& b) { return a += b; }
Mat operator-(Mat a, const Mat& b) { return a -= b; }
Mat operator*(Mat a, double s) { return a *= s; }
Mat operator*(double s, Mat a) { return a *= s; }

Mat matmul(const Mat& a, const Mat& b) { return kernels::matmul(a, b); }

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("matmul_tn: row counts differ");
  Mat out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row_span(k);
    auto brow = b.row_span(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      auto o = out.row_span(i);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * brow[j];
    }
  }
  return out;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw DimensionMismatch("matmul_nt: column counts differ");
  Mat out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row_span(i), b.row_span(j));
  return out;
}

Vec matvec(const Mat& m, std::span<const double> v) {
  if (m.cols() != v.size()) throw DimensionMismatch("matvec: dimension mismatch");
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row_span(r), v);
  return out;
}

Vec matvec_t(const Mat& m, std::span<const double> v) {
  if (m.rows() != v.size()) throw DimensionMismatch("matvec_t: dimension mismatch");
  Vec out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row_span(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c] * v[r];
  }
  return out;
}

Mat outer(std::span<const double> a, std::span<const double> b) {
  Mat m(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius(const Mat& m) { return norm2(m.data()); }

double trace(const Mat& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) t += m(i, i);
  return t;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vec add(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("add: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec sub(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("sub: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec scaled(std::span<const double> a, double s) {
  Vec out(a.begin(), a.end());
  for (double& x : out) x *= s;
  return out;
}

Mat symmetrized(const Mat& m) {
  if (!m.square()) throw NotSquare("symmetrized: matrix is not square");
  Mat s(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

Mat covariance(std::span<const Vec> samples, bool center) {
  if (samples.empty()) throw EmptyInput("covariance: no samples");
  const std::size_t d = samples[0].size();
  for (const auto& s : samples)
    if (s.size() != d) throw DimensionMismatch("covariance: sample dimensions differ");
  const double n = static_cast<double>(samples.size());

  Mat rows = Mat::from_rows(samples);
  if (center) {
    Vec mean(d, 0.0);
    for (const auto& s : samples)
      for (std::size_t j = 0; j < d; ++j) mean[j] += s[j];
    for (double& m : mean) m /= n;
    for (std::size_t i = 0; i < rows.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) rows(i, j) -= mean[j];
  }
  Mat cov = kernels::outer_sum(rows);
  cov *= 1.0 / n;
  return cov;
}

EigenResult sym_eigen(const Mat& m) {
  if (!m.square()) throw NotSquare("sym_eigen: matrix is not square");
  const std::size_t d = m.rows();
  Mat a = symmetrized(m);
  Mat v = Mat::identity(d);
  const double scale = frobenius(a);
  const std::size_t max_sweeps = 100;

  auto off_norm = [&] {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) off += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(off);
  };

  bool converged = false;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= 1e-15 * scale) {
      converged = true;
      break;
    }
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Skip entries already negligible against both diagonal entries.
        if (std::abs(apq) < 1e-18 * (std::abs(a(p, p)) + std::abs(a(q, q)))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        rotated = true;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    if (!rotated) {
      converged = true;
      break;
    }
  }
  if (!converged && off_norm() > 1e-12 * scale)
    throw NoConvergence("sym_eigen: Jacobi sweep budget exhausted");

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  EigenResult out{Vec(d), Mat(d, d)};
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t src = order[j];
    out.eigenvalues[j] = a(src, src);
    // Sign convention: largest-magnitude component positive.
    std::size_t arg = 0;
    for (std::size_t k = 1; k < d; ++k)
      if (std::abs(v(k, src)) > std::abs(v(arg, src))) arg = k;
    const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < d; ++k) out.eigenvectors(k, j) = sign * v(k, src);
  }
  return out;
}

namespace {

Mat spectral_map(const EigenResult& eig, const Vec& diag) {
  const std::size_t d = diag.size();
  const Mat& v = eig.eigenvectors;
  Mat out(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += v(i, k) * diag[k] * v(j, k);
      out(i, j) = acc;
      out(j, i) = acc;
    }
  }
  return out;
}

}  // namespace

Mat ridge_inverse(const Mat& m, double ridge) {
  if (!m.square()) throw NotSquare("ridge_inverse: matrix is not square");
  if (ridge < 0.0) throw InvalidArgument("ridge_inverse: ridge must be nonnegative");
  EigenResult eig = sym_eigen(m);
  const double lam_min = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.front();
  if (ridge == 0.0 && lam_min <= kSingularThreshold)
    throw SingularMatrix("ridge_inverse: smallest eigenvalue " + std::to_string(lam_min) +
                         " <= 1e-10 with ridge = 0");
  if (lam_min + ridge <= 0.0) throw SingularMatrix("ridge_inverse: M + ridge I is not invertible");
  Vec inv(eig.eigenvalues.size());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / (eig.eigenvalues[i] + ridge);
  return spectral_map(eig, inv);
}

Mat inv_sqrt(const Mat& m) {
  EigenResult eig = sym_eigen(m);
  if (!eig.eigenvalues.empty() && eig.eigenvalues.front() <= kSingularThreshold)
    throw SingularMatrix("inv_sqrt: matrix is not positive definite");
  Vec diag(eig.eigenvalues.size());
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = 1.0 / std::sqrt(eig.eigenvalues[i]);
  return spectral_map(eig, diag);
}

Mat sqrt_psd(const Mat& m) {
  EigenResult eig = sym_eigen(m);
  Vec diag(eig.eigenvalues.size());
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = std::sqrt(std::max(eig.eigenvalues[i], 0.0));
  return spectral_map(eig, diag);
}

double operator_norm(const Mat& m, Rng& rng) {
  if (m.empty()) return 0.0;
  // Gram matrix on the smaller side.
  const Mat gram0 = m.rows() < m.cols() ? matmul_nt(m, m) : matmul_tn(m, m);
  const std::size_t n = gram0.rows();
  if (frobenius(gram0) == 0.0) return 0.0;

  const std::size_t budget = 10 * (m.rows() + m.cols());
  const int max_restarts = 6;
  Mat gram = gram0;
  for (int attempt = 0; attempt <= max_restarts; ++attempt) {
    Vec v(n);
    for (double& x : v) x = rng.normal();
    double nv = norm2(v);
    for (double& x : v) x /= nv;

    double rq_prev = 0.0;
    for (std::size_t it = 0; it < budget; ++it) {
      Vec w = matvec(gram, v);
      const double rq = dot(v, w);
      const double nw = norm2(w);
      if (nw == 0.0) break;  // v landed in the null space; restart
      for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
      if (it > 0 && std::abs(rq - rq_prev) <= 1e-13 * std::abs(rq)) {
        const double sigma2 = dot(v, matvec(gram0, v));
        return std::sqrt(std::max(sigma2, 0.0));
      }
      rq_prev = rq;
    }
    // Stagnation: restart on the squared operator, which has the same top
    // eigenvector and a squared spectral gap ratio.
    gram = matmul(gram, gram);
    gram *= 1.0 / frobenius(gram);
  }
  throw NoConvergence("operator_norm: power iteration did not converge");
}

}  // namespace smorm
