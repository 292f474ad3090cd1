#pragma once

// Dense f64 vectors and row-major matrices plus the symmetric linear algebra
// the theory oracles are built on: covariance, Jacobi eigensolve, ridge
// inverse, inverse square root and the operator norm.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "smorm/rng.hpp"

namespace smorm {

using Vec = std::vector<double>;

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, Vec data);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);
  static Mat diagonal(std::span<const double> diag);
  static Mat column(std::span<const double> v);
  static Mat row(std::span<const double> v);
  static Mat from_rows(std::span<const Vec> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const Vec& storage() const noexcept { return data_; }

  std::span<double> row_span(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  Vec row_vec(std::size_t r) const;
  Vec col_vec(std::size_t c) const;

  Mat transposed() const;
  bool same_shape(const Mat& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Mat& operator+=(const Mat& other);
  Mat& operator-=(const Mat& other);
  Mat& operator*=(double s);

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator*(Mat a, double s);
Mat operator*(double s, Mat a);
Mat matmul(const Mat& a, const Mat& b);
Mat matmul_tn(const Mat& a, const Mat& b);  // aᵀ b
Mat matmul_nt(const Mat& a, const Mat& b);  // a bᵀ
Vec matvec(const Mat& m, std::span<const double> v);
Vec matvec_t(const Mat& m, std::span<const double> v);  // mᵀ v
Mat outer(std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double frobenius(const Mat& m);
double trace(const Mat& m);
bool all_finite(std::span<const double> v);
Vec add(std::span<const double> a, std::span<const double> b);
Vec sub(std::span<const double> a, std::span<const double> b);
Vec scaled(std::span<const double> a, double s);

Mat symmetrized(const Mat& m);

struct EigenResult {
  Vec eigenvalues;   // ascending
  Mat eigenvectors;  // column j pairs with eigenvalues[j]
};

// Uncentered: (1/n) Σ v vᵀ. Centered: (1/n) Σ (v - v̄)(v - v̄)ᵀ.
Mat covariance(std::span<const Vec> samples, bool center);

// Cyclic Jacobi rotations on (M + Mᵀ)/2.
EigenResult sym_eigen(const Mat& m);

// (M + ridge I)⁻¹. With ridge = 0 a smallest eigenvalue ≤ 1e-10 raises
// SingularMatrix instead of silently regularizing.
Mat ridge_inverse(const Mat& m, double ridge);

// V diag(λ^{-1/2}) Vᵀ for SPD input.
Mat inv_sqrt(const Mat& m);

// V diag(√max(λ,0)) Vᵀ for PSD input.
Mat sqrt_psd(const Mat& m);

// Largest singular value by power iteration on the smaller Gram matrix.
double operator_norm(const Mat& m, Rng& rng);

inline constexpr double kSingularThreshold = 1e-10;

}  // namespace smorm
