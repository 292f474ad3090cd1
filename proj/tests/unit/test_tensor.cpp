#include <gtest/gtest.h>

#include <cmath>

#include "smorm/error.hpp"
#include "smorm/kernels.hpp"
#include "smorm/parallel.hpp"
#include "smorm/rng.hpp"
#include "smorm/tensor.hpp"

using namespace smorm;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng) {
  Mat m(r, c);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

Mat random_spd(std::size_t n, Rng& rng) {
  Mat a = random_mat(n, n, rng);
  Mat s = matmul_tn(a, a);
  for (std::size_t i = 0; i < n; ++i) s(i, i) += 0.5;
  return s;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Restores the thread cap when a test changes it.
struct ThreadCap {
  int saved = max_threads();
  explicit ThreadCap(int n) { set_max_threads(n); }
  ~ThreadCap() { set_max_threads(saved); }
};

}  // namespace

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
    ASSERT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, SerializeResumesMidStream) {
  Rng a(3);
  a.normal();  // leaves a cached spare
  Rng b = Rng::deserialize(a.serialize());
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) ASSERT_LT(rng.below(7), 7u);
  EXPECT_THROW(rng.below(0), InvalidArgument);
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 2, 0), derive_seed(1, 2, 1));
  EXPECT_NE(derive_seed(1, 2, 0), derive_seed(1, 3, 0));
  EXPECT_NE(derive_seed(1, 2, 0), derive_seed(2, 2, 0));
}

TEST(Kernels, ParallelMatchesSerialBitwise) {
  ThreadCap cap(4);
  Rng rng(17);
  Mat a = random_mat(137, 23, rng), b = random_mat(23, 41, rng);
  Mat ys = random_mat(137, 5, rng);
  Vec w(137);
  for (double& x : w) x = rng.uniform();
  EXPECT_EQ(kernels::matmul(a, b), kernels::serial::matmul(a, b));
  EXPECT_EQ(kernels::outer_sum(a), kernels::serial::outer_sum(a));
  EXPECT_EQ(kernels::outer_sum(a, w), kernels::serial::outer_sum(a, w));
  EXPECT_EQ(kernels::cross_sum(a, ys), kernels::serial::cross_sum(a, ys));
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
  Rng rng(18);
  Mat a = random_mat(300, 16, rng);
  Mat one, many;
  {
    ThreadCap cap(1);
    one = kernels::outer_sum(a);
  }
  {
    ThreadCap cap(3);
    many = kernels::outer_sum(a);
  }
  EXPECT_EQ(one, many);
}

TEST(Kernels, MatmulAgainstNaiveLoop) {
  Rng rng(19);
  Mat a = random_mat(7, 5, rng), b = random_mat(5, 3, rng);
  Mat c = kernels::matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-14);
    }
  EXPECT_THROW(kernels::matmul(a, a), DimensionMismatch);
}

TEST(Covariance, IdenticalVectorsCenteredIsZero) {
  std::vector<Vec> s{{1.0, 2.0}, {1.0, 2.0}};
  EXPECT_EQ(covariance(s, true), Mat(2, 2));
}

TEST(Covariance, AxisVectorsUncentered) {
  std::vector<Vec> s{{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_EQ(covariance(s, false), (Mat{{0.5, 0.0}, {0.0, 0.5}}));
}

TEST(Covariance, MatchesTwoPassOracle) {
  Rng rng(23);
  Mat L{{1.0, 0.0, 0.0}, {0.5, 2.0, 0.0}, {-0.3, 0.4, 0.7}};
  std::vector<Vec> s;
  for (int i = 0; i < 50; ++i) {
    Vec e{rng.normal(), rng.normal(), rng.normal()};
    Vec x = matvec(L, e);
    x[0] += 3.0;
    s.push_back(x);
  }
  Vec mu(3, 0.0);
  for (const Vec& x : s)
    for (int k = 0; k < 3; ++k) mu[k] += x[k] / 50.0;
  Mat ref(3, 3);
  for (const Vec& x : s)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ref(i, j) += (x[i] - mu[i]) * (x[j] - mu[j]) / 50.0;
  EXPECT_LT(max_abs_diff(covariance(s, true), ref), 1e-12);
}

TEST(Covariance, SymmetricAndPsd) {
  Rng rng(29);
  std::vector<Vec> s;
  for (int i = 0; i < 20; ++i) s.push_back({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
  Mat c = covariance(s, true);
  EXPECT_EQ(c, c.transposed());
  EXPECT_GE(sym_eigen(c).eigenvalues.front(), -1e-10);
  EXPECT_THROW(covariance(std::vector<Vec>{}, true), EmptyInput);
}

TEST(SymEigen, IdentityAndDiagonal) {
  auto e = sym_eigen(Mat::identity(3));
  for (double l : e.eigenvalues) EXPECT_DOUBLE_EQ(l, 1.0);
  auto d = sym_eigen(Mat{{2.0, 0.0}, {0.0, 5.0}});
  EXPECT_DOUBLE_EQ(d.eigenvalues[0], 2.0);
  EXPECT_DOUBLE_EQ(d.eigenvalues[1], 5.0);
  EXPECT_DOUBLE_EQ(std::abs(d.eigenvectors(0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(std::abs(d.eigenvectors(1, 1)), 1.0);
}

TEST(SymEigen, ReconstructsRandomSymmetric) {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Mat a = symmetrized(random_mat(8, 8, rng));
    auto e = sym_eigen(a);
    Mat v = e.eigenvectors;
    Mat r = matmul(matmul(v, Mat::diagonal(e.eigenvalues)), v.transposed());
    EXPECT_LT(max_abs_diff(r, a), 1e-10);
    double s = 0;
    for (double l : e.eigenvalues) s += l;
    EXPECT_NEAR(s, trace(a), 1e-10 * frobenius(a));
    for (std::size_t i = 1; i < e.eigenvalues.size(); ++i) EXPECT_LE(e.eigenvalues[i - 1], e.eigenvalues[i]);
  }
  EXPECT_THROW(sym_eigen(Mat(2, 3)), NotSquare);
}

TEST(RidgeInverse, Basics) {
  EXPECT_EQ(ridge_inverse(Mat::identity(3), 0.0), Mat::identity(3));
  Mat inv = ridge_inverse(Mat{{2.0, 0.0}, {0.0, 4.0}}, 0.0);
  EXPECT_DOUBLE_EQ(inv(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(inv(1, 1), 0.25);
  EXPECT_DOUBLE_EQ(inv(0, 1), 0.0);
}

TEST(RidgeInverse, RankDeficientThrowsAtZeroRidge) {
  Mat r1{{1.0, 2.0}, {2.0, 4.0}};
  EXPECT_THROW(ridge_inverse(r1, 0.0), SingularMatrix);
  Mat inv = ridge_inverse(r1, 1.0);
  Mat prod = matmul(inv, r1 + Mat::identity(2));
  EXPECT_LT(max_abs_diff(prod, Mat::identity(2)), 1e-12);
}

TEST(InvSqrt, Diagonal) {
  EXPECT_EQ(inv_sqrt(Mat::identity(4)), Mat::identity(4));
  Mat m = inv_sqrt(Mat{{4.0, 0.0}, {0.0, 9.0}});
  EXPECT_NEAR(m(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(m(1, 1), 1.0 / 3.0, 1e-15);
}

TEST(InvSqrt, WhitensSamples) {
  Rng rng(37);
  Mat a = random_spd(6, rng);
  Mat w = inv_sqrt(a);
  Mat sq = matmul(w, w);
  EXPECT_LT(frobenius(matmul(sq, a) - Mat::identity(6)), 1e-8);
  // Samples with covariance a, whitened, have identity covariance exactly
  // up to the sample covariance of the transform.
  Mat root = sqrt_psd(a);
  std::vector<Vec> s;
  for (int i = 0; i < 400; ++i) {
    Vec e(6);
    for (double& x : e) x = rng.normal();
    s.push_back(matvec(root, e));
  }
  Mat c = covariance(s, false);
  Mat cw = inv_sqrt(c);
  std::vector<Vec> t;
  for (const Vec& x : s) t.push_back(matvec(cw, x));
  EXPECT_LT(max_abs_diff(covariance(t, false), Mat::identity(6)), 1e-8);
}

TEST(OperatorNorm, KnownValues) {
  Rng rng(41);
  EXPECT_EQ(operator_norm(Mat(3, 2), rng), 0.0);
  EXPECT_NEAR(operator_norm(Mat{{3.0, 0.0}, {0.0, -7.0}}, rng), 7.0, 1e-10);
}

TEST(OperatorNorm, MatchesEigenOracleAndBoundsEveryDirection) {
  Rng rng(43);
  Mat m = random_mat(5, 3, rng);
  const double n = operator_norm(m, rng);
  const double ref = std::sqrt(sym_eigen(matmul_tn(m, m)).eigenvalues.back());
  EXPECT_NEAR(n, ref, 1e-8);
  for (int i = 0; i < 100; ++i) {
    Vec v{rng.normal(), rng.normal(), rng.normal()};
    EXPECT_LE(norm2(matvec(m, v)) / norm2(v), n + 1e-9);
  }
}
