#include <mfreg/matrix.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using mfreg::Matrix;

namespace {

  Matrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        m(i, j) = u(rng);
        m(j, i) = m(i, j);
      }
    }
    return m;
  }

  // Closed-form eigenvalues of a symmetric 3x3 matrix (trigonometric solution of the characteristic cubic).
  std::vector<double> cubic_eigenvalues(const Matrix& a) {
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
    const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) + (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    if (p == 0.0) { return {q, q, q}; }
    Matrix b(3);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) { b(i, j) = (a(i, j) - (i == j ? q : 0.0)) / p; }
    }
    const double det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                       b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    const double phi = std::acos(std::clamp(det / 2.0, -1.0, 1.0)) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    std::vector<double> out{e1, 3.0 * q - e1 - e3, e3};
    std::sort(out.begin(), out.end());
    return out;
  }

} // namespace

TEST(Matrix, IdentityAndArithmetic) {
  const Matrix i3 = Matrix::identity(3);
  EXPECT_EQ(i3(0, 0), 1.0);
  EXPECT_EQ(i3(0, 1), 0.0);
  const Matrix twice = i3 + i3;
  EXPECT_EQ(twice(2, 2), 2.0);
  EXPECT_EQ((twice - i3), i3);
  EXPECT_EQ(2.0 * i3, twice);
  EXPECT_DOUBLE_EQ(mfreg::frobenius_norm(i3), std::sqrt(3.0));
}

TEST(Matrix, FromRowsRejectsRagged) {
  EXPECT_THROW(Matrix::from_rows({{1.0, 2.0}, {3.0}}), mfreg::InvalidInput);
  const Matrix m = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  EXPECT_EQ(m(1, 0), 3.0);
  EXPECT_FALSE(mfreg::is_symmetric(m, 1e-12));
}

TEST(Jacobi, DiagonalMatrixIsItsOwnSpectrum) {
  Matrix m(3);
  m(0, 0) = 3.0;
  m(1, 1) = -1.0;
  m(2, 2) = 2.0;
  const auto ev = mfreg::symmetric_eigenvalues(m);
  EXPECT_EQ(ev, (std::vector<double>{-1.0, 2.0, 3.0}));
}

TEST(Jacobi, TwoByTwoClosedForm) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const Matrix m = random_symmetric(2, rng);
    const double tr = m(0, 0) + m(1, 1);
    const double disc = std::sqrt((m(0, 0) - m(1, 1)) * (m(0, 0) - m(1, 1)) + 4.0 * m(0, 1) * m(0, 1));
    const auto ev = mfreg::symmetric_eigenvalues(m);
    EXPECT_NEAR(ev[0], 0.5 * (tr - disc), 1e-12);
    EXPECT_NEAR(ev[1], 0.5 * (tr + disc), 1e-12);
  }
}

TEST(Jacobi, ThreeByThreeMatchesCharacteristicCubic) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 200; ++rep) {
    const Matrix m = random_symmetric(3, rng);
    const auto ev = mfreg::symmetric_eigenvalues(m);
    const auto oracle = cubic_eigenvalues(m);
    for (std::size_t k = 0; k < 3; ++k) { EXPECT_NEAR(ev[k], oracle[k], 1e-9); }
  }
}

TEST(Jacobi, EigenvectorsReconstructTheMatrix) {
  std::mt19937_64 rng(13);
  for (std::size_t n : {1u, 4u, 10u, 25u}) {
    const Matrix m = random_symmetric(n, rng);
    const auto eig = mfreg::jacobi_eigen(m);
    ASSERT_TRUE(std::is_sorted(eig.values.begin(), eig.values.end()));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double rec = 0.0;
        double gram = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          rec += eig.vectors(i, k) * eig.values[k] * eig.vectors(j, k);
          gram += eig.vectors(k, i) * eig.vectors(k, j);
        }
        EXPECT_NEAR(rec, m(i, j), 1e-10);
        EXPECT_NEAR(gram, i == j ? 1.0 : 0.0, 1e-10);
      }
    }
  }
}

TEST(Jacobi, RejectsOversizedInput) { EXPECT_THROW(mfreg::jacobi_eigen(Matrix(65)), mfreg::InvalidInput); }
