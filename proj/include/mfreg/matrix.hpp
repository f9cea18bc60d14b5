#pragma once

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace mfreg {

  /// Dense square matrix, row-major. Only what the correlation geometry and Laplacian spectra need.
  class Matrix {
  public:
    Matrix() = default;
    explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}

    static Matrix identity(std::size_t n) {
      Matrix m(n);
      for (std::size_t i = 0; i < n; ++i) { m(i, i) = 1.0; }
      return m;
    }

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
      Matrix m(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) { throw InvalidInput("matrix rows must form a square"); }
        for (std::size_t j = 0; j < rows.size(); ++j) { m(i, j) = rows[i][j]; }
      }
      return m;
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
    [[nodiscard]] const std::vector<double>& data() const noexcept { return a_; }
    [[nodiscard]] std::vector<double>& data() noexcept { return a_; }

    [[nodiscard]] std::vector<std::vector<double>> rows() const {
      std::vector<std::vector<double>> out(n_, std::vector<double>(n_));
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) { out[i][j] = (*this)(i, j); }
      }
      return out;
    }

    Matrix& operator+=(const Matrix& o) {
      for (std::size_t k = 0; k < a_.size(); ++k) { a_[k] += o.a_[k]; }
      return *this;
    }
    Matrix& operator-=(const Matrix& o) {
      for (std::size_t k = 0; k < a_.size(); ++k) { a_[k] -= o.a_[k]; }
      return *this;
    }
    Matrix& operator*=(double s) {
      for (auto& v : a_) { v *= s; }
      return *this;
    }
    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend bool operator==(const Matrix&, const Matrix&) = default;

  private:
    std::size_t n_ = 0;
    std::vector<double> a_;
  };

  inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) { s += v * v; }
    return std::sqrt(s);
  }

  inline bool is_symmetric(const Matrix& m, double tol) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = i + 1; j < m.size(); ++j) {
        if (std::abs(m(i, j) - m(j, i)) > tol) { return false; }
      }
    }
    return true;
  }

  /// Eigen-decomposition of a symmetric matrix. Eigenvalues ascending; `vectors` column k pairs with value k.
  struct SymmetricEigen {
    std::vector<double> values;
    Matrix vectors;
  };

  /// Cyclic Jacobi sweeps until the off-diagonal Frobenius norm drops below `tol` times max(1, ||A||_F).
  inline SymmetricEigen jacobi_eigen(Matrix a, double tol = 1e-12, int max_sweeps = 100) {
    const std::size_t n = a.size();
    if (n > 64) { throw InvalidInput("jacobi_eigen supports dimensions up to 64"); }
    Matrix v = Matrix::identity(n);
    const double scale = std::max(1.0, frobenius_norm(a));

    auto off_norm = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) { s += a(i, j) * a(i, j); }
        }
      }
      return std::sqrt(s);
    };

    int sweep = 0;
    while (off_norm() > tol * scale) {
      if (++sweep > max_sweeps) { throw NumericalFailure("jacobi_eigen did not converge", a.data()); }
      for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
          const double apq = a(p, q);
          if (apq == 0.0) { continue; }
          // Rotation angle zeroing a(p,q); stable form from Golub & Van Loan 8.5.
          const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
          const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          for (std::size_t k = 0; k < n; ++k) {
            const double akp = a(k, p);
            const double akq = a(k, q);
            a(k, p) = c * akp - s * akq;
            a(k, q) = s * akp + c * akq;
          }
          for (std::size_t k = 0; k < n; ++k) {
            const double apk = a(p, k);
            const double aqk = a(q, k);
            a(p, k) = c * apk - s * aqk;
            a(q, k) = s * apk + c * aqk;
          }
          for (std::size_t k = 0; k < n; ++k) {
            const double vkp = v(k, p);
            const double vkq = v(k, q);
            v(k, p) = c * vkp - s * vkq;
            v(k, q) = s * vkp + c * vkq;
          }
        }
      }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

    SymmetricEigen out{std::vector<double>(n), Matrix(n)};
    for (std::size_t k = 0; k < n; ++k) {
      out.values[k] = a(order[k], order[k]);
      for (std::size_t i = 0; i < n; ++i) { out.vectors(i, k) = v(i, order[k]); }
    }
    return out;
  }

  inline std::vector<double> symmetric_eigenvalues(const Matrix& a) { return jacobi_eigen(a).values; }

} // namespace mfreg
