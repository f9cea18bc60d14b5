#pragma once

// Metric-space points for the two supported geometries (one-dimensional Wasserstein space via
// quantile functions, correlation matrices under the Frobenius metric), their distances and
// weighted Frechet means.  Weighted means accept negative weights: the unconstrained minimizer is
// computed in the linear ambient space and then projected back onto the model space.

#include "error.hpp"
#include "matrix.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mfreg {

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Probability grid and quantile functions
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// Equally spaced probability levels 0 = p_1 < ... < p_m = 1.
  class ProbabilityGrid {
  public:
    static constexpr std::size_t default_size = 101;

    explicit ProbabilityGrid(std::size_t m = default_size) : m_(m) {
      if (m < 2) { throw InvalidInput("probability grid needs at least 2 levels"); }
    }

    [[nodiscard]] std::size_t size() const noexcept { return m_; }
    [[nodiscard]] double level(std::size_t i) const noexcept {
      return i + 1 == m_ ? 1.0 : static_cast<double>(i) / static_cast<double>(m_ - 1);
    }
    [[nodiscard]] double spacing() const noexcept { return 1.0 / static_cast<double>(m_ - 1); }

    [[nodiscard]] std::vector<double> levels() const {
      std::vector<double> out(m_);
      for (std::size_t i = 0; i < m_; ++i) { out[i] = level(i); }
      return out;
    }

    friend bool operator==(const ProbabilityGrid&, const ProbabilityGrid&) = default;

  private:
    std::size_t m_;
  };

  /// A distribution on [lo, hi] stored as its quantile values on a ProbabilityGrid.
  class QuantileFunction {
  public:
    QuantileFunction(std::vector<double> values, double lo, double hi)
      : grid_(values.size()), values_(std::move(values)), lo_(lo), hi_(hi) {
      if (!(lo <= hi)) { throw InvalidInput("quantile support requires lo <= hi"); }
      for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) { throw InvalidInput("quantile values must be finite"); }
        if (i > 0 && values_[i] < values_[i - 1]) {
          throw InvariantViolation("quantile values must be nondecreasing (index " + std::to_string(i) + ")");
        }
      }
      if (values_.front() < lo_ || values_.back() > hi_) {
        throw InvariantViolation("quantile values leave the support [lo, hi]");
      }
    }

    /// Tabulates `q` on a grid of size m.
    template<typename F>
    static QuantileFunction tabulate(std::size_t m, double lo, double hi, F&& q) {
      ProbabilityGrid grid(m);
      std::vector<double> values(m);
      for (std::size_t i = 0; i < m; ++i) { values[i] = q(grid.level(i)); }
      return {std::move(values), lo, hi};
    }

    [[nodiscard]] const ProbabilityGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] double lo() const noexcept { return lo_; }
    [[nodiscard]] double hi() const noexcept { return hi_; }

    friend bool operator==(const QuantileFunction&, const QuantileFunction&) = default;

  private:
    ProbabilityGrid grid_;
    std::vector<double> values_;
    double lo_;
    double hi_;
  };

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Correlation matrices
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// Symmetric, unit-diagonal, positive semidefinite matrix.
  class CorrelationMatrix {
  public:
    static constexpr double symmetry_tol = 1e-10;
    static constexpr double eigen_tol = 1e-8;

    /// Validates every invariant; throws InvariantViolation otherwise.
    explicit CorrelationMatrix(Matrix m) : m_(std::move(m)) {
      const std::size_t r = m_.size();
      if (r == 0) { throw InvalidInput("correlation matrix must be non-empty"); }
      for (double v : m_.data()) {
        if (!std::isfinite(v)) { throw InvalidInput("correlation entries must be finite"); }
      }
      if (!is_symmetric(m_, symmetry_tol)) { throw InvariantViolation("correlation matrix is not symmetric"); }
      for (std::size_t i = 0; i < r; ++i) {
        if (m_(i, i) != 1.0) { throw InvariantViolation("correlation diagonal must be exactly 1"); }
        for (std::size_t j = 0; j < r; ++j) {
          if (m_(i, j) < -1.0 || m_(i, j) > 1.0) { throw InvariantViolation("correlation entry outside [-1, 1]"); }
        }
      }
      if (r > 1 && symmetric_eigenvalues(m_).front() < -eigen_tol) {
        throw InvariantViolation("correlation matrix is not positive semidefinite");
      }
    }

    static CorrelationMatrix identity(std::size_t r) { return CorrelationMatrix(Matrix::identity(r)); }

    /// All off-diagonal entries equal to rho.
    static CorrelationMatrix equicorrelation(std::size_t r, double rho) {
      Matrix m(r, rho);
      for (std::size_t i = 0; i < r; ++i) { m(i, i) = 1.0; }
      return CorrelationMatrix(std::move(m));
    }

    [[nodiscard]] std::size_t dim() const noexcept { return m_.size(); }
    [[nodiscard]] const Matrix& matrix() const noexcept { return m_; }
    double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }

    friend bool operator==(const CorrelationMatrix&, const CorrelationMatrix&) = default;

  private:
    Matrix m_;
  };

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Distances
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// Trapezoid-rule L2 distance between two quantile vectors on the same equally spaced grid.
  inline double squared_quantile_distance(std::span<const double> a, std::span<const double> b) {
    const std::size_t m = a.size();
    double s = 0.5 * ((a[0] - b[0]) * (a[0] - b[0]) + (a[m - 1] - b[m - 1]) * (a[m - 1] - b[m - 1]));
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return s / static_cast<double>(m - 1);
  }

  inline double wasserstein_distance(const QuantileFunction& q1, const QuantileFunction& q2) {
    if (q1.grid() != q2.grid()) { throw InvalidInput("wasserstein_distance: probability grids differ"); }
    return std::sqrt(squared_quantile_distance(q1.values(), q2.values()));
  }

  inline double frobenius_distance(const CorrelationMatrix& r1, const CorrelationMatrix& r2) {
    if (r1.dim() != r2.dim()) { throw InvalidInput("frobenius_distance: dimensions differ"); }
    return frobenius_norm(r1.matrix() - r2.matrix());
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Projections
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// Least-squares projection onto nondecreasing sequences (pool adjacent violators), clamped to [lo, hi].
  inline std::vector<double> isotonic_project(std::span<const double> values, double lo, double hi) {
    if (!(lo <= hi)) { throw InvalidInput("isotonic_project requires lo <= hi"); }
    for (double v : values) {
      if (!std::isfinite(v)) { throw InvalidInput("isotonic_project: non-finite input"); }
    }

    // Stack of blocks: (sum, count). Adjacent blocks always have increasing means.
    std::vector<double> sums;
    std::vector<std::size_t> counts;
    sums.reserve(values.size());
    counts.reserve(values.size());
    for (double v : values) {
      sums.push_back(v);
      counts.push_back(1);
      while (sums.size() > 1) {
        const std::size_t k = sums.size() - 1;
        // mean(k-1) > mean(k), compared without division
        if (sums[k - 1] * static_cast<double>(counts[k]) <= sums[k] * static_cast<double>(counts[k - 1])) { break; }
        sums[k - 1] += sums[k];
        counts[k - 1] += counts[k];
        sums.pop_back();
        counts.pop_back();
      }
    }

    std::vector<double> out;
    out.reserve(values.size());
    for (std::size_t b = 0; b < sums.size(); ++b) {
      const double mean = std::clamp(sums[b] / static_cast<double>(counts[b]), lo, hi);
      out.insert(out.end(), counts[b], mean);
    }
    return out;
  }

  /// True when `m` already satisfies every CorrelationMatrix invariant.
  inline bool is_correlation(const Matrix& m) {
    const std::size_t r = m.size();
    if (r == 0 || !is_symmetric(m, CorrelationMatrix::symmetry_tol)) { return false; }
    for (std::size_t i = 0; i < r; ++i) {
      if (m(i, i) != 1.0) { return false; }
      for (std::size_t j = 0; j < r; ++j) {
        if (!(m(i, j) >= -1.0 && m(i, j) <= 1.0)) { return false; }
      }
    }
    return r == 1 || symmetric_eigenvalues(m).front() >= -CorrelationMatrix::eigen_tol;
  }

  struct NearestCorrelationOptions {
    double tol = 1e-10;
    int max_iterations = 200;
  };

  /// Nearest correlation matrix in Frobenius norm by alternating projections between the PSD cone and
  /// the unit-diagonal set, with Dykstra's correction on the cone step (Higham 2002).
  /// A valid correlation matrix is returned unchanged. Throws NumericalFailure (carrying the last iterate)
  /// when `max_iterations` is exhausted.
  inline CorrelationMatrix nearest_correlation(const Matrix& m, NearestCorrelationOptions opts = {}) {
    const std::size_t r = m.size();
    if (r == 0) { throw InvalidInput("nearest_correlation: empty matrix"); }
    for (double v : m.data()) {
      if (!std::isfinite(v)) { throw InvalidInput("nearest_correlation: non-finite entry"); }
    }
    if (!is_symmetric(m, CorrelationMatrix::symmetry_tol)) { throw InvalidInput("nearest_correlation: matrix is not symmetric"); }

    auto project_psd = [r](const Matrix& a) {
      const auto eig = jacobi_eigen(a);
      Matrix out(r);
      for (std::size_t k = 0; k < r; ++k) {
        const double lambda = std::max(eig.values[k], 0.0);
        if (lambda == 0.0) { continue; }
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < r; ++j) { out(i, j) += lambda * eig.vectors(i, k) * eig.vectors(j, k); }
        }
      }
      return out;
    };

    // Projection onto the affine unit-diagonal set (symmetrized against rounding).
    auto unit_diagonal = [r](Matrix y) {
      for (std::size_t i = 0; i < r; ++i) {
        y(i, i) = 1.0;
        for (std::size_t j = i + 1; j < r; ++j) {
          const double v = 0.5 * (y(i, j) + y(j, i));
          y(i, j) = v;
          y(j, i) = v;
        }
      }
      return y;
    };

    if (is_correlation(m)) { return CorrelationMatrix(m); }
    Matrix y = unit_diagonal(m);
    if (r == 1) { return CorrelationMatrix(std::move(y)); }
    Matrix correction(r);
    for (int it = 0; it < opts.max_iterations; ++it) {
      Matrix shifted = y - correction;
      Matrix x = project_psd(shifted);
      correction = x - shifted;
      Matrix next = unit_diagonal(x);
      const double change = frobenius_norm(next - y);
      y = std::move(next);
      if (change < opts.tol) {
        // entries of a unit-diagonal PSD matrix lie in [-1, 1]; clamp away rounding
        for (double& v : y.data()) { v = std::clamp(v, -1.0, 1.0); }
        if (jacobi_eigen(y).values.front() >= -CorrelationMatrix::eigen_tol) { return CorrelationMatrix(std::move(y)); }
      }
    }
    throw NumericalFailure("nearest_correlation did not converge in " + std::to_string(opts.max_iterations) + " iterations",
                           y.data());
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Weighted Frechet means
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// Points with real weights summing to one. Negative weights are allowed.
  template<typename Point>
  class WeightedSample {
  public:
    static constexpr double sum_tol = 1e-9;

    WeightedSample(std::span<const Point> points, std::span<const double> weights) : points_(points), weights_(weights) {
      if (points.empty()) { throw InvalidInput("weighted sample is empty"); }
      if (points.size() != weights.size()) { throw InvalidInput("weighted sample: points and weights differ in length"); }
      double total = 0.0;
      for (double w : weights) { total += w; }
      if (std::abs(total - 1.0) > sum_tol) { throw InvalidInput("weighted sample: weights must sum to 1"); }
    }

    [[nodiscard]] std::span<const Point> points() const noexcept { return points_; }
    [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
    [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }

  private:
    std::span<const Point> points_;
    std::span<const double> weights_;
  };

  /// Pointwise weighted quantile average, projected onto nondecreasing sequences within the hull of the supports.
  inline QuantileFunction weighted_frechet_mean_wasserstein(const WeightedSample<QuantileFunction>& sample) {
    const auto pts = sample.points();
    const auto w = sample.weights();
    const std::size_t m = pts.front().grid().size();
    std::vector<double> avg(m, 0.0);
    double lo = pts.front().lo();
    double hi = pts.front().hi();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (pts[j].grid() != pts.front().grid()) { throw InvalidInput("weighted mean: probability grids differ"); }
      lo = std::min(lo, pts[j].lo());
      hi = std::max(hi, pts[j].hi());
      if (w[j] == 0.0) { continue; }
      const auto& v = pts[j].values();
      for (std::size_t i = 0; i < m; ++i) { avg[i] += w[j] * v[i]; }
    }
    return {isotonic_project(avg, lo, hi), lo, hi};
  }

  /// Weighted entrywise average, projected to the nearest correlation matrix.
  inline CorrelationMatrix weighted_frechet_mean_correlation(const WeightedSample<CorrelationMatrix>& sample,
                                                             NearestCorrelationOptions opts = {}) {
    const auto pts = sample.points();
    const auto w = sample.weights();
    const std::size_t r = pts.front().dim();
    Matrix avg(r);
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (pts[j].dim() != r) { throw InvalidInput("weighted mean: correlation dimensions differ"); }
      if (w[j] == 0.0) { continue; }
      const auto& a = pts[j].matrix().data();
      auto& out = avg.data();
      for (std::size_t k = 0; k < a.size(); ++k) { out[k] += w[j] * a[k]; }
    }
    // Symmetric by construction, but rounding in the weights can leave a few ulps of asymmetry.
    for (std::size_t i = 0; i < r; ++i) {
      avg(i, i) = 1.0;
      for (std::size_t j = i + 1; j < r; ++j) { avg(j, i) = avg(i, j); }
    }
    return nearest_correlation(avg, opts);
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Geometry tags: the uniform surface the regression and warping templates are written against.
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  struct Wasserstein {
    using Point = QuantileFunction;
    static constexpr std::string_view name = "wasserstein";

    static double distance(const Point& a, const Point& b) { return wasserstein_distance(a, b); }
    static double squared_distance(const Point& a, const Point& b) {
      if (a.grid() != b.grid()) { throw InvalidInput("wasserstein_distance: probability grids differ"); }
      return squared_quantile_distance(a.values(), b.values());
    }
    static Point frechet_mean(const WeightedSample<Point>& s) { return weighted_frechet_mean_wasserstein(s); }
  };

  struct Correlation {
    using Point = CorrelationMatrix;
    static constexpr std::string_view name = "correlation";

    static double distance(const Point& a, const Point& b) { return frobenius_distance(a, b); }
    static double squared_distance(const Point& a, const Point& b) {
      const double d = frobenius_distance(a, b);
      return d * d;
    }
    static Point frechet_mean(const WeightedSample<Point>& s) { return weighted_frechet_mean_correlation(s); }
  };

  template<typename G>
  concept Geometry = requires(const typename G::Point& p, const WeightedSample<typename G::Point>& s) {
    { G::distance(p, p) } -> std::convertible_to<double>;
    { G::squared_distance(p, p) } -> std::convertible_to<double>;
    { G::frechet_mean(s) } -> std::convertible_to<typename G::Point>;
  };

} // namespace mfreg
