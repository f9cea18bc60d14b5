#pragma once

// Time warping of fitted metric-space trajectories with piecewise-linear spline warps.
//
// A warp g on [0, tau] is parameterized by its values theta_k = g(t_k) at the equidistant knots
// t_k = k tau / (p + 1), k = 1..p+1, with g(0) = 0 and theta_{p+1} = tau. The pairwise warp
// from trajectory i' toward trajectory i minimizes
//
//     C(theta) = int_0^tau [ d^2(Y_i'(g(t)), Y_i(t)) + lambda (g(t) - t)^2 ] dt
//
// over increments theta_k - theta_{k-1} >= xi. Averaging the pairwise warps of subject i over all
// partners (the identity included for i' = i) estimates the inverse of its global warp.

#include "error.hpp"
#include "geometry.hpp"
#include "lofreg.hpp"
#include "nelder_mead.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <type_traits>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mfreg {

  /// Equidistant knots t_k = k tau / (p + 1), k = 0..p+1.
  class SplineBasis {
  public:
    SplineBasis(std::size_t p, double tau) : p_(p), tau_(tau) {
      if (!(tau > 0.0)) { throw InvalidInput("spline basis domain length must be positive"); }
    }

    [[nodiscard]] std::size_t interior_knots() const noexcept { return p_; }
    [[nodiscard]] std::size_t size() const noexcept { return p_ + 1; }
    [[nodiscard]] double tau() const noexcept { return tau_; }
    [[nodiscard]] double spacing() const noexcept { return tau_ / static_cast<double>(p_ + 1); }
    [[nodiscard]] double knot(std::size_t k) const noexcept {
      return k == p_ + 1 ? tau_ : tau_ * static_cast<double>(k) / static_cast<double>(p_ + 1);
    }

    /// Segment j with t in [t_j, t_{j+1}) (the last one closed) and the local coordinate in [0, 1].
    [[nodiscard]] std::pair<std::size_t, double> locate(double t) const {
      if (!(t >= 0.0 && t <= tau_)) { throw InvalidInput("spline basis: t outside [0, tau]"); }
      const double u = t * static_cast<double>(p_ + 1) / tau_;
      const std::size_t j = std::min(static_cast<std::size_t>(u), p_);
      return {j, u - static_cast<double>(j)};
    }

    friend bool operator==(const SplineBasis&, const SplineBasis&) = default;

  private:
    std::size_t p_;
    double tau_;
  };

  /// Hat-function values A_1(t), ..., A_{p+1}(t).
  inline std::vector<double> basis_eval(const SplineBasis& basis, double t) {
    std::vector<double> a(basis.size(), 0.0);
    const auto [j, s] = basis.locate(t);
    a[j] = s; // rising part of A_{j+1}
    if (j >= 1) { a[j - 1] = 1.0 - s; }
    return a;
  }

  /// Knot values theta_1 < ... < theta_{p+1} = tau.
  struct WarpCoefficients {
    std::vector<double> theta;

    static WarpCoefficients identity(const SplineBasis& basis) {
      WarpCoefficients c;
      for (std::size_t k = 1; k <= basis.size(); ++k) { c.theta.push_back(basis.knot(k)); }
      return c;
    }

    friend bool operator==(const WarpCoefficients&, const WarpCoefficients&) = default;
  };

  /// Throws InvariantViolation unless 0 < theta_1 < ... < theta_{p+1} = tau.
  inline void check_coefficients(const WarpCoefficients& c, const SplineBasis& basis) {
    if (c.theta.size() != basis.size()) { throw InvariantViolation("warp coefficients do not match the basis size"); }
    double prev = 0.0;
    for (double v : c.theta) {
      if (!std::isfinite(v) || !(v > prev)) { throw InvariantViolation("warp coefficients must be strictly increasing from 0"); }
      prev = v;
    }
    if (std::abs(c.theta.back() - basis.tau()) > 1e-12 * basis.tau()) {
      throw InvariantViolation("last warp coefficient must equal tau");
    }
  }

  namespace detail {
    inline double spline_value(const SplineBasis& basis, std::span<const double> theta, double t) {
      const auto [j, s] = basis.locate(t);
      const double left = j == 0 ? 0.0 : theta[j - 1];
      return left + s * (theta[j] - left);
    }

    inline double spline_inverse(const SplineBasis& basis, std::span<const double> theta, double s) {
      const auto it = std::lower_bound(theta.begin(), theta.end(), s);
      const std::size_t j = std::min(static_cast<std::size_t>(it - theta.begin()), theta.size() - 1);
      const double lo = j == 0 ? 0.0 : theta[j - 1];
      const double frac = (s - lo) / (theta[j] - lo);
      return basis.knot(j) + frac * basis.spacing();
    }

    /// Linear interpolation of (xs, ys) at x; xs strictly increasing, x clamped to its range.
    inline double interpolate(std::span<const double> xs, std::span<const double> ys, double x) {
      if (x <= xs.front()) { return ys.front(); }
      if (x >= xs.back()) { return ys.back(); }
      const auto it = std::upper_bound(xs.begin(), xs.end(), x);
      const std::size_t k = static_cast<std::size_t>(it - xs.begin());
      const double f = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
      return ys[k - 1] + f * (ys[k] - ys[k - 1]);
    }
  }

  /// Piecewise-linear interpolation through (0, 0) and (t_k, theta_k).
  inline double warp_eval(const WarpCoefficients& c, const SplineBasis& basis, double t) {
    check_coefficients(c, basis);
    return detail::spline_value(basis, c.theta, t);
  }

  /// An element of W: continuous, strictly increasing, g(0) = 0 and g(tau) = tau.
  class WarpFunction {
  public:
    struct Spline {
      SplineBasis basis;
      WarpCoefficients coefficients;
    };
    /// Monotone map given at nodes xs (0 = x_0 < ... < x_K = tau) with values ys (0 ... tau), interpolated linearly.
    struct Tabulated {
      std::vector<double> xs;
      std::vector<double> ys;
    };

    WarpFunction(SplineBasis basis, WarpCoefficients c) : rep_(Spline{basis, std::move(c)}) {
      check_coefficients(std::get<Spline>(rep_).coefficients, basis);
    }

    WarpFunction(std::vector<double> xs, std::vector<double> ys) : rep_(Tabulated{std::move(xs), std::move(ys)}) {
      const auto& tab = std::get<Tabulated>(rep_);
      if (tab.xs.size() < 2 || tab.xs.size() != tab.ys.size()) { throw InvariantViolation("tabulated warp needs matching nodes"); }
      const double tau = tab.xs.back();
      if (tab.xs.front() != 0.0 || !(tau > 0.0)) { throw InvariantViolation("tabulated warp must start at 0"); }
      if (std::abs(tab.ys.front()) > 1e-12 * tau || std::abs(tab.ys.back() - tau) > 1e-12 * tau) {
        throw InvariantViolation("tabulated warp must fix both endpoints");
      }
      for (std::size_t k = 1; k < tab.xs.size(); ++k) {
        if (!(tab.xs[k] > tab.xs[k - 1]) || !(tab.ys[k] >= tab.ys[k - 1])) {
          throw InvariantViolation("tabulated warp must be increasing");
        }
      }
    }

    static WarpFunction identity(double tau) { return {std::vector<double>{0.0, tau}, std::vector<double>{0.0, tau}}; }

    [[nodiscard]] double tau() const {
      return std::visit([](const auto& r) {
        if constexpr (std::is_same_v<std::decay_t<decltype(r)>, Spline>) { return r.basis.tau(); }
        else { return r.xs.back(); }
      }, rep_);
    }

    [[nodiscard]] double operator()(double t) const {
      if (!(t >= 0.0 && t <= tau())) { throw InvalidInput("warp evaluated outside [0, tau]"); }
      return std::visit([t](const auto& r) {
        if constexpr (std::is_same_v<std::decay_t<decltype(r)>, Spline>) {
          return detail::spline_value(r.basis, r.coefficients.theta, t);
        } else {
          return detail::interpolate(r.xs, r.ys, t);
        }
      }, rep_);
    }

    [[nodiscard]] double inverse(double s) const {
      if (!(s >= 0.0 && s <= tau())) { throw InvalidInput("warp inverse evaluated outside [0, tau]"); }
      return std::visit([s](const auto& r) {
        if constexpr (std::is_same_v<std::decay_t<decltype(r)>, Spline>) {
          return detail::spline_inverse(r.basis, r.coefficients.theta, s);
        } else {
          // Flat stretches invert to their left end.
          if (s <= r.ys.front()) { return r.xs.front(); }
          const auto it = std::lower_bound(r.ys.begin(), r.ys.end(), s);
          const std::size_t k = static_cast<std::size_t>(it - r.ys.begin());
          if (k >= r.ys.size()) { return r.xs.back(); }
          if (r.ys[k] == s) { return r.xs[k]; }
          const double f = (s - r.ys[k - 1]) / (r.ys[k] - r.ys[k - 1]);
          return r.xs[k - 1] + f * (r.xs[k] - r.xs[k - 1]);
        }
      }, rep_);
    }

    /// Values on `grid`.
    [[nodiscard]] std::vector<double> tabulate(std::span<const double> grid) const {
      std::vector<double> out(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k) { out[k] = (*this)(grid[k]); }
      return out;
    }

    [[nodiscard]] bool is_spline() const noexcept { return std::holds_alternative<Spline>(rep_); }
    [[nodiscard]] const Spline* spline() const noexcept { return std::get_if<Spline>(&rep_); }
    [[nodiscard]] const Tabulated* tabulated() const noexcept { return std::get_if<Tabulated>(&rep_); }

  private:
    std::variant<Spline, Tabulated> rep_;
  };

  inline double warp_invert(const WarpFunction& warp, double s) { return warp.inverse(s); }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Pairwise estimation
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  struct WarpConfig {
    std::size_t p = 3;
    double lambda = 0.0;
    double xi = 0.0;              ///< minimum knot increment; <= 0 selects 0.1 tau / (p + 1)
    std::size_t quad_nodes = 101;
    std::uint64_t seed = 0;       ///< seeds the jittered optimizer starts
    std::size_t jittered_starts = 4;
    NelderMeadOptions optimizer{};

    [[nodiscard]] double effective_xi(double tau) const {
      return xi > 0.0 ? xi : 0.1 * tau / static_cast<double>(p + 1);
    }

    void validate(double tau) const {
      if (!(lambda >= 0.0) || !std::isfinite(lambda)) { throw InvalidInput("warp penalty lambda must be >= 0"); }
      if (quad_nodes < 2) { throw InvalidInput("warp quadrature needs at least 2 nodes"); }
      const double x = effective_xi(tau);
      if (!(x < tau / static_cast<double>(p + 1))) { throw InvalidInput("warp xi must be below tau / (p + 1)"); }
    }
  };

  namespace detail {
    /// Index of the grid node nearest to s; grid sorted ascending.
    class NearestNode {
    public:
      explicit NearestNode(std::span<const double> grid) : grid_(grid.begin(), grid.end()) {
        const std::size_t n = grid.size();
        uniform_ = n >= 2 && grid.front() == 0.0;
        if (uniform_) {
          step_ = grid.back() / static_cast<double>(n - 1);
          inv_step_ = 1.0 / step_;
          for (std::size_t k = 0; k < n && uniform_; ++k) {
            uniform_ = std::abs(grid[k] - step_ * static_cast<double>(k)) <= 1e-12 * grid.back();
          }
        }
      }

      std::size_t operator()(double s) const {
        const std::size_t n = grid_.size();
        if (uniform_) {
          const double u = s * inv_step_ + 0.5;
          if (!(u > 0.0)) { return 0; }
          return std::min(static_cast<std::size_t>(u), n - 1);
        }
        const auto it = std::lower_bound(grid_.begin(), grid_.end(), s);
        if (it == grid_.begin()) { return 0; }
        if (it == grid_.end()) { return n - 1; }
        const std::size_t k = static_cast<std::size_t>(it - grid_.begin());
        return (s - grid_[k - 1] <= grid_[k] - s) ? k - 1 : k;
      }

    private:
      std::vector<double> grid_;
      bool uniform_ = false;
      double step_ = 0.0;
      double inv_step_ = 0.0;
    };

    /// Trapezoid weights for `n` equally spaced nodes on [0, tau].
    inline std::vector<double> trapezoid_weights(std::size_t n, double tau) {
      std::vector<double> w(n, tau / static_cast<double>(n - 1));
      w.front() *= 0.5;
      w.back() *= 0.5;
      return w;
    }

    inline bool in_parameter_space(std::span<const double> theta, double tau) {
      double prev = 0.0;
      for (double v : theta) {
        if (!std::isfinite(v) || !(v > prev)) { return false; }
        prev = v;
      }
      return std::abs(theta.back() - tau) <= 1e-12 * tau;
    }
  }

  /// Squared distances d^2(Y_i'(s_k), Y_i(t_q)) between every node s_k of Y_i' and the node of Y_i
  /// nearest each quadrature point t_q. Independent of p and lambda, so one table serves every
  /// warp configuration with the same quadrature size.
  class PairwiseTable {
  public:
    template<Geometry G>
    PairwiseTable(const FittedTrajectory<G>& from, const FittedTrajectory<G>& to, std::size_t quad_nodes)
      : from_nearest_(from.grid) {
      if (from.grid.empty() || to.grid.empty()) { throw InvalidInput("pairwise objective: empty trajectory"); }
      if (from.grid.back() != to.grid.back() || from.grid.front() != 0.0 || to.grid.front() != 0.0) {
        throw InvalidInput("pairwise objective: trajectories must share the domain [0, tau]");
      }
      if (quad_nodes < 2) { throw InvalidInput("warp quadrature needs at least 2 nodes"); }
      tau_ = to.grid.back();
      quad_ = uniform_grid(tau_, quad_nodes);
      quad_weights_ = detail::trapezoid_weights(quad_nodes, tau_);

      const detail::NearestNode to_nearest(to.grid);
      const std::size_t nq = quad_.size();
      table_.resize(from.grid.size() * nq);
      std::vector<std::size_t> to_index(nq);
      for (std::size_t q = 0; q < nq; ++q) { to_index[q] = to_nearest(quad_[q]); }
      for (std::size_t k = 0; k < from.grid.size(); ++k) {
        for (std::size_t q = 0; q < nq; ++q) {
          if (q > 0 && to_index[q] == to_index[q - 1]) {
            table_[k * nq + q] = table_[k * nq + q - 1];
          } else {
            table_[k * nq + q] = G::squared_distance(from.points[k], to.points[to_index[q]]);
          }
        }
      }
    }

    [[nodiscard]] double tau() const noexcept { return tau_; }
    [[nodiscard]] std::size_t quad_nodes() const noexcept { return quad_.size(); }

    [[nodiscard]] const std::vector<double>& quad() const noexcept { return quad_; }

    /// Trapezoid value of int [d^2(Y_i'(g(t)), Y_i(t)) + lambda (g(t) - t)^2] dt for the spline
    /// g = theta^T A, given each quadrature node's basis segment and local coordinate.
    [[nodiscard]] double integrate(std::span<const std::size_t> segment, std::span<const double> local,
                                   std::span<const double> theta, double lambda) const {
      const std::size_t nq = quad_.size();
      double total = 0.0;
      for (std::size_t q = 0; q < nq; ++q) {
        const std::size_t j = segment[q];
        const double left = j == 0 ? 0.0 : theta[j - 1];
        const double g = left + local[q] * (theta[j] - left);
        const double dev = g - quad_[q];
        total += quad_weights_[q] * (table_[from_nearest_(g) * nq + q] + lambda * dev * dev);
      }
      return total;
    }

  private:
    detail::NearestNode from_nearest_;
    double tau_ = 0.0;
    std::vector<double> quad_;
    std::vector<double> quad_weights_;
    std::vector<double> table_;
  };

  /// The penalized pairwise objective for one ordered pair (i', i) under one warp configuration.
  class PairwiseObjective {
  public:
    template<Geometry G>
    PairwiseObjective(const FittedTrajectory<G>& from, const FittedTrajectory<G>& to, const WarpConfig& config)
      : PairwiseObjective(std::make_shared<const PairwiseTable>(from, to, config.quad_nodes), config) {}

    PairwiseObjective(std::shared_ptr<const PairwiseTable> table, const WarpConfig& config)
      : table_(std::move(table)), basis_(config.p, table_->tau()), lambda_(config.lambda) {
      config.validate(basis_.tau());
      if (config.quad_nodes != table_->quad_nodes()) { throw InvalidInput("pairwise objective: quadrature size mismatch"); }
      for (double t : table_->quad()) {
        const auto [j, u] = basis_.locate(t);
        segment_.push_back(j);
        local_.push_back(u);
      }
    }

    [[nodiscard]] const SplineBasis& basis() const noexcept { return basis_; }

    /// Objective value; throws InvalidInput for theta outside the parameter space.
    [[nodiscard]] double operator()(std::span<const double> theta) const {
      if (theta.size() != basis_.size() || !detail::in_parameter_space(theta, basis_.tau())) {
        throw InvalidInput("pairwise objective: infeasible warp coefficients");
      }
      return evaluate(theta);
    }

    /// No feasibility check.
    [[nodiscard]] double evaluate(std::span<const double> theta) const {
      return table_->integrate(segment_, local_, theta, lambda_);
    }

  private:
    std::shared_ptr<const PairwiseTable> table_;
    SplineBasis basis_;
    double lambda_;
    std::vector<std::size_t> segment_;
    std::vector<double> local_;
  };

  /// Trapezoid value of the penalized objective for warping `from` (Y_i') toward `to` (Y_i).
  template<Geometry G>
  double pairwise_objective(std::span<const double> theta, const FittedTrajectory<G>& from, const FittedTrajectory<G>& to,
                            const WarpConfig& config) {
    return PairwiseObjective(from, to, config)(theta);
  }

  /// Maps unconstrained z in R^p onto increments delta_k = xi + (tau - (p+1) xi) softmax(z, 0)_k.
  /// z = 0 gives the identity warp; every image satisfies theta_k - theta_{k-1} >= xi and theta_{p+1} = tau.
  class IncrementMap {
  public:
    IncrementMap(const SplineBasis& basis, double xi) : basis_(basis), xi_(xi), slack_(basis.tau() - xi * static_cast<double>(basis.size())) {
      if (!(xi > 0.0) || !(slack_ > 0.0)) { throw InvalidInput("increment map: xi must lie in (0, tau / (p + 1))"); }
    }

    [[nodiscard]] std::size_t dim() const noexcept { return basis_.interior_knots(); }

    [[nodiscard]] std::vector<double> theta(std::span<const double> z) const {
      std::vector<double> th(basis_.size());
      theta(z, th);
      return th;
    }

    /// Writes theta(z) into `th` (size p + 1) without allocating.
    void theta(std::span<const double> z, std::span<double> th) const {
      const std::size_t n = basis_.size();
      double zmax = 0.0;
      for (double v : z) { zmax = std::max(zmax, v); }
      // th doubles as scratch for the softmax numerators
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        th[k] = std::exp((k + 1 < n ? z[k] : 0.0) - zmax);
        total += th[k];
      }
      double acc = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        acc += xi_ + slack_ * th[k] / total;
        th[k] = acc;
      }
      th[n - 1] = basis_.tau();
      // Rounding in the cumulative sum can eat into the final increment.
      for (std::size_t k = n - 1; k-- > 0;) { th[k] = std::min(th[k], th[k + 1] - xi_); }
    }

    /// Preimage of a feasible theta (increments strictly above xi).
    [[nodiscard]] std::vector<double> z(std::span<const double> theta) const {
      const std::size_t n = basis_.size();
      std::vector<double> out(n - 1);
      const double last = std::max(theta[n - 1] - theta[n - 2] - xi_, 1e-300);
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const double inc = theta[k] - (k == 0 ? 0.0 : theta[k - 1]) - xi_;
        out[k] = std::log(std::max(inc, 1e-300) / last);
      }
      return out;
    }

  private:
    SplineBasis basis_;
    double xi_;
    double slack_;
  };

  struct PairwiseEstimate {
    WarpCoefficients coefficients;
    double objective = 0.0;
  };

  /// Minimizes the pairwise objective over the xi-constrained parameter space with Nelder-Mead started
  /// from the identity and `config.jittered_starts` random feasible points (seeded by config.seed).
  inline PairwiseEstimate estimate_pairwise_detailed(const PairwiseObjective& objective, const WarpConfig& config) {
    const SplineBasis& basis = objective.basis();
    const IncrementMap map(basis, config.effective_xi(basis.tau()));
    std::vector<double> theta(basis.size());
    auto f = [&](const std::vector<double>& z) {
      map.theta(z, theta);
      return objective.evaluate(theta);
    };

    std::vector<std::vector<double>> starts{std::vector<double>(map.dim(), 0.0)};
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    for (std::size_t s = 0; s < config.jittered_starts; ++s) {
      std::vector<double> z(map.dim());
      for (double& v : z) { v = jitter(rng); }
      starts.push_back(std::move(z));
    }

    std::optional<NelderMeadResult> best;
    for (const auto& z0 : starts) {
      auto res = nelder_mead(f, z0, config.optimizer);
      if (std::isfinite(res.value) && (!best || res.value < best->value)) { best = std::move(res); }
    }
    if (!best) { throw NumericalFailure("estimate_pairwise: objective non-finite at every start"); }
    return {WarpCoefficients{map.theta(best->x)}, best->value};
  }

  template<Geometry G>
  WarpCoefficients estimate_pairwise(const FittedTrajectory<G>& from, const FittedTrajectory<G>& to, const WarpConfig& config) {
    return estimate_pairwise_detailed(PairwiseObjective(from, to, config), config).coefficients;
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Global warps and alignment
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// n x n table of pairwise warps; entry (i, i') warps subject i' toward subject i. The diagonal is unused.
  class PairwiseWarps {
  public:
    PairwiseWarps(std::size_t n, SplineBasis basis) : n_(n), basis_(basis), entries_(n * n) {}

    [[nodiscard]] std::size_t subjects() const noexcept { return n_; }
    [[nodiscard]] const SplineBasis& basis() const noexcept { return basis_; }

    void set(std::size_t i, std::size_t i_prime, WarpCoefficients c) {
      check_coefficients(c, basis_);
      entries_.at(i * n_ + i_prime) = std::move(c);
    }
    [[nodiscard]] const std::optional<WarpCoefficients>& get(std::size_t i, std::size_t i_prime) const {
      return entries_.at(i * n_ + i_prime);
    }

  private:
    std::size_t n_;
    SplineBasis basis_;
    std::vector<std::optional<WarpCoefficients>> entries_;
  };

  struct GlobalWarp {
    WarpFunction inverse; ///< estimate of h_i^{-1}: mean of the pairwise warps
    WarpFunction forward; ///< estimate of h_i
  };

  /// h_i^{-1}(t) = n^-1 sum_{i'} g_{ii'}(t) tabulated on `grid` (g_ii = identity), and its inverse.
  inline GlobalWarp estimate_global(const PairwiseWarps& warps, std::size_t i, std::span<const double> grid) {
    const std::size_t n = warps.subjects();
    if (i >= n) { throw InvalidInput("estimate_global: subject index out of range"); }
    const double tau = warps.basis().tau();
    if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != tau) {
      throw InvalidInput("estimate_global: grid must span [0, tau]");
    }
    std::vector<double> avg(grid.begin(), grid.end()); // identity term for i' = i
    for (std::size_t ip = 0; ip < n; ++ip) {
      if (ip == i) { continue; }
      const auto& c = warps.get(i, ip);
      if (!c) { throw InvalidInput("estimate_global: missing pairwise warp (" + std::to_string(i) + ", " + std::to_string(ip) + ")"); }
      for (std::size_t k = 0; k < grid.size(); ++k) { avg[k] += detail::spline_value(warps.basis(), c->theta, grid[k]); }
    }
    for (double& v : avg) { v /= static_cast<double>(n); }
    avg.front() = 0.0;
    avg.back() = tau;
    std::vector<double> xs(grid.begin(), grid.end());
    WarpFunction inverse(xs, avg);
    WarpFunction forward(avg, xs);
    return {std::move(inverse), std::move(forward)};
  }

  /// Re-evaluates the trajectory at warp(t) for every grid node (nearest-node lookup).
  template<Geometry G>
  FittedTrajectory<G> align_trajectory(const FittedTrajectory<G>& traj, const WarpFunction& warp) {
    if (traj.grid.empty()) { throw InvalidInput("align_trajectory: empty trajectory"); }
    const detail::NearestNode nearest(traj.grid);
    FittedTrajectory<G> out;
    out.grid = traj.grid;
    out.bandwidth = traj.bandwidth;
    out.points.reserve(traj.grid.size());
    for (double t : traj.grid) { out.points.push_back(traj.points[nearest(warp(t))]); }
    return out;
  }

  /// All n(n-1) pairwise estimates. Jobs are independent; results land in fixed slots.
  template<Geometry G>
  PairwiseWarps estimate_all_pairwise(std::span<const FittedTrajectory<G>> trajectories, const WarpConfig& config,
                                      unsigned workers = 1) {
    const std::size_t n = trajectories.size();
    if (n < 2) { throw InvalidInput("warping needs at least 2 subjects"); }
    PairwiseWarps out(n, SplineBasis(config.p, trajectories.front().grid.back()));
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ip = 0; ip < n; ++ip) {
        if (i != ip) { jobs.emplace_back(i, ip); }
      }
    }
    std::vector<WarpCoefficients> results(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
      const auto [i, ip] = jobs[j];
      results[j] = estimate_pairwise(trajectories[ip], trajectories[i], config);
    }, workers);
    for (std::size_t j = 0; j < jobs.size(); ++j) { out.set(jobs[j].first, jobs[j].second, std::move(results[j])); }
    return out;
  }

} // namespace mfreg
