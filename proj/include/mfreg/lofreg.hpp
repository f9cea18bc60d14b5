#pragma once

// Local Frechet regression of metric-space responses on a scalar time predictor.

#include "error.hpp"
#include "geometry.hpp"
#include "kernel.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mfreg {

  /// Pairs (time, point) on a domain [0, tau].
  template<Geometry G>
  class ObservationSet {
  public:
    using Point = typename G::Point;

    ObservationSet(double tau, std::vector<double> times, std::vector<Point> points)
      : tau_(tau), times_(std::move(times)), points_(std::move(points)) {
      if (!(tau > 0.0)) { throw InvalidInput("observation domain length must be positive"); }
      if (times_.size() != points_.size()) { throw InvalidInput("observation times and points differ in length"); }
      if (times_.size() < 3) { throw InvalidInput("at least 3 observations are required"); }
      for (double t : times_) {
        if (!(t >= 0.0 && t <= tau)) { throw InvalidInput("observation time " + std::to_string(t) + " outside [0, tau]"); }
      }
    }

    [[nodiscard]] double tau() const noexcept { return tau_; }
    [[nodiscard]] std::size_t size() const noexcept { return times_.size(); }
    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] const std::vector<Point>& points() const noexcept { return points_; }

  private:
    double tau_;
    std::vector<double> times_;
    std::vector<Point> points_;
  };

  /// One fitted point per evaluation-grid node.
  template<Geometry G>
  struct FittedTrajectory {
    using Point = typename G::Point;

    std::vector<double> grid;
    std::vector<Point> points;
    double bandwidth = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return grid.size(); }
  };

  /// Raised by fit_grid when some nodes have degenerate windows.
  class GridFitFailure : public Error {
  public:
    GridFitFailure(std::vector<double> failing, double bandwidth)
      : Error(describe(failing, bandwidth)), failing_(std::move(failing)) {}

    [[nodiscard]] const std::vector<double>& failing_nodes() const noexcept { return failing_; }

  private:
    static std::string describe(const std::vector<double>& failing, double bandwidth) {
      std::string s = "local fit failed at " + std::to_string(failing.size()) + " node(s) with bandwidth " +
                      std::to_string(bandwidth) + ": t =";
      for (double t : failing) { s += " " + std::to_string(t); }
      return s;
    }

    std::vector<double> failing_;
  };

  /// `size` equally spaced nodes on [0, tau], endpoints exact.
  inline std::vector<double> uniform_grid(double tau, std::size_t size) {
    if (size == 0) { throw InvalidInput("evaluation grid must have at least one node"); }
    if (size == 1) { return {0.0}; }
    std::vector<double> g(size);
    for (std::size_t i = 0; i < size; ++i) { g[i] = tau * static_cast<double>(i) / static_cast<double>(size - 1); }
    g.back() = tau;
    return g;
  }

  inline constexpr std::size_t default_eval_grid_size = 51;

  namespace detail {
    template<Geometry G>
    typename G::Point fit_with(std::span<const double> times, std::span<const typename G::Point> points, double t,
                               const KernelSpec& kernel) {
      const auto w = local_weights(times, t, kernel);
      return G::frechet_mean(WeightedSample<typename G::Point>(points, w));
    }
  }

  /// Local Frechet regression estimate at t. Throws DegenerateWindow naming t and the bandwidth.
  template<Geometry G>
  typename G::Point fit_at(const ObservationSet<G>& obs, double t, const KernelSpec& kernel) {
    if (!(t >= 0.0 && t <= obs.tau())) { throw InvalidInput("fit_at: t outside [0, tau]"); }
    return detail::fit_with<G>(obs.times(), obs.points(), t, kernel);
  }

  template<Geometry G>
  FittedTrajectory<G> fit_grid(const ObservationSet<G>& obs, std::span<const double> grid, const KernelSpec& kernel,
                               unsigned workers = 1) {
    if (grid.empty()) { throw InvalidInput("fit_grid: empty evaluation grid"); }
    for (double t : grid) {
      if (!(t >= 0.0 && t <= obs.tau())) { throw InvalidInput("fit_grid: node outside [0, tau]"); }
    }
    std::vector<std::optional<typename G::Point>> fitted(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
      try {
        fitted[i] = fit_at(obs, grid[i], kernel);
      } catch (const DegenerateWindow&) {}
    }, workers);

    std::vector<double> failing;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!fitted[i]) { failing.push_back(grid[i]); }
    }
    if (!failing.empty()) { throw GridFitFailure(std::move(failing), kernel.bandwidth); }

    FittedTrajectory<G> out;
    out.grid.assign(grid.begin(), grid.end());
    out.points.reserve(grid.size());
    for (auto& p : fitted) { out.points.push_back(std::move(*p)); }
    out.bandwidth = kernel.bandwidth;
    return out;
  }

  /// Geometric candidates from max(4 * mean gap, 0.05 tau) to 0.5 tau.
  inline std::vector<double> default_bandwidth_candidates(std::span<const double> times, double tau, std::size_t count = 10) {
    std::vector<double> sorted(times.begin(), times.end());
    std::sort(sorted.begin(), sorted.end());
    const double mean_gap = sorted.size() > 1 ? (sorted.back() - sorted.front()) / static_cast<double>(sorted.size() - 1) : tau;
    const double hi = 0.5 * tau;
    const double lo = std::min(std::max(4.0 * mean_gap, 0.05 * tau), hi);
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k) {
      const double f = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
      out[k] = lo * std::pow(hi / lo, f);
    }
    out.back() = hi;
    return out;
  }

  struct BandwidthSelection {
    double bandwidth = 0.0;
    std::vector<double> candidates; // ascending
    std::vector<double> scores;     // +inf where some leave-one-out fit failed
  };

  /// Scores closer than this are ties (resolved toward the smaller bandwidth).
  inline constexpr double cv_tie_tol = 1e-12;

  /// Leave-one-out cross-validation score n^-1 sum_j d^2(V_j, fit_{-j}(U_j)); +inf if any fold fails.
  template<Geometry G>
  double loo_cv_score(const ObservationSet<G>& obs, const KernelSpec& kernel) {
    const std::size_t n = obs.size();
    std::vector<double> times(n - 1);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      std::copy(obs.times().begin(), obs.times().begin() + static_cast<std::ptrdiff_t>(j), times.begin());
      std::copy(obs.times().begin() + static_cast<std::ptrdiff_t>(j) + 1, obs.times().end(),
                times.begin() + static_cast<std::ptrdiff_t>(j));
      std::vector<double> w;
      try {
        w = local_weights(times, obs.times()[j], kernel);
      } catch (const DegenerateWindow&) {
        return std::numeric_limits<double>::infinity();
      }
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(j), 0.0);
      try {
        const auto fit = G::frechet_mean(WeightedSample<typename G::Point>(obs.points(), w));
        total += G::squared_distance(obs.points()[j], fit);
      } catch (const NumericalFailure&) {
        return std::numeric_limits<double>::infinity();
      }
    }
    return total / static_cast<double>(n);
  }

  /// Candidate minimizing the leave-one-out score; ties go to the smaller bandwidth.
  template<Geometry G>
  BandwidthSelection loo_cv_bandwidth(const ObservationSet<G>& obs, std::span<const double> candidates, KernelFamily family,
                                      unsigned workers = 1) {
    if (candidates.size() < 2) { throw InvalidInput("loo_cv_bandwidth needs at least 2 candidates"); }
    BandwidthSelection sel;
    sel.candidates.assign(candidates.begin(), candidates.end());
    for (double b : sel.candidates) {
      if (!(b > 0.0)) { throw InvalidInput("bandwidth candidates must be positive"); }
    }
    std::sort(sel.candidates.begin(), sel.candidates.end());
    sel.scores.assign(sel.candidates.size(), 0.0);
    parallel_for(sel.candidates.size(), [&](std::size_t k) {
      sel.scores[k] = loo_cv_score(obs, KernelSpec(family, sel.candidates[k]));
    }, workers);

    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < sel.scores.size(); ++k) {
      if (!std::isfinite(sel.scores[k])) { continue; }
      if (!best || sel.scores[k] < sel.scores[*best] - cv_tie_tol) { best = k; }
    }
    if (!best) { throw InvalidInput("loo_cv_bandwidth: every bandwidth candidate is infeasible"); }
    sel.bandwidth = sel.candidates[*best];
    return sel;
  }

} // namespace mfreg
