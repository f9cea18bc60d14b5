#pragma once

// Scalar summaries of fitted trajectories and the location of their minimum.

#include "error.hpp"
#include "geometry.hpp"
#include "lofreg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace mfreg {

  /// Second-smallest eigenvalue of the Laplacian of the graph with adjacency (R - I)_+.
  inline double fiedler_value(const CorrelationMatrix& r) {
    const std::size_t n = r.dim();
    if (n < 2) { throw InvalidInput("fiedler_value needs at least 2 nodes"); }
    Matrix lap(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) { continue; }
        const double a = std::max(r(i, j), 0.0);
        lap(i, j) = -a;
        lap(i, i) += a;
      }
    }
    return symmetric_eigenvalues(lap)[1];
  }

  struct SummaryCurve {
    std::vector<double> grid;
    std::vector<double> values;
  };

  /// Gamma: M -> R. `Fiedler` requires the correlation geometry.
  template<Geometry G>
  struct SummaryFunctional {
    struct Fiedler {};
    struct DistanceToReference {
      typename G::Point reference;
    };
    struct UserTabulated {
      std::function<double(const typename G::Point&)> fn;
    };

    std::variant<Fiedler, DistanceToReference, UserTabulated> kind;

    static SummaryFunctional fiedler() { return {Fiedler{}}; }
    static SummaryFunctional distance_to(typename G::Point p) { return {DistanceToReference{std::move(p)}}; }
    static SummaryFunctional user(std::function<double(const typename G::Point&)> fn) { return {UserTabulated{std::move(fn)}}; }

    [[nodiscard]] double operator()(const typename G::Point& p) const {
      return std::visit([&p](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Fiedler>) {
          if constexpr (std::is_same_v<G, Correlation>) {
            return fiedler_value(p);
          } else {
            throw InvalidInput("the Fiedler functional applies to correlation matrices only");
          }
        } else if constexpr (std::is_same_v<K, DistanceToReference>) {
          return G::distance(p, k.reference);
        } else {
          return k.fn(p);
        }
      }, kind);
    }
  };

  template<Geometry G>
  SummaryCurve summary_curve(const FittedTrajectory<G>& traj, const SummaryFunctional<G>& gamma) {
    SummaryCurve c{traj.grid, std::vector<double>(traj.size())};
    for (std::size_t k = 0; k < traj.size(); ++k) {
      c.values[k] = gamma(traj.points[k]);
      if (!std::isfinite(c.values[k])) { throw InvalidInput("summary functional produced a non-finite value"); }
    }
    return c;
  }

  /// Grid argmin (ties to the smallest t), refined by the vertex of the parabola through the minimizing
  /// node and its neighbours when the node is interior and the parabola opens upward.
  inline double argmin_location(const SummaryCurve& curve) {
    const auto& t = curve.grid;
    const auto& v = curve.values;
    if (t.empty() || t.size() != v.size()) { throw InvalidInput("argmin_location: empty or malformed curve"); }
    std::size_t k = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] < v[k]) { k = i; }
    }
    if (k == 0 || k + 1 == v.size()) { return t[k]; }

    // Lagrange parabola through (t0, f0), (t1, f1), (t2, f2).
    const double t0 = t[k - 1], t1 = t[k], t2 = t[k + 1];
    const double f0 = v[k - 1], f1 = v[k], f2 = v[k + 1];
    const double d0 = (f1 - f0) / (t1 - t0);
    const double d1 = (f2 - f1) / (t2 - t1);
    const double curvature = (d1 - d0) / (t2 - t0); // leading coefficient
    if (!(curvature > 0.0)) { return t1; }
    // p'(x) = d0 + curvature (2x - t0 - t1) = 0
    const double vertex = 0.5 * (t0 + t1) - d0 / (2.0 * curvature);
    return std::clamp(vertex, t0, t2);
  }

} // namespace mfreg
