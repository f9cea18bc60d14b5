#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace mfreg {

  struct NelderMeadOptions {
    double initial_step = 0.5; ///< edge length of the axis-aligned starting simplex
    double xtol = 1e-7;        ///< stop once every vertex is within xtol (max-norm) of the best one
    int max_evals = 4000;
    int restarts = 1;          ///< fresh simplexes built around the incumbent after convergence
  };

  struct NelderMeadResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    int evals = 0;
  };

  /// Derivative-free minimization (standard coefficients 1, 2, 1/2, 1/2). Non-finite objective values
  /// are treated as +inf. The returned value never exceeds f(x0).
  template<typename F>
  NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, const NelderMeadOptions& opts = {}) {
    const std::size_t dim = x0.size();
    NelderMeadResult res;
    auto eval = [&](const std::vector<double>& x) {
      ++res.evals;
      const double v = f(x);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    res.x = x0;
    res.value = eval(x0);
    if (dim == 0) { return res; }

    double step = opts.initial_step;
    for (int round = 0; round <= opts.restarts && res.evals < opts.max_evals; ++round) {
      std::vector<std::vector<double>> simplex(dim + 1, res.x);
      std::vector<double> fv(dim + 1, res.value);
      for (std::size_t i = 0; i < dim; ++i) {
        simplex[i + 1][i] += step;
        fv[i + 1] = eval(simplex[i + 1]);
      }

      std::vector<std::size_t> order(dim + 1);
      std::vector<double> centroid(dim), xr(dim), xe(dim), xc(dim);
      while (res.evals < opts.max_evals) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[dim - 1];

        double diameter = 0.0;
        for (std::size_t v = 0; v <= dim; ++v) {
          for (std::size_t i = 0; i < dim; ++i) { diameter = std::max(diameter, std::abs(simplex[v][i] - simplex[best][i])); }
        }
        if (diameter < opts.xtol) { break; }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t v = 0; v <= dim; ++v) {
          if (v == worst) { continue; }
          for (std::size_t i = 0; i < dim; ++i) { centroid[i] += simplex[v][i] / static_cast<double>(dim); }
        }

        for (std::size_t i = 0; i < dim; ++i) { xr[i] = centroid[i] + (centroid[i] - simplex[worst][i]); }
        const double fr = eval(xr);
        if (fr < fv[best]) {
          for (std::size_t i = 0; i < dim; ++i) { xe[i] = centroid[i] + 2.0 * (centroid[i] - simplex[worst][i]); }
          const double fe = eval(xe);
          if (fe < fr) {
            simplex[worst] = xe;
            fv[worst] = fe;
          } else {
            simplex[worst] = xr;
            fv[worst] = fr;
          }
          continue;
        }
        if (fr < fv[second]) {
          simplex[worst] = xr;
          fv[worst] = fr;
          continue;
        }
        // Contraction: outside if the reflection improved on the worst vertex, inside otherwise.
        const bool outside = fr < fv[worst];
        for (std::size_t i = 0; i < dim; ++i) {
          xc[i] = outside ? centroid[i] + 0.5 * (xr[i] - centroid[i]) : centroid[i] + 0.5 * (simplex[worst][i] - centroid[i]);
        }
        const double fc = eval(xc);
        if (fc < (outside ? fr : fv[worst])) {
          simplex[worst] = xc;
          fv[worst] = fc;
          continue;
        }
        // shrink toward the best vertex
        for (std::size_t v = 0; v <= dim; ++v) {
          if (v == best) { continue; }
          for (std::size_t i = 0; i < dim; ++i) { simplex[v][i] = simplex[best][i] + 0.5 * (simplex[v][i] - simplex[best][i]); }
          fv[v] = eval(simplex[v]);
        }
      }

      const auto it = std::min_element(fv.begin(), fv.end());
      if (*it < res.value) {
        res.value = *it;
        res.x = simplex[static_cast<std::size_t>(it - fv.begin())];
      }
      step *= 0.5;
    }
    return res;
  }

} // namespace mfreg
