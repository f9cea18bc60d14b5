#pragma once

// Synthetic distribution-valued trajectories with random phase variation, and the Monte Carlo
// harness scoring the warping pipeline by TMISE (aligned trajectories) and WMISE (warps).
//
//   Case 1: mu(t) = Beta(1.1 + 10 (t - 0.4)^2, 2.6 + 1.5 sin(2 pi t - pi))
//   Case 2: mu(t) = N(0.1 + 0.8 t, (0.6 + 0.2 sin(10 pi t))^2) truncated to [0, 1]
//
// Subject i follows Y_i(t) = mu(h_i^{-1}(t)) with h_i = D_{a1} o D_{a2}, D_a(x) = x - sin(a pi x)/|a pi|,
// and observations are push-forwards of Y_i(T_ij) through D_u, u uniform on {+-4, ..., +-8}.

#include "error.hpp"
#include "geometry.hpp"
#include "kernel.hpp"
#include "lofreg.hpp"
#include "parallel.hpp"
#include "warping.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mfreg {

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Distribution quantiles
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  namespace detail {
    template<typename F>
    double simpson_step(F& f, double a, double b, double fa, double fm, double fb, double whole, double eps, int depth) {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m);
      const double rm = 0.5 * (m + b);
      const double flm = f(lm);
      const double frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const double delta = left + right - whole;
      if (depth <= 0 || std::abs(delta) <= 15.0 * eps) { return left + right + delta / 15.0; }
      return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
             simpson_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
    }

    /// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance eps.
    template<typename F>
    double adaptive_simpson(F&& f, double a, double b, double eps, int max_depth = 40) {
      if (!(b > a)) { return 0.0; }
      const double fa = f(a);
      const double fb = f(b);
      const double fm = f(0.5 * (a + b));
      const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
      return simpson_step(f, a, b, fa, fm, fb, whole, eps, max_depth);
    }

    /// Unnormalized Beta(alpha, beta) mass over intervals. A power substitution removes the density's
    /// singularity at 0 (alpha < 1) or 1 (beta < 1).
    class BetaMass {
    public:
      BetaMass(double alpha, double beta) : alpha_(alpha), beta_(beta) {
        // Relative tolerance: a coarse Simpson pass estimates the total mass.
        double coarse = 0.0;
        const int panels = 64;
        for (int k = 0; k < panels; ++k) {
          coarse += lower_or_upper(static_cast<double>(k) / panels, static_cast<double>(k + 1) / panels, 1e-3);
        }
        eps_ = 1e-12 * coarse;
        total_ = mass(0.0, 1.0);
      }

      [[nodiscard]] double total() const noexcept { return total_; }

      [[nodiscard]] double density(double x) const {
        if (x <= 0.0 || x >= 1.0) {
          if (x == 0.0 && alpha_ == 1.0) { return std::pow(1.0 - x, beta_ - 1.0); }
          if (x == 1.0 && beta_ == 1.0) { return std::pow(x, alpha_ - 1.0); }
          return (x == 0.0 && alpha_ < 1.0) || (x == 1.0 && beta_ < 1.0) ? std::numeric_limits<double>::infinity() : 0.0;
        }
        return std::pow(x, alpha_ - 1.0) * std::pow(1.0 - x, beta_ - 1.0);
      }

      /// Mass of [a, b], 0 <= a <= b <= 1.
      [[nodiscard]] double mass(double a, double b) const { return lower_or_upper(a, b, eps_); }

    private:
      [[nodiscard]] double lower_or_upper(double a, double b, double eps) const {
        double s = 0.0;
        if (a < 0.5) { s += lower(a, std::min(b, 0.5), eps); }
        if (b > 0.5) { s += upper(std::max(a, 0.5), b, eps); }
        return s;
      }

      // Integral over [a, b] within [0, 1/2].
      [[nodiscard]] double lower(double a, double b, double eps) const {
        if (alpha_ >= 1.0) {
          return adaptive_simpson([this](double x) { return density(x); }, a, b, eps);
        }
        // u = x^alpha: dx x^(alpha-1) = du / alpha
        const double ia = 1.0 / alpha_;
        auto g = [this, ia](double u) { return std::pow(1.0 - std::pow(u, ia), beta_ - 1.0) * ia; };
        return adaptive_simpson(g, std::pow(a, alpha_), std::pow(b, alpha_), eps);
      }

      // Integral over [a, b] within [1/2, 1].
      [[nodiscard]] double upper(double a, double b, double eps) const {
        if (beta_ >= 1.0) {
          return adaptive_simpson([this](double x) { return density(x); }, a, b, eps);
        }
        const double ib = 1.0 / beta_;
        auto g = [this, ib](double v) { return std::pow(1.0 - std::pow(v, ib), alpha_ - 1.0) * ib; };
        return adaptive_simpson(g, std::pow(1.0 - b, beta_), std::pow(1.0 - a, beta_), eps);
      }

      double alpha_;
      double beta_;
      double eps_ = 0.0;
      double total_ = 0.0;
    };
  }

  inline constexpr double quantile_tol = 1e-10;

  /// Beta(alpha, beta) quantiles at nondecreasing probabilities. Safeguarded Newton on the regularized
  /// incomplete beta function, evaluated by adaptive Simpson quadrature of the density and normalized
  /// by the same quadrature.
  inline std::vector<double> beta_quantiles(double alpha, double beta, std::span<const double> probs) {
    if (!(alpha > 0.0) || !(beta > 0.0)) { throw InvalidInput("beta parameters must be positive"); }
    const detail::BetaMass mass(alpha, beta);
    const double z = mass.total();
    std::vector<double> out(probs.size());
    // The bracket's left end, its CDF, and the last quantile carry over between increasing probabilities.
    double a = 0.0, fa = 0.0, last = alpha / (alpha + beta);
    double prev_p = -1.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double p = probs[i];
      if (!(p >= 0.0 && p <= 1.0)) { throw InvalidInput("probability outside [0, 1]"); }
      if (p < prev_p) { a = 0.0; fa = 0.0; }
      prev_p = p;
      if (p == 0.0) { out[i] = 0.0; continue; }
      if (p == 1.0) { out[i] = 1.0; continue; }
      double lo = a, flo = fa, hi = 1.0;
      double x = last > lo && last < hi ? last : 0.5 * (lo + hi);
      for (int it = 0; it < 200 && hi - lo > quantile_tol; ++it) {
        const double fx = flo + mass.mass(lo, x) / z;
        if (fx < p) { lo = x; flo = fx; } else { hi = x; }
        const double d = mass.density(x) / z;
        double next = std::isfinite(d) && d > 0.0 ? x - (fx - p) / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) { next = 0.5 * (lo + hi); }
        if (std::abs(next - x) < 1e-14) { break; }
        x = next;
      }
      out[i] = std::clamp(x, lo, hi);
      last = out[i];
      a = lo;
      fa = flo;
    }
    return out;
  }

  inline double beta_quantile(double alpha, double beta, double prob) {
    return beta_quantiles(alpha, beta, std::span<const double>(&prob, 1)).front();
  }

  inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

  /// Standard normal quantile, Wichura's AS 241 (PPND16), relative accuracy about 1e-16.
  inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
      if (p == 0.0) { return -std::numeric_limits<double>::infinity(); }
      if (p == 1.0) { return std::numeric_limits<double>::infinity(); }
      throw InvalidInput("normal_quantile: probability outside [0, 1]");
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
      const double r = 0.180625 - q * q;
      return q * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                      45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                   133.14166789178437745) * r + 3.387132872796366608) /
             (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                  21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
               42.313330701600911252) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
      r -= 1.6;
      val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
    } else {
      r -= 5.0;
      val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
  }

  /// Quantile of N(xi, gamma^2) truncated to [0, 1].
  inline double truncnorm_quantile(double xi, double gamma, double prob) {
    if (!(gamma > 0.0)) { throw InvalidInput("truncated normal scale must be positive"); }
    if (!(prob >= 0.0 && prob <= 1.0)) { throw InvalidInput("probability outside [0, 1]"); }
    if (prob == 0.0) { return 0.0; }
    if (prob == 1.0) { return 1.0; }
    const double lo = normal_cdf(-xi / gamma);
    const double hi = normal_cdf((1.0 - xi) / gamma);
    return std::clamp(xi + gamma * normal_quantile(lo + prob * (hi - lo)), 0.0, 1.0);
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Mean trajectories
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  struct TrajectorySpec {
    int case_id = 1;
    double tau = 1.0;

    TrajectorySpec() = default;
    explicit TrajectorySpec(int c) : case_id(c) {
      if (c != 1 && c != 2) { throw InvalidInput("simulation case must be 1 or 2"); }
    }

    /// mu(t) on a probability grid of size m; support [0, 1].
    [[nodiscard]] QuantileFunction at(double t, std::size_t m) const {
      const auto levels = ProbabilityGrid(m).levels();
      std::vector<double> q;
      if (case_id == 1) {
        const double a = 1.1 + 10.0 * (t - 0.4) * (t - 0.4);
        const double b = 2.6 + 1.5 * std::sin(2.0 * std::numbers::pi * t - std::numbers::pi);
        q = beta_quantiles(a, b, levels);
      } else {
        const double xi = 0.1 + 0.8 * t;
        const double gamma = 0.6 + 0.2 * std::sin(10.0 * std::numbers::pi * t);
        q.resize(m);
        for (std::size_t i = 0; i < m; ++i) { q[i] = truncnorm_quantile(xi, gamma, levels[i]); }
      }
      return {isotonic_project(q, 0.0, 1.0), 0.0, 1.0};
    }
  };

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Distortions and warps
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// D_a(x) = x - sin(a pi x) / |a pi|; fixes 0 and 1, nondecreasing.
  inline double distortion(int a, double x) {
    if (a == 0) { throw InvalidInput("distortion index must be nonzero"); }
    const double api = static_cast<double>(a) * std::numbers::pi;
    return x - std::sin(api * x) / std::abs(api);
  }

  /// Inverse of D_a on [0, 1] by bisection.
  inline double distortion_inverse(int a, double y) {
    if (a == 0) { throw InvalidInput("distortion index must be nonzero"); }
    if (y <= 0.0) { return 0.0; }
    if (y >= 1.0) { return 1.0; }
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (distortion(a, mid) < y) { lo = mid; } else { hi = mid; }
    }
    return 0.5 * (lo + hi);
  }

  /// h = D_{a1} o D_{a2} on [0, 1].
  struct DistortionWarp {
    int a1 = 1;
    int a2 = -1;
    bool identity = false;

    [[nodiscard]] double operator()(double t) const { return identity ? t : distortion(a1, distortion(a2, t)); }
    [[nodiscard]] double inverse(double s) const { return identity ? s : distortion_inverse(a2, distortion_inverse(a1, s)); }

    /// Tabulated on `nodes` equally spaced points.
    [[nodiscard]] WarpFunction tabulate(std::size_t nodes = 2001) const {
      auto xs = uniform_grid(1.0, nodes);
      std::vector<double> ys(nodes);
      for (std::size_t k = 0; k < nodes; ++k) { ys[k] = (*this)(xs[k]); }
      // flat stretches of D_a can round to tiny decreases
      for (std::size_t k = 1; k < nodes; ++k) { ys[k] = std::clamp(ys[k], ys[k - 1], 1.0); }
      ys.front() = 0.0;
      ys.back() = 1.0;
      return {std::move(xs), std::move(ys)};
    }
  };

  /// P(a = +-k) = P(V = k) / (2 (1 - P(V = 0))), V ~ Poisson(2).
  template<typename Rng>
  int sample_distortion_index(Rng& rng) {
    std::poisson_distribution<int> poisson(2.0);
    int k = 0;
    while (k == 0) { k = poisson(rng); }
    std::bernoulli_distribution sign(0.5);
    return sign(rng) ? k : -k;
  }

  template<typename Rng>
  DistortionWarp sample_distortion_warp(Rng& rng) {
    DistortionWarp w;
    w.a1 = sample_distortion_index(rng);
    w.a2 = sample_distortion_index(rng);
    return w;
  }

  /// A random warp h = D_{a1} o D_{a2} with E[h(t)] = t, tabulated on a fine grid.
  template<typename Rng>
  WarpFunction sample_warp(Rng& rng) {
    return sample_distortion_warp(rng).tabulate();
  }

  /// Push-forward of q through D_a: quantiles compose with the monotone map.
  inline QuantileFunction perturb(const QuantileFunction& q, int a) {
    std::vector<double> v(q.values().size());
    for (std::size_t i = 0; i < v.size(); ++i) { v[i] = distortion(a, q.values()[i]); }
    const double lo = distortion(a, q.lo());
    const double hi = distortion(a, q.hi());
    return {isotonic_project(v, lo, hi), lo, hi};
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Datasets
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  struct MCConfig {
    int case_id = 1;
    std::size_t subjects = 30;         ///< n
    std::size_t observations = 30;     ///< N_i
    std::vector<std::size_t> p{2, 3, 4};
    std::vector<double> lambda{0.0, 0.1, 1.0, 10.0};
    std::size_t runs = 100;
    std::uint64_t seed = 1;
    std::size_t quantile_grid = ProbabilityGrid::default_size;
    std::size_t eval_grid = default_eval_grid_size;
    std::size_t quad_nodes = 101;
    double xi_fraction = 0.1;          ///< xi = xi_fraction * tau / (p + 1)
    KernelFamily kernel = KernelFamily::epanechnikov;
    bool identity_warps = false;       ///< test hook: no phase variation

    void validate() const {
      TrajectorySpec check(case_id);
      if (subjects < 2) { throw InvalidInput("simulation needs at least 2 subjects"); }
      if (observations < 3) { throw InvalidInput("simulation needs at least 3 observations per subject"); }
      if (p.empty() || lambda.empty()) { throw InvalidInput("simulation needs at least one p and one lambda"); }
      for (double l : lambda) {
        if (!(l >= 0.0)) { throw InvalidInput("lambda values must be >= 0"); }
      }
      if (!(xi_fraction > 0.0 && xi_fraction < 1.0)) { throw InvalidInput("xi_fraction must lie in (0, 1)"); }
      if (runs == 0) { throw InvalidInput("runs must be positive"); }
      if (eval_grid < 2 || quad_nodes < 2 || quantile_grid < 2) { throw InvalidInput("grid sizes must be at least 2"); }
    }
  };

  struct SimulatedSubject {
    ObservationSet<Wasserstein> observations;
    DistortionWarp warp;                 ///< true h_i
    std::vector<int> perturbation_index; ///< u_ij
  };

  struct Dataset {
    TrajectorySpec spec;
    std::vector<SimulatedSubject> subjects;
  };

  /// Per subject: draw h_i, times T_ij ~ U[0, 1], then observations D_{u_ij} # mu(h_i^{-1}(T_ij)).
  template<typename Rng>
  Dataset generate_dataset(const TrajectorySpec& spec, const MCConfig& config, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, 9);
    Dataset ds{spec, {}};
    ds.subjects.reserve(config.subjects);
    for (std::size_t i = 0; i < config.subjects; ++i) {
      DistortionWarp h = sample_distortion_warp(rng);
      h.identity = config.identity_warps;
      std::vector<double> times(config.observations);
      for (double& t : times) { t = unif(rng) * spec.tau; }
      std::vector<int> u(config.observations);
      for (int& a : u) {
        const int k = pick(rng);
        a = (4 + k / 2) * (k % 2 == 0 ? 1 : -1);
      }
      std::vector<QuantileFunction> pts;
      pts.reserve(config.observations);
      for (std::size_t j = 0; j < config.observations; ++j) {
        pts.push_back(perturb(spec.at(h.inverse(times[j]), config.quantile_grid), u[j]));
      }
      ds.subjects.push_back({ObservationSet<Wasserstein>(spec.tau, std::move(times), std::move(pts)), h, std::move(u)});
    }
    return ds;
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Scoring
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  inline double trapezoid(std::span<const double> grid, std::span<const double> values) {
    double s = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) { s += 0.5 * (grid[k] - grid[k - 1]) * (values[k] + values[k - 1]); }
    return s;
  }

  struct MiseValues {
    double tmise = 0.0;
    double wmise = 0.0;
  };

  /// TMISE = n^-1 sum_i int d^2(Y_i(h_i(t)), mu(t)) dt and WMISE = n^-1 sum_i int (h_i(t) - h_i0(t))^2 dt,
  /// trapezoid rule on `grid`. `aligned[i]` and `truth` hold points on `grid`; warps are tabulated on `grid`.
  inline MiseValues tmise_wmise(std::span<const double> grid, std::span<const std::vector<QuantileFunction>> aligned,
                                std::span<const std::vector<double>> estimated_warps, std::span<const QuantileFunction> truth,
                                std::span<const std::vector<double>> true_warps) {
    const std::size_t n = aligned.size();
    if (n == 0 || estimated_warps.size() != n || true_warps.size() != n) { throw InvalidInput("tmise_wmise: subject counts differ"); }
    if (truth.size() != grid.size()) { throw InvalidInput("tmise_wmise: truth does not match the grid"); }
    MiseValues out;
    std::vector<double> integrand(grid.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (aligned[i].size() != grid.size() || estimated_warps[i].size() != grid.size() || true_warps[i].size() != grid.size()) {
        throw InvalidInput("tmise_wmise: grid mismatch for subject " + std::to_string(i));
      }
      for (std::size_t k = 0; k < grid.size(); ++k) { integrand[k] = Wasserstein::squared_distance(aligned[i][k], truth[k]); }
      out.tmise += trapezoid(grid, integrand);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double d = estimated_warps[i][k] - true_warps[i][k];
        integrand[k] = d * d;
      }
      out.wmise += trapezoid(grid, integrand);
    }
    out.tmise /= static_cast<double>(n);
    out.wmise /= static_cast<double>(n);
    return out;
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Monte Carlo
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  struct MiseEntry {
    int case_id = 1;
    std::size_t p = 0;
    double lambda = 0.0;
    std::size_t run = 0;
    double tmise = 0.0;
    double wmise = 0.0;
  };

  struct RunFailure {
    std::size_t run = 0;
    std::string message;
  };

  struct Quartiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  };

  /// Linear-interpolation sample quantiles (type 7).
  inline Quartiles quartiles(std::vector<double> v) {
    if (v.empty()) { throw InvalidInput("quartiles of an empty sample"); }
    std::sort(v.begin(), v.end());
    auto at = [&v](double f) {
      const double pos = f * static_cast<double>(v.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, v.size() - 1);
      return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {v.front(), at(0.25), at(0.5), at(0.75), v.back()};
  }

  inline double median(std::vector<double> v) { return quartiles(std::move(v)).median; }

  struct MISESummaryRow {
    std::size_t p = 0;
    double lambda = 0.0;
    Quartiles tmise;
    Quartiles wmise;
    std::size_t runs = 0;
  };

  struct MISEReport {
    int case_id = 1;
    std::vector<MiseEntry> entries; ///< sorted by (run, p, lambda) in config order
    std::vector<RunFailure> failures;

    [[nodiscard]] std::vector<double> tmise(std::size_t p, double lambda) const { return select(p, lambda, true); }
    [[nodiscard]] std::vector<double> wmise(std::size_t p, double lambda) const { return select(p, lambda, false); }

    /// One row per (p, lambda) in first-appearance order.
    [[nodiscard]] std::vector<MISESummaryRow> summary() const {
      std::vector<MISESummaryRow> rows;
      for (const auto& e : entries) {
        const bool seen = std::any_of(rows.begin(), rows.end(), [&](const auto& r) { return r.p == e.p && r.lambda == e.lambda; });
        if (seen) { continue; }
        MISESummaryRow row;
        row.p = e.p;
        row.lambda = e.lambda;
        const auto t = tmise(e.p, e.lambda);
        row.tmise = quartiles(t);
        row.wmise = quartiles(wmise(e.p, e.lambda));
        row.runs = t.size();
        rows.push_back(row);
      }
      return rows;
    }

  private:
    [[nodiscard]] std::vector<double> select(std::size_t p, double lambda, bool t) const {
      std::vector<double> out;
      for (const auto& e : entries) {
        if (e.p == p && e.lambda == lambda) { out.push_back(t ? e.tmise : e.wmise); }
      }
      return out;
    }
  };

  /// Presmoothing of one subject: leave-one-out CV over the default candidates, taking the
  /// best-scoring bandwidth whose fit succeeds on the whole evaluation grid.
  template<Geometry G>
  FittedTrajectory<G> presmooth(const ObservationSet<G>& obs, std::span<const double> grid, KernelFamily family) {
    const auto candidates = default_bandwidth_candidates(obs.times(), obs.tau());
    const auto sel = loo_cv_bandwidth(obs, candidates, family);
    std::vector<std::size_t> order(sel.candidates.size());
    for (std::size_t k = 0; k < order.size(); ++k) { order[k] = k; }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sel.scores[a] < sel.scores[b] - cv_tie_tol;
    });
    for (std::size_t k : order) {
      if (!std::isfinite(sel.scores[k])) { break; }
      try {
        return fit_grid(obs, grid, KernelSpec(family, sel.candidates[k]));
      } catch (const GridFitFailure&) {}
    }
    throw GridFitFailure(std::vector<double>(grid.begin(), grid.end()), sel.bandwidth);
  }

  /// One Monte Carlo replicate: every (p, lambda) combination scored on the same dataset.
  inline std::vector<MiseEntry> run_replicate(const MCConfig& config, std::size_t run) {
    const TrajectorySpec spec(config.case_id);
    std::mt19937_64 rng(config.seed + run);
    const Dataset ds = generate_dataset(spec, config, rng);
    const std::size_t n = ds.subjects.size();
    const auto grid = uniform_grid(spec.tau, config.eval_grid);

    std::vector<FittedTrajectory<Wasserstein>> fits;
    fits.reserve(n);
    for (const auto& s : ds.subjects) { fits.push_back(presmooth(s.observations, grid, config.kernel)); }

    std::vector<QuantileFunction> truth;
    truth.reserve(grid.size());
    for (double t : grid) { truth.push_back(spec.at(t, config.quantile_grid)); }
    std::vector<std::vector<double>> true_warps(n, std::vector<double>(grid.size()));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < grid.size(); ++k) { true_warps[i][k] = ds.subjects[i].warp(grid[k]); }
    }

    // tables[i * n + ip]: Y_ip warped toward Y_i
    std::vector<std::shared_ptr<const PairwiseTable>> tables(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ip = 0; ip < n; ++ip) {
        if (i != ip) { tables[i * n + ip] = std::make_shared<const PairwiseTable>(fits[ip], fits[i], config.quad_nodes); }
      }
    }

    std::vector<MiseEntry> out;
    for (std::size_t p : config.p) {
      for (double lambda : config.lambda) {
        WarpConfig wc;
        wc.p = p;
        wc.lambda = lambda;
        wc.xi = config.xi_fraction * spec.tau / static_cast<double>(p + 1);
        wc.quad_nodes = config.quad_nodes;
        wc.seed = config.seed + run;
        PairwiseWarps warps(n, SplineBasis(p, spec.tau));
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t ip = 0; ip < n; ++ip) {
            if (i == ip) { continue; }
            warps.set(i, ip, estimate_pairwise_detailed(PairwiseObjective(tables[i * n + ip], wc), wc).coefficients);
          }
        }
        std::vector<std::vector<QuantileFunction>> aligned(n);
        std::vector<std::vector<double>> est_warps(n);
        for (std::size_t i = 0; i < n; ++i) {
          const GlobalWarp g = estimate_global(warps, i, grid);
          aligned[i] = align_trajectory(fits[i], g.forward).points;
          est_warps[i] = g.forward.tabulate(grid);
        }
        const MiseValues m = tmise_wmise(grid, aligned, est_warps, truth, true_warps);
        out.push_back({config.case_id, p, lambda, run, m.tmise, m.wmise});
      }
    }
    return out;
  }

  /// Replicate r uses seed config.seed + r. Replicates run concurrently; output order is by run index.
  inline MISEReport run_monte_carlo(const MCConfig& config, unsigned workers = thread_count(),
                                    const std::function<void(std::size_t)>& on_run_done = {}) {
    config.validate();
    std::vector<std::vector<MiseEntry>> per_run(config.runs);
    std::vector<std::optional<std::string>> errors(config.runs);
    parallel_for(config.runs, [&](std::size_t r) {
      try {
        per_run[r] = run_replicate(config, r);
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
      if (on_run_done) { on_run_done(r); }
    }, workers);

    MISEReport report;
    report.case_id = config.case_id;
    for (std::size_t r = 0; r < config.runs; ++r) {
      if (errors[r]) {
        report.failures.push_back({r, *errors[r]});
        continue;
      }
      report.entries.insert(report.entries.end(), per_run[r].begin(), per_run[r].end());
    }
    return report;
  }

} // namespace mfreg
