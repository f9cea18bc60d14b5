#include <mfreg/simlab.hpp>
#include <mfreg/warping.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace mfreg;

namespace {

  // Piecewise-linear interpolation through (0, 0) and (knot_k, theta_k), written independently.
  double pl_oracle(const std::vector<double>& theta, double tau, double t) {
    const std::size_t n = theta.size();
    double x0 = 0.0, y0 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double x1 = tau * static_cast<double>(k + 1) / static_cast<double>(n);
      if (t <= x1 || k + 1 == n) { return y0 + (t - x0) / (x1 - x0) * (theta[k] - y0); }
      x0 = x1;
      y0 = theta[k];
    }
    return y0;
  }

  FittedTrajectory<Wasserstein> trajectory_of(const std::vector<double>& grid, const std::function<double(double)>& time_map,
                                              int case_id = 1, std::size_t m = 51) {
    const TrajectorySpec spec(case_id);
    FittedTrajectory<Wasserstein> f;
    f.grid = grid;
    for (double t : grid) { f.points.push_back(spec.at(time_map(t), m)); }
    f.bandwidth = 0.1;
    return f;
  }

  FittedTrajectory<Wasserstein> constant_trajectory(const std::vector<double>& grid) {
    FittedTrajectory<Wasserstein> f;
    f.grid = grid;
    f.points.assign(grid.size(), QuantileFunction::tabulate(11, 0.0, 1.0, [](double p) { return p; }));
    return f;
  }

  // Random feasible coefficients with increments >= xi.
  std::vector<double> random_theta(std::size_t p, double tau, double xi, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(4.0);
    std::vector<double> inc(p + 1);
    double s = 0.0;
    for (double& v : inc) {
      v = g(rng);
      s += v;
    }
    std::vector<double> theta(p + 1);
    double acc = 0.0;
    for (std::size_t k = 0; k <= p; ++k) {
      acc += xi + (tau - xi * static_cast<double>(p + 1)) * inc[k] / s;
      theta[k] = acc;
    }
    theta.back() = tau;
    return theta;
  }

} // namespace

// --- basis and spline warps ---

TEST(SplineBasis, KnotsAndLocate) {
  const SplineBasis b(3, 2.0);
  EXPECT_EQ(b.size(), 4u);
  EXPECT_EQ(b.knot(0), 0.0);
  EXPECT_EQ(b.knot(4), 2.0);
  EXPECT_DOUBLE_EQ(b.knot(2), 1.0);
  EXPECT_EQ(b.locate(2.0).first, 3u);
  EXPECT_DOUBLE_EQ(b.locate(2.0).second, 1.0);
  EXPECT_THROW((void)b.locate(-0.1), InvalidInput);
  EXPECT_THROW((void)b.locate(2.1), InvalidInput);
}

TEST(BasisEval, Examples) {
  const SplineBasis b(3, 1.0);
  for (std::size_t k = 1; k <= 4; ++k) {
    const auto a = basis_eval(b, b.knot(k));
    for (std::size_t j = 0; j < 4; ++j) { EXPECT_NEAR(a[j], j + 1 == k ? 1.0 : 0.0, 1e-15) << k << " " << j; }
  }
  const auto zero = basis_eval(b, 0.0);
  for (double v : zero) { EXPECT_EQ(v, 0.0); }
  const auto a = basis_eval(SplineBasis(1, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.0);
}

TEST(BasisEval, IdentityCoefficientsReproduceTime) {
  const SplineBasis b(4, 3.0);
  const auto id = WarpCoefficients::identity(b);
  for (double t : {0.0, 0.2, 1.1, 2.9, 3.0}) {
    const auto a = basis_eval(b, t);
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) { s += id.theta[k] * a[k]; }
    EXPECT_NEAR(s, t, 1e-14);
  }
}

TEST(WarpEval, Examples) {
  const SplineBasis b(1, 1.0);
  const WarpCoefficients c{{0.25, 1.0}};
  EXPECT_DOUBLE_EQ(warp_eval(c, b, 0.5), 0.25);
  EXPECT_EQ(warp_eval(c, b, 1.0), 1.0);
  EXPECT_EQ(warp_eval(WarpCoefficients::identity(b), b, 0.37), 0.37);
  EXPECT_THROW(warp_eval(WarpCoefficients{{0.5, 0.4}}, b, 0.3), InvariantViolation);
  EXPECT_THROW(warp_eval(WarpCoefficients{{0.5, 0.9}}, b, 0.3), InvariantViolation);
  EXPECT_THROW(warp_eval(WarpCoefficients{{0.5}}, b, 0.3), InvariantViolation);
}

TEST(WarpEval, MatchesPiecewiseLinearOracle) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t p : {1u, 2u, 5u}) {
    const SplineBasis b(p, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
      const auto theta = random_theta(p, 2.0, 0.01, rng);
      for (int k = 0; k < 20; ++k) {
        const double t = 2.0 * u(rng);
        EXPECT_NEAR(warp_eval({theta}, b, t), pl_oracle(theta, 2.0, t), 1e-13);
      }
    }
  }
}

TEST(WarpInvert, ExamplesAndRoundTrip) {
  const SplineBasis b(1, 1.0);
  const WarpFunction w(b, WarpCoefficients{{0.25, 1.0}});
  EXPECT_DOUBLE_EQ(warp_invert(w, 0.25), 0.5);
  EXPECT_EQ(warp_invert(WarpFunction::identity(1.0), 0.3), 0.3);

  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t p : {2u, 4u}) {
    const SplineBasis basis(p, 1.0);
    const WarpFunction g(basis, WarpCoefficients{random_theta(p, 1.0, 0.02, rng)});
    for (int k = 0; k < 100; ++k) {
      const double s = u(rng);
      EXPECT_NEAR(g(warp_invert(g, s)), s, 1e-10);
      EXPECT_NEAR(warp_invert(g, g(s)), s, 1e-10);
    }
  }
}

TEST(WarpFunction, TabulatedInverseToGridResolution) {
  const DistortionWarp h{2, -3, false};
  const WarpFunction w = h.tabulate(2001);
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double s = u(rng);
    EXPECT_NEAR(w(w.inverse(s)), s, 1e-10);
    EXPECT_NEAR(w.inverse(s), h.inverse(s), 2e-3);
  }
}

TEST(WarpFunction, TabulatedValidation) {
  EXPECT_THROW(WarpFunction(std::vector<double>{0.0, 1.0}, std::vector<double>{0.0, 0.9}), InvariantViolation);
  EXPECT_THROW(WarpFunction(std::vector<double>{0.0, 0.5, 1.0}, std::vector<double>{0.0, 0.6, 0.5}), InvariantViolation);
  EXPECT_THROW((void)WarpFunction::identity(1.0)(1.5), InvalidInput);
}

// --- increment map ---

TEST(IncrementMap, IdentityAtZeroAndFeasibleEverywhere) {
  const SplineBasis b(3, 1.0);
  const double xi = 0.025;
  const IncrementMap map(b, xi);
  const auto id = map.theta(std::vector<double>(3, 0.0));
  for (std::size_t k = 0; k < 4; ++k) { EXPECT_NEAR(id[k], b.knot(k + 1), 1e-15); }

  std::mt19937_64 rng(54);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> z(3);
    for (double& v : z) { v = u(rng); }
    const auto th = map.theta(z);
    EXPECT_EQ(th.back(), 1.0);
    double prev = 0.0;
    for (double v : th) {
      EXPECT_GE(v - prev, xi - 1e-12);
      prev = v;
    }
  }
  EXPECT_THROW(IncrementMap(b, 0.25), InvalidInput);
  EXPECT_THROW(IncrementMap(b, 0.0), InvalidInput);
}

TEST(IncrementMap, PreimageRoundTrip) {
  const SplineBasis b(4, 2.0);
  const IncrementMap map(b, 0.04);
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> z(4);
    for (double& v : z) { v = u(rng); }
    const auto back = map.z(map.theta(z));
    for (std::size_t k = 0; k < 4; ++k) { EXPECT_NEAR(back[k], z[k], 1e-9); }
  }
}

// --- pairwise objective ---

TEST(PairwiseObjective, ZeroAtIdentityForIdenticalTrajectories) {
  const auto grid = uniform_grid(1.0, 51);
  const auto y = trajectory_of(grid, [](double t) { return t; });
  WarpConfig cfg;
  cfg.lambda = 3.0;
  const SplineBasis b(cfg.p, 1.0);
  EXPECT_EQ(pairwise_objective(WarpCoefficients::identity(b).theta, y, y, cfg), 0.0);
}

TEST(PairwiseObjective, PenaltyIsPositiveAwayFromIdentity) {
  const auto grid = uniform_grid(1.0, 51);
  const auto y = trajectory_of(grid, [](double t) { return t; });
  WarpConfig cfg;
  cfg.p = 1;
  cfg.lambda = 2.0;
  const double v = pairwise_objective(std::vector<double>{0.25, 1.0}, y, y, cfg);
  EXPECT_GE(v, 2.0 * 0.0208333 * 0.99);
}

TEST(PairwiseObjective, ConstantTrajectoriesGivePenaltyIntegral) {
  const auto grid = uniform_grid(1.0, 51);
  const auto c = constant_trajectory(grid);
  WarpConfig cfg;
  cfg.p = 1;
  cfg.lambda = 1.0;
  cfg.quad_nodes = 10001;
  // closed form: int_0^1 (g(t) - t)^2 dt = 2 * int_0^0.5 (t / 2)^2 dt = 1/48
  EXPECT_NEAR(pairwise_objective(std::vector<double>{0.25, 1.0}, c, c, cfg), 1.0 / 48.0, 1e-8);
  cfg.quad_nodes = 101;
  EXPECT_NEAR(pairwise_objective(std::vector<double>{0.25, 1.0}, c, c, cfg), 1.0 / 48.0, 1e-4);
}

TEST(PairwiseObjective, MatchesDirectQuadrature) {
  const auto grid = uniform_grid(1.0, 41);
  const auto from = trajectory_of(grid, [](double t) { return t; });
  const auto to = trajectory_of(grid, [](double t) { return t * t; });
  WarpConfig cfg;
  cfg.p = 2;
  cfg.lambda = 0.5;
  cfg.quad_nodes = 61;
  const std::vector<double> theta{0.21, 0.57, 1.0}; // no warped node falls on a grid midpoint
  // trapezoid rule with nearest-node lookups, written out directly
  auto nearest = [&](double s) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
      if (std::abs(grid[k] - s) < std::abs(grid[best] - s)) { best = k; }
    }
    return best;
  };
  double total = 0.0;
  for (int q = 0; q <= 60; ++q) {
    const double t = q / 60.0;
    const double g = pl_oracle(theta, 1.0, t);
    const double v = Wasserstein::squared_distance(from.points[nearest(g)], to.points[nearest(t)]) + 0.5 * (g - t) * (g - t);
    total += (q == 0 || q == 60 ? 0.5 : 1.0) * v / 60.0;
  }
  EXPECT_NEAR(pairwise_objective(theta, from, to, cfg), total, 1e-12);
}

TEST(PairwiseObjective, RejectsInfeasibleTheta) {
  const auto grid = uniform_grid(1.0, 21);
  const auto y = constant_trajectory(grid);
  WarpConfig cfg;
  cfg.p = 2;
  EXPECT_THROW(pairwise_objective(std::vector<double>{0.5, 0.4, 1.0}, y, y, cfg), InvalidInput);
  EXPECT_THROW(pairwise_objective(std::vector<double>{0.2, 0.4, 0.9}, y, y, cfg), InvalidInput);
  EXPECT_THROW(pairwise_objective(std::vector<double>{0.2, 1.0}, y, y, cfg), InvalidInput);
}

TEST(WarpConfig, Validation) {
  WarpConfig cfg;
  cfg.p = 3;
  EXPECT_NEAR(cfg.effective_xi(2.0), 0.05, 1e-15);
  cfg.xi = 0.5;
  EXPECT_THROW(cfg.validate(2.0), InvalidInput);
  cfg.xi = 0.0;
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(2.0), InvalidInput);
}

// --- pairwise estimation ---

TEST(EstimatePairwise, IdenticalTrajectoriesGiveIdentity) {
  const auto grid = uniform_grid(1.0, 51);
  const auto y = trajectory_of(grid, [](double t) { return t; });
  WarpConfig cfg;
  cfg.lambda = 0.1;
  const auto est = estimate_pairwise(y, y, cfg);
  const auto id = WarpCoefficients::identity(SplineBasis(cfg.p, 1.0));
  for (std::size_t k = 0; k < id.theta.size(); ++k) { EXPECT_NEAR(est.theta[k], id.theta[k], 1e-4); }
}

TEST(EstimatePairwise, RecoversPlantedSplineWarp) {
  const auto grid = uniform_grid(1.0, 401);
  std::mt19937_64 rng(56);
  WarpConfig cfg;
  cfg.p = 2;
  cfg.lambda = 0.0;
  cfg.quad_nodes = 401;
  const SplineBasis basis(cfg.p, 1.0);
  for (int rep = 0; rep < 3; ++rep) {
    const auto theta0 = random_theta(cfg.p, 1.0, 0.1, rng);
    const WarpFunction g0(basis, WarpCoefficients{theta0});
    const auto from = trajectory_of(grid, [](double t) { return t; });
    const auto to = trajectory_of(grid, [&](double t) { return g0(t); });
    const auto est = estimate_pairwise(from, to, cfg);
    for (std::size_t k = 0; k < theta0.size(); ++k) { EXPECT_NEAR(est.theta[k], theta0[k], 0.01); }
  }
}

TEST(EstimatePairwise, HugePenaltyForcesIdentity) {
  const auto grid = uniform_grid(1.0, 51);
  const auto from = trajectory_of(grid, [](double t) { return t; });
  const auto to = trajectory_of(grid, [](double t) { return t * t; });
  WarpConfig cfg;
  cfg.lambda = 1e6;
  const auto est = estimate_pairwise(from, to, cfg);
  const auto id = WarpCoefficients::identity(SplineBasis(cfg.p, 1.0));
  for (std::size_t k = 0; k < id.theta.size(); ++k) { EXPECT_NEAR(est.theta[k], id.theta[k], 0.01); }
}

TEST(EstimatePairwise, FeasibleAndNoWorseThanIdentity) {
  const auto grid = uniform_grid(1.0, 51);
  std::mt19937_64 rng(57);
  for (int rep = 0; rep < 5; ++rep) {
    const auto h1 = sample_distortion_warp(rng);
    const auto h2 = sample_distortion_warp(rng);
    const auto from = trajectory_of(grid, [&](double t) { return h1.inverse(t); }, 2);
    const auto to = trajectory_of(grid, [&](double t) { return h2.inverse(t); }, 2);
    WarpConfig cfg;
    cfg.p = 2 + rep % 3;
    cfg.lambda = rep * 0.1;
    cfg.seed = static_cast<std::uint64_t>(rep);
    const PairwiseObjective obj(from, to, cfg);
    const auto est = estimate_pairwise_detailed(obj, cfg);
    const SplineBasis basis(cfg.p, 1.0);
    ASSERT_NO_THROW(check_coefficients(est.coefficients, basis));
    EXPECT_EQ(est.coefficients.theta.back(), 1.0);
    double prev = 0.0;
    for (double v : est.coefficients.theta) {
      EXPECT_GE(v - prev, cfg.effective_xi(1.0) - 1e-12);
      prev = v;
    }
    EXPECT_LE(est.objective, obj(WarpCoefficients::identity(basis).theta));
    EXPECT_NEAR(est.objective, obj(est.coefficients.theta), 1e-12);
  }
}

TEST(EstimatePairwise, DeterministicGivenSeed) {
  const auto grid = uniform_grid(1.0, 51);
  const auto from = trajectory_of(grid, [](double t) { return t; });
  const auto to = trajectory_of(grid, [](double t) { return std::sqrt(t); });
  WarpConfig cfg;
  cfg.seed = 9;
  EXPECT_EQ(estimate_pairwise(from, to, cfg), estimate_pairwise(from, to, cfg));
}

// --- global warps and alignment ---

TEST(EstimateGlobal, IdentityPairwiseWarpsGiveIdentity) {
  const SplineBasis b(3, 1.0);
  PairwiseWarps warps(4, b);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i != j) { warps.set(i, j, WarpCoefficients::identity(b)); }
    }
  }
  const auto grid = uniform_grid(1.0, 51);
  const auto g = estimate_global(warps, 2, grid);
  for (double t : grid) {
    EXPECT_NEAR(g.inverse(t), t, 1e-15);
    EXPECT_NEAR(g.forward(t), t, 1e-15);
  }
}

TEST(EstimateGlobal, ReflectedPairAveragesToIdentity) {
  const SplineBasis b(1, 1.0);
  PairwiseWarps warps(3, b);
  warps.set(0, 1, WarpCoefficients{{0.3, 1.0}});
  warps.set(0, 2, WarpCoefficients{{0.7, 1.0}}); // 2t - g(t) at the knot
  const auto grid = uniform_grid(1.0, 21);
  const auto g = estimate_global(warps, 0, grid);
  for (double t : grid) { EXPECT_NEAR(g.inverse(t), t, 1e-15); }
}

TEST(EstimateGlobal, HandSetTablesGivePointwiseMean) {
  const SplineBasis b(2, 1.0);
  PairwiseWarps warps(3, b);
  const std::vector<double> t1{0.2, 0.5, 1.0}, t2{0.4, 0.8, 1.0};
  warps.set(1, 0, {t1});
  warps.set(1, 2, {t2});
  const auto grid = uniform_grid(1.0, 31);
  const auto g = estimate_global(warps, 1, grid);
  for (double t : grid) {
    const double want = (t + pl_oracle(t1, 1.0, t) + pl_oracle(t2, 1.0, t)) / 3.0;
    EXPECT_NEAR(g.inverse(t), want, 1e-14);
    EXPECT_NEAR(g.forward(g.inverse(t)), t, 1e-12);
  }
  PairwiseWarps missing(3, b);
  EXPECT_THROW(estimate_global(missing, 0, grid), InvalidInput);
}

TEST(AlignTrajectory, IdentityAndConstantCases) {
  const auto grid = uniform_grid(1.0, 51);
  const auto y = trajectory_of(grid, [](double t) { return t; });
  EXPECT_EQ(align_trajectory(y, WarpFunction::identity(1.0)).points, y.points);
  const auto c = constant_trajectory(grid);
  const DistortionWarp h{3, -2, false};
  EXPECT_EQ(align_trajectory(c, h.tabulate()).points, c.points);
}

TEST(AlignTrajectory, UndoesTheGeneratingWarp) {
  // Y = mu o g^-1 on a dense grid; aligning with g returns mu up to nearest-node error.
  const auto grid = uniform_grid(1.0, 1001);
  const WarpFunction g(SplineBasis(2, 1.0), WarpCoefficients{{0.45, 0.75, 1.0}});
  const auto y = trajectory_of(grid, [&](double t) { return g.inverse(t); });
  const auto mu = trajectory_of(grid, [](double t) { return t; });
  const auto aligned = align_trajectory(y, g);
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) { worst = std::max(worst, wasserstein_distance(aligned.points[k], mu.points[k])); }
  EXPECT_LT(worst, 0.01);
}

TEST(AlignTrajectory, PicksTheNodeNearestTheWarpedTime) {
  const auto grid = uniform_grid(1.0, 101);
  const auto y = trajectory_of(grid, [](double t) { return t; }, 2, 11);
  const DistortionWarp h{2, -1, false};
  const auto w = h.tabulate();
  const auto aligned = align_trajectory(y, w);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double s = w(grid[k]);
    std::size_t best = 0;
    for (std::size_t j = 1; j < grid.size(); ++j) {
      if (std::abs(grid[j] - s) < std::abs(grid[best] - s)) { best = j; }
    }
    EXPECT_EQ(aligned.points[k], y.points[best]) << k;
  }
}

TEST(EstimateAllPairwise, IndependentOfWorkerCount) {
  const auto grid = uniform_grid(1.0, 31);
  std::mt19937_64 rng(58);
  std::vector<FittedTrajectory<Wasserstein>> trajs;
  for (int i = 0; i < 4; ++i) {
    const auto h = sample_distortion_warp(rng);
    trajs.push_back(trajectory_of(grid, [&](double t) { return h.inverse(t); }, 1, 21));
  }
  WarpConfig cfg;
  cfg.p = 2;
  const auto a = estimate_all_pairwise<Wasserstein>(trajs, cfg, 1);
  const auto b = estimate_all_pairwise<Wasserstein>(trajs, cfg, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_FALSE(a.get(i, i).has_value());
    for (std::size_t j = 0; j < 4; ++j) {
      if (i != j) { EXPECT_EQ(*a.get(i, j), *b.get(i, j)); }
    }
  }
  const std::vector<FittedTrajectory<Wasserstein>> one{trajs[0]};
  EXPECT_THROW(estimate_all_pairwise<Wasserstein>(one, cfg), InvalidInput);
}
