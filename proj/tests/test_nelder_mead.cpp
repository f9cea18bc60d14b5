#include <mfreg/nelder_mead.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using mfreg::nelder_mead;
using mfreg::NelderMeadOptions;

TEST(NelderMead, QuadraticBowl) {
  auto f = [](const std::vector<double>& x) { return (x[0] - 1.0) * (x[0] - 1.0) + 4.0 * (x[1] + 2.0) * (x[1] + 2.0) + 3.0; };
  const auto r = nelder_mead(f, {0.0, 0.0});
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], -2.0, 1e-6);
  EXPECT_NEAR(r.value, 3.0, 1e-12);
}

TEST(NelderMead, Rosenbrock) {
  auto f = [](const std::vector<double>& x) { return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2); };
  NelderMeadOptions opts;
  opts.max_evals = 20000;
  opts.xtol = 1e-10;
  const auto r = nelder_mead(f, {-1.2, 1.0}, opts);
  EXPECT_NEAR(r.x[0], 1.0, 1e-5);
  EXPECT_NEAR(r.x[1], 1.0, 1e-5);
  EXPECT_LE(r.evals, opts.max_evals + 4);
}

TEST(NelderMead, NeverWorseThanStart) {
  // Start at the global minimum of a rugged function; any move is worse.
  auto f = [](const std::vector<double>& x) { return std::abs(x[0]) + std::abs(std::sin(40.0 * x[1])) + std::abs(x[1]); };
  const auto r = nelder_mead(f, {0.0, 0.0});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.x, (std::vector<double>{0.0, 0.0}));
}

TEST(NelderMead, NonFiniteValuesAreRejectedMoves) {
  auto f = [](const std::vector<double>& x) {
    if (x[0] < 0.5) { return std::numeric_limits<double>::quiet_NaN(); }
    return (x[0] - 2.0) * (x[0] - 2.0);
  };
  const auto r = nelder_mead(f, {1.0});
  EXPECT_NEAR(r.x[0], 2.0, 1e-6);
  EXPECT_TRUE(std::isfinite(r.value));
}

TEST(NelderMead, EvaluationBudgetIsRespected) {
  int calls = 0;
  auto f = [&calls](const std::vector<double>& x) {
    ++calls;
    double s = 0.0;
    for (double v : x) { s += std::cos(v) * v; }
    return s;
  };
  NelderMeadOptions opts;
  opts.max_evals = 50;
  const auto r = nelder_mead(f, std::vector<double>(5, 0.3), opts);
  EXPECT_EQ(r.evals, calls);
  EXPECT_LE(calls, opts.max_evals + 5); // a shrink step may finish after the budget check
}

TEST(NelderMead, ZeroDimensionalProblem) {
  const auto r = nelder_mead([](const std::vector<double>&) { return 7.0; }, {});
  EXPECT_EQ(r.value, 7.0);
  EXPECT_EQ(r.evals, 1);
}

TEST(NelderMead, Deterministic) {
  auto f = [](const std::vector<double>& x) { return std::sin(3.0 * x[0]) + std::cos(2.0 * x[1]) + 0.1 * (x[0] * x[0] + x[1] * x[1]); };
  const auto a = nelder_mead(f, {0.4, -0.7});
  const auto b = nelder_mead(f, {0.4, -0.7});
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.evals, b.evals);
}
