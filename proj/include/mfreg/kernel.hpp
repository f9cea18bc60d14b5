#pragma once

#include "error.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfreg {

  enum class KernelFamily { epanechnikov, gaussian };

  inline std::string_view to_string(KernelFamily f) {
    return f == KernelFamily::epanechnikov ? "epanechnikov" : "gaussian";
  }

  inline KernelFamily parse_kernel_family(std::string_view s) {
    if (s == "epanechnikov") { return KernelFamily::epanechnikov; }
    if (s == "gaussian") { return KernelFamily::gaussian; }
    throw InvalidInput("unknown kernel family '" + std::string(s) + "'");
  }

  /// A smoothing kernel K scaled to bandwidth b: K_b(x) = K(x/b)/b.
  struct KernelSpec {
    KernelFamily family = KernelFamily::epanechnikov;
    double bandwidth = 1.0;

    KernelSpec() = default;
    KernelSpec(KernelFamily f, double b) : family(f), bandwidth(b) {
      if (!(b > 0.0) || !std::isfinite(b)) { throw InvalidInput("kernel bandwidth must be positive"); }
    }
  };

  inline double kernel_eval(const KernelSpec& k, double x) {
    const double u = x / k.bandwidth;
    switch (k.family) {
      case KernelFamily::epanechnikov:
        return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) / k.bandwidth : 0.0;
      case KernelFamily::gaussian:
        return std::exp(-0.5 * u * u) * std::numbers::inv_sqrtpi / std::numbers::sqrt2 / k.bandwidth;
    }
    return 0.0;
  }

  /// Empirical kernel moments mu_l = n^-1 sum K_b(U_j - t)(U_j - t)^l and sigma2 = mu0 mu2 - mu1^2.
  struct LocalMoments {
    double mu0 = 0.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double sigma2 = 0.0;
  };

  inline constexpr double degenerate_sigma2 = 1e-12;

  /// Throws DegenerateWindow when sigma2 <= 1e-12.
  inline LocalMoments local_moments(std::span<const double> times, double t, const KernelSpec& k) {
    if (times.empty()) { throw InvalidInput("local_moments: no design points"); }
    LocalMoments m;
    for (double u : times) {
      const double d = u - t;
      const double kv = kernel_eval(k, d);
      m.mu0 += kv;
      m.mu1 += kv * d;
      m.mu2 += kv * d * d;
    }
    const double n = static_cast<double>(times.size());
    m.mu0 /= n;
    m.mu1 /= n;
    m.mu2 /= n;
    m.sigma2 = m.mu0 * m.mu2 - m.mu1 * m.mu1;
    if (!(m.sigma2 > degenerate_sigma2)) { throw DegenerateWindow(t, k.bandwidth); }
    return m;
  }

  /// Locally linear Frechet regression weights w_j = s(U_j, t)/n. They satisfy sum w_j = 1 and
  /// sum w_j (U_j - t) = 0 and can be negative.
  inline std::vector<double> local_weights(std::span<const double> times, double t, const KernelSpec& k) {
    const LocalMoments m = local_moments(times, t, k);
    std::vector<double> w(times.size());
    // Raw weights sum to n * sigma2; normalize by the computed sum.
    double total = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j) {
      const double d = times[j] - t;
      w[j] = kernel_eval(k, d) * (m.mu2 - m.mu1 * d);
      total += w[j];
    }
    for (double& v : w) { v /= total; }
    return w;
  }

} // namespace mfreg
