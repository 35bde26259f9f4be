#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "rmtlab/common.hpp"

namespace rmtlab {

// Semicircle-law reference quantities at z = E + i*eta.
struct ScReference {
  Complex m{};       // Stieltjes transform of the semicircle density
  double rho = 0;    // density at E
  double im_m = 0;
  double kappa = 0;  // distance of |E| to the edge 2
  double theta = 0;
  double pi_bound = std::numeric_limits<double>::quiet_NaN();  // needs M
};

// rho(E) = sqrt((4 - E^2)_+) / (2 pi)
inline double rho(double e) {
  const double d = 4.0 - e * e;
  return d > 0 ? std::sqrt(d) / (2.0 * kPi) : 0.0;
}

// Root of m^2 + z m + 1 = 0 with Im m > 0; branch fixed by that sign test.
inline Complex m_sc(SpectralPoint z) {
  require(z.eta > 0, "m_sc: eta must be positive");
  const Complex zz = z.z();
  const Complex root = std::sqrt(zz * zz - 4.0);
  Complex m = (-zz + root) / 2.0;
  if (m.imag() <= 0) m = (-zz - root) / 2.0;
  return m;
}

// n_sc(E) = integral of rho up to E, via the closed-form antiderivative.
inline double n_sc(double e) {
  if (e <= -2.0) return 0.0;
  if (e >= 2.0) return 1.0;
  return 0.5 + e * std::sqrt(4.0 - e * e) / (4.0 * kPi) + std::asin(e / 2.0) / kPi;
}

// Classical location gamma_alpha: n_sc(gamma) = alpha/n, bisection to 1e-12.
inline double gamma_alpha(Index n, Index alpha) {
  require(n >= 1, "gamma_alpha: n must be positive");
  require(alpha >= 1 && alpha <= n, "gamma_alpha: alpha outside [1, n]");
  const double target = static_cast<double>(alpha) / static_cast<double>(n);
  double lo = -2.0, hi = 2.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (n_sc(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// kappa, theta, m, rho and (given M) the entrywise bound
// Pi(z) = sqrt(Im m / (M eta)) + 1/(M eta).
inline ScReference edge_params(SpectralPoint z,
                               std::optional<double> m_param = std::nullopt) {
  require(z.eta > 0, "edge_params: eta must be positive");
  ScReference ref;
  ref.m = m_sc(z);
  ref.im_m = ref.m.imag();
  ref.rho = rho(z.e);
  const double abse = std::abs(z.e);
  ref.kappa = std::abs(abse - 2.0);
  const double ke = ref.kappa + z.eta;
  ref.theta = abse <= 2.0 ? ref.kappa + z.eta / std::sqrt(ke) : std::sqrt(ke);
  if (m_param) {
    require(*m_param > 0, "edge_params: M must be positive");
    const double meta = *m_param * z.eta;
    ref.pi_bound = std::sqrt(ref.im_m / meta) + 1.0 / meta;
  }
  return ref;
}

}  // namespace rmtlab
