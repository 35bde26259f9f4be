#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/LU>

#include "rmtlab/common.hpp"
#include "rmtlab/profile.hpp"
#include "rmtlab/sc.hpp"

namespace rmtlab {

struct StabilityParams {
  SpectralPoint z;
  Complex m;
  double gamma = 0;        // ||(1 - m^2 S)^{-1}||_{inf->inf}
  double gamma_tilde = 0;  // same norm restricted to e^perp
  double bp_norm = 0;      // ||B(I - ones/n)||_{inf->inf}, upper surrogate
  double delta_minus = 0;
  double delta_plus = 0;
};

struct DomainThresholds {
  double e = 0;
  double gamma_exponent = 0;
  double eta_tilde = 0;  // lower edge of the domain, from gamma_tilde
  double eta = 0;        // same with gamma in place of gamma_tilde
  bool empty_tilde = false;
  bool empty = false;
};

namespace detail {

inline double abs_sum_about(const CVector& b, Complex mu) {
  double acc = 0;
  for (Index j = 0; j < b.size(); ++j) acc += std::abs(b(j) - mu);
  return acc;
}

// Restriction of v -> Bv to e^perp in the sup norm, one row at a time.  By
// duality the row value is min over mu of sum_j |b_j - mu| (the constraint
// sum v_j = 0 enters as the scalar multiplier mu), i.e. the geometric median
// objective of the row entries in the complex plane.  Candidate scan plus a
// damped Weiszfeld refinement; mu = 0 and mu = mean keep the result bracketed
// by the unrestricted row sum and the centered-row surrogate.
inline double restricted_row_norm(const CVector& b) {
  const Index n = b.size();
  if (n <= 1) return 0.0;
  Complex best_mu(0, 0);
  double best = abs_sum_about(b, best_mu);
  auto consider = [&](Complex mu) {
    const double f = abs_sum_about(b, mu);
    if (f < best) {
      best = f;
      best_mu = mu;
    }
  };
  consider(b.mean());
  const Index stride = std::max<Index>(1, n / 32);
  for (Index j = 0; j < n; j += stride) consider(b(j));

  const double scale = b.cwiseAbs().maxCoeff() + 1.0;
  Complex mu = best_mu;
  for (int it = 0; it < 200; ++it) {
    Complex num(0, 0), pull(0, 0);
    double den = 0, anchors = 0;
    for (Index j = 0; j < n; ++j) {
      const Complex d = b(j) - mu;
      const double r = std::abs(d);
      if (r <= 1e-15 * scale) {
        anchors += 1.0;
        continue;
      }
      num += b(j) / r;
      den += 1.0 / r;
      pull += d / r;
    }
    if (den == 0) break;
    const double resultant = std::abs(pull);
    if (anchors > 0 && resultant <= anchors) break;
    Complex next = num / den;
    if (anchors > 0) {
      const double beta = std::min(1.0, anchors / resultant);
      next = (1.0 - beta) * next + beta * mu;
    }
    const bool settled = std::abs(next - mu) <= 1e-14 * scale;
    mu = next;
    if (settled) break;
  }
  consider(mu);
  return best;
}

struct RowNorms {
  double gamma = 0, gamma_tilde = 0, bp_norm = 0;
  void absorb(const CVector& row) {
    gamma = std::max(gamma, row.cwiseAbs().sum());
    gamma_tilde = std::max(gamma_tilde, restricted_row_norm(row));
    bp_norm = std::max(bp_norm, abs_sum_about(row, row.mean()));
  }
};

// Row 0 of B = (1 - m^2 S)^{-1} for a circulant profile, via the Fourier
// symbol: b_j = (1/N) sum_t w_t cos(2 pi <j,t> / L) with w_t = 1/(1 - m^2
// lambda_t); the sine parts cancel by the t <-> -t symmetry of the symbol.
inline CVector circulant_b_row(const VarianceProfile& profile, Complex m2) {
  const Index n = profile.n();
  const auto& band = profile.geometry().band;
  const int d = band ? band->dim : 1;
  const Index l = band ? band->side : n;
  const Vector& symbol = profile.fourier_symbol();

  CVector w(n);
  for (Index t = 0; t < n; ++t) {
    const Complex denom = 1.0 - m2 * symbol(t);
    if (std::abs(denom) <= 1e-14) throw Error("gamma_norms: numerically singular 1 - m^2 S");
    w(t) = 1.0 / denom;
  }
  std::vector<double> cos_table(static_cast<std::size_t>(l));
  for (Index k = 0; k < l; ++k)
    cos_table[static_cast<std::size_t>(k)] =
        std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(l));
  std::vector<Index> coords(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
  for (Index j = 0; j < n; ++j) decode(j, d, l, &coords[static_cast<std::size_t>(j * d)]);

  CVector b(n);
  for (Index j = 0; j < n; ++j) {
    const Index* cj = &coords[static_cast<std::size_t>(j * d)];
    Complex acc(0, 0);
    for (Index t = 0; t < n; ++t) {
      const Index* ct = &coords[static_cast<std::size_t>(t * d)];
      Index phase = 0;
      for (int k = 0; k < d; ++k) phase = (phase + cj[k] * ct[k]) % l;
      acc += w(t) * cos_table[static_cast<std::size_t>(phase)];
    }
    b(j) = acc / static_cast<double>(n);
  }
  return b;
}

}  // namespace detail

inline std::pair<double, double> spectral_gaps(const VarianceProfile& profile) {
  const Vector& spec = profile.spectrum();
  const Index n = spec.size();
  const double delta_minus = 1.0 + spec(0);
  const double delta_plus = n >= 2 ? 1.0 - spec(n - 2) : 1.0;
  return {delta_minus, delta_plus};
}

inline StabilityParams gamma_norms(const VarianceProfile& profile, SpectralPoint z) {
  require(z.eta > 0, "gamma_norms: eta must be positive");
  const Index n = profile.n();
  const Complex m = m_sc(z);
  const Complex m2 = m * m;

  detail::RowNorms norms;
  const auto kind = profile.geometry().kind;
  if (kind == ProfileKind::mean_field) {
    // B = I + (m^2/(1-m^2)) ones/n.
    const Complex c = m2 / (1.0 - m2);
    CVector row = CVector::Constant(n, c / static_cast<double>(n));
    row(0) += 1.0;
    norms.absorb(row);
  } else if (profile.geometry().circulant) {
    norms.absorb(detail::circulant_b_row(profile, m2));
  } else {
    CMatrix a = (-m2) * profile.s();
    a.diagonal().array() += 1.0;
    Eigen::PartialPivLU<CMatrix> lu(a);
    const auto u_diag = lu.matrixLU().diagonal();
    if (u_diag.cwiseAbs().minCoeff() <= 1e-14 * u_diag.cwiseAbs().maxCoeff())
      throw Error("gamma_norms: numerically singular 1 - m^2 S");
    const CMatrix b = lu.solve(CMatrix::Identity(n, n));
    for (Index i = 0; i < n; ++i) norms.absorb(b.row(i).transpose());
  }

  StabilityParams out;
  out.z = z;
  out.m = m;
  out.gamma = norms.gamma;
  out.gamma_tilde = norms.gamma_tilde;
  out.bp_norm = norms.bp_norm;
  std::tie(out.delta_minus, out.delta_plus) = spectral_gaps(profile);
  return out;
}

inline DomainThresholds eta_thresholds(const VarianceProfile& profile, double e,
                                       double gamma_exponent) {
  require(std::abs(e) <= 10.0, "eta_thresholds: |E| must be at most 10");
  require(gamma_exponent > 0.0 && gamma_exponent < 0.5,
          "eta_thresholds: gamma exponent must lie in (0, 1/2)");
  const double m_param = profile.m_param();
  const double floor = 1.0 / m_param;
  const double mg = std::pow(m_param, -gamma_exponent);
  const double mg2 = mg * mg;

  DomainThresholds out;
  out.e = e;
  out.gamma_exponent = gamma_exponent;
  out.eta_tilde = out.eta = std::numeric_limits<double>::quiet_NaN();

  bool alive_tilde = true, alive_plain = true;
  bool first = true;
  for (double eta = 10.0; eta >= floor && alive_tilde; eta /= 1.02) {
    const auto p = gamma_norms(profile, {e, eta});
    const double im_m = std::imag(p.m);
    const double lhs = 1.0 / (m_param * eta);
    auto holds = [&](double g) {
      const double g2 = g * g;
      return lhs <= std::min(mg / (g2 * g), mg2 / (g2 * g2 * im_m));
    };
    if (alive_tilde) {
      if (holds(p.gamma_tilde))
        out.eta_tilde = eta;
      else
        alive_tilde = false;
    }
    if (alive_plain) {
      if (holds(p.gamma))
        out.eta = eta;
      else
        alive_plain = false;
    }
    if (first) {
      out.empty_tilde = !alive_tilde;
      out.empty = !alive_plain;
      first = false;
    }
  }
  if (alive_tilde) out.eta_tilde = floor;  // condition held on the whole grid
  if (alive_plain) out.eta = floor;
  if (!out.empty_tilde) out.eta_tilde = std::max(out.eta_tilde, floor);
  if (!out.empty) out.eta = std::max(out.eta, floor);
  return out;
}

inline std::vector<SpectralPoint> domain_grid(const VarianceProfile& profile,
                                              double gamma_exponent, Index n_e, Index n_eta) {
  require(n_e >= 2 && n_eta >= 2, "domain_grid: grid sizes must be at least 2");
  const double floor = 1.0 / profile.m_param();
  std::vector<SpectralPoint> grid;
  for (Index i = 0; i < n_e; ++i) {
    const double e = -10.0 + 20.0 * static_cast<double>(i) / static_cast<double>(n_e - 1);
    const auto thresholds = eta_thresholds(profile, e, gamma_exponent);
    if (thresholds.empty_tilde) continue;
    for (Index j = 0; j < n_eta; ++j) {
      const double frac = static_cast<double>(j) / static_cast<double>(n_eta - 1);
      const double eta = 10.0 * std::pow(floor / 10.0, frac);
      if (eta >= thresholds.eta_tilde) grid.push_back({e, eta});
    }
  }
  return grid;
}

}  // namespace rmtlab
