#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "rmtlab/common.hpp"
#include "rmtlab/linalg.hpp"
#include "rmtlab/profile.hpp"
#include "rmtlab/rng.hpp"
#include "rmtlab/sc.hpp"

namespace rmtlab {

// Green function G(z) = (H - z)^{-1} of one sample, carrying the Hermitian
// eigendecomposition so that new z only cost matrix products, not another
// eigensolve.
struct ResolventBundle {
  Vector eigenvalues;  // ascending
  Matrix u_real;       // eigenvectors of a real sample
  CMatrix u_complex;   // eigenvectors of a complex sample
  bool real_h = true;
  SpectralPoint z{0, 0};
  CMatrix g;
  Complex m_n{0, 0};

  Index n() const { return eigenvalues.size(); }

  void move_to(SpectralPoint zp) {
    require(zp.eta > 0, "resolvent: eta must be positive");
    z = zp;
    const Index dim = n();
    CVector w(dim);
    for (Index k = 0; k < dim; ++k) w(k) = 1.0 / (Complex(eigenvalues(k)) - zp.z());
    if (real_h) {
      // G = U diag(w) U^T with real U: assemble the real and imaginary parts
      // with two real products.
      Matrix scaled = u_real * w.real().asDiagonal();
      g.resize(dim, dim);
      g.real().noalias() = scaled * u_real.transpose();
      scaled.noalias() = u_real * w.imag().asDiagonal();
      g.imag().noalias() = scaled * u_real.transpose();
    } else {
      CMatrix scaled = u_complex * w.asDiagonal();
      g.noalias() = scaled * u_complex.adjoint();
    }
    m_n = g.trace() / static_cast<double>(dim);
  }
};

inline ResolventBundle green(const SampleMatrix& h, SpectralPoint z) {
  require(z.eta > 0, "green: eta must be positive");
  ResolventBundle bundle;
  bundle.real_h = h.is_real();
  if (bundle.real_h) {
    auto eig = sym_eig(h.h.real());
    bundle.eigenvalues = std::move(eig.values);
    bundle.u_real = std::move(eig.vectors);
  } else {
    auto eig = herm_eig(h.h);
    bundle.eigenvalues = std::move(eig.values);
    bundle.u_complex = std::move(eig.vectors);
  }
  bundle.move_to(z);
  return bundle;
}

// G^{(t)} by iterated rank-one Schur downdates, returned in the full N x N
// frame with the removed rows and columns zeroed (index alignment preserved).
inline CMatrix minor(const ResolventBundle& bundle, const std::vector<Index>& t) {
  const Index n = bundle.n();
  require(static_cast<Index>(t.size()) <= n - 1, "minor: index set too large");
  CMatrix g = bundle.g;
  std::vector<char> removed(static_cast<std::size_t>(n), 0);
  for (const Index k : t) {
    require(k >= 0 && k < n, "minor: index out of range");
    require(!removed[static_cast<std::size_t>(k)], "minor: duplicate index");
    if (std::abs(g(k, k)) < 1e-14)
      throw Error("minor: pivot degeneracy at index " + std::to_string(k));
    const CVector col = g.col(k);
    const CVector row = g.row(k).transpose();
    g.noalias() -= col * (row.transpose() / g(k, k));
    g.row(k).setZero();
    g.col(k).setZero();
    removed[static_cast<std::size_t>(k)] = 1;
  }
  return g;
}

struct ControlParams {
  double lambda_o = 0;     // max off-diagonal |G_ij|
  double lambda_d = 0;     // max |G_ii - m|
  double lambda = 0;       // max of the two
  double theta_param = 0;  // |m_N - m|
  CVector v;               // G_ii - m
  Complex v_avg{0, 0};
  double pi_bound = 0;
};

inline ControlParams control(const ResolventBundle& bundle, const ScReference& ref) {
  require(std::abs(ref.m - m_sc(bundle.z)) <= 1e-10,
          "control: reference evaluated at a different z");
  const Index n = bundle.n();
  ControlParams out;
  out.v.resize(n);
  for (Index i = 0; i < n; ++i) {
    out.v(i) = bundle.g(i, i) - ref.m;
    out.lambda_d = std::max(out.lambda_d, std::abs(out.v(i)));
    for (Index j = 0; j < n; ++j)
      if (j != i) out.lambda_o = std::max(out.lambda_o, std::abs(bundle.g(i, j)));
  }
  out.lambda = std::max(out.lambda_o, out.lambda_d);
  out.v_avg = out.v.mean();
  out.theta_param = std::abs(out.v_avg);  // equals |m_N - m| up to rounding
  out.pi_bound = ref.pi_bound;
  return out;
}

struct SchurTerms {
  Index i = 0;
  Complex a_i{0, 0};
  Complex z_i{0, 0};
  Complex upsilon_i{0, 0};
  Complex residual{0, 0};
};

inline SchurTerms schur_terms(const SampleMatrix& h, const ResolventBundle& bundle,
                              const ScReference& ref, Index i) {
  const Index n = bundle.n();
  require(i >= 0 && i < n, "schur_terms: index out of range");
  require(std::abs(ref.m - m_sc(bundle.z)) <= 1e-10,
          "schur_terms: reference evaluated at a different z");
  const Matrix& s = h.spec.profile->s();
  const CMatrix& g = bundle.g;
  const CMatrix gi = minor(bundle, {i});

  SchurTerms out;
  out.i = i;
  for (Index k = 0; k < n; ++k) out.a_i += s(i, k) * g(i, k) * g(k, i);
  out.a_i /= g(i, i);

  // Quadratic form sum_{k,l != i} h_ik G^{(i)}_kl h_li and its conditional
  // expectation sum_{k != i} s_ik G^{(i)}_kk; row/column i of gi are zero, so
  // the full contractions already exclude i.
  const Complex quad = (h.h.row(i) * gi * h.h.col(i)).value();
  Complex pquad{0, 0};
  for (Index k = 0; k < n; ++k) pquad += s(i, k) * gi(k, k);
  out.z_i = quad - pquad;
  out.upsilon_i = out.a_i + h.h(i, i) - out.z_i;

  Complex sv{0, 0};
  for (Index k = 0; k < n; ++k) sv += s(i, k) * (g(k, k) - ref.m);
  const Complex v_i = g(i, i) - ref.m;
  out.residual = (-sv + out.upsilon_i) - (1.0 / (ref.m + v_i) - 1.0 / ref.m);
  return out;
}

namespace detail {

// Z_k for every k at once via full-matrix contractions.  Writing the minor
// G^{(k)} in terms of G turns the quadratic form into
//   q_k = (HGH)_kk - h_kk[(GH)_kk + (HG)_kk - h_kk G_kk]
//         - ((HG)_kk - h_kk G_kk)((GH)_kk - G_kk h_kk)/G_kk
// and its conditional expectation into
//   p_k = (S diag G)_k - s_kk G_kk - [(S o (G o G^T))_k row sum - s_kk G_kk^2]/G_kk.
struct SchurVectors {
  CVector z;  // Z_k for every index
  CVector a;  // A_k for every index
};

inline SchurVectors all_schur_vectors(const SampleMatrix& h,
                                      const ResolventBundle& bundle) {
  const Index n = bundle.n();
  const CMatrix& g = bundle.g;
  const Matrix& s = h.spec.profile->s();

  CMatrix gh(n, n);
  if (bundle.real_h) {
    const Matrix hr = h.h.real();
    gh.real().noalias() = g.real() * hr;
    gh.imag().noalias() = g.imag() * hr;
  } else {
    gh.noalias() = g * h.h;
  }

  CVector q(n), p(n), ak(n);
  for (Index k = 0; k < n; ++k) {
    const Complex gkk = g(k, k);
    if (std::abs(gkk) < 1e-14)
      throw Error("fluct_avg: pivot degeneracy at index " + std::to_string(k));
    const Complex hkk = h.h(k, k);
    const Complex hgh = (h.h.row(k) * gh.col(k)).value();
    const Complex gh_kk = gh(k, k);
    const Complex hg_kk = (h.h.row(k) * g.col(k)).value();
    q(k) = hgh - hkk * (gh_kk + hg_kk - hkk * gkk) -
           (hg_kk - hkk * gkk) * (gh_kk - gkk * hkk) / gkk;

    Complex sg{0, 0}, sgg{0, 0};
    for (Index a = 0; a < n; ++a) {
      sg += s(k, a) * g(a, a);
      sgg += s(k, a) * g(a, k) * g(k, a);
    }
    p(k) = sg - s(k, k) * gkk - (sgg - s(k, k) * gkk * gkk) / gkk;
    ak(k) = sgg / gkk;
  }
  SchurVectors out;
  out.z = q - p;
  out.a = std::move(ak);
  return out;
}

inline CVector all_z_terms(const SampleMatrix& h, const ResolventBundle& bundle) {
  return all_schur_vectors(h, bundle).z;
}

}  // namespace detail

struct FluctAvgOptions {
  bool with_q_g = true;
  int resamples = 64;
};

struct FluctAvg {
  CVector sum_q_inv;  // sum_k t_ik Q_k(1/G_kk)
  CVector sum_q_g;    // sum_k t_ik Q_k(G_kk), empty when disabled
  CVector sum_v;      // sum_k t_ik v_k
  double q_g_resample_se = 0;  // largest std error of the resampled P_k G_kk
};

// Weighted fluctuation averages.  Q_k(1/G_kk) = h_kk - Z_k is exact from
// Schur's formula; Q_k(G_kk) has no closed form, so P_k G_kk is estimated by
// redrawing row/column k conditionally on the rest of the sample.
inline FluctAvg fluct_avg(const SampleMatrix& h, const ResolventBundle& bundle,
                          const Matrix& weights, FluctAvgOptions options = {}) {
  const Index n = bundle.n();
  require(weights.rows() == n && weights.cols() == n,
          "fluct_avg: weight matrix has wrong shape");
  const double inv_m = 1.0 / h.spec.profile->m_param();
  if (weights.cwiseAbs().maxCoeff() > inv_m + 1e-12 ||
      weights.cwiseAbs().rowwise().sum().maxCoeff() > 1.0 + 1e-12)
    throw Error("fluct_avg: weights violate |t_ik| <= 1/M, sum_k |t_ik| <= 1");

  const Complex m = m_sc(bundle.z);
  const CVector z_terms = detail::all_z_terms(h, bundle);
  const CVector q_inv = h.h.diagonal() - z_terms;
  const CVector v = bundle.g.diagonal().array() - m;

  FluctAvg out;
  out.sum_q_inv = weights * q_inv;
  out.sum_v = weights * v;
  if (!options.with_q_g) return out;

  require(options.resamples >= 2, "fluct_avg: need at least 2 resamples");
  const Matrix& s = h.spec.profile->s();
  CVector q_g(n);
  for (Index k = 0; k < n; ++k) {
    const CMatrix gk = minor(bundle, {k});
    auto rng = make_engine(derive_seed(h.spec.seed ^ 0x666c756374617667ull,
                                       static_cast<std::uint64_t>(n),
                                       static_cast<std::uint64_t>(h.sample_index),
                                       static_cast<std::uint64_t>(k)));
    Complex acc{0, 0};
    double acc_sq = 0;
    for (int r = 0; r < options.resamples; ++r) {
      CVector row(n);
      Complex hkk{0, 0};
      for (Index a = 0; a < n; ++a) {
        if (s(k, a) == 0.0) {
          row(a) = 0;
          continue;
        }
        row(a) = std::sqrt(s(k, a)) * detail::draw_zeta(rng, h.spec, a == k);
        if (a == k) hkk = row(a);
      }
      const Complex quad = (row.transpose() * gk * row.conjugate()).value();
      const Complex gkk = 1.0 / (hkk - bundle.z.z() - quad);
      acc += gkk;
      acc_sq += std::norm(gkk);
    }
    const Complex p_hat = acc / static_cast<double>(options.resamples);
    q_g(k) = bundle.g(k, k) - p_hat;
    const double var =
        std::max(0.0, acc_sq / options.resamples - std::norm(p_hat));
    out.q_g_resample_se =
        std::max(out.q_g_resample_se, std::sqrt(var / options.resamples));
  }
  out.sum_q_g = weights * q_g;
  return out;
}

}  // namespace rmtlab
