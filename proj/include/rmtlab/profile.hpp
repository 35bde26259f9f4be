#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rmtlab/common.hpp"
#include "rmtlab/linalg.hpp"
#include "rmtlab/rng.hpp"

namespace rmtlab {

enum class ProfileKind { mean_field, band, mixture, custom };

struct BandSpec {
  int dim = 1;
  Index side = 0;    // torus side length L
  Index width = 0;   // band width W
  std::string shape; // named profile function f
};

struct Geometry {
  ProfileKind kind = ProfileKind::custom;
  std::optional<BandSpec> band;  // set for band and band-based mixtures
  double nu = 0.0;               // mixture weight of the full component
  bool circulant = false;        // s depends only on [i-j]_L
};

inline const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::mean_field: return "mean_field";
    case ProfileKind::band: return "band";
    case ProfileKind::mixture: return "mixture";
    case ProfileKind::custom: return "custom";
  }
  return "custom";
}

// Symmetric doubly stochastic variance matrix S with M = 1/max s_ij.
// Immutable after construction; the eigenvalue cache is thread-safe.
class VarianceProfile {
 public:
  VarianceProfile(Matrix s, Geometry geometry)
      : s_(std::move(s)), geometry_(std::move(geometry)),
        cache_(std::make_shared<Cache>()) {
    validate();
    m_param_ = 1.0 / s_.maxCoeff();
  }

  Index n() const { return s_.rows(); }
  const Matrix& s() const { return s_; }
  double m_param() const { return m_param_; }
  const Geometry& geometry() const { return geometry_; }

  // Eigenvalues of S, ascending; computed once on first use.  Circulant
  // profiles diagonalize in the Fourier basis, so their spectrum is the
  // cosine transform of one row; dense profiles fall back to a symmetric
  // eigensolve.
  const Vector& spectrum() const {
    std::call_once(cache_->once, [this] {
      if (geometry_.circulant) {
        Vector v = fourier_symbol();
        std::sort(v.data(), v.data() + v.size());
        cache_->values = std::move(v);
      } else {
        cache_->values = sym_eig(s_, false).values;
      }
    });
    return cache_->values;
  }

  // Eigenvalue of S attached to Fourier mode t, indexed by the flat torus
  // index of t (unsorted).  Only meaningful for circulant profiles.
  const Vector& fourier_symbol() const {
    require(geometry_.circulant, "fourier_symbol: profile is not circulant");
    std::call_once(cache_->symbol_once, [this] { cache_->symbol = compute_symbol(); });
    return cache_->symbol;
  }

 private:
  struct Cache {
    std::once_flag once;
    Vector values;
    std::once_flag symbol_once;
    Vector symbol;
  };

  void validate() const {
    const Index n = s_.rows();
    require(n >= 1 && s_.cols() == n, "profile: square matrix required");
    double max_asym = 0, min_entry = 0, max_row_dev = 0;
    for (Index j = 0; j < n; ++j) {
      double row = 0;
      for (Index i = 0; i < n; ++i) {
        max_asym = std::max(max_asym, std::abs(s_(i, j) - s_(j, i)));
        min_entry = std::min(min_entry, s_(i, j));
        row += s_(i, j);
      }
      max_row_dev = std::max(max_row_dev, std::abs(row - 1.0));
    }
    if (max_asym > 1e-12) throw Error("profile: matrix not symmetric");
    if (min_entry < 0) throw Error("profile: negative variance entry");
    if (max_row_dev > 1e-12) throw Error("profile: row sums deviate from 1");
  }

  Vector compute_symbol() const;

  Matrix s_;
  double m_param_ = 1.0;
  Geometry geometry_;
  std::shared_ptr<Cache> cache_;
};

namespace detail {

// Canonical torus representative of r in [-L/2, L/2) (integer lattice).
inline Index torus_rep(Index r, Index l) {
  Index rr = ((r % l) + l) % l;
  if (rr >= (l + 1) / 2) rr -= l;
  return rr;
}

// Decodes a flat index into d torus coordinates in {0, ..., l-1}.
inline void decode(Index flat, int d, Index l, Index* coords) {
  for (int k = 0; k < d; ++k) {
    coords[k] = flat % l;
    flat /= l;
  }
}

}  // namespace detail

inline Vector VarianceProfile::compute_symbol() const {
  const Index n = s_.rows();
  const auto& band = geometry_.band;
  const int d = band ? band->dim : 1;
  const Index l = band ? band->side : n;
  // lambda_t = sum_r s_0r cos(2 pi t.r / L); the row is symmetric so the
  // sine parts cancel and all eigenvalues are real.
  std::vector<double> cos_table(static_cast<std::size_t>(l));
  for (Index k = 0; k < l; ++k)
    cos_table[static_cast<std::size_t>(k)] =
        std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(l));
  Vector values(n);
  std::vector<Index> t(static_cast<std::size_t>(d)), r(static_cast<std::size_t>(d));
  for (Index ti = 0; ti < n; ++ti) {
    detail::decode(ti, d, l, t.data());
    double acc = 0;
    for (Index rj = 0; rj < n; ++rj) {
      detail::decode(rj, d, l, r.data());
      Index phase = 0;
      for (int k = 0; k < d; ++k) phase = (phase + t[static_cast<std::size_t>(k)] * r[static_cast<std::size_t>(k)]) % l;
      acc += s_(0, rj) * cos_table[static_cast<std::size_t>(phase)];
    }
    values(ti) = acc;
  }
  return values;
}

inline VarianceProfile mean_field_profile(Index n) {
  require(n >= 1, "mean_field_profile: invalid dimension");
  Geometry g;
  g.kind = ProfileKind::mean_field;
  g.circulant = true;
  return {Matrix::Constant(n, n, 1.0 / static_cast<double>(n)), std::move(g)};
}

using BandShape = std::function<double(const Vector&)>;

// Named band shape functions f: R^d -> [0, inf), symmetric and bounded.
inline BandShape band_shape(const std::string& name) {
  if (name == "box")
    return [](const Vector& x) { return x.cwiseAbs().maxCoeff() <= 1.0 ? 1.0 : 0.0; };
  if (name == "gaussian")
    return [](const Vector& x) { return std::exp(-0.5 * x.squaredNorm()); };
  if (name == "triangle")
    return [](const Vector& x) {
      double v = 1.0;
      for (Index k = 0; k < x.size(); ++k) v *= std::max(1.0 - std::abs(x(k)), 0.0);
      return v;
    };
  throw std::invalid_argument("band_shape: unknown shape '" + name + "'");
}

inline VarianceProfile band_profile(int d, Index l, Index w, const BandShape& f,
                                    std::string shape_name = "custom") {
  require(d >= 1 && d <= 3, "band_profile: dimension d must be in {1,2,3}");
  require(l >= 1, "band_profile: side length must be positive");
  if (w < 1 || w > l) throw std::invalid_argument("band_profile: invalid band width (need 1 <= w <= l)");
  Index n = 1;
  for (int k = 0; k < d; ++k) n *= l;
  require(n <= (Index{1} << 24), "band_profile: lattice too large");

  // One row of f([r]_L / w) over the torus determines the whole matrix.
  std::vector<double> row(static_cast<std::size_t>(n));
  std::vector<Index> coords(static_cast<std::size_t>(d));
  Vector x(d);
  double z = 0;
  for (Index j = 0; j < n; ++j) {
    detail::decode(j, d, l, coords.data());
    for (int k = 0; k < d; ++k)
      x(k) = static_cast<double>(detail::torus_rep(coords[static_cast<std::size_t>(k)], l)) /
             static_cast<double>(w);
    const double v = f(x);
    if (v < 0) throw Error("band_profile: shape function must be nonnegative");
    row[static_cast<std::size_t>(j)] = v;
    z += v;
  }
  if (z <= 0) throw Error("band_profile: degenerate profile (f vanishes on the lattice)");

  Matrix s(n, n);
  std::vector<Index> ci(static_cast<std::size_t>(d)), cj(static_cast<std::size_t>(d));
  for (Index i = 0; i < n; ++i) {
    detail::decode(i, d, l, ci.data());
    for (Index j = 0; j < n; ++j) {
      detail::decode(j, d, l, cj.data());
      Index flat = 0, mult = 1;
      for (int k = 0; k < d; ++k) {
        const Index diff = ((cj[static_cast<std::size_t>(k)] - ci[static_cast<std::size_t>(k)]) % l + l) % l;
        flat += diff * mult;
        mult *= l;
      }
      s(i, j) = row[static_cast<std::size_t>(flat)] / z;
    }
  }
  Geometry g;
  g.kind = ProfileKind::band;
  g.band = BandSpec{d, l, w, std::move(shape_name)};
  g.circulant = true;
  return {std::move(s), std::move(g)};
}

inline VarianceProfile mixture_profile(const VarianceProfile& band,
                                       const VarianceProfile& full, double nu) {
  require(band.n() == full.n(), "mixture_profile: dimension mismatch");
  require(nu >= 0.0 && nu <= 1.0, "mixture_profile: nu outside [0,1]");
  Geometry g;
  g.kind = ProfileKind::mixture;
  g.nu = nu;
  g.band = band.geometry().band;
  g.circulant = band.geometry().circulant && full.geometry().circulant;
  return {(1.0 - nu) * band.s() + nu * full.s(), std::move(g)};
}

// Symmetric Sinkhorn normalization s = D * raw * D of a nonnegative symmetric
// matrix with connected support.
inline VarianceProfile custom_profile(const Matrix& raw, double tol = 1e-12,
                                      int max_iter = 100000) {
  const Index n = raw.rows();
  require(n >= 1 && raw.cols() == n, "custom_profile: square matrix required");
  if (((raw - raw.transpose()).cwiseAbs().maxCoeff()) > 1e-12)
    throw Error("custom_profile: input not symmetric");
  if (raw.minCoeff() < 0) throw Error("custom_profile: negative entries");

  // Zero rows and disconnected support make the normalization impossible.
  for (Index i = 0; i < n; ++i)
    if (raw.row(i).sum() <= 0) throw Error("custom_profile: zero row, not normalizable");
  {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    Index count = 1;
    while (!stack.empty()) {
      const Index i = stack.back();
      stack.pop_back();
      for (Index j = 0; j < n; ++j)
        if (raw(i, j) > 0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          ++count;
          stack.push_back(j);
        }
    }
    if (count != n) throw Error("custom_profile: reducible support, not normalizable");
  }

  Vector d = Vector::Ones(n);
  Matrix s(n, n);
  for (int iter = 0; iter < max_iter; ++iter) {
    // Elementwise scaling by the outer product d d^T keeps s exactly
    // symmetric in floating point.
    s = raw.cwiseProduct(d * d.transpose());
    const Vector rows = s.rowwise().sum();
    if ((rows.array() - 1.0).abs().maxCoeff() <= tol) {
      Geometry g;
      g.kind = ProfileKind::custom;
      return {std::move(s), std::move(g)};
    }
    d = d.array() / rows.array().sqrt();
  }
  throw Error("custom_profile: Sinkhorn iteration did not converge");
}

enum class EntryLaw { gaussian, rademacher, uniform_pm_sqrt3 };
enum class Symmetry { real_symmetric, complex_hermitian };

inline const char* to_string(EntryLaw law) {
  switch (law) {
    case EntryLaw::gaussian: return "gaussian";
    case EntryLaw::rademacher: return "rademacher";
    case EntryLaw::uniform_pm_sqrt3: return "uniform_pm_sqrt3";
  }
  return "gaussian";
}

inline const char* to_string(Symmetry s) {
  return s == Symmetry::real_symmetric ? "real_symmetric" : "complex_hermitian";
}

struct EnsembleSpec {
  std::shared_ptr<const VarianceProfile> profile;
  EntryLaw entry_law = EntryLaw::gaussian;
  Symmetry symmetry = Symmetry::real_symmetric;
  double complex_second_moment = 0.0;  // |E zeta^2|, ignored for real
  std::uint64_t seed = 0;
};

struct SampleMatrix {
  CMatrix h;
  EnsembleSpec spec;
  std::int64_t sample_index = 0;

  bool is_real() const { return spec.symmetry == Symmetry::real_symmetric; }
};

namespace detail {

// Mean-zero unit-variance real draw.
inline double draw_unit(std::mt19937_64& rng, EntryLaw law) {
  switch (law) {
    case EntryLaw::gaussian: {
      std::normal_distribution<double> nd;
      return nd(rng);
    }
    case EntryLaw::rademacher:
      return (rng() & 1ull) ? 1.0 : -1.0;
    case EntryLaw::uniform_pm_sqrt3: {
      std::uniform_real_distribution<double> ud(-std::sqrt(3.0), std::sqrt(3.0));
      return ud(rng);
    }
  }
  return 0.0;
}

// Unit entry zeta with E zeta = 0, E |zeta|^2 = 1.  Off-diagonal complex
// entries use zeta = (xi1 + i xi2)/sqrt(2) with corr(xi1, xi2) = sigma2,
// which gives |E zeta^2| = sigma2; diagonal entries stay real.
inline Complex draw_zeta(std::mt19937_64& rng, const EnsembleSpec& spec, bool diagonal);

}  // namespace detail

inline Complex detail::draw_zeta(std::mt19937_64& rng, const EnsembleSpec& spec,
                                 bool diagonal) {
  if (spec.symmetry == Symmetry::real_symmetric || diagonal)
    return draw_unit(rng, spec.entry_law);
  const double sigma2 = spec.complex_second_moment;
  const double xi1 = draw_unit(rng, spec.entry_law);
  const double xi2 = sigma2 * xi1 +
                     std::sqrt(std::max(0.0, 1.0 - sigma2 * sigma2)) *
                         draw_unit(rng, spec.entry_law);
  return Complex(xi1, xi2) / std::sqrt(2.0);
}

// Draws H with h_ij = sqrt(s_ij) * zeta_ij on the upper triangle and
// Hermitian mirror below.  (seed, n, sample_index) fully determines the draw,
// so samples can be generated in any order or in parallel.
inline SampleMatrix sample(const EnsembleSpec& spec, std::int64_t sample_index) {
  require(static_cast<bool>(spec.profile), "sample: spec has no profile");
  require(spec.complex_second_moment >= 0.0 && spec.complex_second_moment <= 1.0,
          "sample: complex_second_moment outside [0,1]");
  const auto& profile = *spec.profile;
  const Index n = profile.n();
  const Matrix& s = profile.s();
  auto rng = make_engine(derive_seed(spec.seed, static_cast<std::uint64_t>(n),
                                     static_cast<std::uint64_t>(sample_index)));

  SampleMatrix out;
  out.h = CMatrix::Zero(n, n);
  out.spec = spec;
  out.sample_index = sample_index;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double sij = s(i, j);
      if (sij == 0.0) continue;  // zero-variance entries stay exactly zero
      out.h(i, j) = std::sqrt(sij) * detail::draw_zeta(rng, spec, i == j);
      if (i != j) out.h(j, i) = std::conj(out.h(i, j));
    }
  }
  return out;
}

}  // namespace rmtlab
