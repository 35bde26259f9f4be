#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <filesystem>
#include <random>

#include "rmtlab/linalg.hpp"
#include "rmtlab/profile.hpp"
#include "rmtlab/profile_io.hpp"

using namespace rmtlab;

namespace {

// Independent oracle: alternating row/column normalization.  For symmetric
// irreducible input this converges to the same doubly stochastic matrix as
// the symmetric scaling s = D * raw * D.
Matrix sinkhorn_oracle(Matrix a, int iters = 5000) {
  for (int it = 0; it < iters; ++it) {
    for (Index i = 0; i < a.rows(); ++i) a.row(i) /= a.row(i).sum();
    for (Index j = 0; j < a.cols(); ++j) a.col(j) /= a.col(j).sum();
  }
  return a;
}

void check_profile_invariants(const VarianceProfile& p) {
  const Matrix& s = p.s();
  const Index n = p.n();
  CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.minCoeff() >= 0.0);
  CHECK((s.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(std::abs(p.m_param() * s.maxCoeff() - 1.0) <= 1e-15);
  CHECK(p.m_param() >= 1.0);
  CHECK(p.m_param() <= static_cast<double>(n) * (1.0 + 1e-12));
}

}  // namespace

TEST_CASE("mean-field profile") {
  const auto p = mean_field_profile(4);
  check_profile_invariants(p);
  CHECK(p.n() == 4);
  CHECK(p.s().minCoeff() == 0.25);
  CHECK(p.s().maxCoeff() == 0.25);
  CHECK(p.m_param() == 4.0);
  CHECK(p.geometry().kind == ProfileKind::mean_field);
  CHECK(p.geometry().circulant);

  // Spectrum of ones/n is {1} once and {0} with multiplicity n-1.
  const Vector& spec = p.spectrum();
  CHECK(spec.size() == 4);
  CHECK(std::abs(spec(3) - 1.0) <= 1e-12);
  CHECK(spec.head(3).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(mean_field_profile(0), std::invalid_argument);
}

TEST_CASE("band profile values") {
  SECTION("1d box, L=8, W=2: five lattice points inside the band") {
    const auto p = band_profile(1, 8, 2, band_shape("box"), "box");
    check_profile_invariants(p);
    CHECK(p.n() == 8);
    CHECK(p.m_param() == Catch::Approx(5.0).epsilon(1e-13));
    for (Index i = 0; i < 8; ++i)
      for (Index j = 0; j < 8; ++j) {
        Index r = std::abs(i - j);
        r = std::min(r, 8 - r);
        CHECK(p.s()(i, j) == Catch::Approx(r <= 2 ? 0.2 : 0.0).margin(1e-14));
      }
    CHECK(p.geometry().band->side == 8);
    CHECK(p.geometry().band->width == 2);
    CHECK(p.geometry().circulant);
  }

  SECTION("2d box, L=4, W=1: nine neighbors at 1/9 each") {
    const auto p = band_profile(2, 4, 1, band_shape("box"), "box");
    check_profile_invariants(p);
    CHECK(p.n() == 16);
    CHECK(p.m_param() == Catch::Approx(9.0).epsilon(1e-13));
    // Distance on the torus (Z/4)^2 between flat indices i and j.
    auto torus_dist = [](Index a, Index b) {
      Index dmax = 0;
      for (int k = 0; k < 2; ++k) {
        Index r = std::abs(a % 4 - b % 4);
        r = std::min(r, 4 - r);
        dmax = std::max(dmax, r);
        a /= 4;
        b /= 4;
      }
      return dmax;
    };
    for (Index i = 0; i < 16; ++i)
      for (Index j = 0; j < 16; ++j)
        CHECK(p.s()(i, j) == Catch::Approx(torus_dist(i, j) <= 1 ? 1.0 / 9 : 0.0).margin(1e-14));
  }

  SECTION("translation invariance on the torus") {
    const auto p = band_profile(1, 32, 5, band_shape("gaussian"), "gaussian");
    check_profile_invariants(p);
    for (Index i = 0; i < 32; ++i)
      for (Index j = 0; j < 32; ++j)
        CHECK(p.s()(i, j) == Catch::Approx(p.s()((i + 7) % 32, (j + 7) % 32)).margin(1e-15));
  }

  SECTION("W = L gives a fully supported circulant") {
    const auto p = band_profile(1, 6, 6, band_shape("box"), "box");
    check_profile_invariants(p);
    CHECK(p.s().minCoeff() > 0.0);
  }

  SECTION("error paths") {
    CHECK_THROWS_AS(band_profile(1, 8, 9, band_shape("box")), std::invalid_argument);
    CHECK_THROWS_AS(band_profile(1, 8, 0, band_shape("box")), std::invalid_argument);
    CHECK_THROWS_AS(band_profile(0, 8, 2, band_shape("box")), std::invalid_argument);
    CHECK_THROWS_AS(band_profile(1, 8, 2, [](const Vector&) { return 0.0; }), Error);
    CHECK_THROWS_AS(band_profile(1, 8, 2, [](const Vector&) { return -1.0; }), Error);
    CHECK_THROWS_AS(band_shape("no-such-shape"), std::invalid_argument);
  }
}

TEST_CASE("circulant spectrum matches dense eigensolve") {
  SECTION("1d gaussian band") {
    const auto p = band_profile(1, 32, 4, band_shape("gaussian"), "gaussian");
    const Vector dense = sym_eig(p.s(), false).values;
    CHECK((p.spectrum() - dense).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SECTION("2d box band") {
    const auto p = band_profile(2, 5, 2, band_shape("box"), "box");
    const Vector dense = sym_eig(p.s(), false).values;
    CHECK((p.spectrum() - dense).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SECTION("top eigenvalue is the row sum") {
    const auto p = band_profile(1, 64, 8, band_shape("triangle"), "triangle");
    CHECK(std::abs(p.spectrum()(p.n() - 1) - 1.0) <= 1e-10);
  }
}

TEST_CASE("mixture profile") {
  const auto band = band_profile(1, 16, 3, band_shape("box"), "box");
  const auto full = mean_field_profile(16);

  SECTION("endpoints reproduce the components") {
    CHECK((mixture_profile(band, full, 0.0).s() - band.s()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mixture_profile(band, full, 1.0).s() - full.s()).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("interior weight") {
    const auto p = mixture_profile(band, full, 0.3);
    check_profile_invariants(p);
    CHECK(p.geometry().kind == ProfileKind::mixture);
    CHECK(p.geometry().nu == 0.3);
    CHECK(p.geometry().circulant);
    REQUIRE(p.geometry().band.has_value());
    CHECK(p.geometry().band->width == 3);
    CHECK((p.s() - (0.7 * band.s() + 0.3 * full.s())).cwiseAbs().maxCoeff() <= 1e-15);
    const Vector dense = sym_eig(p.s(), false).values;
    CHECK((p.spectrum() - dense).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SECTION("mixture with a non-circulant component is not circulant") {
    std::mt19937_64 rng(11);
    Matrix raw(16, 16);
    std::uniform_real_distribution<double> ud(0.1, 1.1);
    for (Index i = 0; i < 16; ++i)
      for (Index j = 0; j <= i; ++j) raw(i, j) = raw(j, i) = ud(rng);
    const auto custom = custom_profile(raw);
    CHECK_FALSE(mixture_profile(band, custom, 0.5).geometry().circulant);
  }

  SECTION("errors") {
    CHECK_THROWS_AS(mixture_profile(band, mean_field_profile(8), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(mixture_profile(band, full, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(mixture_profile(band, full, 1.1), std::invalid_argument);
  }
}

TEST_CASE("custom profile normalization") {
  SECTION("rank-one input has the mean-field profile as its closed form") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ud(0.2, 3.0);
    Vector u(24);
    for (Index i = 0; i < 24; ++i) u(i) = ud(rng);
    const auto p = custom_profile(u * u.transpose());
    check_profile_invariants(p);
    CHECK((p.s().array() - 1.0 / 24).abs().maxCoeff() <= 1e-12);
  }

  SECTION("agrees with an alternating-normalization oracle") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ud(0.1, 1.1);
    Matrix raw(40, 40);
    for (Index i = 0; i < 40; ++i)
      for (Index j = 0; j <= i; ++j) raw(i, j) = raw(j, i) = ud(rng);
    const auto p = custom_profile(raw);
    check_profile_invariants(p);
    CHECK((p.s() - sinkhorn_oracle(raw)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(p.geometry().kind == ProfileKind::custom);
    CHECK_FALSE(p.geometry().circulant);
  }

  SECTION("sparse irreducible support") {
    // Cycle plus diagonal: connected, with many exact zeros.
    const Index n = 12;
    Matrix raw = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      raw(i, i) = 0.5 + 0.1 * static_cast<double>(i);
      raw(i, (i + 1) % n) = raw((i + 1) % n, i) = 1.0 + 0.05 * static_cast<double>(i);
    }
    const auto p = custom_profile(raw);
    check_profile_invariants(p);
    CHECK((p.s() - sinkhorn_oracle(raw)).cwiseAbs().maxCoeff() <= 1e-10);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (raw(i, j) == 0.0) CHECK(p.s()(i, j) == 0.0);
  }

  SECTION("scaling invariance") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ud(0.1, 1.1);
    Matrix raw(10, 10);
    for (Index i = 0; i < 10; ++i)
      for (Index j = 0; j <= i; ++j) raw(i, j) = raw(j, i) = ud(rng);
    CHECK((custom_profile(raw).s() - custom_profile(17.0 * raw).s()).cwiseAbs().maxCoeff() <= 1e-11);
  }

  SECTION("one-dimensional input") {
    Matrix raw(1, 1);
    raw(0, 0) = 2.5;
    CHECK(custom_profile(raw).s()(0, 0) == Catch::Approx(1.0).margin(1e-13));
  }

  SECTION("rejects non-normalizable input") {
    Matrix zero_row = Matrix::Ones(4, 4);
    zero_row.row(2).setZero();
    zero_row.col(2).setZero();
    CHECK_THROWS_AS(custom_profile(zero_row), Error);

    Matrix reducible = Matrix::Zero(4, 4);
    reducible.topLeftCorner(2, 2).setOnes();
    reducible.bottomRightCorner(2, 2).setOnes();
    CHECK_THROWS_AS(custom_profile(reducible), Error);

    Matrix negative = Matrix::Ones(3, 3);
    negative(0, 1) = negative(1, 0) = -0.2;
    CHECK_THROWS_AS(custom_profile(negative), Error);

    Matrix asym = Matrix::Ones(3, 3);
    asym(0, 1) = 2.0;
    CHECK_THROWS_AS(custom_profile(asym), Error);
  }
}

TEST_CASE("sampling determinism and structure") {
  EnsembleSpec spec;
  spec.profile = std::make_shared<VarianceProfile>(band_profile(1, 32, 4, band_shape("box"), "box"));
  spec.entry_law = EntryLaw::gaussian;
  spec.symmetry = Symmetry::real_symmetric;
  spec.seed = 2026;

  SECTION("same index is bitwise reproducible, different indices differ") {
    const auto a = sample(spec, 3);
    const auto b = sample(spec, 3);
    const auto c = sample(spec, 4);
    CHECK((a.h - b.h).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.h - c.h).cwiseAbs().maxCoeff() > 0.0);
    CHECK(a.sample_index == 3);

    EnsembleSpec other = spec;
    other.seed = 2027;
    CHECK((sample(other, 3).h - a.h).cwiseAbs().maxCoeff() > 0.0);
  }

  SECTION("real symmetric samples are real and symmetric") {
    const auto m = sample(spec, 0);
    CHECK(m.is_real());
    CHECK(m.h.imag().cwiseAbs().maxCoeff() == 0.0);
    CHECK((m.h - m.h.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("zero-variance entries are exactly zero") {
    const auto m = sample(spec, 1);
    const Matrix& s = spec.profile->s();
    Index zeros = 0;
    for (Index i = 0; i < s.rows(); ++i)
      for (Index j = 0; j < s.cols(); ++j)
        if (s(i, j) == 0.0) {
          CHECK(m.h(i, j) == Complex(0.0, 0.0));
          ++zeros;
        }
    CHECK(zeros > 0);
  }

  SECTION("hermitian complex samples with real diagonal") {
    EnsembleSpec cspec = spec;
    cspec.symmetry = Symmetry::complex_hermitian;
    const auto m = sample(cspec, 0);
    CHECK_FALSE(m.is_real());
    CHECK((m.h - m.h.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.h.diagonal().imag().cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.h.imag().cwiseAbs().maxCoeff() > 0.0);
  }

  SECTION("bounded laws respect their envelopes") {
    EnsembleSpec rspec = spec;
    rspec.entry_law = EntryLaw::rademacher;
    const auto r = sample(rspec, 0);
    const Matrix& s = spec.profile->s();
    for (Index i = 0; i < s.rows(); ++i)
      for (Index j = 0; j < s.cols(); ++j)
        if (s(i, j) > 0.0)
          CHECK(std::abs(std::abs(r.h(i, j).real()) - std::sqrt(s(i, j))) <= 1e-15);

    EnsembleSpec uspec = spec;
    uspec.entry_law = EntryLaw::uniform_pm_sqrt3;
    const auto u = sample(uspec, 0);
    CHECK(u.h.cwiseAbs().maxCoeff() <= std::sqrt(3.0 * s.maxCoeff()) + 1e-15);
  }

  SECTION("spec validation") {
    EnsembleSpec empty;
    CHECK_THROWS_AS(sample(empty, 0), std::invalid_argument);
    EnsembleSpec bad = spec;
    bad.complex_second_moment = 1.5;
    CHECK_THROWS_AS(sample(bad, 0), std::invalid_argument);
  }
}

TEST_CASE("sampled entries have the prescribed moments") {
  SECTION("repeated draws of one entry, small dimension") {
    EnsembleSpec spec;
    spec.profile = std::make_shared<VarianceProfile>(mean_field_profile(64));
    spec.entry_law = EntryLaw::gaussian;
    spec.seed = 99;
    const double s12 = spec.profile->s()(0, 1);
    const int samples = 10000;
    double sum = 0, sumsq = 0;
    for (int k = 0; k < samples; ++k) {
      const double v = sample(spec, k).h(0, 1).real();
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / samples;
    const double var = sumsq / samples - mean * mean;
    CHECK(std::abs(mean) <= 4.0 * std::sqrt(s12 / samples));
    CHECK(std::abs(var - s12) <= 0.1 * s12);
  }

  SECTION("pooled entry moments at n = 512") {
    EnsembleSpec spec;
    spec.profile = std::make_shared<VarianceProfile>(mean_field_profile(512));
    spec.entry_law = EntryLaw::uniform_pm_sqrt3;
    spec.seed = 7;
    double sum = 0, sumsq = 0;
    std::int64_t count = 0;
    for (int k = 0; k < 10; ++k) {
      const auto m = sample(spec, k);
      for (Index i = 0; i < 512; ++i)
        for (Index j = i + 1; j < 512; ++j) {
          const double v = m.h(i, j).real() * std::sqrt(512.0);
          sum += v;
          sumsq += v * v;
          ++count;
        }
    }
    const double mean = sum / static_cast<double>(count);
    const double var = sumsq / static_cast<double>(count) - mean * mean;
    CHECK(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(count)));
    CHECK(std::abs(var - 1.0) <= 0.01);
  }

  SECTION("complex second moment is realized") {
    EnsembleSpec spec;
    spec.profile = std::make_shared<VarianceProfile>(mean_field_profile(256));
    spec.symmetry = Symmetry::complex_hermitian;
    spec.complex_second_moment = 0.6;
    spec.seed = 13;
    Complex second = 0;
    double absq = 0;
    std::int64_t count = 0;
    for (int k = 0; k < 10; ++k) {
      const auto m = sample(spec, k);
      for (Index i = 0; i < 256; ++i)
        for (Index j = i + 1; j < 256; ++j) {
          const Complex zeta = m.h(i, j) * std::sqrt(256.0);
          second += zeta * zeta;
          absq += std::norm(zeta);
          ++count;
        }
    }
    second /= static_cast<double>(count);
    absq /= static_cast<double>(count);
    CHECK(std::abs(absq - 1.0) <= 0.01);
    CHECK(std::abs(std::abs(second) - 0.6) <= 0.02);

    // complex_second_moment = 0 gives uncorrelated parts.
    spec.complex_second_moment = 0.0;
    Complex second0 = 0;
    for (int k = 0; k < 10; ++k) {
      const auto m = sample(spec, k);
      for (Index i = 0; i < 256; ++i)
        for (Index j = i + 1; j < 256; ++j) second0 += m.h(i, j) * m.h(i, j) * 256.0;
    }
    CHECK(std::abs(second0) / static_cast<double>(count) <= 0.02);
  }
}

TEST_CASE("profile io round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "rmtlab_profile_io";
  std::filesystem::create_directories(dir);

  SECTION("binary payload") {
    const auto p = band_profile(1, 16, 3, band_shape("gaussian"), "gaussian");
    save_profile(p, dir / "band.json", "binary");
    const auto q = load_profile(dir / "band.json");
    CHECK((p.s() - q.s()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(q.geometry().kind == ProfileKind::band);
    CHECK(q.geometry().circulant);
    REQUIRE(q.geometry().band.has_value());
    CHECK(q.geometry().band->side == 16);
    CHECK(q.geometry().band->width == 3);
    CHECK(q.geometry().band->shape == "gaussian");
  }

  SECTION("csv payload") {
    const auto band = band_profile(1, 12, 2, band_shape("box"), "box");
    const auto p = mixture_profile(band, mean_field_profile(12), 0.25);
    save_profile(p, dir / "mix.json", "csv");
    const auto q = load_profile(dir / "mix.json");
    CHECK((p.s() - q.s()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(q.geometry().kind == ProfileKind::mixture);
    CHECK(q.geometry().nu == 0.25);
  }

  SECTION("raw csv ingest runs the normalizer") {
    Matrix raw(3, 3);
    raw << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    detail::write_matrix_csv(raw, dir / "raw.csv");
    const auto p = load_profile(dir / "raw.csv");
    check_profile_invariants(p);
    CHECK((p.s() - sinkhorn_oracle(raw)).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SECTION("missing and malformed files") {
    CHECK_THROWS_AS(load_profile(dir / "absent.json"), Error);
    CHECK_THROWS_AS(load_profile(dir / "absent.csv"), Error);
    {
      std::ofstream bad(dir / "bad.json");
      bad << "{ not json";
    }
    CHECK_THROWS_AS(load_profile(dir / "bad.json"), Error);
    {
      std::ofstream bad(dir / "headless.json");
      bad << "{\"s\": [[1.0]]}";
    }
    CHECK_THROWS_AS(load_profile(dir / "headless.json"), Error);
  }
}
