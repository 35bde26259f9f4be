#pragma once

#include <utility>

#include "rmtlab/common.hpp"

#ifdef RMTLAB_USE_LAPACKE
#include <lapacke.h>
#else
#include <Eigen/Eigenvalues>
#endif

namespace rmtlab {

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // empty unless requested
};

struct HermEig {
  Vector values;
  CMatrix vectors;
};

inline SymEig sym_eig(Matrix a, bool with_vectors = true) {
  const Index n = a.rows();
  require(n > 0 && a.cols() == n, "sym_eig: square matrix required");
  SymEig out;
  out.values.resize(n);
#ifdef RMTLAB_USE_LAPACKE
  int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, with_vectors ? 'V' : 'N', 'L',
                            static_cast<lapack_int>(n), a.data(),
                            static_cast<lapack_int>(n), out.values.data());
  if (info != 0) throw Error("sym_eig: dsyevd failed, info=" + std::to_string(info));
  if (with_vectors) out.vectors = std::move(a);
#else
  Eigen::SelfAdjointEigenSolver<Matrix> es(
      a, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("sym_eig: eigensolver failed");
  out.values = es.eigenvalues();
  if (with_vectors) out.vectors = es.eigenvectors();
#endif
  return out;
}

inline HermEig herm_eig(CMatrix a, bool with_vectors = true) {
  const Index n = a.rows();
  require(n > 0 && a.cols() == n, "herm_eig: square matrix required");
  HermEig out;
  out.values.resize(n);
#ifdef RMTLAB_USE_LAPACKE
  int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, with_vectors ? 'V' : 'N', 'L',
                            static_cast<lapack_int>(n),
                            reinterpret_cast<lapack_complex_double*>(a.data()),
                            static_cast<lapack_int>(n), out.values.data());
  if (info != 0) throw Error("herm_eig: zheevd failed, info=" + std::to_string(info));
  if (with_vectors) out.vectors = std::move(a);
#else
  Eigen::SelfAdjointEigenSolver<CMatrix> es(
      a, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("herm_eig: eigensolver failed");
  out.values = es.eigenvalues();
  if (with_vectors) out.vectors = es.eigenvectors();
#endif
  return out;
}

}  // namespace rmtlab
