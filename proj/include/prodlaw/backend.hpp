#pragma once

// Dense spectral backend (LAPACK). Every routine throws BackendFailure on a
// nonzero info code.

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace prodlaw::backend {

using CMatrix = Eigen::MatrixXcd;

/// Pins the BLAS to one thread. Called once by the library; idempotent.
void init();

/// Eigenvalues of a general complex matrix (zgeev).
std::vector<std::complex<double>> eigenvalues(const CMatrix& a);

/// Eigenvalues of a Hermitian matrix, ascending (zheevd). Only the lower triangle is read.
std::vector<double> hermitian_eigenvalues(const CMatrix& a);

/// Singular values, descending (zgesdd, no vectors).
std::vector<double> singular_values(const CMatrix& a);

struct Svd {
    CMatrix U;              // left singular vectors (columns)
    std::vector<double> s;  // descending
    CMatrix V;              // right singular vectors (columns), a = U diag(s) V^*
};

Svd svd(const CMatrix& a);

} // namespace prodlaw::backend
