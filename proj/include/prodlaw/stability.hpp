#pragma once

// Stability matrix of the block self-consistent system.
//
//   Gamma = [[I, G1], [G1^T, I]],  G1 circulant with -g1 one step below the
//   diagonal and g2 two steps below (cyclically),
//   g1 = 1 / (w m^2),  g2 = |z|^2 / (w (1 + m)^2).

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "prodlaw/mc_core.hpp"

namespace prodlaw::stab {

using CMatrix = Eigen::MatrixXcd;

struct GammaCoeffs {
    cplx g1{};
    cplx g2{};
    int n = 1;
};

struct GammaMatrix {
    int n = 1;
    CMatrix dense;
    GammaCoeffs coeffs;
};

enum class Case { Edge1, Edge2, SmallW3, Bulk4, Outside };
std::string to_string(Case c);

struct RegionParams {
    double tau = 0.05;
    double tau_tilde = 0.02;
    double eps = 0.05;
};

struct RegionLabel {
    Case label = Case::Outside;
    RegionParams params;
};

GammaCoeffs gamma_coeffs(cplx z, cplx w, int n);
/// From a known m_c (no solve).
GammaCoeffs gamma_coeffs_from(cplx z, cplx w, cplx m, int n);

CMatrix gamma1(const GammaCoeffs& c);
GammaMatrix gamma_matrix(const GammaCoeffs& c);

/// I - G1 G1^T as a dense matrix (oracle side).
CMatrix circulant_dense(const GammaCoeffs& c);

/// l_j = 1 - g1^2 - g2^2 + 2 g1 g2 cos(2 pi j / n), j = 1..n.
std::vector<cplx> circulant_spectrum(const GammaCoeffs& c);

/// {1 - sqrt(1 - l_j), 1 + sqrt(1 - l_j)}, principal root, each pair sorted by modulus.
std::vector<cplx> gamma_eigs(const GammaCoeffs& c);

/// Circulant inverse of I - G1 G1^T from its spectrum.
CMatrix circulant_inverse(const GammaCoeffs& c);
/// Gamma^{-1} assembled blockwise from the circulant inverse.
CMatrix gamma_inverse(const GammaCoeffs& c);

double inf_norm(const CMatrix& a);

/// ||Gamma^{-1}||_inf. Throws SingularGamma when min |l_j| < 1e-12.
double gamma_inverse_norm(const GammaCoeffs& c);
double min_abs_l(const GammaCoeffs& c);

RegionLabel classify_region(cplx z, cplx w, const RegionParams& p = {});

struct EdgeFit {
    int sign = +1;
    std::vector<double> offsets;
    std::vector<double> norms;
    double slope = 0.0;
    double l_n_at_edge = 0.0;  // |l_n| at the exact edge
};

/// Log-log slope of ||Gamma^{-1}||_inf against t, w = lambda_+- + t.
/// Default offsets are {1e-2, 1e-3, 1e-4}, scaled by min(1, lambda_-) at the
/// lower edge.
EdgeFit edge_fit(cplx z, int sign, int n, const std::vector<double>& offsets = {});

struct EdgeKernel {
    double l_n = 0.0;                   // |l_n| at the edge
    double max_gap_error = 0.0;         // max_j ||l_n - l_j| - |2 g1 g2 (1 - cos)||
    double coefficient = 0.0;           // |1/(lambda m^3) - |z|^2/(lambda (1+m)^3)|
    double minor_min_singular = 0.0;    // lower-right (n-1) minor of I - G1 G1^T
    bool minor_invertible = true;
};

EdgeKernel edge_kernel(cplx z, int sign, int n);

struct Case4Report {
    double margin = 0.0;          // min |l| from the d1/d2 reduction
    double direct_margin = 0.0;   // min |l| from the symbol directly
    double max_form_gap = 0.0;    // max | reduced - direct |
    double E_lo = 0.0, E_hi = 0.0;
    double E1 = 0.0, E2 = 0.0;
    bool level_order_ok = false;  // E1 < E2
    std::vector<double> E_grid, f1_plus, f1_minus, f2;
};

/// Minimum over an E x omega grid (eta = 0) of |l| for omega in [-1, 1].
Case4Report case4_margin_scan(cplx z, int E_steps = 200, int omega_steps = 50, const RegionParams& p = {});

} // namespace prodlaw::stab
