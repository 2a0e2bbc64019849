#pragma once

// Deterministic limit theory for the squared singular values of X - z, where
// X is the block-cyclic linearization of a product of n independent matrices.
//
// m_c(z, w) is the Herglotz root of
//     w m^3 + 2 w m^2 + (w + 1 - |z|^2) m + 1 = 0,
// rho_z(x) = Im m_c(z, x + i0) / pi is its density, and the support is
// (max{0, lambda_-}, lambda_+) with lambda_+- = (a +- 3)^3 / (8 (a +- 1)),
// a = sqrt(1 + 8 |z|^2).

#include <array>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace prodlaw {

using cplx = std::complex<double>;

namespace mc {

struct SpectralPoint {
    cplx z;
    cplx w;

    static SpectralPoint at(cplx z, double E, double eta) { return {z, cplx(E, eta)}; }
    double E() const { return w.real(); }
    double eta() const { return w.imag(); }
};

struct McSolution {
    cplx value;
    double residual = 0.0;  // |cubic(value)|
    bool branch_ok = false; // Im value > 0 whenever Im w > 0
};

struct EdgeData {
    double a_frak = 1.0;
    double lambda_minus = 0.0;
    double lambda_plus = 4.0;
    double effective_lower = 0.0;
    bool lambda_minus_degenerate = false; // z == 0, lambda_- reported as -inf
};

struct SpectralCurve {
    cplx z;
    std::vector<double> grid;
    std::vector<double> density;
    std::vector<double> gammas;
    double total_mass = 0.0;
};

EdgeData edge_points(cplx z);

/// Value of the cubic at m; zero exactly at the roots.
cplx cubic_value(double abs_z2, cplx w, cplx m);

/// All three roots, Cardano followed by one Newton step each.
std::array<cplx, 3> cubic_roots(double abs_z2, cplx w);

/// Herglotz root. For Im w < 0 the conjugate of the Im w > 0 branch is
/// returned; for real w the boundary value from above is returned.
McSolution solve_mc(const SpectralPoint& p);
inline McSolution solve_mc(cplx z, cplx w) { return solve_mc(SpectralPoint{z, w}); }

/// Boundary value m_c(z, E + i0) from eta in {1e-4, 5e-5, 2.5e-5} and
/// two-level Richardson extrapolation. Kept as a cross-check of the direct
/// boundary root.
cplx boundary_richardson(cplx z, double E);

double density(cplx z, double x);
double marchenko_pastur_density(double x);

double total_mass(cplx z);
/// Integral of rho_z over [0, x].
double cumulative(cplx z, double x);
/// Integral of log(x) rho_z(x) over the support.
double log_moment(cplx z);

/// gamma_j, j = 1..count, defined by the cumulative reaching j / count.
std::vector<double> classical_locations(cplx z, std::size_t count);

SpectralCurve spectral_curve(cplx z, const std::vector<double>& grid, std::size_t count);

/// Five-point finite-difference Laplacian in z of log_moment.
double log_density_laplacian(cplx z, double h = 1e-3);

// ---------------------------------------------------------------------------
// Asymptotic expansions of m_c near the edges, near w = 0 and in the bulk.

enum class Regime { edge_plus, edge_minus, small_w, bulk_equiv };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

/// Square-root coefficient beta_+- of m_c(w) - m_c(lambda_+-) near lambda_+-
/// (principal branch; purely imaginary for the lower edge).
cplx edge_beta(double a_frak, int sign);
/// -2 / (3 +- a).
double edge_value(double a_frak, int sign);

struct AsymptoticsOptions {
    double tau = 0.05;
    double beta_rel_tol = 0.02;
    double small_w_min_exponent = 0.45;
    double bulk_equiv_c = 10.0;
};

struct AsymptoticsReport {
    Regime regime = Regime::edge_plus;
    std::vector<double> offsets;   // |w - w_0| sequence
    std::vector<cplx> values;      // m_c along the sequence
    cplx fitted{};                 // edge: fitted beta; small_w: fitted constant
    cplx expected{};               // edge: closed-form beta
    double relative_error = 0.0;   // edge regimes
    double exponent = 0.0;         // small_w: log-log slope of the remainder
    double ratio_min = 0.0;        // bulk_equiv: min of |m| sqrt|w|, |1+m| sqrt|w|
    double ratio_max = 0.0;
    bool pass = false;
};

AsymptoticsReport mc_asymptotics_check(cplx z, Regime regime, const AsymptoticsOptions& opt = {});

} // namespace mc
} // namespace prodlaw
