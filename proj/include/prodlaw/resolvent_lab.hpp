#pragma once

// Empirical Stieltjes transforms, block partial traces and resolvent
// identity oracles for G = (Y^* Y - w)^{-1}, calG = (Y Y^* - w)^{-1}, Y = X - z.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "prodlaw/ensemble.hpp"
#include "prodlaw/mc_core.hpp"

namespace prodlaw::lab {

using CMatrix = Eigen::MatrixXcd;

inline constexpr double kEtaFloor = 1e-8;

/// (1 / nN) sum_j 1 / (lambda_j - w).
cplx empirical_stieltjes(const ens::HermitizedSpectrum& spec, cplx w);
cplx empirical_stieltjes(const std::vector<double>& eigenvalues, cplx w);

struct ResolventDiagnostics {
    cplx z, w;
    cplx m_emp;
    cplx m_c;
    std::vector<cplx> mG, mGc;
    double Lambda = 0.0;
    double Psi = 0.0;
    std::vector<cplx> residuals_G, residuals_Gc;
    double max_residual() const;
};

/// Throws MissingVectors without eigenvectors, InvalidConfig below the eta floor.
ResolventDiagnostics partial_traces(const ens::HermitizedSpectrum& spec, cplx w);

/// Residuals of the block system for given partial traces (index a modulo n).
void sce_residuals(double abs_z2, cplx w, const std::vector<cplx>& mG, const std::vector<cplx>& mGc,
                   std::vector<cplx>& res_G, std::vector<cplx>& res_Gc);

/// Max relative violation of sum_k |G_ki|^2 = Im G_ii / eta over probe indices.
double ward_identity_check(const ens::HermitizedSpectrum& spec, cplx w, int probe_count, std::uint64_t seed = 1);

struct MinorCheck {
    double difference = 0.0;      // G_ij - G^(k)_ij = G_ik G_kj / G_kk, i, j != k
    double schur = 0.0;           // 1/G_kk = -w (1 + y_k^* calG^(k) y_k)
    double row_difference = 0.0;  // same for calG with row k removed
    double row_schur = 0.0;
    double interlace_sum = 0.0;   // |sum_j (G^(k)_jj - G_jj)|
    double interlace_bound = 0.0; // 4 / eta
    bool padding_ok = false;      // row/column k of the padded minor is zero
    double worst() const;
    double interlace_margin() const { return interlace_bound - interlace_sum; }
};

/// Dense oracles on Y itself (nN <= 64).
MinorCheck minor_identity_check(const CMatrix& Y, cplx w, int k);

/// Resolvent of a Gram matrix with column k of Y deleted, zero-padded to full size.
CMatrix column_minor_resolvent(const CMatrix& Y, cplx w, int k);

/// Max over probes of (|dG_ii/dE| + |dG_ii/deta|) * eta^2, by central differences.
double derivative_probe(const ens::HermitizedSpectrum& spec, cplx w, int probe_count, std::uint64_t seed = 2);

/// phi = (log N)^(log log N).
double phi(double N);

struct ScanDomain {
    cplx z;
    double delta = 0.1;
    double Q = 1.0;
    double N = 64;
    double E_lo() const;
    double E_hi() const;
    double eta_floor(cplx w) const;  // phi^Q / (N |m_c(z, w)|)
    bool contains(cplx w) const;
};

} // namespace prodlaw::lab
