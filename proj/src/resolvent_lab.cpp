#include "prodlaw/resolvent_lab.hpp"

#include <algorithm>
#include <cmath>

#include "prodlaw/errors.hpp"

namespace prodlaw::lab {

namespace {

void require_eta(cplx w) {
    if (!(w.imag() >= kEtaFloor))
        throw InvalidConfig("eta = " + std::to_string(w.imag()) + " is below the diagnostic floor 1e-8");
}

void require_vectors(const ens::HermitizedSpectrum& s) {
    if (!s.has_vectors)
        throw MissingVectors("spectrum was computed without singular vectors");
}

Eigen::VectorXcd resolvent_weights(const ens::HermitizedSpectrum& s, cplx w) {
    Eigen::VectorXcd d(static_cast<Eigen::Index>(s.eigenvalues.size()));
    for (Eigen::Index k = 0; k < d.size(); ++k)
        d(k) = 1.0 / (s.eigenvalues[k] - w);
    return d;
}

cplx diag_entry(const ens::HermitizedSpectrum& s, cplx w, Eigen::Index i) {
    cplx acc{};
    for (Eigen::Index k = 0; k < s.V.cols(); ++k)
        acc += std::norm(s.V(i, k)) / (s.eigenvalues[k] - w);
    return acc;
}

Eigen::Index probe_index(std::uint64_t seed, int p, Eigen::Index dim) {
    return static_cast<Eigen::Index>(ens::key(seed, 0, static_cast<std::uint64_t>(p), 0, 7) %
                                     static_cast<std::uint64_t>(dim));
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

CMatrix drop_col(const CMatrix& Y, int k) {
    CMatrix out(Y.rows(), Y.cols() - 1);
    out << Y.leftCols(k), Y.rightCols(Y.cols() - k - 1);
    return out;
}

CMatrix drop_row(const CMatrix& Y, int k) {
    CMatrix out(Y.rows() - 1, Y.cols());
    out << Y.topRows(k), Y.bottomRows(Y.rows() - k - 1);
    return out;
}

CMatrix pad(const CMatrix& small, int k) {
    const Eigen::Index n = small.rows() + 1;
    CMatrix out = CMatrix::Zero(n, n);
    for (Eigen::Index i = 0, si = 0; i < n; ++i) {
        if (i == k)
            continue;
        for (Eigen::Index j = 0, sj = 0; j < n; ++j) {
            if (j == k)
                continue;
            out(i, j) = small(si, sj);
            ++sj;
        }
        ++si;
    }
    return out;
}

CMatrix resolvent(const CMatrix& H, cplx w) {
    CMatrix A = H;
    A.diagonal().array() -= w;
    return A.partialPivLu().inverse();
}

} // namespace

cplx empirical_stieltjes(const std::vector<double>& ev, cplx w) {
    cplx acc{};
    for (double l : ev)
        acc += 1.0 / (l - w);
    return acc / static_cast<double>(ev.size());
}

cplx empirical_stieltjes(const ens::HermitizedSpectrum& spec, cplx w) { return empirical_stieltjes(spec.eigenvalues, w); }

void sce_residuals(double s, cplx w, const std::vector<cplx>& mG, const std::vector<cplx>& mGc,
                   std::vector<cplx>& rG, std::vector<cplx>& rGc) {
    const int n = static_cast<int>(mG.size());
    rG.assign(n, {});
    rGc.assign(n, {});
    for (int a = 0; a < n; ++a) {
        const int prev = (a + n - 1) % n, next = (a + 1) % n;
        rG[a] = 1.0 / (w * mG[a]) + (1.0 + mGc[prev]) - s / (w * (1.0 + mG[next]));
        rGc[a] = 1.0 / (w * mGc[a]) + (1.0 + mG[next]) - s / (w * (1.0 + mGc[prev]));
    }
}

double ResolventDiagnostics::max_residual() const {
    double m = 0.0;
    for (const auto& r : residuals_G)
        m = std::max(m, std::abs(r));
    for (const auto& r : residuals_Gc)
        m = std::max(m, std::abs(r));
    return m;
}

ResolventDiagnostics partial_traces(const ens::HermitizedSpectrum& spec, cplx w) {
    require_vectors(spec);
    require_eta(w);
    const Eigen::VectorXcd d = resolvent_weights(spec, w);
    const Eigen::VectorXcd g = spec.V.cwiseAbs2().cast<cplx>() * d;
    const Eigen::VectorXcd gc = spec.U.cwiseAbs2().cast<cplx>() * d;
    const int n = spec.n;
    const auto N = static_cast<Eigen::Index>(spec.block);

    ResolventDiagnostics r;
    r.z = spec.z;
    r.w = w;
    r.m_emp = empirical_stieltjes(spec, w);
    r.m_c = mc::solve_mc(spec.z, w).value;
    r.mG.resize(n);
    r.mGc.resize(n);
    for (int a = 0; a < n; ++a) {
        r.mG[a] = g.segment(a * N, N).mean();
        r.mGc[a] = gc.segment(a * N, N).mean();
        r.Lambda = std::max({r.Lambda, std::abs(r.mG[a] - r.m_c), std::abs(r.mGc[a] - r.m_c)});
    }
    const double Neta = static_cast<double>(N) * w.imag();
    r.Psi = std::sqrt((r.m_c.imag() + r.Lambda) / Neta) + 1.0 / Neta;
    sce_residuals(std::norm(spec.z), w, r.mG, r.mGc, r.residuals_G, r.residuals_Gc);
    return r;
}

double ward_identity_check(const ens::HermitizedSpectrum& spec, cplx w, int probe_count, std::uint64_t seed) {
    require_vectors(spec);
    require_eta(w);
    const Eigen::VectorXcd d = resolvent_weights(spec, w);
    const auto dim = spec.V.rows();
    double worst = 0.0;
    for (int p = 0; p < probe_count; ++p) {
        const Eigen::Index i = probe_index(seed, p, dim);
        const Eigen::VectorXcd col = spec.V * (d.array() * spec.V.row(i).transpose().conjugate().array()).matrix();
        const double lhs = col.squaredNorm();
        const double rhs = col(i).imag() / w.imag();
        worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
    }
    return worst;
}

double derivative_probe(const ens::HermitizedSpectrum& spec, cplx w, int probe_count, std::uint64_t seed) {
    require_vectors(spec);
    require_eta(w);
    const double eta = w.imag(), h = 1e-4 * eta;
    double worst = 0.0;
    for (int p = 0; p < probe_count; ++p) {
        const Eigen::Index i = probe_index(seed, p, spec.V.rows());
        const cplx dE = (diag_entry(spec, w + h, i) - diag_entry(spec, w - h, i)) / (2.0 * h);
        const cplx dEta = (diag_entry(spec, w + cplx(0, h), i) - diag_entry(spec, w - cplx(0, h), i)) / (2.0 * h);
        worst = std::max(worst, (std::abs(dE) + std::abs(dEta)) * eta * eta);
    }
    return worst;
}

CMatrix column_minor_resolvent(const CMatrix& Y, cplx w, int k) {
    const CMatrix Yk = drop_col(Y, k);
    return pad(resolvent(Yk.adjoint() * Yk, w), k);
}

double MinorCheck::worst() const { return std::max({difference, schur, row_difference, row_schur}); }

MinorCheck minor_identity_check(const CMatrix& Y, cplx w, int k) {
    const auto dim = Y.rows();
    if (dim > 64 || Y.cols() != dim)
        throw InvalidConfig("minor oracles need a square Y with nN <= 64");
    if (k < 0 || k >= dim)
        throw InvalidConfig("minor index out of range");
    require_eta(w);
    MinorCheck c;
    const CMatrix G = resolvent(Y.adjoint() * Y, w);
    const CMatrix Gc = resolvent(Y * Y.adjoint(), w);

    // Column k removed.
    const CMatrix Yk = drop_col(Y, k);
    const CMatrix Gk = pad(resolvent(Yk.adjoint() * Yk, w), k);
    const CMatrix Gc_k = resolvent(Yk * Yk.adjoint(), w);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j)
            if (i != k && j != k)
                c.difference = std::max(c.difference, rel(G(i, j) - Gk(i, j), G(i, k) * G(k, j) / G(k, k)));
    const Eigen::VectorXcd yk = Y.col(k);
    c.schur = rel(1.0 / G(k, k), -w * (1.0 + (yk.adjoint() * Gc_k * yk)(0, 0)));
    c.padding_ok = Gk.row(k).isZero(0.0) && Gk.col(k).isZero(0.0);

    cplx acc{};
    for (Eigen::Index j = 0; j < dim; ++j)
        acc += Gk(j, j) - G(j, j);
    c.interlace_sum = std::abs(acc);
    c.interlace_bound = 4.0 / w.imag();

    // Row k removed.
    const CMatrix Yr = drop_row(Y, k);
    const CMatrix Gc_r = pad(resolvent(Yr * Yr.adjoint(), w), k);
    const CMatrix G_r = resolvent(Yr.adjoint() * Yr, w);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j)
            if (i != k && j != k)
                c.row_difference =
                    std::max(c.row_difference, rel(Gc(i, j) - Gc_r(i, j), Gc(i, k) * Gc(k, j) / Gc(k, k)));
    const Eigen::RowVectorXcd yr = Y.row(k);
    c.row_schur = rel(1.0 / Gc(k, k), -w * (1.0 + (yr * G_r * yr.adjoint())(0, 0)));
    return c;
}

double phi(double N) {
    const double l = std::log(N);
    return std::pow(l, std::log(l));
}

double ScanDomain::E_lo() const { return mc::edge_points(z).effective_lower / (1.0 + delta); }
double ScanDomain::E_hi() const { return (1.0 + delta) * mc::edge_points(z).lambda_plus; }

double ScanDomain::eta_floor(cplx w) const {
    return std::pow(phi(N), Q) / (N * std::abs(mc::solve_mc(z, w).value));
}

bool ScanDomain::contains(cplx w) const {
    if (w.real() < E_lo() || w.real() > E_hi() || w.imag() > 1.0 || w.imag() < kEtaFloor)
        return false;
    return w.imag() >= eta_floor(w);
}

} // namespace prodlaw::lab
