#include "prodlaw/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "prodlaw/errors.hpp"

namespace prodlaw::stab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSingular = 1e-12;

double cos_j(int j, int n) { return std::cos(2.0 * kPi * j / n); }

bool inner_bulk(double r, const RegionParams& p) { return r >= p.tau_tilde && r <= 1.0 - p.tau; }
bool outer_bulk(double r, const RegionParams& p) { return r >= 1.0 + p.tau && r <= 1.0 / p.tau; }

} // namespace

std::string to_string(Case c) {
    switch (c) {
    case Case::Edge1:
        return "Edge1";
    case Case::Edge2:
        return "Edge2";
    case Case::SmallW3:
        return "SmallW3";
    case Case::Bulk4:
        return "Bulk4";
    case Case::Outside:
        return "Outside";
    }
    return "Outside";
}

GammaCoeffs gamma_coeffs_from(cplx z, cplx w, cplx m, int n) {
    if (n < 1)
        throw InvalidConfig("block count n must be >= 1");
    GammaCoeffs c;
    c.n = n;
    c.g1 = 1.0 / (w * m * m);
    c.g2 = std::norm(z) / (w * (1.0 + m) * (1.0 + m));
    return c;
}

GammaCoeffs gamma_coeffs(cplx z, cplx w, int n) { return gamma_coeffs_from(z, w, mc::solve_mc(z, w).value, n); }

CMatrix gamma1(const GammaCoeffs& c) {
    const int n = c.n;
    CMatrix g = CMatrix::Zero(n, n);
    for (int r = 0; r < n; ++r) {
        g(r, ((r - 1) % n + n) % n) += -c.g1;
        g(r, ((r - 2) % n + n) % n) += c.g2;
    }
    return g;
}

GammaMatrix gamma_matrix(const GammaCoeffs& c) {
    const int n = c.n;
    const CMatrix g = gamma1(c);
    GammaMatrix out;
    out.n = n;
    out.coeffs = c;
    out.dense = CMatrix::Identity(2 * n, 2 * n);
    out.dense.topRightCorner(n, n) = g;
    out.dense.bottomLeftCorner(n, n) = g.transpose();
    return out;
}

CMatrix circulant_dense(const GammaCoeffs& c) {
    const CMatrix g = gamma1(c);
    return CMatrix::Identity(c.n, c.n) - g * g.transpose();
}

std::vector<cplx> circulant_spectrum(const GammaCoeffs& c) {
    std::vector<cplx> l(c.n);
    const cplx base = 1.0 - c.g1 * c.g1 - c.g2 * c.g2;
    for (int j = 1; j <= c.n; ++j)
        l[j - 1] = base + 2.0 * c.g1 * c.g2 * cos_j(j, c.n);
    return l;
}

std::vector<cplx> gamma_eigs(const GammaCoeffs& c) {
    std::vector<cplx> out;
    out.reserve(2 * c.n);
    for (const cplx& l : circulant_spectrum(c)) {
        const cplx r = std::sqrt(1.0 - l);
        cplx a = 1.0 - r, b = 1.0 + r;
        if (std::abs(b) < std::abs(a))
            std::swap(a, b);
        out.push_back(a);
        out.push_back(b);
    }
    return out;
}

double min_abs_l(const GammaCoeffs& c) {
    double m = std::numeric_limits<double>::infinity();
    for (const cplx& l : circulant_spectrum(c))
        m = std::min(m, std::abs(l));
    return m;
}

CMatrix circulant_inverse(const GammaCoeffs& c) {
    const int n = c.n;
    const auto l = circulant_spectrum(c);
    if (min_abs_l(c) < kSingular)
        throw SingularGamma("I - G1 G1^T is singular (min |l_j| = " + std::to_string(min_abs_l(c)) + ")");
    // Row r, column s holds coefficient k = (s - r) mod n.
    std::vector<cplx> coef(n);
    for (int k = 0; k < n; ++k) {
        cplx acc{};
        for (int j = 1; j <= n; ++j)
            acc += std::polar(1.0, -2.0 * kPi * j * k / n) / l[j - 1];
        coef[k] = acc / static_cast<double>(n);
    }
    CMatrix inv(n, n);
    for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s)
            inv(r, s) = coef[((s - r) % n + n) % n];
    return inv;
}

CMatrix gamma_inverse(const GammaCoeffs& c) {
    const int n = c.n;
    const CMatrix ci = circulant_inverse(c);
    const CMatrix g = gamma1(c);
    CMatrix inv(2 * n, 2 * n);
    inv.topLeftCorner(n, n) = ci;
    inv.topRightCorner(n, n) = -g * ci;
    inv.bottomLeftCorner(n, n) = -g.transpose() * ci;
    inv.bottomRightCorner(n, n) = ci;
    return inv;
}

double inf_norm(const CMatrix& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

double gamma_inverse_norm(const GammaCoeffs& c) { return inf_norm(gamma_inverse(c)); }

RegionLabel classify_region(cplx z, cplx w, const RegionParams& p) {
    RegionLabel out;
    out.params = p;
    const double r = std::abs(z);
    const mc::EdgeData e = mc::edge_points(z);
    const cplx lp(e.lambda_plus, 0.0);
    const cplx lm(e.lambda_minus, 0.0);
    const double E = w.real(), eta = w.imag();

    if (r >= 1.0 + p.tau && (std::abs(w - lp) <= p.tau || std::abs(w - lm) <= p.tau))
        out.label = Case::Edge1;
    else if (r <= 1.0 - p.tau && std::abs(w - lp) <= p.tau)
        out.label = Case::Edge2;
    else if (r >= p.tau && r <= 1.0 - p.tau && std::abs(w) <= p.tau_tilde)
        out.label = Case::SmallW3;
    else if (eta >= 0.0 && eta <= p.eps &&
             ((inner_bulk(r, p) && E >= p.tau_tilde && E <= e.lambda_plus - p.tau) ||
              (outer_bulk(r, p) && E >= e.lambda_minus + p.tau && E <= e.lambda_plus - p.tau)))
        out.label = Case::Bulk4;
    else
        out.label = Case::Outside;
    return out;
}

EdgeFit edge_fit(cplx z, int sign, int n, const std::vector<double>& offsets) {
    const mc::EdgeData e = mc::edge_points(z);
    if (sign < 0 && !(e.lambda_minus > 0.0))
        throw RegimeMismatch("lower edge fit needs |z| > 1");
    const double edge = sign > 0 ? e.lambda_plus : e.lambda_minus;
    EdgeFit fit;
    fit.sign = sign;
    std::vector<double> ts = offsets;
    if (ts.empty()) {
        // The lower edge sits at distance lambda_- from the hard edge at 0.
        const double scale = sign > 0 ? 1.0 : std::min(1.0, edge);
        ts = {1e-2 * scale, 1e-3 * scale, 1e-4 * scale};
    }
    std::vector<double> lx, ly;
    for (double t : ts) {
        const cplx w(edge + t, 0.0);
        const double nrm = gamma_inverse_norm(gamma_coeffs(z, w, n));
        fit.offsets.push_back(t);
        fit.norms.push_back(nrm);
        lx.push_back(std::log(t));
        ly.push_back(std::log(nrm));
    }
    const double k = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    fit.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    const auto ce = gamma_coeffs(z, cplx(edge, 0.0), n);
    fit.l_n_at_edge = std::abs(circulant_spectrum(ce).back());
    return fit;
}

EdgeKernel edge_kernel(cplx z, int sign, int n) {
    const mc::EdgeData e = mc::edge_points(z);
    const double edge = sign > 0 ? e.lambda_plus : e.lambda_minus;
    if (sign < 0 && !(edge > 0.0))
        throw RegimeMismatch("lower edge needs |z| > 1");
    const cplx w(edge, 0.0);
    const cplx m = mc::solve_mc(z, w).value;
    const auto c = gamma_coeffs_from(z, w, m, n);
    const auto l = circulant_spectrum(c);
    EdgeKernel k;
    k.l_n = std::abs(l.back());
    for (int j = 1; j <= n; ++j) {
        const double gap = std::abs(2.0 * c.g1 * c.g2 * (1.0 - cos_j(j, n)));
        k.max_gap_error = std::max(k.max_gap_error, std::abs(std::abs(l.back() - l[j - 1]) - gap));
    }
    k.coefficient = std::abs(1.0 / (w * m * m * m) - std::norm(z) / (w * (1.0 + m) * (1.0 + m) * (1.0 + m)));
    if (n > 1) {
        const CMatrix minor = circulant_dense(c).bottomRightCorner(n - 1, n - 1);
        Eigen::JacobiSVD<CMatrix> svd(minor);
        k.minor_min_singular = svd.singularValues().minCoeff();
        k.minor_invertible = k.minor_min_singular > 1e-10;
    } else {
        k.minor_min_singular = 1.0; // empty minor
    }
    return k;
}

Case4Report case4_margin_scan(cplx z, int E_steps, int omega_steps, const RegionParams& p) {
    if (E_steps < 2 || omega_steps < 2)
        throw InvalidConfig("case4 grid needs at least 2 points per axis");
    const double r = std::abs(z);
    const double s = r * r;
    const mc::EdgeData e = mc::edge_points(z);
    Case4Report rep;
    if (inner_bulk(r, p)) {
        rep.E_lo = p.tau_tilde;
    } else if (outer_bulk(r, p)) {
        rep.E_lo = e.lambda_minus + p.tau;
    } else {
        throw RegimeMismatch("case4 scan needs tau~ <= |z| <= 1 - tau or 1 + tau <= |z| <= 1/tau");
    }
    rep.E_hi = e.lambda_plus - p.tau;
    if (!(rep.E_hi > rep.E_lo))
        throw RegimeMismatch("empty energy range for the case4 scan");

    rep.margin = rep.direct_margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < E_steps; ++i) {
        const double E = rep.E_lo + (rep.E_hi - rep.E_lo) * i / (E_steps - 1);
        const cplx w(E, 0.0);
        const cplx m = mc::solve_mc(z, w).value;
        const auto c = gamma_coeffs_from(z, w, m, 1);
        const cplx a = 1.0 / (w * m) - 1.0 / (w * (1.0 + m));
        for (int k = 0; k < omega_steps; ++k) {
            const double om = -1.0 + 2.0 * k / (omega_steps - 1);
            const double d2 = 1.0 / s + 1.0 - 2.0 * om;
            const double d1 = d2 + s - 1.0;
            const cplx reduced = -c.g1 * (a * d1 - 1.0 / m - 2.0 / (1.0 + m) + d2);
            const cplx direct = 1.0 - c.g1 * c.g1 - c.g2 * c.g2 + 2.0 * c.g1 * c.g2 * om;
            rep.margin = std::min(rep.margin, std::abs(reduced));
            rep.direct_margin = std::min(rep.direct_margin, std::abs(direct));
            rep.max_form_gap = std::max(rep.max_form_gap, std::abs(reduced - direct));
        }
        rep.E_grid.push_back(E);
        const double q = 3.0 / s;
        const double disc = q * (q - 4.0 * (1.0 - s - 2.0 * E));
        const double root = disc >= 0.0 ? std::sqrt(disc) : std::numeric_limits<double>::quiet_NaN();
        rep.f1_plus.push_back(0.5 * (q + root));
        rep.f1_minus.push_back(0.5 * (q - root));
        rep.f2.push_back(-3.0 + 9.0 / (2.0 + s - E));
    }
    rep.E1 = s - (3.0 - 1.0 / 3.0) / (8.0 * s);
    rep.E2 = s + 2.0 - 9.0 * s / (6.0 * s + 1.0);
    rep.level_order_ok = rep.E1 < rep.E2;
    return rep;
}

} // namespace prodlaw::stab
