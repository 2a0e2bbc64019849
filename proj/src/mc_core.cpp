#include "prodlaw/mc_core.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "prodlaw/errors.hpp"
#include "quadrature.hpp"

namespace prodlaw::mc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kBoundaryEta = 1e-6;
constexpr double kUnderflow = 1e-300;


cplx cubic_derivative(double s, cplx w, cplx m) { return 3.0 * w * m * m + 4.0 * w * m + (w + 1.0 - s); }

cplx newton_polish(double s, cplx w, cplx m) {
    const cplx f = cubic_value(s, w, m);
    const cplx fp = cubic_derivative(s, w, m);
    if (std::abs(fp) == 0.0)
        return m;
    const cplx next = m - f / fp;
    if (!std::isfinite(next.real()) || !std::isfinite(next.imag()))
        return m;
    return std::abs(cubic_value(s, w, next)) <= std::abs(f) ? next : m;
}

void check_nondegenerate(cplx m) {
    if (std::abs(m) < kUnderflow || std::abs(1.0 + m) < kUnderflow)
        throw DegeneratePoint("m_c or 1 + m_c underflowed");
}

McSolution make_solution(double s, cplx w, cplx m) {
    check_nondegenerate(m);
    McSolution sol;
    sol.value = m;
    sol.residual = std::abs(cubic_value(s, w, m));
    sol.branch_ok = w.imag() > 0.0 ? m.imag() > 0.0 : true;
    return sol;
}

cplx nearest_root(const std::array<cplx, 3>& roots, cplx ref) {
    return *std::min_element(roots.begin(), roots.end(),
                             [&](cplx a, cplx b) { return std::abs(a - ref) < std::abs(b - ref); });
}

// Follow the Herglotz branch from a large imaginary part, where it is the
// unique root close to -1/w, down to w.
cplx track_from_above(double s, cplx w) {
    double eta = std::max({4.0, 2.0 * std::abs(w), 2.0 * w.imag()});
    cplx m = -1.0 / cplx(w.real(), eta);
    m = nearest_root(cubic_roots(s, cplx(w.real(), eta)), m);
    while (eta > w.imag()) {
        eta = std::max(0.5 * eta, w.imag());
        m = nearest_root(cubic_roots(s, cplx(w.real(), eta)), m);
    }
    return m;
}

cplx solve_upper(double s, cplx w) {
    const auto roots = cubic_roots(s, w);
    int count = 0;
    cplx pick{};
    for (const cplx& r : roots) {
        // A Stieltjes transform of a measure on [0, inf) also has Im(w m) >= 0.
        const double tol = 1e-12 * std::max(1.0, std::abs(r));
        if (r.imag() > 0.0 && (w * r).imag() > -tol * std::max(1.0, std::abs(w))) {
            ++count;
            pick = r;
        }
    }
    if (count == 1)
        return pick;
    const cplx tracked = track_from_above(s, w);
    if (!(tracked.imag() > 0.0))
        throw NoValidBranch("no root of the self-consistent equation has positive imaginary part");
    return tracked;
}

// At an edge two roots merge and Cardano only resolves them to ~sqrt(eps).
// A double root is also a root of the derivative, which is well conditioned.
bool double_root(double s, double E, double& out) {
    const double a = 3.0 * E, b = 4.0 * E, c = E + 1.0 - s;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0)
        return false;
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    for (double d : {q / a, c / q}) {
        if (!std::isfinite(d))
            continue;
        const double f = cubic_value(s, cplx(E, 0.0), cplx(d, 0.0)).real();
        const double scale = std::abs(E * d * d * d) + std::abs(2.0 * E * d * d) + std::abs(c * d) + 1.0;
        if (std::abs(f) <= 4.0 * std::numeric_limits<double>::epsilon() * scale) {
            out = d;
            return true;
        }
    }
    return false;
}

cplx solve_real_axis(double s, double E) {
    const cplx w(E, 0.0);
    double d = 0.0;
    if (double_root(s, E, d))
        return {d, 0.0};
    const auto roots = cubic_roots(s, w);
    const cplx* best = &roots[0];
    for (const cplx& r : roots)
        if (r.imag() > best->imag())
            best = &r;
    if (best->imag() > 1e-10 * std::max(1.0, std::abs(*best)))
        return *best;
    // Outside the support (or at an edge): the real root continuous with the
    // branch just above the axis.
    const cplx ref = solve_upper(s, cplx(E, kBoundaryEta));
    const cplx r = nearest_root(roots, ref);
    return {r.real(), 0.0};
}

double abs2(cplx z) { return std::norm(z); }

} // namespace

EdgeData edge_points(cplx z) {
    EdgeData e;
    const double s = abs2(z);
    e.a_frak = std::sqrt(1.0 + 8.0 * s);
    const double a = e.a_frak;
    e.lambda_plus = (a + 3.0) * (a + 3.0) * (a + 3.0) / (8.0 * (a + 1.0));
    if (a == 1.0) {
        e.lambda_minus = -std::numeric_limits<double>::infinity();
        e.lambda_minus_degenerate = true;
    } else {
        e.lambda_minus = (a - 3.0) * (a - 3.0) * (a - 3.0) / (8.0 * (a - 1.0));
    }
    e.effective_lower = std::max(0.0, e.lambda_minus);
    return e;
}

cplx cubic_value(double s, cplx w, cplx m) { return ((w * m + 2.0 * w) * m + (w + 1.0 - s)) * m + 1.0; }

std::array<cplx, 3> cubic_roots(double s, cplx w) {
    if (std::abs(w) == 0.0)
        throw DegeneratePoint("w = 0: the self-consistent cubic degenerates");
    // Monic form m^3 + 2 m^2 + c m + d, depressed by m = t - 2/3.
    const cplx c = (w + 1.0 - s) / w;
    const cplx d = 1.0 / w;
    const cplx p = c - 4.0 / 3.0;
    const cplx q = 16.0 / 27.0 - 2.0 * c / 3.0 + d;
    const cplx sq = std::sqrt(q * q / 4.0 + p * p * p / 27.0);
    const cplx A = -q / 2.0 + sq;
    const cplx B = -q / 2.0 - sq;
    const cplx u3 = std::abs(A) >= std::abs(B) ? A : B;

    std::array<cplx, 3> roots;
    if (std::abs(u3) == 0.0) {
        roots.fill(cplx(-2.0 / 3.0, 0.0));
    } else {
        const cplx u = std::exp(std::log(u3) / 3.0);
        const cplx omega = std::polar(1.0, 2.0 * kPi / 3.0);
        cplx uk = u;
        for (auto& r : roots) {
            r = uk - p / (3.0 * uk) - 2.0 / 3.0;
            uk *= omega;
        }
    }
    for (auto& r : roots)
        r = newton_polish(s, w, r);
    return roots;
}

McSolution solve_mc(const SpectralPoint& p) {
    const double s = abs2(p.z);
    const cplx w = p.w;
    if (std::abs(w) == 0.0)
        throw DegeneratePoint("w = 0 is not in the domain of m_c");
    if (w.imag() < 0.0) {
        McSolution sol = solve_mc(SpectralPoint{p.z, std::conj(w)});
        sol.value = std::conj(sol.value);
        sol.branch_ok = sol.value.imag() < 0.0;
        return sol;
    }
    const cplx m = w.imag() > 0.0 ? solve_upper(s, w) : solve_real_axis(s, w.real());
    return make_solution(s, w, m);
}

cplx boundary_richardson(cplx z, double E) {
    const double etas[3] = {1e-4, 5e-5, 2.5e-5};
    cplx m[3];
    for (int k = 0; k < 3; ++k)
        m[k] = solve_mc(z, cplx(E, etas[k])).value;
    const cplx r1a = 2.0 * m[1] - m[0];
    const cplx r1b = 2.0 * m[2] - m[1];
    return (4.0 * r1b - r1a) / 3.0;
}

double density(cplx z, double x) {
    const EdgeData e = edge_points(z);
    if (x < e.effective_lower || x > e.lambda_plus)
        return 0.0;
    if (x == 0.0)
        return e.lambda_minus < 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    const double im = solve_mc(z, cplx(x, 0.0)).value.imag();
    return std::max(0.0, im) / kPi;
}

double marchenko_pastur_density(double x) {
    if (x <= 0.0 || x >= 4.0)
        return 0.0;
    return std::sqrt((4.0 - x) / x) / (2.0 * kPi);
}

namespace {

detail::SupportMap support_map(cplx z) {
    const EdgeData e = edge_points(z);
    return detail::SupportMap(e.effective_lower, e.lambda_plus);
}

} // namespace

double total_mass(cplx z) {
    const auto map = support_map(z);
    return map.integrate([&](double x) { return density(z, x); }, 0.0, map.end()).value;
}

double cumulative(cplx z, double x) {
    const auto map = support_map(z);
    return map.integrate([&](double t) { return density(z, t); }, 0.0, map.u(x)).value;
}

double log_moment(cplx z) {
    const auto map = support_map(z);
    return map.integrate([&](double x) { return x > 0.0 ? std::log(x) * density(z, x) : 0.0; }, 0.0, map.end())
        .value;
}

std::vector<double> classical_locations(cplx z, std::size_t count) {
    if (count == 0)
        throw std::invalid_argument("classical_locations: count must be positive");
    const auto map = support_map(z);
    auto rho = [&](double x) { return density(z, x); };
    // Relative tolerance alone stalls on the tiny masses next to a soft edge,
    // so cap the depth and demand an absolute error instead.
    auto mass_between = [&](double ua, double ub) {
        const auto r = map.integrate(rho, ua, ub, detail::kQuadTol, 12);
        if (r.error > 1e-11)
            throw QuadratureFailure("classical locations: quadrature error " + std::to_string(r.error));
        return r.value;
    };

    std::vector<double> gammas(count);
    double u_prev = 0.0;
    double mass_prev = 0.0;
    for (std::size_t j = 1; j < count; ++j) {
        const double target = static_cast<double>(j) / static_cast<double>(count);
        auto g = [&](double u) { return mass_prev + mass_between(u_prev, u) - target; };
        const double g_lo = mass_prev - target;
        const double g_hi = g(map.end());
        if (!(g_lo < 0.0 && g_hi > 0.0))
            throw QuadratureFailure("cumulative density is not monotone near j = " + std::to_string(j));
        std::uintmax_t iters = 200;
        const auto bracket = boost::math::tools::toms748_solve(
            g, u_prev, map.end(), g_lo, g_hi, boost::math::tools::eps_tolerance<double>(52), iters);
        const double u = 0.5 * (bracket.first + bracket.second);
        const double mass = mass_prev + mass_between(u_prev, u);
        if (std::abs(mass - target) > 1e-9 || mass < mass_prev)
            throw QuadratureFailure("classical location " + std::to_string(j) + " missed its target mass");
        gammas[j - 1] = map.x(u);
        if (j > 1 && !(gammas[j - 1] > gammas[j - 2]))
            throw QuadratureFailure("classical locations are not strictly increasing");
        u_prev = u;
        mass_prev = mass;
    }
    gammas[count - 1] = map.hi();
    return gammas;
}

SpectralCurve spectral_curve(cplx z, const std::vector<double>& grid, std::size_t count) {
    SpectralCurve curve;
    curve.z = z;
    curve.grid = grid;
    curve.density.reserve(grid.size());
    for (double x : grid)
        curve.density.push_back(density(z, x));
    if (count > 0)
        curve.gammas = classical_locations(z, count);
    curve.total_mass = total_mass(z);
    return curve;
}

double log_density_laplacian(cplx z, double h) {
    const double c = log_moment(z);
    const double sum = log_moment(z + h) + log_moment(z - h) + log_moment(z + cplx(0.0, h)) +
                       log_moment(z - cplx(0.0, h));
    return (sum - 4.0 * c) / (h * h);
}

// ---------------------------------------------------------------------------

std::string to_string(Regime r) {
    switch (r) {
    case Regime::edge_plus:
        return "edge_plus";
    case Regime::edge_minus:
        return "edge_minus";
    case Regime::small_w:
        return "small_w";
    case Regime::bulk_equiv:
        return "bulk_equiv";
    }
    return "?";
}

Regime regime_from_string(const std::string& s) {
    if (s == "edge_plus")
        return Regime::edge_plus;
    if (s == "edge_minus")
        return Regime::edge_minus;
    if (s == "small_w")
        return Regime::small_w;
    if (s == "bulk_equiv")
        return Regime::bulk_equiv;
    throw std::invalid_argument("unknown regime '" + s + "'");
}

cplx edge_beta(double a, int sign) {
    const double sg = sign >= 0 ? 1.0 : -1.0;
    const double num = 8.0 * std::pow(a + sg, 3);
    const double den = sg * a * std::pow(a + 3.0 * sg, 5);
    return std::sqrt(cplx(num / den, 0.0));
}

double edge_value(double a, int sign) { return sign >= 0 ? -2.0 / (3.0 + a) : -2.0 / (3.0 - a); }

namespace {

// Least-squares fit y_k = b0 + b1 x_k with complex y and real x.
std::pair<cplx, cplx> linear_fit(const std::vector<double>& x, const std::vector<cplx>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sxx = 0;
    cplx sy{}, sxy{};
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sxx += x[k] * x[k];
        sy += y[k];
        sxy += x[k] * y[k];
    }
    const double det = n * sxx - sx * sx;
    const cplx b1 = (n * sxy - sx * sy) / det;
    const cplx b0 = (sy - b1 * sx) / n;
    return {b0, b1};
}

AsymptoticsReport edge_check(cplx z, int sign, const AsymptoticsOptions& opt) {
    const EdgeData e = edge_points(z);
    const double edge = sign > 0 ? e.lambda_plus : e.lambda_minus;
    const double m0 = edge_value(e.a_frak, sign);
    AsymptoticsReport rep;
    rep.regime = sign > 0 ? Regime::edge_plus : Regime::edge_minus;
    rep.expected = edge_beta(e.a_frak, sign);

    // Approach from outside the support, where m_c is real.
    std::vector<double> roots_t;
    std::vector<cplx> ratios;
    // lambda_- can sit within 1e-3 of the hard edge at 0
    const double scale = sign > 0 ? 1.0 : std::min(1.0, edge);
    for (double u = 1e-3; u >= 0.99e-7; u /= std::sqrt(10.0)) {
        const double t = u * scale;
        const double w = edge + sign * t;
        const cplx m = solve_mc(z, cplx(w, 0.0)).value;
        rep.offsets.push_back(t);
        rep.values.push_back(m);
        roots_t.push_back(std::sqrt(t));
        ratios.push_back((m - m0) / std::sqrt(cplx(w - edge, 0.0)));
    }
    rep.fitted = linear_fit(roots_t, ratios).first;
    rep.relative_error = std::abs(rep.fitted - rep.expected) / std::abs(rep.expected);
    rep.pass = rep.relative_error <= opt.beta_rel_tol;
    return rep;
}

AsymptoticsReport small_w_check(cplx z, const AsymptoticsOptions& opt) {
    const double s = abs2(z);
    AsymptoticsReport rep;
    rep.regime = Regime::small_w;
    std::vector<double> lx, ly;
    double cmax = 0.0;
    for (double r = 1e-2; r >= 0.99e-8; r /= 10.0) {
        const cplx w = std::polar(r, 0.5 * kPi);
        const cplx m = solve_mc(z, w).value;
        const cplx lead = cplx(0.0, 1.0) * std::sqrt(1.0 - s) / std::sqrt(w) + (1.0 - 2.0 * s) / (2.0 * s - 2.0);
        const double err = std::abs(m - lead);
        rep.offsets.push_back(r);
        rep.values.push_back(m);
        lx.push_back(std::log(r));
        ly.push_back(std::log(err));
        cmax = std::max(cmax, err / std::sqrt(r));
    }
    std::vector<cplx> ly_c(ly.begin(), ly.end());
    rep.exponent = linear_fit(lx, ly_c).second.real();
    rep.fitted = cmax;
    rep.pass = rep.exponent >= opt.small_w_min_exponent;
    return rep;
}

AsymptoticsReport bulk_equiv_check(cplx z, const AsymptoticsOptions& opt) {
    const EdgeData e = edge_points(z);
    AsymptoticsReport rep;
    rep.regime = Regime::bulk_equiv;
    const double Emin = std::abs(z) > 1.0 ? e.lambda_minus / 5.0 : 0.0;
    const double Emax = std::min(e.lambda_plus + 1.0, 1.0 / opt.tau);
    rep.ratio_min = std::numeric_limits<double>::infinity();
    rep.ratio_max = 0.0;
    for (double eta : {1e-4, 1e-2, 0.5}) {
        for (int k = 0; k <= 60; ++k) {
            const cplx w(Emin + (Emax - Emin) * k / 60.0, eta);
            const cplx m = solve_mc(z, w).value;
            const double sw = std::sqrt(std::abs(w));
            for (double r : {std::abs(m) * sw, std::abs(1.0 + m) * sw}) {
                rep.ratio_min = std::min(rep.ratio_min, r);
                rep.ratio_max = std::max(rep.ratio_max, r);
            }
            rep.offsets.push_back(std::abs(w));
            rep.values.push_back(m);
        }
    }
    rep.pass = rep.ratio_min >= 1.0 / opt.bulk_equiv_c && rep.ratio_max <= opt.bulk_equiv_c;
    return rep;
}

} // namespace

AsymptoticsReport mc_asymptotics_check(cplx z, Regime regime, const AsymptoticsOptions& opt) {
    const double r = std::abs(z);
    const bool inner = r <= 1.0 - opt.tau;
    const bool outer = r >= 1.0 + opt.tau;
    switch (regime) {
    case Regime::edge_plus:
        if (!inner && !outer)
            throw RegimeMismatch("edge_plus needs |z| <= 1 - tau or |z| >= 1 + tau");
        return edge_check(z, +1, opt);
    case Regime::edge_minus:
        if (!outer)
            throw RegimeMismatch("edge_minus needs |z| >= 1 + tau (lambda_- > 0)");
        return edge_check(z, -1, opt);
    case Regime::small_w:
        if (!inner)
            throw RegimeMismatch("small_w needs |z| <= 1 - tau");
        return small_w_check(z, opt);
    case Regime::bulk_equiv:
        if (!inner && !outer)
            throw RegimeMismatch("bulk_equiv needs |z| <= 1 - tau or |z| >= 1 + tau");
        return bulk_equiv_check(z, opt);
    }
    throw RegimeMismatch("unknown regime");
}

} // namespace prodlaw::mc
