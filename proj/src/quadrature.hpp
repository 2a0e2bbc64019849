#pragma once

// Internal quadrature helpers shared by the mc-core and experiments code.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <string>

#include "prodlaw/errors.hpp"

namespace prodlaw::detail {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
};

inline constexpr double kQuadTol = 1e-12;
inline constexpr unsigned kQuadDepth = 20;

/// Adaptive G7/K15 on [a, b]; throws if the error estimate is unusable.
template <class F>
QuadratureResult gk15(F&& f, double a, double b, double tol = kQuadTol, unsigned depth = kQuadDepth) {
    if (a == b)
        return {};
    double err = 0.0;
    double l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, depth, tol, &err, &l1);
    if (!std::isfinite(v) || err > 1e-6 * std::max(1.0, l1))
        throw QuadratureFailure("gauss-kronrod did not converge on [" + std::to_string(a) + ", " +
                                std::to_string(b) + "], error estimate " + std::to_string(err));
    return {v, err};
}

/// Monotone reparametrization of a spectral support [lo, hi].
///
/// The lower half uses x = lo + v^4 (absorbs an x^{-1/2} or sqrt edge, and
/// log x when lo = 0); the upper half uses x = hi - s^2 (sqrt edge). In the
/// parameter u in [0, V1 + S2] the density times dx/du is bounded.
class SupportMap {
public:
    SupportMap(double lo, double hi) : lo_(lo), hi_(hi) {
        mid_ = 0.5 * (lo + hi);
        v1_ = std::sqrt(std::sqrt(mid_ - lo));
        s2_ = std::sqrt(hi - mid_);
    }

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double split() const { return v1_; }
    double end() const { return v1_ + s2_; }

    double x(double u) const {
        if (u <= v1_) {
            const double u2 = u * u;
            return lo_ + u2 * u2;
        }
        const double s = end() - u;
        return hi_ - s * s;
    }

    double dxdu(double u) const {
        if (u <= v1_)
            return 4.0 * u * u * u;
        return 2.0 * (end() - u);
    }

    double u(double x) const {
        if (x <= lo_)
            return 0.0;
        if (x >= hi_)
            return end();
        if (x <= mid_)
            return std::sqrt(std::sqrt(x - lo_));
        return end() - std::sqrt(hi_ - x);
    }

    /// Integral of g(x(u)) x'(u) over [ua, ub], split at the kink.
    template <class G>
    QuadratureResult integrate(G&& g, double ua, double ub, double tol = kQuadTol,
                               unsigned depth = kQuadDepth) const {
        auto h = [&](double u) { return g(x(u)) * dxdu(u); };
        if (ub <= v1_ || ua >= v1_)
            return gk15(h, ua, ub, tol, depth);
        const auto a = gk15(h, ua, v1_, tol, depth);
        const auto b = gk15(h, v1_, ub, tol, depth);
        return {a.value + b.value, a.error + b.error};
    }

private:
    double lo_, hi_, mid_, v1_, s2_;
};

} // namespace prodlaw::detail
