#include <doctest.h>

#include <cmath>
#include <numbers>

#include "prodlaw/ensemble.hpp"
#include "prodlaw/errors.hpp"
#include "prodlaw/mc_core.hpp"

using namespace prodlaw;
using std::numbers::pi;

namespace {

// Marchenko-Pastur(1) cumulative in closed form, x = 4 sin^2(theta).
double mp_cdf(double x) {
    const double th = std::asin(std::sqrt(x) / 2.0);
    return (2.0 / pi) * (th + std::sin(th) * std::cos(th));
}

const double kBulkRadii[] = {0.2, 0.35, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 2.0, 3.0};

} // namespace

TEST_SUITE("mc_core") {

TEST_CASE("edge points by direct substitution") {
    auto e = mc::edge_points(1.0);
    CHECK(e.a_frak == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(e.lambda_plus == doctest::Approx(6.75).epsilon(1e-14));
    CHECK(std::abs(e.lambda_minus) < 1e-15);

    e = mc::edge_points(std::sqrt(3.0));
    CHECK(e.a_frak == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(e.lambda_plus == doctest::Approx(32.0 / 3.0).epsilon(1e-14));
    CHECK(e.lambda_minus == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(e.effective_lower == doctest::Approx(0.25).epsilon(1e-14));

    e = mc::edge_points(0.0);
    CHECK(e.lambda_plus == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(e.effective_lower == 0.0);
    CHECK(e.lambda_minus_degenerate);
    CHECK(std::isinf(e.lambda_minus));

    for (double r : {0.3, 0.8})
        CHECK(mc::edge_points(r).effective_lower == 0.0);
}

TEST_CASE("Wishart largest eigenvalue approaches lambda_+ at z = 0") {
    ens::EnsembleConfig cfg;
    cfg.n = 1;
    for (int N : {100, 400}) {
        cfg.N = N;
        double mean_gap = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            cfg.seed = seed;
            const auto h = ens::shifted_gram(ens::sample_chain(cfg), 0.0, false);
            mean_gap += std::abs(h.eigenvalues.back() - 4.0) / 5.0;
        }
        // edge fluctuations live on the scale 2^{4/3} N^{-2/3}
        CHECK(mean_gap < 6.0 * std::pow(2.0, 4.0 / 3.0) * std::pow(N, -2.0 / 3.0));
    }
}

TEST_CASE("quadratic factor at z = 0") {
    const auto s = mc::solve_mc(0.0, cplx(2.0, 0.0));
    CHECK(std::abs(s.value - cplx(-0.5, 0.5)) < 1e-12);
    // w m^2 + w m + 1 = 0 with Im m > 0
    const cplx w(2.0, 0.001);
    const cplx root = (-w + std::sqrt(w * w - 4.0 * w)) / (2.0 * w);
    const cplx alt = (-w - std::sqrt(w * w - 4.0 * w)) / (2.0 * w);
    const cplx expect = root.imag() > 0 ? root : alt;
    CHECK(std::abs(mc::solve_mc(0.0, w).value - expect) < 1e-12);
}

TEST_CASE("edge value -2/(3+a)") {
    const double r = std::sqrt(3.0);
    CHECK(std::abs(mc::solve_mc(r, cplx(32.0 / 3.0, 0.0)).value - cplx(-0.25, 0.0)) < 1e-8);
    for (double rr : kBulkRadii) {
        const auto e = mc::edge_points(rr);
        CHECK(std::abs(mc::solve_mc(rr, cplx(e.lambda_plus, 0.0)).value + 2.0 / (3.0 + e.a_frak)) < 1e-8);
    }
}

TEST_CASE("cubic residual, Herglotz branch and conjugate symmetry on a grid") {
    for (int i = 0; i < 20; ++i)
        for (int k = 0; k < 20; ++k) {
            const cplx z = std::polar(0.1 + 2.9 * i / 19.0, 0.3 * k);
            const cplx w(-1.0 + 12.0 * k / 19.0, std::pow(10.0, -4.0 + 4.0 * i / 19.0));
            const auto s = mc::solve_mc(z, w);
            const double scale = std::max(1.0, std::abs(w)) * std::max(1.0, std::pow(std::abs(s.value), 3));
            CHECK(std::abs(mc::cubic_value(std::norm(z), w, s.value)) <= 1e-10 * scale);
            CHECK(s.value.imag() > 0.0);
            CHECK(s.branch_ok);
            const auto c = mc::solve_mc(z, std::conj(w));
            CHECK(std::abs(c.value - std::conj(s.value)) <= 1e-12 * std::max(1.0, std::abs(s.value)));
        }
}

TEST_CASE("Richardson boundary value agrees with the direct root in the bulk") {
    for (double r : {0.5, 1.5}) {
        const auto e = mc::edge_points(r);
        const double E = 0.5 * (e.effective_lower + e.lambda_plus);
        CHECK(std::abs(mc::boundary_richardson(r, E) - mc::solve_mc(r, cplx(E, 0.0)).value) < 1e-8);
    }
}

TEST_CASE("Marchenko-Pastur reduction and support") {
    CHECK(mc::density(0.0, 2.0) == doctest::Approx(1.0 / (2.0 * pi)).epsilon(1e-12));
    for (int k = 1; k < 200; ++k) {
        const double x = 4.0 * k / 200.0;
        CHECK(std::abs(mc::density(0.0, x) - mc::marchenko_pastur_density(x)) <= 1e-8);
    }
    for (double r : kBulkRadii) {
        const auto e = mc::edge_points(r);
        CHECK(mc::density(r, e.lambda_plus + 0.1) == 0.0);
        CHECK(mc::density(r, e.lambda_plus + 1e-6) <= 1e-8);
        if (e.effective_lower > 0)
            CHECK(mc::density(r, e.effective_lower - 1e-6) <= 1e-8);
    }
}

TEST_CASE("square-root vanishing at lambda_+") {
    for (double r : {0.5, 1.5}) {
        const double lp = mc::edge_points(r).lambda_plus;
        const double t1 = 1e-4, t2 = 1e-6;
        const double slope = std::log(mc::density(r, lp - t1) / mc::density(r, lp - t2)) / std::log(t1 / t2);
        CHECK(slope == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("normalization") {
    for (double r : kBulkRadii)
        CHECK(std::abs(mc::total_mass(r) - 1.0) <= 1e-6);
}

TEST_CASE("classical locations") {
    // Marchenko-Pastur median by bisection on the closed-form cumulative.
    double lo = 0.0, hi = 4.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mp_cdf(mid) < 0.5 ? lo : hi) = mid;
    }
    const auto g0 = mc::classical_locations(0.0, 2);
    CHECK(g0[0] == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-9));
    CHECK(g0[1] == doctest::Approx(4.0).epsilon(1e-12));

    for (double r : {0.5, 1.5}) {
        const std::size_t count = 64;
        const auto g = mc::classical_locations(r, count);
        REQUIRE(g.size() == count);
        CHECK(std::abs(g.back() - mc::edge_points(r).lambda_plus) <= 1e-6);
        for (std::size_t j = 1; j < count; ++j) {
            CHECK(g[j] > g[j - 1]);
            CHECK(std::abs(mc::cumulative(r, g[j - 1]) - double(j) / count) <= 1e-8);
        }
    }
}

TEST_CASE("gamma_1 N^2 stays bounded below (fitted constant)") {
    std::vector<double> C;
    for (int N : {32, 64, 128}) {
        const auto g = mc::classical_locations(0.5, 2 * N);
        C.push_back(g.front() * N * N);
    }
    for (double c : C) {
        CHECK(c > 0.1);
        CHECK(c / C.front() == doctest::Approx(1.0).epsilon(0.2));
    }
}

TEST_CASE("Laplacian of the log moment") {
    CHECK(mc::log_density_laplacian(0.5) == doctest::Approx(4.0).epsilon(0.05 / 4.0));
    CHECK(std::abs(mc::log_density_laplacian(1.5)) <= 0.05);
    CHECK(std::abs(mc::log_moment(0.5) - mc::log_moment(cplx(0.0, 0.5))) <= 1e-6);
    CHECK(std::abs(mc::log_density_laplacian(0.5) - mc::log_density_laplacian(cplx(0.3, 0.4))) <= 1e-6);
    // closed forms |z|^2 - 1 inside, 2 log|z| outside
    CHECK(mc::log_moment(0.5) == doctest::Approx(-0.75).epsilon(1e-9));
    CHECK(mc::log_moment(1.5) == doctest::Approx(2.0 * std::log(1.5)).epsilon(1e-9));
}

TEST_CASE("asymptotic expansions") {
    const auto ep = mc::mc_asymptotics_check(std::sqrt(3.0), mc::Regime::edge_plus);
    CHECK(ep.pass);
    CHECK(ep.relative_error <= 0.02);
    const auto em = mc::mc_asymptotics_check(1.5, mc::Regime::edge_minus);
    CHECK(em.pass);
    const auto sw = mc::mc_asymptotics_check(0.5, mc::Regime::small_w);
    CHECK(sw.pass);
    const auto be = mc::mc_asymptotics_check(0.5, mc::Regime::bulk_equiv);
    CHECK(be.pass);
    CHECK(be.ratio_min >= 0.1);
    CHECK(be.ratio_max <= 10.0);
    CHECK_THROWS_AS(mc::mc_asymptotics_check(0.5, mc::Regime::edge_minus), RegimeMismatch);
    CHECK_THROWS_AS(mc::mc_asymptotics_check(1.5, mc::Regime::small_w), RegimeMismatch);
}

TEST_CASE("small-w leading term is sqrt(1-|z|^2), not (1-|z|^2)") {
    const double s = 0.25;
    const double c0 = (1.0 - 2.0 * s) / (2.0 * s - 2.0);
    double prev_fixed = 1e9, prev_literal = 0.0;
    for (double t : {1e-4, 1e-6, 1e-8}) {
        const cplx w(t, t);
        const cplx m = mc::solve_mc(0.5, w).value;
        const double fixed = std::abs(m - cplx(0, 1) * std::sqrt(1.0 - s) / std::sqrt(w) - c0);
        const double literal = std::abs(m - cplx(0, 1) * (1.0 - s) / std::sqrt(w) - c0);
        CHECK(fixed < prev_fixed);
        CHECK(literal > prev_literal);
        prev_fixed = fixed;
        prev_literal = literal;
    }
    CHECK(prev_fixed < 1e-3);
    CHECK(prev_literal > 100.0);
}

TEST_CASE("spectral curve bundles density, gammas and mass") {
    std::vector<double> grid{0.5, 1.0, 2.0};
    const auto c = mc::spectral_curve(0.5, grid, 16);
    CHECK(c.density.size() == 3);
    CHECK(c.gammas.size() == 16);
    CHECK(std::abs(c.total_mass - 1.0) < 1e-6);
}

}
