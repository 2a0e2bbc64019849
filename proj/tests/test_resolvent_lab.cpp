#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "prodlaw/ensemble.hpp"
#include "prodlaw/errors.hpp"
#include "prodlaw/experiments.hpp"
#include "prodlaw/resolvent_lab.hpp"

using namespace prodlaw;
using lab::CMatrix;

namespace {

ens::ChainSample chain(int N, int n, std::uint64_t seed) {
    ens::EnsembleConfig c;
    c.N = N;
    c.n = n;
    c.seed = seed;
    return ens::sample_chain(c);
}

} // namespace

TEST_SUITE("resolvent_lab") {

TEST_CASE("empirical Stieltjes transform") {
    CHECK(std::abs(lab::empirical_stieltjes(std::vector<double>{1.0}, cplx(0, 1)) - cplx(0.5, 0.5)) < 1e-15);
    const auto h = ens::shifted_gram(chain(16, 2, 1), 0.5, false);
    for (cplx w : {cplx(0.3, 0.01), cplx(2.0, 1.0), cplx(-1.0, 0.2)}) {
        const cplx m = lab::empirical_stieltjes(h, w);
        CHECK(m.imag() > 0.0);
        CHECK(std::abs(lab::empirical_stieltjes(h, std::conj(w)) - std::conj(m)) < 1e-15);
    }
}

TEST_CASE("degenerate chains") {
    const int N = 8;
    const auto zero = ens::chain_from({CMatrix::Zero(N, N), CMatrix::Zero(N, N)});
    const cplx z = 0.5, w(1.0, 0.3);
    CHECK(std::abs(lab::empirical_stieltjes(ens::shifted_gram(zero, z, false), w) - 1.0 / (std::norm(z) - w)) <
          1e-14);
    const auto id = ens::chain_from({CMatrix::Identity(N, N), CMatrix::Identity(N, N)});
    const auto h = ens::shifted_gram(id, 0.0, false);
    double s = 0.0;
    for (double l : h.eigenvalues) {
        CHECK(l == doctest::Approx(1.0).epsilon(1e-14));
        s += std::log(l);
    }
    CHECK(std::abs(s) < 1e-12);
}

TEST_CASE("partial traces") {
    const auto ch = chain(32, 3, 4);
    const cplx z(0.3, 0.4);
    const auto h = ens::shifted_gram(ch, z, true);
    const cplx w(1.2, 0.15);
    const auto d = lab::partial_traces(h, w);
    REQUIRE(d.mG.size() == 3);
    cplx avg{}, avgc{};
    for (int a = 0; a < 3; ++a) {
        avg += d.mG[a] / 3.0;
        avgc += d.mGc[a] / 3.0;
    }
    CHECK(std::abs(avg - d.m_emp) <= 1e-10);
    CHECK(std::abs(avgc - d.m_emp) <= 1e-10);
    CHECK(d.Lambda >= 0.0);
    CHECK(d.Psi >= 1.0 / (32 * w.imag()));

    CHECK_THROWS_AS(lab::partial_traces(ens::shifted_gram(ch, z, false), w), MissingVectors);
    CHECK_THROWS_AS(lab::partial_traces(h, cplx(1.0, 1e-9)), InvalidConfig);
}

TEST_CASE("residuals vanish at the deterministic solution") {
    for (int k = 0; k < 20; ++k) {
        const cplx z = std::polar(0.2 + 0.1 * k, 0.7 * k);
        const cplx w(0.1 + 0.3 * k, 0.05 + 0.02 * k);
        const cplx m = mc::solve_mc(z, w).value;
        for (int n : {1, 2, 4}) {
            std::vector<cplx> mG(n, m), mGc(n, m), rG, rGc;
            lab::sce_residuals(std::norm(z), w, mG, mGc, rG, rGc);
            for (int a = 0; a < n; ++a) {
                CHECK(std::abs(rG[a]) <= 1e-10 * (1.0 + std::abs(1.0 / (w * m))));
                CHECK(std::abs(rGc[a]) <= 1e-10 * (1.0 + std::abs(1.0 / (w * m))));
            }
        }
    }
}

TEST_CASE("self-consistent residuals are within 5 Psi at N = 256") {
    int within = 0, total = 0;
    for (int t = 0; t < 20; ++t) {
        const auto h = ens::shifted_gram(chain(256, 2, 1000 + t), 0.5, true);
        const auto d = lab::partial_traces(h, cplx(1.5, 0.1));
        within += d.max_residual() <= 5.0 * d.Psi;
        ++total;
    }
    CHECK(within >= 0.95 * total);
}

TEST_CASE("Ward identity") {
    const auto h = ens::shifted_gram(chain(64, 2, 9), 0.5, true);
    CHECK(lab::ward_identity_check(h, cplx(1.0, 0.1), 20) <= 1e-8);
    const double near = h.eigenvalues[40];
    CHECK(lab::ward_identity_check(h, cplx(near, 1e-6), 20) <= 1e-4);
}

TEST_CASE("derivative bound") {
    const auto h = ens::shifted_gram(chain(32, 2, 2), 0.5, true);
    for (double eta : {0.5, 0.1, 0.02})
        CHECK(lab::derivative_probe(h, cplx(1.0, eta), 10) <= 2.0 + 1e-3);
}

TEST_CASE("minor identities on small dense instances") {
    for (int t = 0; t < 20; ++t) {
        const auto ch = chain(4, 2, 300 + t);
        CMatrix Y = ch.linearization;
        Y.diagonal().array() -= cplx(0.5, 0.1);
        const auto c = lab::minor_identity_check(Y, cplx(1.0, 0.5), t % 8);
        CHECK(c.worst() <= 1e-10);
        CHECK(c.padding_ok);
        CHECK(c.interlace_margin() > 0.0);
    }
    const auto ch = chain(4, 2, 1);
    const CMatrix Gk = lab::column_minor_resolvent(ch.linearization, cplx(1.0, 0.5), 3);
    CHECK(Gk.row(3).isZero(0.0));
    CHECK(Gk.col(3).isZero(0.0));
    CHECK_THROWS_AS(lab::minor_identity_check(CMatrix::Identity(80, 80), cplx(1.0, 0.5), 0), InvalidConfig);
}

TEST_CASE("phi and the scan domain") {
    CHECK(lab::phi(64) == doctest::Approx(std::pow(std::log(64.0), std::log(std::log(64.0)))));
    CHECK(lab::phi(64) == doctest::Approx(7.62).epsilon(0.01));
    lab::ScanDomain dom{0.5, 0.1, 1.0, 256};
    CHECK(dom.E_lo() == 0.0);
    CHECK(dom.E_hi() == doctest::Approx(1.1 * mc::edge_points(0.5).lambda_plus));
    CHECK(dom.contains(cplx(1.0, 0.2)));
    CHECK(!dom.contains(cplx(1.0, 0.01)));
    CHECK(!dom.contains(cplx(1.0, 1.5)));
    CHECK(!dom.contains(cplx(dom.E_hi() + 0.1, 0.5)));
    lab::ScanDomain out{1.5, 0.1, 1.0, 256};
    CHECK(out.E_lo() == doctest::Approx(mc::edge_points(1.5).lambda_minus / 1.1));
}

}

TEST_SUITE("resolvent_lab_slow") {

TEST_CASE("median Lambda halves when N doubles") {
    const cplx z = 0.5, w(1.0, 0.2);
    std::vector<double> med;
    for (int N : {128, 256}) {
        std::vector<double> L;
        for (int t = 0; t < 200; ++t) {
            const auto h = ens::shifted_gram(chain(N, 2, exp::seed_for(77, N, t)), z, true);
            L.push_back(lab::partial_traces(h, w).Lambda);
        }
        med.push_back(exp::median(L));
    }
    const double factor = med[0] / med[1];
    MESSAGE("median Lambda ratio 128 -> 256: " << factor);
    CHECK(factor >= 1.6);
    CHECK(factor <= 2.6);
}

}
