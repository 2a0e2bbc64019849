#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "prodlaw/backend.hpp"
#include "prodlaw/ensemble.hpp"
#include "prodlaw/errors.hpp"
#include "prodlaw/mc_core.hpp"

using namespace prodlaw;
using ens::CMatrix;

namespace {

ens::EnsembleConfig config(int N, int n, ens::Dist d = ens::Dist::complex_gaussian, std::uint64_t seed = 5) {
    ens::EnsembleConfig c;
    c.N = N;
    c.n = n;
    c.dist = d;
    c.seed = seed;
    c.field = d == ens::Dist::real_gaussian ? ens::Field::real : ens::Field::complex;
    return c;
}

} // namespace

TEST_SUITE("ensemble") {

TEST_CASE("validation") {
    CHECK_THROWS_AS(ens::validate(config(1, 2)), InvalidConfig);
    CHECK_THROWS_AS(ens::validate(config(4, 0)), InvalidConfig);
    auto c = config(4, 2);
    c.field = ens::Field::real;
    CHECK_THROWS_AS(ens::validate(c), InvalidConfig);
    c = config(4, 2, ens::Dist::symmetrized_bernoulli);
    c.p = 0.0;
    CHECK_THROWS_AS(ens::validate(c), InvalidConfig);
    c = config(4096, 1);
    CHECK_THROWS_AS(ens::validate(c), InvalidConfig);
    CHECK_THROWS_AS(ens::dist_from_string("cauchy"), InvalidConfig);
    CHECK_THROWS_AS(ens::sample_chain(config(1, 1)), InvalidConfig);
}

TEST_CASE("sampling is deterministic and seed dependent") {
    const auto a = ens::sample_chain(config(16, 3));
    const auto b = ens::sample_chain(config(16, 3));
    const auto c = ens::sample_chain(config(16, 3, ens::Dist::complex_gaussian, 6));
    for (int k = 0; k < 3; ++k) {
        CHECK(a.matrices[k] == b.matrices[k]);
        CHECK(a.matrices[k] != c.matrices[k]);
    }
    CHECK(a.seed_trace == b.seed_trace);
    // entries depend only on their key, not on N-independent call order
    CHECK(ens::uniform01(ens::key(1, 2, 3, 4, 5)) == ens::uniform01(ens::key(1, 2, 3, 4, 5)));
    CHECK(ens::uniform01(0) > 0.0);
}

TEST_CASE("moments within the law-of-large-numbers band") {
    for (auto d : {ens::Dist::complex_gaussian, ens::Dist::real_gaussian, ens::Dist::rademacher,
                   ens::Dist::symmetrized_bernoulli}) {
        const int N = 256, n = 2;
        const auto ch = ens::sample_chain(config(N, n, d));
        cplx mean{};
        double var = 0.0;
        for (const auto& m : ch.matrices) {
            mean += m.sum();
            var += m.cwiseAbs2().sum();
        }
        const double count = double(N) * N * n;
        mean /= count;
        var /= count;
        const double band = 5.0 / std::sqrt(count);
        CHECK(std::abs(mean) * std::sqrt(double(N)) <= band);
        CHECK(std::abs(var * N - 1.0) <= band);
    }
}

TEST_CASE("rademacher modulus and real field") {
    const auto ch = ens::sample_chain(config(32, 1, ens::Dist::rademacher));
    for (Eigen::Index i = 0; i < ch.matrices[0].size(); ++i)
        CHECK(std::abs(ch.matrices[0](i)) == doctest::Approx(1.0 / std::sqrt(32.0)).epsilon(1e-14));
    const auto rg = ens::sample_chain(config(16, 1, ens::Dist::real_gaussian));
    CHECK(rg.matrices[0].imag().isZero(0.0));
}

TEST_CASE("linearization structure") {
    const auto one = ens::sample_chain(config(8, 1));
    CHECK(one.linearization == one.matrices[0]);

    const int N = 4, n = 3;
    const auto ch = ens::sample_chain(config(N, n));
    const CMatrix& X = ch.linearization;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            const CMatrix blk = X.block(a * N, b * N, N, N);
            if (b == (a + 1) % n)
                CHECK(blk == ch.matrices[a]);
            else
                CHECK(blk.isZero(0.0));
        }
    const CMatrix X3 = X * X * X;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (a != b)
                CHECK(X3.block(a * N, b * N, N, N).isZero(0.0));
    CHECK((X3.block(0, 0, N, N) - ens::product(ch)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("product eigenvalues") {
    auto single = ens::chain_from({CMatrix::Constant(1, 1, cplx(0.3, -0.7))});
    const auto e1 = ens::product_eigenvalues(single);
    REQUIRE(e1.size() == 1);
    CHECK(std::abs(e1[0] - cplx(0.3, -0.7)) < 1e-15);

    const auto ch = ens::sample_chain(config(32, 3));
    const CMatrix P = ens::product(ch);
    const auto mu = ens::product_eigenvalues(ch);
    CHECK(mu.size() == 32);
    CMatrix Pk = CMatrix::Identity(32, 32);
    for (int k = 1; k <= 3; ++k) {
        Pk = Pk * P;
        cplx s{};
        for (cplx m : mu)
            s += std::pow(m, k);
        CHECK(std::abs(s - Pk.trace()) <= 1e-6 * std::max(1.0, std::abs(Pk.trace())) + 1e-10);
    }
}

TEST_CASE("shifted Gram spectrum") {
    const auto ch = ens::sample_chain(config(24, 1));
    const auto h = ens::shifted_gram(ch, 0.0, false);
    auto sv = backend::singular_values(ch.matrices[0]);
    std::sort(sv.begin(), sv.end());
    for (std::size_t k = 0; k < sv.size(); ++k)
        CHECK(std::abs(h.eigenvalues[k] - sv[k] * sv[k]) <= 1e-8);

    const auto ch2 = ens::sample_chain(config(16, 2));
    const cplx z(0.4, 0.3);
    const auto h2 = ens::shifted_gram(ch2, z, true);
    CHECK(h2.eigenvalues.size() == 32);
    CHECK(std::is_sorted(h2.eigenvalues.begin(), h2.eigenvalues.end()));
    CHECK(h2.eigenvalues.front() >= 0.0);
    CMatrix Y = ch2.linearization;
    Y.diagonal().array() -= z;
    double logprod = 0.0;
    for (double l : h2.eigenvalues)
        logprod += std::log(l);
    const double logdet = 2.0 * std::log(std::abs(Y.partialPivLu().determinant()));
    CHECK(std::abs(logprod - logdet) <= 1e-6 * std::abs(logdet) + 1e-9);

    const auto direct = ens::gram_eigenvalues_direct(ch2.linearization, z);
    const CMatrix G = Y.adjoint() * Y;
    for (std::size_t k = 0; k < direct.size(); ++k)
        CHECK(std::abs(direct[k] - h2.eigenvalues[k]) <= 1e-10 * G.norm());
    // eigenvector residual
    for (std::size_t k = 0; k < h2.eigenvalues.size(); ++k) {
        const Eigen::VectorXcd v = h2.V.col(k);
        CHECK((G * v - h2.eigenvalues[k] * v).norm() <= 1e-8 * G.norm());
    }
}

TEST_CASE("empirical CDF of the Gram spectrum tracks the limiting density") {
    const auto ch = ens::sample_chain(config(128, 2));
    const cplx z = 0.5;
    const auto h = ens::shifted_gram(ch, z, false);
    double ks = 0.0;
    const double M = h.eigenvalues.size();
    for (std::size_t k = 0; k < h.eigenvalues.size(); ++k) {
        const double F = mc::cumulative(z, h.eigenvalues[k]);
        ks = std::max({ks, std::abs(F - k / M), std::abs(F - (k + 1) / M)});
    }
    CHECK(ks < 0.08);
}

TEST_CASE("linearization eigenvalues to the n-th power reproduce the product spectrum") {
    const auto ch = ens::sample_chain(config(32, 3, ens::Dist::complex_gaussian, 21));
    std::vector<cplx> a, b;
    for (cplx x : ens::linearization_eigenvalues(ch))
        a.push_back(std::pow(x, 3));
    for (cplx x : ens::product_eigenvalues(ch))
        for (int k = 0; k < 3; ++k)
            b.push_back(x);
    REQUIRE(a.size() == b.size());
    auto by_mod = [](cplx x, cplx y) { return std::abs(x) < std::abs(y); };
    std::sort(a.begin(), a.end(), by_mod);
    std::sort(b.begin(), b.end(), by_mod);
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(std::abs(std::abs(a[k]) - std::abs(b[k])) <= 1e-6);
}

TEST_CASE("persistence round trip") {
    auto cfg = config(8, 2, ens::Dist::symmetrized_bernoulli, 99);
    cfg.p = 0.3;
    const auto ch = ens::sample_chain(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "prodlaw_test_chain";
    std::filesystem::create_directories(dir);
    const auto path = (dir / ens::chain_filename(cfg)).string();
    ens::save_chain(ch, path);
    const auto back = ens::load_chain(path);
    CHECK(ens::canonical(back.cfg) == ens::canonical(cfg));
    CHECK(ens::config_hash(back.cfg) == ens::config_hash(cfg));
    REQUIRE(back.matrices.size() == 2);
    for (int k = 0; k < 2; ++k)
        CHECK(back.matrices[k] == ch.matrices[k]);
    CHECK(back.linearization == ch.linearization);
    CHECK(ens::chain_filename(cfg) == ens::hex64(ens::config_hash(cfg)) + ".bin");
    std::filesystem::remove_all(dir);
}

TEST_CASE("config hash separates configs") {
    auto a = config(8, 2);
    auto b = a;
    b.seed += 1;
    CHECK(ens::config_hash(a) != ens::config_hash(b));
    CHECK(ens::config_hash(a) == ens::config_hash(config(8, 2)));
    CHECK(ens::hex64(0xabcULL) == "0000000000000abc");
}

}
