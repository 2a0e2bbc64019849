#include "prodlaw/ensemble.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "prodlaw/backend.hpp"
#include "prodlaw/errors.hpp"

namespace prodlaw::ens {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'O', 'D', 'L', 'A', 'W', '\x01'};

double real_draw(const EnsembleConfig& cfg, std::uint64_t a, std::uint64_t i, std::uint64_t j, std::uint64_t comp) {
    const std::uint64_t k0 = key(cfg.seed, a, i, j, 2 * comp);
    switch (cfg.dist) {
    case Dist::complex_gaussian:
    case Dist::real_gaussian: {
        const double u1 = uniform01(k0);
        const double u2 = uniform01(key(cfg.seed, a, i, j, 2 * comp + 1));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    case Dist::rademacher:
        return (k0 >> 63) ? 1.0 : -1.0;
    case Dist::symmetrized_bernoulli: {
        const double u = uniform01(key(cfg.seed, a, i, j, 2 * comp + 1));
        if (u > cfg.p)
            return 0.0;
        return ((k0 >> 63) ? 1.0 : -1.0) / std::sqrt(cfg.p);
    }
    }
    return 0.0;
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int k = 0; k < 8; ++k)
        b[k] = static_cast<unsigned char>(v >> (8 * k));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw InvalidConfig("truncated sample file");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k)
        v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
}

void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

} // namespace

std::string to_string(Dist d) {
    switch (d) {
    case Dist::complex_gaussian:
        return "complex_gaussian";
    case Dist::real_gaussian:
        return "real_gaussian";
    case Dist::rademacher:
        return "rademacher";
    case Dist::symmetrized_bernoulli:
        return "symmetrized_bernoulli";
    }
    return "?";
}

std::string to_string(Field f) { return f == Field::real ? "real" : "complex"; }

Dist dist_from_string(const std::string& s) {
    for (Dist d : {Dist::complex_gaussian, Dist::real_gaussian, Dist::rademacher, Dist::symmetrized_bernoulli})
        if (to_string(d) == s)
            return d;
    throw InvalidConfig("unknown distribution '" + s + "'");
}

Field field_from_string(const std::string& s) {
    if (s == "real")
        return Field::real;
    if (s == "complex")
        return Field::complex;
    throw InvalidConfig("unknown scalar field '" + s + "'");
}

void validate(const EnsembleConfig& cfg) {
    if (cfg.N < 2)
        throw InvalidConfig("N must be >= 2");
    if (cfg.N > cfg.max_N)
        throw InvalidConfig("N = " + std::to_string(cfg.N) + " exceeds max_N = " + std::to_string(cfg.max_N));
    if (cfg.n < 1)
        throw InvalidConfig("chain length n must be >= 1");
    if (cfg.dist == Dist::complex_gaussian && cfg.field != Field::complex)
        throw InvalidConfig("complex_gaussian needs the complex field");
    if (cfg.dist == Dist::real_gaussian && cfg.field != Field::real)
        throw InvalidConfig("real_gaussian needs the real field");
    if (cfg.dist == Dist::symmetrized_bernoulli && !(cfg.p > 0.0 && cfg.p <= 1.0))
        throw InvalidConfig("symmetrized_bernoulli needs 0 < p <= 1");
}

std::string canonical(const EnsembleConfig& cfg) {
    char p[40];
    std::snprintf(p, sizeof p, "%.17g", cfg.p);
    std::ostringstream os;
    os << "N=" << cfg.N << ";n=" << cfg.n << ";dist=" << to_string(cfg.dist) << ";p=" << p << ";seed=" << cfg.seed
       << ";field=" << to_string(cfg.field);
    return os.str();
}

std::uint64_t config_hash(const EnsembleConfig& cfg) {
    // FNV-1a
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canonical(cfg)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t key(std::uint64_t seed, std::uint64_t a, std::uint64_t i, std::uint64_t j, std::uint64_t c) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t v : {a, i, j, c})
        h = mix64(h ^ mix64(v));
    return h;
}

double uniform01(std::uint64_t k) { return (static_cast<double>(k >> 11) + 1.0) * 0x1.0p-53; }

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial) { return mix64(mix64(master) ^ mix64(~trial)); }

ChainSample sample_chain(const EnsembleConfig& cfg) {
    validate(cfg);
    const int N = cfg.N;
    ChainSample out;
    out.cfg = cfg;
    const bool cx = cfg.field == Field::complex;
    const double scale = cx ? 1.0 / std::sqrt(2.0 * N) : 1.0 / std::sqrt(static_cast<double>(N));
    for (int a = 0; a < cfg.n; ++a) {
        CMatrix m(N, N);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                const double re = real_draw(cfg, a, i, j, 0);
                const double im = cx ? real_draw(cfg, a, i, j, 1) : 0.0;
                m(i, j) = cplx(re, im) * scale;
            }
        out.matrices.push_back(std::move(m));
        out.seed_trace.push_back(key(cfg.seed, a, ~0ULL, ~0ULL, 0));
    }
    out.linearization = linearize(out);
    return out;
}

ChainSample chain_from(std::vector<CMatrix> matrices) {
    if (matrices.empty())
        throw InvalidConfig("empty chain");
    const auto N = matrices.front().rows();
    for (const auto& m : matrices)
        if (m.rows() != N || m.cols() != N)
            throw InvalidConfig("chain matrices must all be N x N");
    ChainSample out;
    out.cfg.N = static_cast<int>(N);
    out.cfg.n = static_cast<int>(matrices.size());
    out.matrices = std::move(matrices);
    out.seed_trace.assign(out.matrices.size(), 0);
    out.linearization = linearize(out);
    return out;
}

CMatrix linearize(const ChainSample& chain) {
    const int n = static_cast<int>(chain.matrices.size());
    const auto N = chain.matrices.front().rows();
    CMatrix x = CMatrix::Zero(n * N, n * N);
    for (int a = 0; a < n; ++a)
        x.block(a * N, ((a + 1) % n) * N, N, N) = chain.matrices[a];
    return x;
}

CMatrix product(const ChainSample& chain) {
    CMatrix p = chain.matrices.front();
    for (std::size_t a = 1; a < chain.matrices.size(); ++a)
        p = p * chain.matrices[a];
    return p;
}

std::vector<cplx> product_eigenvalues(const ChainSample& chain) { return backend::eigenvalues(product(chain)); }

std::vector<cplx> linearization_eigenvalues(const ChainSample& chain) {
    return backend::eigenvalues(chain.linearization.size() ? chain.linearization : linearize(chain));
}

HermitizedSpectrum shifted_gram(const CMatrix& x, int n, cplx z, bool keep_vectors) {
    CMatrix y = x;
    y.diagonal().array() -= z;
    HermitizedSpectrum h;
    h.z = z;
    h.n = n;
    h.block = static_cast<std::size_t>(x.rows() / n);
    const auto dim = static_cast<std::size_t>(x.rows());
    if (keep_vectors) {
        backend::Svd s = backend::svd(y);
        // Reverse to ascending order.
        h.eigenvalues.resize(dim);
        h.U.resize(dim, dim);
        h.V.resize(dim, dim);
        for (std::size_t k = 0; k < dim; ++k) {
            const std::size_t src = dim - 1 - k;
            h.eigenvalues[k] = s.s[src] * s.s[src];
            h.U.col(k) = s.U.col(src);
            h.V.col(k) = s.V.col(src);
        }
        h.has_vectors = true;
    } else {
        auto sv = backend::singular_values(y);
        h.eigenvalues.resize(dim);
        for (std::size_t k = 0; k < dim; ++k)
            h.eigenvalues[k] = sv[dim - 1 - k] * sv[dim - 1 - k];
    }
    return h;
}

HermitizedSpectrum shifted_gram(const ChainSample& chain, cplx z, bool keep_vectors) {
    return shifted_gram(chain.linearization.size() ? chain.linearization : linearize(chain),
                        static_cast<int>(chain.matrices.size()), z, keep_vectors);
}

std::vector<double> gram_eigenvalues_direct(const CMatrix& x, cplx z) {
    CMatrix y = x;
    y.diagonal().array() -= z;
    const CMatrix g = y.adjoint() * y;
    auto ev = backend::hermitian_eigenvalues(g);
    for (double& v : ev)
        if (v < 0.0 && v > -1e-12)
            v = 0.0;
    return ev;
}

void save_chain(const ChainSample& chain, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw InvalidConfig("cannot open '" + path + "' for writing");
    const auto& c = chain.cfg;
    os.write(kMagic, 8);
    put_u64(os, config_hash(c));
    put_u64(os, c.seed);
    put_u64(os, static_cast<std::uint64_t>(c.N));
    put_u64(os, static_cast<std::uint64_t>(c.n));
    put_u64(os, static_cast<std::uint64_t>(c.dist));
    put_u64(os, static_cast<std::uint64_t>(c.field));
    put_f64(os, c.p);
    for (const auto& m : chain.matrices)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                put_f64(os, m(i, j).real());
                put_f64(os, m(i, j).imag());
            }
    if (!os)
        throw InvalidConfig("write to '" + path + "' failed");
}

ChainSample load_chain(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw InvalidConfig("cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw InvalidConfig("'" + path + "' is not a prodlaw sample file");
    const std::uint64_t hash = get_u64(is);
    EnsembleConfig c;
    c.seed = get_u64(is);
    c.N = static_cast<int>(get_u64(is));
    c.n = static_cast<int>(get_u64(is));
    const auto d = get_u64(is), f = get_u64(is);
    if (d > 3 || f > 1)
        throw InvalidConfig("corrupt header in '" + path + "'");
    c.dist = static_cast<Dist>(d);
    c.field = static_cast<Field>(f);
    c.p = get_f64(is);
    if (config_hash(c) != hash)
        throw InvalidConfig("config hash mismatch in '" + path + "'");
    ChainSample out;
    out.cfg = c;
    for (int a = 0; a < c.n; ++a) {
        CMatrix m(c.N, c.N);
        for (int j = 0; j < c.N; ++j)
            for (int i = 0; i < c.N; ++i) {
                const double re = get_f64(is);
                const double im = get_f64(is);
                m(i, j) = cplx(re, im);
            }
        out.matrices.push_back(std::move(m));
        out.seed_trace.push_back(key(c.seed, a, ~0ULL, ~0ULL, 0));
    }
    out.linearization = linearize(out);
    return out;
}

std::string chain_filename(const EnsembleConfig& cfg) { return hex64(config_hash(cfg)) + ".bin"; }

} // namespace prodlaw::ens
