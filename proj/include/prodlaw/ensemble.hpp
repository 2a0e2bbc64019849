#pragma once

// Sampling of X_1, ..., X_n, the block-cyclic linearization X, products and
// the hermitized spectra of Y_z = X - z.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prodlaw/mc_core.hpp"

namespace prodlaw::ens {

using CMatrix = Eigen::MatrixXcd;

enum class Dist { complex_gaussian, real_gaussian, rademacher, symmetrized_bernoulli };
enum class Field { real, complex };

std::string to_string(Dist d);
std::string to_string(Field f);
Dist dist_from_string(const std::string& s);
Field field_from_string(const std::string& s);

struct EnsembleConfig {
    int N = 64;
    int n = 2;
    Dist dist = Dist::complex_gaussian;
    double p = 0.5;  // symmetrized_bernoulli only
    std::uint64_t seed = 0;
    Field field = Field::complex;
    int max_N = 2048;
};

/// Throws InvalidConfig.
void validate(const EnsembleConfig& cfg);

/// Canonical one-line description; equal configs give equal strings.
std::string canonical(const EnsembleConfig& cfg);
std::uint64_t config_hash(const EnsembleConfig& cfg);
std::string hex64(std::uint64_t v);

// Counter-based generator: every value is a pure function of its key.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t key(std::uint64_t seed, std::uint64_t a, std::uint64_t i, std::uint64_t j, std::uint64_t c);
double uniform01(std::uint64_t k);  // in (0, 1]
/// Per-trial seed derived from a master seed.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial);

struct ChainSample {
    EnsembleConfig cfg;
    std::vector<CMatrix> matrices;
    std::vector<std::uint64_t> seed_trace;  // substream id per matrix
    CMatrix linearization;
};

ChainSample sample_chain(const EnsembleConfig& cfg);
/// Chain from given matrices (all N x N, N >= 1).
ChainSample chain_from(std::vector<CMatrix> matrices);

CMatrix linearize(const ChainSample& chain);
/// X_1 X_2 ... X_n.
CMatrix product(const ChainSample& chain);

std::vector<cplx> product_eigenvalues(const ChainSample& chain);
std::vector<cplx> linearization_eigenvalues(const ChainSample& chain);

struct HermitizedSpectrum {
    cplx z;
    std::vector<double> eigenvalues;  // ascending, of Y^* Y
    bool has_vectors = false;
    CMatrix U;  // left singular vectors of Y, column k matches eigenvalues[k]
    CMatrix V;  // right singular vectors of Y (eigenvectors of Y^* Y)
    std::size_t block = 0;  // N
    int n = 1;
};

/// Squared singular values of Y_z = X - z in ascending order, from the SVD of Y.
HermitizedSpectrum shifted_gram(const ChainSample& chain, cplx z, bool keep_vectors);
HermitizedSpectrum shifted_gram(const CMatrix& x, int n, cplx z, bool keep_vectors);

/// Oracle path: eigenvalues of the explicitly formed Gram matrix (zheevd).
std::vector<double> gram_eigenvalues_direct(const CMatrix& x, cplx z);

// Persistence: little-endian header followed by interleaved re/im doubles.
void save_chain(const ChainSample& chain, const std::string& path);
ChainSample load_chain(const std::string& path);
/// Content-addressed name hex(config hash) + ".bin".
std::string chain_filename(const EnsembleConfig& cfg);

} // namespace prodlaw::ens
