#pragma once

// Monte Carlo experiments over sampled chains. Every trial is a pure function
// of (master seed, N, trial index), so reports do not depend on the worker
// count or scheduling.

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "prodlaw/ensemble.hpp"
#include "prodlaw/mc_core.hpp"

namespace prodlaw::exp {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Test functions: radial, compactly supported in the unit disk.

enum class TestFunction { bump, gaussian_truncated, zero };
std::string to_string(TestFunction f);
TestFunction test_function_from_string(const std::string& s);

/// f(r) and its Laplacian, both as functions of r = |x|.
double test_value(TestFunction f, double r);
double test_laplacian(TestFunction f, double r);
/// ||Delta f||_{L1(R^2)} by radial quadrature.
double test_laplacian_l1(TestFunction f);

/// f_{z0}(x) = N^{2d} f(N^d (x - z0)) and its Laplacian.
struct Rescaled {
    TestFunction f = TestFunction::bump;
    cplx z0{};
    double N = 1.0;
    double d = 0.0;
    double scale() const;  // N^d
    double value(cplx x) const;
    double laplacian(cplx x) const;
};

/// Laplacian of x -> h(x^n) from the Laplacian of h.
double pullback_laplacian(double lap_h_at_xn, cplx x, int n);

/// (1/(n pi)) int_{|x|<1} f_{z0}(x) |x|^{2/n - 2} dA.
double circular_target(const Rescaled& f, int n);
/// int f_{z0} dA (equals int f by the change of variables).
double rescaled_mass(const Rescaled& f);

// ---------------------------------------------------------------------------
// Reports.

using Value = std::variant<std::int64_t, double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Value>> rows;
    std::string to_csv() const;
};

/// Full precision, 17 significant digits.
std::string format_double(double x);

/// Accepts "a", "a+bi", "a-bi", "bi", "i", "-i"; throws InvalidConfig otherwise.
cplx parse_complex(const std::string& s);
std::string format_complex(cplx z);

struct Check {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool upper = true;  // pass iff value <= threshold (else value >= threshold)
    bool pass = false;
};

struct ExperimentReport {
    static constexpr int schema_version = 1;
    std::string experiment;
    std::string config_hash;
    json config;
    Table trials;
    json aggregates = json::object();
    std::size_t valid = 0, invalid = 0, incomplete = 0;
    bool aggregates_emitted = false;
    std::vector<Check> checks;
    std::vector<std::string> warnings;

    bool all_checks_pass() const;
    double invalid_fraction() const;
    json to_json() const;
};

/// Writes <experiment>-<hash>.json and .csv into dir; returns both paths.
std::pair<std::string, std::string> write_report(const ExperimentReport& r, const std::string& dir);

// ---------------------------------------------------------------------------
// Configuration.

struct Thresholds {
    double scan_scaled_error = 5.0;  // median sup|m - m_c| * N eta
    double scan_slope_lo = -1.3, scan_slope_hi = -0.7;
    double rigidity_q95 = 10.0;
    double esd_radial_ks = 0.05;
    double esd_angular_ks = 0.05;
    double circular_ratio_q95 = 10.0;
    std::int64_t sv_max_count = 0;
};

struct ExperimentConfig {
    ens::EnsembleConfig ensemble;       // N, n, law, master seed
    std::vector<int> N_list;            // ladder; empty means {ensemble.N}
    int trials = 20;
    std::vector<cplx> z_list{cplx(0.5, 0.0)};
    std::vector<double> eta_list{0.2};
    int E_points = 16;
    double delta = 0.1;
    double Q = 1.0;
    double tau = 0.05;
    cplx z0{0.5, 0.0};
    double d = 0.25;
    TestFunction test_function = TestFunction::bump;
    double B = 6.0;
    int girko_grid = 100;
    bool diagnostics = false;           // partial traces in the local-law scan
    int workers = 1;
    Thresholds thresholds;

    std::vector<int> ladder() const;
};

/// Throws InvalidConfig with the offending field named.
void validate(const ExperimentConfig& cfg, const std::string& experiment);

json to_json(const ExperimentConfig& cfg);
/// Strict: unknown keys are errors.
ExperimentConfig config_from_json(const json& j);

/// Top-level run file: the experiment config plus output directory and the
/// experiments to run.
struct RunConfig {
    ExperimentConfig lab;
    std::string output = "prodlaw-out";
    std::vector<std::string> experiments;  // empty means all
};

json to_json(const RunConfig& rc);
RunConfig run_config_from_json(const json& j);
/// Parses JSON text; syntax errors become InvalidConfig.
RunConfig parse_run_config(const std::string& text);
/// Serialized form used for round-trip checks.
std::string canonical_text(const RunConfig& rc);

/// Per-trial seed; decorrelated across N.
std::uint64_t seed_for(std::uint64_t master, int N, std::uint64_t trial);

// ---------------------------------------------------------------------------
// Execution.

/// Set from a signal handler to stop scheduling new trials.
std::atomic<bool>& cancel_flag();

/// Runs f(0..count-1) on a bounded pool; result k is stored at index k.
/// Entries stay empty when cancelled before they started.
template <class R>
std::vector<std::optional<R>> run_pool(std::size_t count, int workers, const std::function<R(std::size_t)>& f);

ExperimentReport local_law_scan(const ExperimentConfig& cfg);
ExperimentReport rigidity_experiment(const ExperimentConfig& cfg);
ExperimentReport local_circular_statistic(const ExperimentConfig& cfg);
ExperimentReport esd_radial_ks(const ExperimentConfig& cfg);
ExperimentReport smallest_sv_survey(const ExperimentConfig& cfg);
ExperimentReport girko_identity_check(const ExperimentConfig& cfg);

ExperimentReport run_experiment(const std::string& name, const ExperimentConfig& cfg);
const std::vector<std::string>& experiment_names();

// Statistics helpers.
double quantile(std::vector<double> v, double q);
double median(std::vector<double> v);
/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);
/// sup_x |F_emp(x) - F(x)| for samples and a continuous CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

// Girko details, exposed for tests.
struct GirkoResult {
    double lhs = 0.0;
    double rhs = 0.0;         // fine grid
    double rhs_coarse = 0.0;
    double error_estimate = 0.0;
    double abs_diff = 0.0;
    int near_eigenvalue = 0;  // fine-grid nodes within 1e-6 of an eigenvalue
    bool pass = false;
};
GirkoResult girko_single(const ens::ChainSample& chain, const Rescaled& f, int grid);

} // namespace prodlaw::exp

#include "prodlaw/detail/pool.hpp"
