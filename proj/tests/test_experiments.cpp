#include <doctest.h>

#include <cmath>
#include <numbers>

#include "prodlaw/errors.hpp"
#include "prodlaw/experiments.hpp"

using namespace prodlaw;
using namespace prodlaw::exp;
using std::numbers::pi;

namespace {

// Five-point Laplacian of a function of the plane.
template <class F>
double fd_laplacian(F&& f, cplx x, double h) {
    return (f(x + h) + f(x - h) + f(x + cplx(0, h)) + f(x - cplx(0, h)) - 4.0 * f(x)) / (h * h);
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.ensemble.N = 16;
    c.ensemble.n = 2;
    c.ensemble.seed = 123;
    c.trials = 4;
    return c;
}

std::string csv_of(const ExperimentReport& r) { return r.trials.to_csv(); }

} // namespace

TEST_SUITE("experiments") {

TEST_CASE("test functions and analytic Laplacians") {
    CHECK(test_value(TestFunction::bump, 0.0) == 1.0);
    CHECK(test_value(TestFunction::bump, 1.0) == 0.0);
    CHECK(test_value(TestFunction::bump, 1.3) == 0.0);
    for (auto f : {TestFunction::bump, TestFunction::gaussian_truncated})
        for (double r : {0.1, 0.35, 0.6, 0.85}) {
            const cplx x = std::polar(r, 0.4);
            const double fd = fd_laplacian([&](cplx y) { return test_value(f, std::abs(y)); }, x, 1e-4);
            CHECK(std::abs(fd - test_laplacian(f, r)) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
    CHECK(test_laplacian_l1(TestFunction::bump) == doctest::Approx(32.0 * pi / 9.0).epsilon(1e-10));
    CHECK(test_laplacian_l1(TestFunction::zero) == 0.0);
    CHECK(test_function_from_string("gaussian_truncated") == TestFunction::gaussian_truncated);
    CHECK_THROWS_AS(test_function_from_string("box"), InvalidConfig);
}

TEST_CASE("Laplacian chain rule for x -> x^n") {
    for (int n : {1, 2, 3})
        for (cplx x : {cplx(0.7, 0.2), cplx(-0.5, 0.6), cplx(0.8, -0.1)}) {
            const Rescaled F{TestFunction::bump, cplx(0.5, 0.0), 16.0, 0.25};
            const double fd = fd_laplacian([&](cplx y) { return F.value(std::pow(y, n)); }, x, 1e-4);
            const double exact = pullback_laplacian(F.laplacian(std::pow(x, n)), x, n);
            CHECK(std::abs(fd - exact) <= 1e-4 * std::max(1.0, std::abs(exact)));
        }
}

TEST_CASE("rescaled mass is invariant under the d-rescaling") {
    for (double d : {0.0, 0.1, 0.25, 0.5})
        for (double N : {16.0, 256.0})
            CHECK(rescaled_mass({TestFunction::bump, cplx(0.5, 0.2), N, d}) == doctest::Approx(pi / 4).epsilon(1e-9));
}

TEST_CASE("circular-law target") {
    // support inside the unit disk, n = 1: uniform density 1/pi
    CHECK(circular_target({TestFunction::bump, cplx(0.5, 0.0), 256.0, 0.25}, 1) ==
          doctest::Approx(0.25).epsilon(1e-9));
    // support outside the disk
    CHECK(std::abs(circular_target({TestFunction::bump, cplx(2.5, 0.0), 256.0, 0.25}, 2)) <= 1e-12);
    // straddling the unit circle: compare with a fine polar Riemann sum
    const Rescaled F{TestFunction::bump, cplx(0.9, 0.0), 16.0, 0.25};
    const int n = 3;
    const double R = 1.0 / F.scale();
    double acc = 0.0;
    const int M = 1500;
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < M; ++k) {
            const double r = (i + 0.5) / M, th = 2.0 * pi * (k + 0.5) / M;
            const cplx x = F.z0 + r * R * std::polar(1.0, th);
            if (std::abs(x) < 1.0)
                acc += test_value(F.f, r) * std::pow(std::abs(x), 2.0 / n - 2.0) * r;
        }
    acc *= (1.0 / M) * (2.0 * pi / M) / (n * pi);
    CHECK(circular_target(F, n) == doctest::Approx(acc).epsilon(2e-3));
}

TEST_CASE("complex literals and number formatting") {
    CHECK(parse_complex("0.5") == cplx(0.5, 0));
    CHECK(parse_complex("2+0.001i") == cplx(2, 0.001));
    CHECK(parse_complex("1-2i") == cplx(1, -2));
    CHECK(parse_complex("-i") == cplx(0, -1));
    CHECK(parse_complex("i") == cplx(0, 1));
    CHECK(parse_complex("3.5i") == cplx(0, 3.5));
    CHECK(parse_complex(" 1e-3 + 2e+2i ") == cplx(1e-3, 2e2));
    for (const char* bad : {"foo", "", "1+", "1+2j", "1i2", "nan"})
        CHECK_THROWS_AS(parse_complex(bad), InvalidConfig);
    const cplx z(0.1, -1.0 / 3.0);
    CHECK(parse_complex(format_complex(z)) == z);
    CHECK(format_double(0.1) == "1.0000000000000001e-01");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("CSV quoting") {
    Table t;
    t.columns = {"a", "b"};
    t.rows.push_back({std::int64_t(3), std::string("x,\"y\"")});
    CHECK(t.to_csv() == "a,b\r\n3,\"x,\"\"y\"\"\"\r\n");
}

TEST_CASE("statistics helpers") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(quantile({0.0, 10.0}, 0.95) == doctest::Approx(9.5));
    CHECK(loglog_slope({1, 2, 4}, {1, 0.5, 0.25}) == doctest::Approx(-1.0));
    CHECK(ks_statistic({0.5}, [](double x) { return x; }) == doctest::Approx(0.5));
}

TEST_CASE("config round trip and strict parsing") {
    RunConfig rc;
    rc.lab.ensemble.N = 32;
    rc.lab.z_list = {cplx(0.5, 0.1), cplx(1.5, 0.0)};
    rc.lab.eta_list = {0.1, 0.2};
    rc.lab.d = 1.0 / 3.0;
    rc.experiments = {"scan", "esd"};
    const std::string text = canonical_text(rc);
    CHECK(canonical_text(parse_run_config(text)) == text);

    CHECK_THROWS_AS(parse_run_config("{\"sede\": 1}"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("{\"lab\": {\"trails\": 3}}"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("{\"experiments\": [\"nope\"]}"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("{\"lab\": {\"trials\": \"many\"}}"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("{"), InvalidConfig);
    const auto parsed = parse_run_config("{\"lab\": {\"z\": [0.5, \"1.5-0.1i\"]}}");
    CHECK(parsed.lab.z_list[1] == cplx(1.5, -0.1));
}

TEST_CASE("validation enforces the bulk restriction") {
    auto c = small_config();
    c.z0 = cplx(1.0, 0.0);
    try {
        validate(c, "circular");
        CHECK(false);
    } catch (const InvalidConfig& e) {
        CHECK(std::string(e.what()).find("bulk restriction") != std::string::npos);
    }
    c.z0 = 0.5;
    c.d = 0.0;
    CHECK_NOTHROW(validate(c, "circular"));
    c.d = 0.6;
    CHECK_THROWS_AS(validate(c, "circular"), InvalidConfig);
    c = small_config();
    c.z_list = {cplx(0.98, 0.0)};
    CHECK_THROWS_AS(validate(c, "scan"), InvalidConfig);
    CHECK_THROWS_AS(run_experiment("nope", small_config()), InvalidConfig);
    CHECK(experiment_names().size() == 6);
}

TEST_CASE("per-trial seeds") {
    CHECK(seed_for(1, 64, 0) == seed_for(1, 64, 0));
    CHECK(seed_for(1, 64, 0) != seed_for(1, 64, 1));
    CHECK(seed_for(1, 64, 0) != seed_for(1, 128, 0));
    CHECK(seed_for(1, 64, 0) != seed_for(2, 64, 0));
}

TEST_CASE("pool cancellation leaves entries empty") {
    cancel_flag().store(true);
    const auto r = run_pool<int>(5, 2, [](std::size_t k) { return int(k); });
    cancel_flag().store(false);
    for (const auto& x : r)
        CHECK(!x.has_value());
    const auto ok = run_pool<int>(5, 3, [](std::size_t k) { return int(k * k); });
    for (std::size_t k = 0; k < 5; ++k)
        CHECK(ok[k].value() == int(k * k));
}

TEST_CASE("cancelled experiment marks trials incomplete") {
    cancel_flag().store(true);
    const auto rep = esd_radial_ks(small_config());
    cancel_flag().store(false);
    CHECK(rep.incomplete == 4);
    CHECK(!rep.aggregates_emitted);
    CHECK(rep.trials.rows.size() == 4);
    CHECK(std::get<std::string>(rep.trials.rows[0][3]) == "incomplete");
}

TEST_CASE("reports are independent of the worker count") {
    auto c = small_config();
    c.z_list = {cplx(0.5, 0.0), cplx(1.5, 0.0)};
    c.eta_list = {0.6};
    for (const auto& name : {"scan", "rigidity", "esd", "sv", "circular"}) {
        c.workers = 1;
        const auto a = run_experiment(name, c);
        c.workers = 3;
        const auto b = run_experiment(name, c);
        CHECK(csv_of(a) == csv_of(b));
        CHECK(a.config_hash == b.config_hash);
        CHECK(a.aggregates.dump() == b.aggregates.dump());
        CHECK(a.valid == 4);
    }
}

TEST_CASE("report contents") {
    const auto rep = smallest_sv_survey(small_config());
    const auto j = rep.to_json();
    CHECK(j["schema_version"] == 1);
    CHECK(j["experiment"] == "sv");
    CHECK(j["counts"]["valid"] == 4);
    CHECK(j["aggregates_emitted"] == true);
    const auto& g = j["aggregates"]["groups"][0];
    CHECK(g["min"].get<double>() >= 0.0);
    CHECK(rep.invalid_fraction() == 0.0);
    // lambda_1 <= lambda_max on every row
    const auto& cols = rep.trials.columns;
    const auto i1 = std::find(cols.begin(), cols.end(), "lambda1") - cols.begin();
    const auto im = std::find(cols.begin(), cols.end(), "lambda_max") - cols.begin();
    for (const auto& row : rep.trials.rows) {
        CHECK(std::get<double>(row[i1]) >= 0.0);
        CHECK(std::get<double>(row[i1]) <= std::get<double>(row[im]));
    }
}

TEST_CASE("rigidity sums and the log-moment integral") {
    // Soft edges on both sides: the right-endpoint quantile sum exceeds the
    // integral by the Euler-Maclaurin term (1/2) log(lambda_+ / lambda_-).
    auto c = small_config();
    c.ensemble.N = 64;
    c.trials = 2;
    c.z_list = {cplx(1.5, 0.0)};
    const auto rep = rigidity_experiment(c);
    const auto e = mc::edge_points(1.5);
    const double predicted = 0.5 * std::log(e.lambda_plus / e.lambda_minus);
    CHECK(rep.aggregates["groups"][0]["gamma_vs_integral"].get<double>() == doctest::Approx(predicted).epsilon(0.05));
}

TEST_CASE("quantile sum versus integral at a hard edge") {
    // rho ~ x^{-1/2} at 0 adds a Stirling term log(2 pi nN) to the
    // right-endpoint quantile sum.
    for (int N : {64, 128}) {
        auto c = small_config();
        c.ensemble.N = N;
        c.trials = 1;
        c.z_list = {cplx(0.5, 0.0)};
        const auto rep = rigidity_experiment(c);
        const double gap = rep.aggregates["groups"][0]["gamma_vs_integral"].get<double>();
        MESSAGE("N=" << N << " |sum log gamma - nN int log x rho| = " << gap);
        CHECK(gap == doctest::Approx(std::log(2.0 * pi * 2 * N)).epsilon(0.1));
    }
}

TEST_CASE("ESD for a single factor follows r^2") {
    auto c = small_config();
    c.ensemble.N = 256;
    c.ensemble.n = 1;
    c.trials = 3;
    const auto rep = esd_radial_ks(c);
    CHECK(rep.aggregates["groups"][0]["median_radial_ks"].get<double>() < 0.1);
}

TEST_CASE("global circular law at d = 0 for n = 1") {
    auto c = small_config();
    c.ensemble.n = 1;
    c.d = 0.0;
    c.trials = 10;
    c.N_list = {32, 256};
    const auto rep = local_circular_statistic(c);
    const auto& g = rep.aggregates["groups"];
    CHECK(g[1]["median_abs_stat"].get<double>() < g[0]["median_abs_stat"].get<double>());
}

TEST_CASE("Girko identity on a small chain") {
    ens::EnsembleConfig e;
    e.N = 8;
    e.n = 2;
    e.seed = 4;
    const auto ch = ens::sample_chain(e);
    const auto zero = girko_single(ch, {TestFunction::zero, cplx(0.5, 0.0), 8.0, 0.25}, 20);
    CHECK(zero.lhs == 0.0);
    CHECK(zero.rhs == 0.0);
    CHECK(zero.pass);
    const auto r = girko_single(ch, {TestFunction::bump, cplx(0.5, 0.0), 8.0, 0.25}, 60);
    CHECK(r.abs_diff <= r.error_estimate);
}

}
