#include "prodlaw/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "prodlaw/backend.hpp"
#include "prodlaw/errors.hpp"
#include "prodlaw/resolvent_lab.hpp"
#include "quadrature.hpp"

namespace prodlaw::exp {

namespace {

constexpr double kPi = std::numbers::pi;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

// Radial profile F(u), u = r^2, and the Laplacian 4 (u F'' + F').
double profile_lap(TestFunction f, double u) {
    if (u >= 1.0)
        return 0.0;
    const double v = 1.0 - u;
    switch (f) {
    case TestFunction::bump:
        return 12.0 * v * (3.0 * u - 1.0);
    case TestFunction::gaussian_truncated: {
        const double e = std::exp(-4.0 * u);
        const double F1 = e * (-4.0 * v * v * v - 3.0 * v * v);
        const double F2 = e * (16.0 * v * v * v + 24.0 * v * v + 6.0 * v);
        return 4.0 * (u * F2 + F1);
    }
    case TestFunction::zero:
        return 0.0;
    }
    return 0.0;
}

bool bulk(double r, double tau) { return (r >= tau && r <= 1.0 - tau) || (r >= 1.0 + tau && r <= 1.0 / tau); }

std::string hash_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return ens::hex64(h);
}

std::string csv_field(const Value& v) {
    if (std::holds_alternative<std::int64_t>(v))
        return std::to_string(std::get<std::int64_t>(v));
    if (std::holds_alternative<double>(v))
        return format_double(std::get<double>(v));
    const std::string& s = std::get<std::string>(v);
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

// ---- trial driver ---------------------------------------------------------

struct Unit {
    int N = 0;
    int trial = 0;
    std::uint64_t seed = 0;
};

template <class P>
struct Outcome {
    std::vector<std::vector<Value>> rows;
    P payload;
};

template <class P>
struct Done {
    bool ok = false;
    std::string error;
    Outcome<P> out;
};

std::vector<Unit> ladder_units(const ExperimentConfig& cfg) {
    std::vector<Unit> units;
    for (int N : cfg.ladder())
        for (int t = 0; t < cfg.trials; ++t)
            units.push_back({N, t, seed_for(cfg.ensemble.seed, N, static_cast<std::uint64_t>(t))});
    return units;
}

ens::EnsembleConfig ensemble_for(const ExperimentConfig& cfg, const Unit& u) {
    ens::EnsembleConfig e = cfg.ensemble;
    e.N = u.N;
    e.seed = u.seed;
    return e;
}

// Runs every unit, fills the per-trial table and counts, and returns the
// payloads of valid units in unit order.
template <class P>
std::vector<std::pair<Unit, P>> drive(const ExperimentConfig& cfg, ExperimentReport& rep,
                                      const std::vector<std::string>& cols, const std::vector<Unit>& units,
                                      const std::function<Outcome<P>(const Unit&)>& fn) {
    rep.trials.columns = {"N", "trial", "seed", "status"};
    rep.trials.columns.insert(rep.trials.columns.end(), cols.begin(), cols.end());
    rep.trials.columns.push_back("note");

    std::function<Done<P>(std::size_t)> job = [&](std::size_t k) {
        Done<P> d;
        try {
            d.out = fn(units[k]);
            d.ok = true;
        } catch (const std::exception& e) {
            d.error = e.what();
        }
        return d;
    };
    auto results = run_pool<Done<P>>(units.size(), cfg.workers, job);

    std::vector<std::pair<Unit, P>> ok;
    auto blank = [&](const Unit& u, const std::string& status, const std::string& note) {
        std::vector<Value> row{std::int64_t(u.N), std::int64_t(u.trial), ens::hex64(u.seed), status};
        for (std::size_t c = 0; c < cols.size(); ++c)
            row.emplace_back(std::string());
        row.emplace_back(note);
        rep.trials.rows.push_back(std::move(row));
    };
    for (std::size_t k = 0; k < units.size(); ++k) {
        const Unit& u = units[k];
        if (!results[k]) {
            ++rep.incomplete;
            blank(u, "incomplete", "cancelled");
        } else if (!results[k]->ok) {
            ++rep.invalid;
            blank(u, "invalid", results[k]->error);
        } else {
            ++rep.valid;
            for (auto& r : results[k]->out.rows) {
                std::vector<Value> row{std::int64_t(u.N), std::int64_t(u.trial), ens::hex64(u.seed), std::string("ok")};
                row.insert(row.end(), r.begin(), r.end());
                row.emplace_back(std::string());
                rep.trials.rows.push_back(std::move(row));
            }
            ok.emplace_back(u, std::move(results[k]->out.payload));
        }
    }
    const std::size_t total = units.size();
    rep.aggregates_emitted = total > 0 && 10 * rep.valid >= 9 * total;
    if (!rep.aggregates_emitted)
        rep.warnings.push_back("fewer than 90% valid trials; aggregates withheld");
    return ok;
}

ExperimentReport start(const std::string& name, const ExperimentConfig& cfg) {
    validate(cfg, name);
    ExperimentReport rep;
    rep.experiment = name;
    rep.config = to_json(cfg);
    json hashed = rep.config;
    hashed.erase("workers");
    rep.config_hash = hash_hex(name + "\n" + hashed.dump());
    return rep;
}

void add_check(ExperimentReport& rep, const std::string& name, double value, double threshold, bool upper) {
    Check c{name, value, threshold, upper, upper ? value <= threshold : value >= threshold};
    rep.checks.push_back(c);
}

std::string zlabel(cplx z) { return format_complex(z); }

json zjson(cplx z) { return json::array({z.real(), z.imag()}); }

double gk(const std::function<double(double)>& f, double a, double b, double tol = 1e-10) {
    return detail::gk15(f, a, b, tol, 15).value;
}

} // namespace

// ---------------------------------------------------------------------------

std::string to_string(TestFunction f) {
    switch (f) {
    case TestFunction::bump:
        return "bump";
    case TestFunction::gaussian_truncated:
        return "gaussian_truncated";
    case TestFunction::zero:
        return "zero";
    }
    return "?";
}

TestFunction test_function_from_string(const std::string& s) {
    for (TestFunction f : {TestFunction::bump, TestFunction::gaussian_truncated, TestFunction::zero})
        if (to_string(f) == s)
            return f;
    throw InvalidConfig("unknown test function '" + s + "'");
}

double test_value(TestFunction f, double r) {
    const double u = r * r;
    if (u >= 1.0)
        return 0.0;
    const double v = 1.0 - u;
    switch (f) {
    case TestFunction::bump:
        return v * v * v;
    case TestFunction::gaussian_truncated:
        return std::exp(-4.0 * u) * v * v * v;
    case TestFunction::zero:
        return 0.0;
    }
    return 0.0;
}

double test_laplacian(TestFunction f, double r) { return profile_lap(f, r * r); }

double test_laplacian_l1(TestFunction f) {
    auto g = [&](double r) { return std::abs(test_laplacian(f, r)) * r; };
    // Split at the sign changes of the Laplacian.
    std::vector<double> cuts{0.0};
    const int M = 64;
    for (int k = 1; k < M; ++k) {
        const double a = double(k - 1) / M, b = double(k) / M;
        if (test_laplacian(f, a) * test_laplacian(f, b) < 0.0) {
            double lo = a, hi = b;
            for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                const double mid = 0.5 * (lo + hi);
                (test_laplacian(f, lo) * test_laplacian(f, mid) <= 0.0 ? hi : lo) = mid;
            }
            cuts.push_back(0.5 * (lo + hi));
        }
    }
    cuts.push_back(1.0);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
        acc += gk(g, cuts[k], cuts[k + 1], 1e-12);
    return 2.0 * kPi * acc;
}

double Rescaled::scale() const { return std::pow(N, d); }

double Rescaled::value(cplx x) const {
    const double s = scale();
    return s * s * test_value(f, std::abs(s * (x - z0)));
}

double Rescaled::laplacian(cplx x) const {
    const double s = scale();
    return s * s * s * s * test_laplacian(f, std::abs(s * (x - z0)));
}

double pullback_laplacian(double lap, cplx x, int n) {
    return lap * n * n * std::pow(std::abs(x), 2.0 * (n - 1));
}

namespace {

// int over the unit disk in r (polar around z0, radius 1/scale) of
// f(r) g(z0 + r R e^{i theta}) r dr dtheta.
double polar_integral(const Rescaled& F, const std::function<double(cplx)>& g, bool unit_disk_cut) {
    const double R = 1.0 / F.scale();
    const cplx z0 = F.z0;
    auto inner = [&](double th) {
        const cplx e = std::polar(1.0, th);
        const double b = (z0 * std::conj(e)).real();
        std::vector<double> cuts{0.0, 1.0};
        if (unit_disk_cut) {
            const double disc = b * b - (std::norm(z0) - 1.0);
            if (disc > 0.0)
                for (double sg : {-1.0, 1.0}) {
                    const double r = (-b + sg * std::sqrt(disc)) / R;
                    if (r > 0.0 && r < 1.0)
                        cuts.push_back(r);
                }
        }
        const double closest = -b / R;  // nearest approach to the origin
        if (closest > 0.0 && closest < 1.0)
            cuts.push_back(closest);
        std::sort(cuts.begin(), cuts.end());
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            if (cuts[k + 1] - cuts[k] <= 0.0)
                continue;
            acc += gk([&](double r) { return test_value(F.f, r) * g(z0 + r * R * e) * r; }, cuts[k], cuts[k + 1],
                      1e-11);
        }
        return acc;
    };
    return gk(inner, 0.0, 2.0 * kPi, 1e-10);
}

} // namespace

double circular_target(const Rescaled& F, int n) {
    if (F.f == TestFunction::zero)
        return 0.0;
    const double p = 2.0 / n - 2.0;
    auto g = [&](cplx x) {
        const double a = std::abs(x);
        return a < 1.0 ? (p == 0.0 ? 1.0 : std::pow(a, p)) : 0.0;
    };
    return polar_integral(F, g, true) / (n * kPi);
}

double rescaled_mass(const Rescaled& F) {
    if (F.f == TestFunction::zero)
        return 0.0;
    return polar_integral(F, [](cplx) { return 1.0; }, false);
}

// ---------------------------------------------------------------------------

std::string format_double(double x) {
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", x);
    return buf;
}

std::string Table::to_csv() const {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c)
        out += (c ? "," : "") + csv_field(columns[c]);
    out += "\r\n";
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            out += (c ? "," : "") + csv_field(row[c]);
        out += "\r\n";
    }
    return out;
}

cplx parse_complex(const std::string& raw) {
    std::string s;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c)))
            s += c;
    auto fail = [&] { return InvalidConfig("invalid complex literal '" + raw + "' (expected a+bi)"); };
    if (s.empty())
        throw fail();
    auto num = [&](const std::string& t) {
        if (t.empty())
            throw fail();
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(t, &pos);
        } catch (...) {
            throw fail();
        }
        if (pos != t.size() || !std::isfinite(v))
            throw fail();
        return v;
    };
    if (s.back() != 'i')
        return {num(s), 0.0};
    const std::string body = s.substr(0, s.size() - 1);
    // Split at the last sign that is not leading and not an exponent sign.
    std::size_t split = std::string::npos;
    for (std::size_t k = body.size(); k-- > 1;)
        if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
            split = k;
            break;
        }
    const std::string re = split == std::string::npos ? "" : body.substr(0, split);
    std::string im = split == std::string::npos ? body : body.substr(split);
    double imv;
    if (im.empty() || im == "+")
        imv = 1.0;
    else if (im == "-")
        imv = -1.0;
    else
        imv = num(im);
    return {re.empty() ? 0.0 : num(re), imv};
}

std::string format_complex(cplx z) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g%+.17gi", z.real(), z.imag());
    return buf;
}

bool ExperimentReport::all_checks_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

double ExperimentReport::invalid_fraction() const {
    const double total = static_cast<double>(valid + invalid + incomplete);
    return total > 0 ? static_cast<double>(invalid) / total : 0.0;
}

json ExperimentReport::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["experiment"] = experiment;
    j["config_hash"] = config_hash;
    j["config"] = config;
    j["counts"] = {{"valid", valid}, {"invalid", invalid}, {"incomplete", incomplete}};
    j["aggregates_emitted"] = aggregates_emitted;
    j["aggregates"] = aggregates_emitted ? aggregates : json::object();
    json cs = json::array();
    for (const auto& c : checks)
        cs.push_back({{"name", c.name},
                      {"value", c.value},
                      {"threshold", c.threshold},
                      {"direction", c.upper ? "<=" : ">="},
                      {"pass", c.pass}});
    j["checks"] = cs;
    j["warnings"] = warnings;
    return j;
}

std::pair<std::string, std::string> write_report(const ExperimentReport& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string base = (std::filesystem::path(dir) / (r.experiment + "-" + r.config_hash)).string();
    {
        std::ofstream os(base + ".json", std::ios::binary);
        os << r.to_json().dump(2) << "\n";
        if (!os)
            throw InvalidConfig("cannot write " + base + ".json");
    }
    {
        std::ofstream os(base + ".csv", std::ios::binary);
        os << r.trials.to_csv();
        if (!os)
            throw InvalidConfig("cannot write " + base + ".csv");
    }
    return {base + ".json", base + ".csv"};
}

// ---------------------------------------------------------------------------

std::vector<int> ExperimentConfig::ladder() const { return N_list.empty() ? std::vector<int>{ensemble.N} : N_list; }

void validate(const ExperimentConfig& cfg, const std::string& experiment) {
    for (int N : cfg.ladder()) {
        ens::EnsembleConfig e = cfg.ensemble;
        e.N = N;
        ens::validate(e);
    }
    if (cfg.trials < 1)
        throw InvalidConfig("lab.trials must be >= 1");
    if (cfg.workers < 1)
        throw InvalidConfig("workers must be >= 1");
    if (!(cfg.tau > 0.0 && cfg.tau < 0.5))
        throw InvalidConfig("lab.tau must lie in (0, 0.5)");
    if (cfg.E_points < 1)
        throw InvalidConfig("lab.E_points must be >= 1");
    if (!(cfg.delta >= 0.0))
        throw InvalidConfig("lab.delta must be >= 0");
    if (cfg.girko_grid < 4)
        throw InvalidConfig("lab.girko_grid must be >= 4");
    if (!(cfg.d >= 0.0 && cfg.d <= 0.5))
        throw InvalidConfig("lab.d must lie in [0, 1/2]");
    for (double eta : cfg.eta_list)
        if (!(eta >= lab::kEtaFloor && eta <= 1.0))
            throw InvalidConfig("lab.eta entries must lie in [1e-8, 1]");
    const bool uses_z = experiment == "scan" || experiment == "rigidity" || experiment == "sv";
    if (uses_z) {
        if (cfg.z_list.empty())
            throw InvalidConfig("lab.z must not be empty");
        for (cplx z : cfg.z_list)
            if (!bulk(std::abs(z), cfg.tau))
                throw InvalidConfig("lab.z = " + format_complex(z) +
                                    " violates the bulk restriction tau <= |z| <= 1 - tau or 1 + tau <= |z| <= 1/tau");
    }
    if (experiment == "scan" && cfg.eta_list.empty())
        throw InvalidConfig("lab.eta must not be empty");
    if (experiment == "circular" || experiment == "girko") {
        const double r = std::abs(cfg.z0);
        if (r < cfg.tau || std::abs(1.0 - r) < cfg.tau)
            throw InvalidConfig("lab.z0 = " + format_complex(cfg.z0) +
                                " violates the bulk restriction |z0| >= tau and ||z0| - 1| >= tau");
    }
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.ensemble.seed;
    j["workers"] = c.workers;
    j["ensemble"] = {{"N", c.ensemble.N},
                     {"n", c.ensemble.n},
                     {"dist", ens::to_string(c.ensemble.dist)},
                     {"p", c.ensemble.p},
                     {"field", ens::to_string(c.ensemble.field)},
                     {"max_N", c.ensemble.max_N}};
    json zs = json::array();
    for (cplx z : c.z_list)
        zs.push_back(format_complex(z));
    j["lab"] = {{"N_list", c.N_list},
                {"trials", c.trials},
                {"z", zs},
                {"eta", c.eta_list},
                {"E_points", c.E_points},
                {"delta", c.delta},
                {"Q", c.Q},
                {"tau", c.tau},
                {"z0", format_complex(c.z0)},
                {"d", c.d},
                {"test_function", to_string(c.test_function)},
                {"B", c.B},
                {"girko_grid", c.girko_grid},
                {"diagnostics", c.diagnostics}};
    const Thresholds& t = c.thresholds;
    j["thresholds"] = {{"scan_scaled_error", t.scan_scaled_error},
                       {"scan_slope_lo", t.scan_slope_lo},
                       {"scan_slope_hi", t.scan_slope_hi},
                       {"rigidity_q95", t.rigidity_q95},
                       {"esd_radial_ks", t.esd_radial_ks},
                       {"esd_angular_ks", t.esd_angular_ks},
                       {"circular_ratio_q95", t.circular_ratio_q95},
                       {"sv_max_count", t.sv_max_count}};
    return j;
}

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw InvalidConfig(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || it.key() == a;
        if (!ok)
            throw InvalidConfig("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const std::exception&) {
        throw InvalidConfig("bad value for " + where + "." + key);
    }
}

cplx read_complex(const json& v, const std::string& what) {
    if (v.is_number())
        return {v.get<double>(), 0.0};
    if (v.is_string())
        return parse_complex(v.get<std::string>());
    throw InvalidConfig(what + " must be a number or a string like \"a+bi\"");
}

} // namespace

ExperimentConfig config_from_json(const json& j) {
    only_keys(j, "config", {"seed", "workers", "ensemble", "lab", "thresholds"});
    ExperimentConfig c;
    read(j, "seed", c.ensemble.seed, "config");
    read(j, "workers", c.workers, "config");
    if (j.contains("ensemble")) {
        const json& e = j["ensemble"];
        only_keys(e, "ensemble", {"N", "n", "dist", "p", "field", "max_N"});
        read(e, "N", c.ensemble.N, "ensemble");
        read(e, "n", c.ensemble.n, "ensemble");
        read(e, "p", c.ensemble.p, "ensemble");
        read(e, "max_N", c.ensemble.max_N, "ensemble");
        std::string s;
        if (e.contains("dist")) {
            read(e, "dist", s, "ensemble");
            c.ensemble.dist = ens::dist_from_string(s);
        }
        if (e.contains("field")) {
            read(e, "field", s, "ensemble");
            c.ensemble.field = ens::field_from_string(s);
        } else if (c.ensemble.dist == ens::Dist::real_gaussian) {
            c.ensemble.field = ens::Field::real;
        }
    }
    if (j.contains("lab")) {
        const json& l = j["lab"];
        only_keys(l, "lab", {"N_list", "trials", "z", "eta", "E_points", "delta", "Q", "tau", "z0", "d",
                             "test_function", "B", "girko_grid", "diagnostics"});
        read(l, "N_list", c.N_list, "lab");
        read(l, "trials", c.trials, "lab");
        read(l, "eta", c.eta_list, "lab");
        read(l, "E_points", c.E_points, "lab");
        read(l, "delta", c.delta, "lab");
        read(l, "Q", c.Q, "lab");
        read(l, "tau", c.tau, "lab");
        read(l, "d", c.d, "lab");
        read(l, "B", c.B, "lab");
        read(l, "girko_grid", c.girko_grid, "lab");
        read(l, "diagnostics", c.diagnostics, "lab");
        if (l.contains("z")) {
            if (!l["z"].is_array())
                throw InvalidConfig("lab.z must be an array");
            c.z_list.clear();
            for (const auto& v : l["z"])
                c.z_list.push_back(read_complex(v, "lab.z"));
        }
        if (l.contains("z0"))
            c.z0 = read_complex(l["z0"], "lab.z0");
        if (l.contains("test_function")) {
            std::string s;
            read(l, "test_function", s, "lab");
            c.test_function = test_function_from_string(s);
        }
    }
    if (j.contains("thresholds")) {
        const json& t = j["thresholds"];
        only_keys(t, "thresholds", {"scan_scaled_error", "scan_slope_lo", "scan_slope_hi", "rigidity_q95",
                                    "esd_radial_ks", "esd_angular_ks", "circular_ratio_q95", "sv_max_count"});
        Thresholds& h = c.thresholds;
        read(t, "scan_scaled_error", h.scan_scaled_error, "thresholds");
        read(t, "scan_slope_lo", h.scan_slope_lo, "thresholds");
        read(t, "scan_slope_hi", h.scan_slope_hi, "thresholds");
        read(t, "rigidity_q95", h.rigidity_q95, "thresholds");
        read(t, "esd_radial_ks", h.esd_radial_ks, "thresholds");
        read(t, "esd_angular_ks", h.esd_angular_ks, "thresholds");
        read(t, "circular_ratio_q95", h.circular_ratio_q95, "thresholds");
        read(t, "sv_max_count", h.sv_max_count, "thresholds");
    }
    return c;
}

std::uint64_t seed_for(std::uint64_t master, int N, std::uint64_t trial) {
    return ens::trial_seed(ens::mix64(master) ^ ens::mix64(static_cast<std::uint64_t>(N) * 0x100000001b3ULL), trial);
}

std::atomic<bool>& cancel_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

// ---------------------------------------------------------------------------
// Statistics.

double quantile(std::vector<double> v, double q) {
    if (v.empty())
        return kNaN;
    std::sort(v.begin(), v.end());
    const double pos = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double k = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

double ks_statistic(std::vector<double> s, const std::function<double(double)>& cdf) {
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double F = cdf(s[i]);
        d = std::max({d, F - i / n, (i + 1) / n - F});
    }
    return d;
}

// ---------------------------------------------------------------------------
// Experiments.

ExperimentReport local_law_scan(const ExperimentConfig& cfg) {
    ExperimentReport rep = start("scan", cfg);
    const auto ladder = cfg.ladder();
    const int Nmin = *std::min_element(ladder.begin(), ladder.end());

    // w-grid per (z, eta): points of S_{z,delta,Q} for the smallest N, which
    // then lie in S for every larger N as well.
    struct Grid {
        std::vector<cplx> w;
        std::vector<cplx> mc;
    };
    std::vector<std::vector<Grid>> grids(cfg.z_list.size(), std::vector<Grid>(cfg.eta_list.size()));
    for (std::size_t zi = 0; zi < cfg.z_list.size(); ++zi) {
        std::vector<double> Ns(ladder.begin(), ladder.end());
        for (std::size_t ei = 0; ei < cfg.eta_list.size(); ++ei) {
            Grid& g = grids[zi][ei];
            for (int k = 0; k < cfg.E_points; ++k) {
                bool inside = true;
                cplx w;
                for (double N : Ns) {
                    lab::ScanDomain dom{cfg.z_list[zi], cfg.delta, cfg.Q, N};
                    const double E = dom.E_lo() + (dom.E_hi() - dom.E_lo()) * (k + 0.5) / cfg.E_points;
                    w = cplx(E, cfg.eta_list[ei]);
                    inside = inside && dom.contains(w);
                }
                if (inside) {
                    g.w.push_back(w);
                    g.mc.push_back(mc::solve_mc(cfg.z_list[zi], w).value);
                }
            }
            if (g.w.empty())
                throw InvalidConfig("no grid point of the scan domain at eta = " + format_double(cfg.eta_list[ei]) +
                                    " for N = " + std::to_string(Nmin) + "; raise eta or lower Q");
        }
    }

    struct Payload {
        std::vector<double> sup;       // [zi * neta + ei]
        std::vector<double> lambda, res_over_psi;
    };
    const std::size_t ne = cfg.eta_list.size();
    std::function<Outcome<Payload>(const Unit&)> fn = [&](const Unit& u) {
        Outcome<Payload> o;
        const auto chain = ens::sample_chain(ensemble_for(cfg, u));
        for (std::size_t zi = 0; zi < cfg.z_list.size(); ++zi) {
            const cplx z = cfg.z_list[zi];
            const auto h = ens::shifted_gram(chain, z, cfg.diagnostics);
            for (std::size_t ei = 0; ei < ne; ++ei) {
                const Grid& g = grids[zi][ei];
                double sup = 0.0, Esup = 0.0;
                for (std::size_t k = 0; k < g.w.size(); ++k) {
                    const double e = std::abs(lab::empirical_stieltjes(h, g.w[k]) - g.mc[k]);
                    if (e > sup) {
                        sup = e;
                        Esup = g.w[k].real();
                    }
                }
                double L = kNaN, P = kNaN, R = kNaN;
                if (cfg.diagnostics) {
                    const auto d = lab::partial_traces(h, g.w[g.w.size() / 2]);
                    L = d.Lambda;
                    P = d.Psi;
                    R = d.max_residual();
                }
                o.payload.sup.push_back(sup);
                o.payload.lambda.push_back(L);
                o.payload.res_over_psi.push_back(R / P);
                o.rows.push_back({z.real(), z.imag(), cfg.eta_list[ei], std::int64_t(g.w.size()), sup, Esup, L, P, R});
            }
        }
        return o;
    };
    auto ok = drive<Payload>(cfg, rep,
                             {"re_z", "im_z", "eta", "n_points", "sup_error", "E_at_sup", "Lambda", "Psi",
                              "max_residual"},
                             ladder_units(cfg), fn);
    if (!rep.aggregates_emitted)
        return rep;

    json groups = json::array(), slopes = json::array();
    for (std::size_t zi = 0; zi < cfg.z_list.size(); ++zi)
        for (std::size_t ei = 0; ei < ne; ++ei) {
            std::vector<double> Ns, meds;
            for (int N : ladder) {
                std::vector<double> v, lam, rp;
                for (const auto& [u, p] : ok)
                    if (u.N == N) {
                        v.push_back(p.sup[zi * ne + ei]);
                        lam.push_back(p.lambda[zi * ne + ei]);
                        rp.push_back(p.res_over_psi[zi * ne + ei]);
                    }
                if (v.empty())
                    continue;
                const double med = median(v), eta = cfg.eta_list[ei];
                json g = {{"z", zjson(cfg.z_list[zi])}, {"eta", eta},          {"N", N},
                          {"trials", v.size()},         {"median_sup", med},   {"q95_sup", quantile(v, 0.95)},
                          {"median_scaled", med * N * eta}};
                if (cfg.diagnostics) {
                    g["median_Lambda"] = median(lam);
                    g["frac_residual_within_5_psi"] =
                        double(std::count_if(rp.begin(), rp.end(), [](double r) { return r <= 5.0; })) / rp.size();
                }
                groups.push_back(g);
                add_check(rep, "scaled_error[z=" + zlabel(cfg.z_list[zi]) + ",eta=" + format_double(eta) +
                                   ",N=" + std::to_string(N) + "]",
                          med * N * eta, cfg.thresholds.scan_scaled_error, true);
                Ns.push_back(N);
                meds.push_back(med);
            }
            if (Ns.size() >= 2) {
                const double s = loglog_slope(Ns, meds);
                slopes.push_back({{"z", zjson(cfg.z_list[zi])}, {"eta", cfg.eta_list[ei]}, {"slope_vs_N", s}});
                const std::string tag = "[z=" + zlabel(cfg.z_list[zi]) + ",eta=" + format_double(cfg.eta_list[ei]) + "]";
                add_check(rep, "slope_vs_N_min" + tag, s, cfg.thresholds.scan_slope_lo, false);
                add_check(rep, "slope_vs_N_max" + tag, s, cfg.thresholds.scan_slope_hi, true);
            }
        }
    if (ne >= 2)
        for (std::size_t zi = 0; zi < cfg.z_list.size(); ++zi)
            for (int N : ladder) {
                std::vector<double> etas, meds;
                for (std::size_t ei = 0; ei < ne; ++ei) {
                    std::vector<double> v;
                    for (const auto& [u, p] : ok)
                        if (u.N == N)
                            v.push_back(p.sup[zi * ne + ei]);
                    if (!v.empty()) {
                        etas.push_back(cfg.eta_list[ei]);
                        meds.push_back(median(v));
                    }
                }
                if (etas.size() >= 2)
                    slopes.push_back({{"z", zjson(cfg.z_list[zi])}, {"N", N}, {"slope_vs_eta", loglog_slope(etas, meds)}});
            }
    rep.aggregates["groups"] = groups;
    rep.aggregates["slopes"] = slopes;
    return rep;
}

ExperimentReport rigidity_experiment(const ExperimentConfig& cfg) {
    ExperimentReport rep = start("rigidity", cfg);
    const auto ladder = cfg.ladder();
    const int n = cfg.ensemble.n;

    // Classical locations per (N, z), computed up front.
    std::map<std::pair<int, std::size_t>, std::vector<double>> gammas;
    std::vector<double> log_moments;
    for (cplx z : cfg.z_list)
        log_moments.push_back(mc::log_moment(z));
    for (int N : ladder)
        for (std::size_t zi = 0; zi < cfg.z_list.size(); ++zi)
            gammas[{N, zi}] = mc::classical_locations(cfg.z_list[zi], static_cast<std::size_t>(n) * N);

    struct Payload {
        std::vector<double> diff, head, sum_lambda;
        std::vector<int> near_singular;
    };
    std::function<Outcome<Payload>(const Unit&)> fn = [&](const Unit& u) {
        Outcome<Payload> o;
        const auto chain = ens::sample_chain(ensemble_for(cfg, u));
        const std::size_t head = static_cast<std::size_t>(std::ceil(lab::phi(u.N)));
        for (std::size_t zi = 0; zi < cfg.z_list.size(); ++zi) {
            const cplx z = cfg.z_list[zi];
            const auto h = ens::shifted_gram(chain, z, false);
            const auto& g = gammas.at({u.N, zi});
            if (!(h.eigenvalues.front() > 0.0))
                throw BackendFailure("zero singular value at z = " + format_complex(z));
            double sl = 0.0, sg = 0.0, hd = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double a = std::log(h.eigenvalues[j]), b = std::log(g[j]);
                sl += a;
                sg += b;
                if (j < head)
                    hd += a - b;
            }
            const int ns = h.eigenvalues.front() < 1e-13 ? 1 : 0;
            o.payload.diff.push_back(sl - sg);
            o.payload.head.push_back(hd);
            o.payload.sum_lambda.push_back(sl);
            o.payload.near_singular.push_back(ns);
            o.rows.push_back({z.real(), z.imag(), sl, sg, sl - sg, hd, sl - sg - hd, h.eigenvalues.front(),
                              std::int64_t(ns)});
        }
        return o;
    };
    auto ok = drive<Payload>(cfg, rep,
                             {"re_z", "im_z", "sum_log_lambda", "sum_log_gamma", "diff", "head_diff", "tail_diff",
                              "lambda1", "near_singular"},
                             ladder_units(cfg), fn);
    if (!rep.aggregates_emitted)
        return rep;
    json groups = json::array();
    for (int N : ladder)
        for (std::size_t zi = 0; zi < cfg.z_list.size(); ++zi) {
            std::vector<double> ad, ah, sl;
            int ns = 0;
            for (const auto& [u, p] : ok)
                if (u.N == N) {
                    ad.push_back(std::abs(p.diff[zi]));
                    ah.push_back(std::abs(p.head[zi]));
                    sl.push_back(p.sum_lambda[zi]);
                    ns += p.near_singular[zi];
                }
            const auto& g = gammas.at({N, zi});
            double sg = 0.0;
            for (double x : g)
                sg += std::log(x);
            const double integral = static_cast<double>(n) * N * log_moments[zi];
            groups.push_back({{"z", zjson(cfg.z_list[zi])},
                              {"N", N},
                              {"trials", ad.size()},
                              {"q95_abs_diff", quantile(ad, 0.95)},
                              {"median_abs_diff", median(ad)},
                              {"q95_abs_head_diff", quantile(ah, 0.95)},
                              {"head_cut", std::ceil(lab::phi(N))},
                              {"median_sum_log_lambda", median(sl)},
                              {"sum_log_gamma", sg},
                              {"nN_log_moment", integral},
                              {"gamma_vs_integral", std::abs(sg - integral)},
                              {"gamma1", g.front()},
                              {"gamma1_times_N2", g.front() * N * N},
                              {"near_singular", ns}});
            add_check(rep, "q95_abs_diff[z=" + zlabel(cfg.z_list[zi]) + ",N=" + std::to_string(N) + "]",
                      quantile(ad, 0.95), cfg.thresholds.rigidity_q95, true);
        }
    rep.aggregates["groups"] = groups;
    return rep;
}

ExperimentReport local_circular_statistic(const ExperimentConfig& cfg) {
    ExperimentReport rep = start("circular", cfg);
    const auto ladder = cfg.ladder();
    const int n = cfg.ensemble.n;
    const double l1 = test_laplacian_l1(cfg.test_function);
    std::map<int, double> target, norm;
    for (int N : ladder) {
        target[N] = circular_target(Rescaled{cfg.test_function, cfg.z0, double(N), cfg.d}, n);
        norm[N] = std::pow(double(N), -1.0 + 2.0 * cfg.d) * l1;
    }
    struct Payload {
        double stat = 0.0, ratio = 0.0;
    };
    std::function<Outcome<Payload>(const Unit&)> fn = [&](const Unit& u) {
        Outcome<Payload> o;
        const auto chain = ens::sample_chain(ensemble_for(cfg, u));
        const auto mu = ens::product_eigenvalues(chain);
        if (mu.size() != static_cast<std::size_t>(u.N))
            throw BackendFailure("eigenvalue count mismatch");
        const Rescaled F{cfg.test_function, cfg.z0, double(u.N), cfg.d};
        double acc = 0.0;
        std::int64_t inside = 0;
        for (cplx m : mu) {
            acc += F.value(m);
            inside += std::abs(F.scale() * (m - cfg.z0)) < 1.0;
        }
        const double stat = acc / u.N - target[u.N];
        const double ratio = norm[u.N] > 0 ? stat / norm[u.N] : 0.0;
        o.payload = {stat, ratio};
        o.rows.push_back({stat, ratio, inside, target[u.N]});
        return o;
    };
    auto ok = drive<Payload>(cfg, rep, {"stat", "ratio", "in_support", "target"}, ladder_units(cfg), fn);
    if (!rep.aggregates_emitted)
        return rep;
    json groups = json::array();
    for (int N : ladder) {
        std::vector<double> ar, as;
        for (const auto& [u, p] : ok)
            if (u.N == N) {
                ar.push_back(std::abs(p.ratio));
                as.push_back(std::abs(p.stat));
            }
        groups.push_back({{"N", N},
                          {"trials", ar.size()},
                          {"target", target[N]},
                          {"rate", norm[N]},
                          {"median_abs_stat", median(as)},
                          {"median_abs_ratio", median(ar)},
                          {"q95_abs_ratio", quantile(ar, 0.95)}});
        add_check(rep, "q95_abs_ratio[N=" + std::to_string(N) + "]", quantile(ar, 0.95),
                  cfg.thresholds.circular_ratio_q95, true);
    }
    rep.aggregates["groups"] = groups;
    rep.aggregates["laplacian_l1"] = l1;
    return rep;
}

ExperimentReport esd_radial_ks(const ExperimentConfig& cfg) {
    ExperimentReport rep = start("esd", cfg);
    const auto ladder = cfg.ladder();
    const int n = cfg.ensemble.n;
    struct Payload {
        double radial = 0.0, angular = 0.0, outside = 0.0;
    };
    std::function<Outcome<Payload>(const Unit&)> fn = [&](const Unit& u) {
        Outcome<Payload> o;
        const auto chain = ens::sample_chain(ensemble_for(cfg, u));
        const auto mu = ens::product_eigenvalues(chain);
        if (mu.size() != static_cast<std::size_t>(u.N))
            throw BackendFailure("eigenvalue count mismatch");
        std::vector<double> r, a;
        const double cut = 1.0 + 5.0 / std::sqrt(double(u.N));
        std::int64_t out = 0;
        for (cplx m : mu) {
            r.push_back(std::abs(m));
            double t = std::arg(m) / (2.0 * kPi);
            a.push_back(t < 0.0 ? t + 1.0 : t);
            out += std::abs(m) > cut;
        }
        const double p = 2.0 / n;
        o.payload.radial = ks_statistic(r, [p](double x) { return x >= 1.0 ? 1.0 : std::pow(x, p); });
        o.payload.angular = ks_statistic(a, [](double x) { return std::clamp(x, 0.0, 1.0); });
        o.payload.outside = double(out) / u.N;
        o.rows.push_back({o.payload.radial, o.payload.angular, o.payload.outside});
        return o;
    };
    auto ok = drive<Payload>(cfg, rep, {"radial_ks", "angular_ks", "frac_outside"}, ladder_units(cfg), fn);
    if (!rep.aggregates_emitted)
        return rep;
    json groups = json::array();
    for (int N : ladder) {
        std::vector<double> r, a, f;
        for (const auto& [u, p] : ok)
            if (u.N == N) {
                r.push_back(p.radial);
                a.push_back(p.angular);
                f.push_back(p.outside);
            }
        groups.push_back({{"N", N},
                          {"trials", r.size()},
                          {"median_radial_ks", median(r)},
                          {"q95_radial_ks", quantile(r, 0.95)},
                          {"median_angular_ks", median(a)},
                          {"q95_angular_ks", quantile(a, 0.95)},
                          {"median_frac_outside", median(f)}});
        add_check(rep, "median_radial_ks[N=" + std::to_string(N) + "]", median(r), cfg.thresholds.esd_radial_ks, true);
        add_check(rep, "median_angular_ks[N=" + std::to_string(N) + "]", median(a), cfg.thresholds.esd_angular_ks,
                  true);
    }
    rep.aggregates["groups"] = groups;
    return rep;
}

ExperimentReport smallest_sv_survey(const ExperimentConfig& cfg) {
    ExperimentReport rep = start("sv", cfg);
    const auto ladder = cfg.ladder();
    struct Payload {
        std::vector<double> l1;
    };
    std::function<Outcome<Payload>(const Unit&)> fn = [&](const Unit& u) {
        Outcome<Payload> o;
        const auto chain = ens::sample_chain(ensemble_for(cfg, u));
        const double floor = std::pow(double(u.N), -cfg.B);
        for (cplx z : cfg.z_list) {
            const auto h = ens::shifted_gram(chain, z, false);
            const double l1 = h.eigenvalues.front();
            o.payload.l1.push_back(l1);
            o.rows.push_back({z.real(), z.imag(), l1, h.eigenvalues.back(), std::int64_t(l1 < floor)});
        }
        return o;
    };
    auto ok = drive<Payload>(cfg, rep, {"re_z", "im_z", "lambda1", "lambda_max", "below"}, ladder_units(cfg), fn);
    if (!rep.aggregates_emitted)
        return rep;
    json groups = json::array();
    for (int N : ladder) {
        std::vector<double> v;
        for (const auto& [u, p] : ok)
            if (u.N == N)
                v.insert(v.end(), p.l1.begin(), p.l1.end());
        const double floor = std::pow(double(N), -cfg.B);
        const auto below = std::count_if(v.begin(), v.end(), [&](double x) { return x < floor; });
        groups.push_back({{"N", N},
                          {"samples", v.size()},
                          {"threshold", floor},
                          {"min", *std::min_element(v.begin(), v.end())},
                          {"q05", quantile(v, 0.05)},
                          {"q50", quantile(v, 0.5)},
                          {"q95", quantile(v, 0.95)},
                          {"count_below", below}});
        add_check(rep, "count_below[N=" + std::to_string(N) + "]", double(below), double(cfg.thresholds.sv_max_count),
                  true);
    }
    rep.aggregates["groups"] = groups;
    return rep;
}

GirkoResult girko_single(const ens::ChainSample& chain, const Rescaled& F, int grid) {
    const int n = static_cast<int>(chain.matrices.size());
    const double nN = static_cast<double>(chain.linearization.rows());
    const auto mu = ens::linearization_eigenvalues(chain);
    GirkoResult res;
    for (cplx m : mu)
        res.lhs += F.value(std::pow(m, n));
    res.lhs /= nN;
    if (F.f == TestFunction::zero) {
        res.pass = true;
        return res;
    }
    const double reach = std::pow(std::abs(F.z0) + 1.0 / F.scale(), 1.0 / n);
    const double half = 1.05 * reach + 1e-3;
    // Fixed irrational offsets keep nodes off any lattice the eigenvalues might share.
    const double jx = 0.1234567891, jy = 0.2718281828;

    auto Q = [&](int M, int& near) {
        const double h = 2.0 * half / M;
        double acc = 0.0;
        for (int i = 0; i < M; ++i)
            for (int k = 0; k < M; ++k) {
                const cplx x(-half + (i + 0.5 + jx * 0.5) * h, -half + (k + 0.5 + jy * 0.5) * h);
                const double lap = F.laplacian(std::pow(x, n));
                if (lap == 0.0)
                    continue;
                for (cplx m : mu)
                    if (std::abs(x - m) < 1e-6)
                        ++near;
                ens::CMatrix y = chain.linearization;
                y.diagonal().array() -= x;
                double logdet = 0.0;
                for (double s : backend::singular_values(y))
                    logdet += 2.0 * std::log(s);
                acc += pullback_laplacian(lap, x, n) * logdet;
            }
        return acc * h * h / (4.0 * kPi * nN);
    };
    int near_coarse = 0;
    res.rhs_coarse = Q(grid, near_coarse);
    res.rhs = Q(2 * grid, res.near_eigenvalue);
    res.error_estimate = std::abs(res.rhs - res.rhs_coarse);
    res.abs_diff = std::abs(res.lhs - res.rhs);
    res.pass = res.abs_diff <= res.error_estimate;
    return res;
}

ExperimentReport girko_identity_check(const ExperimentConfig& cfg) {
    ExperimentReport rep = start("girko", cfg);
    const int N = cfg.ladder().front();
    const std::vector<Unit> units{{N, 0, seed_for(cfg.ensemble.seed, N, 0)}};
    struct Payload {
        GirkoResult r;
    };
    std::function<Outcome<Payload>(const Unit&)> fn = [&](const Unit& u) {
        Outcome<Payload> o;
        const auto chain = ens::sample_chain(ensemble_for(cfg, u));
        o.payload.r = girko_single(chain, Rescaled{cfg.test_function, cfg.z0, double(N), cfg.d}, cfg.girko_grid);
        const auto& r = o.payload.r;
        o.rows.push_back({r.lhs, r.rhs, r.rhs_coarse, r.error_estimate, r.abs_diff, std::int64_t(r.near_eigenvalue),
                          std::int64_t(r.pass)});
        return o;
    };
    auto ok = drive<Payload>(cfg, rep,
                             {"lhs", "rhs", "rhs_coarse", "error_estimate", "abs_diff", "near_eigenvalue", "pass"},
                             units, fn);
    if (!rep.aggregates_emitted || ok.empty())
        return rep;
    const auto& r = ok.front().second.r;
    if (r.near_eigenvalue > 0)
        rep.warnings.push_back("grid nodes within 1e-6 of an eigenvalue: " + std::to_string(r.near_eigenvalue));
    rep.aggregates["lhs"] = r.lhs;
    rep.aggregates["rhs"] = r.rhs;
    rep.aggregates["error_estimate"] = r.error_estimate;
    rep.aggregates["abs_diff"] = r.abs_diff;
    add_check(rep, "abs_diff_within_error_estimate", r.abs_diff, r.error_estimate, true);
    return rep;
}

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"scan", "rigidity", "circular", "esd", "sv", "girko"};
    return names;
}

ExperimentReport run_experiment(const std::string& name, const ExperimentConfig& cfg) {
    if (name == "scan")
        return local_law_scan(cfg);
    if (name == "rigidity")
        return rigidity_experiment(cfg);
    if (name == "circular")
        return local_circular_statistic(cfg);
    if (name == "esd")
        return esd_radial_ks(cfg);
    if (name == "sv")
        return smallest_sv_survey(cfg);
    if (name == "girko")
        return girko_identity_check(cfg);
    throw InvalidConfig("unknown experiment '" + name + "'");
}

} // namespace prodlaw::exp

namespace prodlaw::exp {

json to_json(const RunConfig& rc) {
    json j = to_json(rc.lab);
    json out;
    out["seed"] = j["seed"];
    out["output"] = rc.output;
    out["workers"] = j["workers"];
    out["experiments"] = rc.experiments;
    out["ensemble"] = j["ensemble"];
    out["lab"] = j["lab"];
    out["thresholds"] = j["thresholds"];
    return out;
}

RunConfig run_config_from_json(const json& j) {
    only_keys(j, "run config", {"seed", "output", "workers", "experiments", "ensemble", "lab", "thresholds"});
    RunConfig rc;
    json inner = j;
    inner.erase("output");
    inner.erase("experiments");
    rc.lab = config_from_json(inner);
    read(j, "output", rc.output, "config");
    read(j, "experiments", rc.experiments, "config");
    for (const auto& e : rc.experiments)
        if (std::find(experiment_names().begin(), experiment_names().end(), e) == experiment_names().end())
            throw InvalidConfig("unknown experiment '" + e + "'");
    return rc;
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

std::string canonical_text(const RunConfig& rc) { return to_json(rc).dump(2) + "\n"; }

} // namespace prodlaw::exp
