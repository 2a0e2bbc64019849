#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "prodlaw/ensemble.hpp"
#include "prodlaw/errors.hpp"
#include "prodlaw/experiments.hpp"
#include "prodlaw/mc_core.hpp"
#include "prodlaw/stability.hpp"

using namespace prodlaw;
using exp::format_double;
using exp::Table;
using exp::Value;

namespace {

enum Exit { kOk = 0, kIo = 1, kParse = 2, kSolver = 3, kInvalidTrials = 4, kAcceptance = 5, kInterrupted = 130 };

struct Usage : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<double> parse_grid(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');)
        parts.push_back(p);
    auto num = [&](const std::string& t) {
        std::size_t pos = 0;
        double v;
        try {
            v = std::stod(t, &pos);
        } catch (...) {
            throw Usage("invalid grid '" + spec + "' (expected lo:hi:count)");
        }
        if (pos != t.size())
            throw Usage("invalid grid '" + spec + "' (expected lo:hi:count)");
        return v;
    };
    if (parts.size() == 1)
        return {num(parts[0])};
    if (parts.size() != 3)
        throw Usage("invalid grid '" + spec + "' (expected lo:hi:count)");
    const double lo = num(parts[0]), hi = num(parts[1]), c = num(parts[2]);
    if (c != std::floor(c) || c < 0)
        throw Usage("grid count must be a non-negative integer");
    const int k = static_cast<int>(c);
    if (k == 0)
        throw Usage("grid '" + spec + "' is empty");
    std::vector<double> g(k);
    for (int i = 0; i < k; ++i)
        g[i] = k == 1 ? lo : lo + (hi - lo) * i / (k - 1);
    return g;
}

std::vector<cplx> parse_complex_list(const std::vector<std::string>& items) {
    if (items.empty())
        throw Usage("complex list is empty");
    std::vector<cplx> out;
    for (const auto& s : items)
        out.push_back(exp::parse_complex(s));
    return out;
}

void emit(const Table& t, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << t.to_csv();
        return;
    }
    std::ofstream os(path, std::ios::binary);
    os << t.to_csv();
    if (!os)
        throw std::runtime_error("cannot write " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Usage("cannot read " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t env_seed(std::uint64_t fallback) {
    const char* s = std::getenv("PRODLAW_SEED");
    if (!s)
        return fallback;
    const std::string t(s);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(t, &pos, 0);
    } catch (...) {
        throw Usage("PRODLAW_SEED is not an unsigned integer");
    }
    if (pos != t.size() || t.front() == '-')
        throw Usage("PRODLAW_SEED is not an unsigned integer");
    return v;
}

extern "C" void on_sigint(int) { exp::cancel_flag().store(true); }

// ---- mc ------------------------------------------------------------------

Table mc_table() {
    Table t;
    t.columns = {"re_z", "im_z", "E", "eta", "re_mc", "im_mc", "residual", "rho"};
    return t;
}

void mc_row(Table& t, cplx z, double E, double eta) {
    if (E == 0.0 && eta == 0.0) {
        // w = 0 lies outside the domain of m_c
        const double nan = std::numeric_limits<double>::quiet_NaN();
        t.rows.push_back({z.real(), z.imag(), E, eta, nan, nan, nan, mc::density(z, E)});
        return;
    }
    const auto sol = mc::solve_mc(z, cplx(E, eta));
    const double rho = mc::density(z, E);
    t.rows.push_back({z.real(), z.imag(), E, eta, sol.value.real(), sol.value.imag(), sol.residual, rho});
}

// ---- report render ---------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(field);
            field.clear();
            any = true;
        } else if (c == '\r') {
        } else if (c == '\n') {
            row.push_back(field);
            rows.push_back(row);
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (any || !field.empty()) {
        row.push_back(field);
        rows.push_back(row);
    }
    return rows;
}

std::string render_markdown(const std::string& title, const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream md;
    md << "# " << title << "\n\n";
    if (rows.empty())
        return md.str() + "(empty)\n";
    const auto& head = rows[0];
    md << "rows: " << rows.size() - 1 << "\n\n";
    auto status_col = std::find(head.begin(), head.end(), "status");
    if (status_col != head.end()) {
        const std::size_t k = status_col - head.begin();
        std::map<std::string, int> counts;
        for (std::size_t r = 1; r < rows.size(); ++r)
            if (k < rows[r].size())
                ++counts[rows[r][k]];
        md << "| status | rows |\n|---|---|\n";
        for (const auto& [s, c] : counts)
            md << "| " << s << " | " << c << " |\n";
        md << "\n";
    }
    md << "| column | count | mean | min | median | max |\n|---|---|---|---|---|---|\n";
    for (std::size_t c = 0; c < head.size(); ++c) {
        std::vector<double> v;
        bool numeric = true;
        for (std::size_t r = 1; r < rows.size() && numeric; ++r) {
            if (c >= rows[r].size() || rows[r][c].empty())
                continue;
            std::size_t pos = 0;
            try {
                const double x = std::stod(rows[r][c], &pos);
                numeric = pos == rows[r][c].size();
                if (numeric && std::isfinite(x))
                    v.push_back(x);
            } catch (...) {
                numeric = false;
            }
        }
        if (!numeric || v.empty() || head[c] == "seed")
            continue;
        double mean = 0.0;
        for (double x : v)
            mean += x;
        mean /= v.size();
        char buf[256];
        std::snprintf(buf, sizeof buf, "| %s | %zu | %.6g | %.6g | %.6g | %.6g |\n", head[c].c_str(), v.size(), mean,
                      *std::min_element(v.begin(), v.end()), exp::median(v), *std::max_element(v.begin(), v.end()));
        md << buf;
    }
    return md.str();
}

// ---- lab -----------------------------------------------------------------

int run_lab(const std::string& config_path, const std::vector<std::string>& only, int workers_override,
            const std::string& output_override) {
    exp::RunConfig rc = exp::parse_run_config(read_file(config_path));
    rc.lab.ensemble.seed = env_seed(rc.lab.ensemble.seed);
    if (workers_override > 0)
        rc.lab.workers = workers_override;
    if (!output_override.empty())
        rc.output = output_override;
    std::vector<std::string> names = only.empty() ? rc.experiments : only;
    if (names.empty())
        names = exp::experiment_names();
    for (const auto& n : names)
        exp::validate(rc.lab, n);

    std::signal(SIGINT, on_sigint);
    bool invalid = false, failed = false;
    for (const auto& name : names) {
        if (exp::cancel_flag().load())
            break;
        const auto rep = exp::run_experiment(name, rc.lab);
        const auto [jpath, cpath] = exp::write_report(rep, rc.output);
        std::size_t passed = 0;
        for (const auto& c : rep.checks)
            passed += c.pass;
        const bool ok = rep.all_checks_pass() && rep.aggregates_emitted;
        std::cout << name << " hash=" << rep.config_hash << " valid=" << rep.valid << " invalid=" << rep.invalid
                  << " incomplete=" << rep.incomplete << " checks=" << passed << "/" << rep.checks.size() << " "
                  << (ok ? "PASS" : "FAIL") << " -> " << jpath << "\n";
        for (const auto& c : rep.checks)
            if (!c.pass)
                std::cout << "  failed " << c.name << ": " << format_double(c.value) << (c.upper ? " > " : " < ")
                          << format_double(c.threshold) << "\n";
        for (const auto& w : rep.warnings)
            std::cout << "  warning: " << w << "\n";
        invalid = invalid || rep.invalid_fraction() > 0.1;
        failed = failed || !ok;
    }
    if (exp::cancel_flag().load()) {
        std::cerr << "interrupted; partial rows written as incomplete\n";
        return kInterrupted;
    }
    if (invalid)
        return kInvalidTrials;
    return failed ? kAcceptance : kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Products of non-Hermitian random matrices: deterministic limits, stability and Monte Carlo"};
    app.require_subcommand(1);
    std::function<int()> action;

    // mc
    auto* mc_cmd = app.add_subcommand("mc", "self-consistent solution m_c and its density");
    mc_cmd->require_subcommand(1);
    std::vector<std::string> z_items;
    std::string w_item, grid = "", eta_grid = "0", out, regime = "edge_plus";
    {
        auto* ev = mc_cmd->add_subcommand("eval", "m_c at given points");
        ev->add_option("--z", z_items, "complex z values (a+bi)")->required();
        ev->add_option("--w", w_item, "complex spectral parameter");
        ev->add_option("--E", grid, "real-part grid lo:hi:count");
        ev->add_option("--eta", eta_grid, "imaginary-part grid lo:hi:count");
        ev->add_option("-o,--out", out, "CSV file (default stdout)");
        ev->callback([&] {
            action = [&] {
                Table t = mc_table();
                for (cplx z : parse_complex_list(z_items)) {
                    if (!w_item.empty()) {
                        const cplx w = exp::parse_complex(w_item);
                        mc_row(t, z, w.real(), w.imag());
                    } else {
                        if (grid.empty())
                            throw Usage("give --w or an --E grid");
                        for (double eta : parse_grid(eta_grid))
                            for (double E : parse_grid(grid))
                                mc_row(t, z, E, eta);
                    }
                }
                emit(t, out);
                return int(kOk);
            };
        });
        auto* de = mc_cmd->add_subcommand("density", "density rho_z on a grid (boundary values)");
        de->add_option("--z", z_items, "complex z values")->required();
        de->add_option("--grid", grid, "lo:hi:count")->required();
        de->add_option("-o,--out", out, "CSV file (default stdout)");
        de->callback([&] {
            action = [&] {
                Table t = mc_table();
                const auto g = parse_grid(grid);
                for (cplx z : parse_complex_list(z_items)) {
                    double mass = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        mc_row(t, z, g[i], 0.0);
                        if (i > 0 && std::isfinite(mc::density(z, g[i - 1])))
                            mass += 0.5 * (g[i] - g[i - 1]) * (mc::density(z, g[i]) + mc::density(z, g[i - 1]));
                    }
                    std::cerr << "z=" << exp::format_complex(z) << " trapezoid mass on grid=" << format_double(mass)
                              << " total mass=" << format_double(mc::total_mass(z)) << "\n";
                }
                emit(t, out);
                return int(kOk);
            };
        });
        auto* as = mc_cmd->add_subcommand("asymptotics", "check an asymptotic expansion of m_c");
        as->add_option("--z", z_items, "complex z values")->required();
        as->add_option("--regime", regime, "edge_plus|edge_minus|small_w|bulk_equiv");
        as->callback([&] {
            action = [&] {
                bool all = true;
                const auto r = mc::regime_from_string(regime);
                for (cplx z : parse_complex_list(z_items)) {
                    const auto rep = mc::mc_asymptotics_check(z, r, {});
                    std::cout << "z=" << exp::format_complex(z) << " regime=" << regime
                              << " fitted=" << exp::format_complex(rep.fitted)
                              << " expected=" << exp::format_complex(rep.expected)
                              << " relative_error=" << format_double(rep.relative_error)
                              << " exponent=" << format_double(rep.exponent)
                              << " ratio_min=" << format_double(rep.ratio_min)
                              << " ratio_max=" << format_double(rep.ratio_max) << " " << (rep.pass ? "PASS" : "FAIL")
                              << "\n";
                    all = all && rep.pass;
                }
                return int(all ? kOk : kAcceptance);
            };
        });
    }

    // stability
    auto* st_cmd = app.add_subcommand("stability", "linearized stability operator Gamma");
    st_cmd->require_subcommand(1);
    int n = 2, sign = 1, E_steps = 200, omega_steps = 50;
    stab::RegionParams params;
    std::string edge;
    {
        auto* mp = st_cmd->add_subcommand("map", "case labels and inverse norms over a grid");
        mp->add_option("--z", z_items, "complex z values")->required();
        auto* Eopt = mp->add_option("--E", grid, "lo:hi:count");
        mp->add_option("--edge", edge, "evaluate exactly at lambda_plus or lambda_minus")
            ->check(CLI::IsMember({"plus", "minus"}))
            ->excludes(Eopt);
        mp->add_option("--eta", eta_grid, "lo:hi:count");
        mp->add_option("--n", n, "number of factors")->check(CLI::PositiveNumber);
        mp->add_option("--tau", params.tau);
        mp->add_option("--tau-tilde", params.tau_tilde);
        mp->add_option("--eps", params.eps);
        mp->add_option("-o,--out", out, "CSV file (default stdout)");
        mp->callback([&] {
            action = [&] {
                Table t;
                t.columns = {"re_z", "im_z", "E", "eta", "case", "inv_norm", "min_abs_l"};
                auto Es = edge.empty() ? parse_grid(grid) : std::vector<double>{};
                const auto etas = parse_grid(eta_grid);
                for (cplx z : parse_complex_list(z_items)) {
                    if (!edge.empty()) {
                        const auto e = mc::edge_points(z);
                        Es = {edge == "plus" ? e.lambda_plus : e.lambda_minus};
                    }
                    for (double eta : etas)
                        for (double E : Es) {
                            const cplx w(E, eta);
                            const auto label = stab::classify_region(z, w, params);
                            const auto c = stab::gamma_coeffs(z, w, n);
                            const double ml = stab::min_abs_l(c);
                            const double inv = stab::gamma_inverse_norm(c);
                            t.rows.push_back({z.real(), z.imag(), E, eta, stab::to_string(label.label), inv, ml});
                        }
                }
                emit(t, out);
                return int(kOk);
            };
        });
        auto* ef = st_cmd->add_subcommand("edge-fit", "log-log slope of the inverse norm at a spectral edge");
        ef->add_option("--z", z_items, "complex z values")->required();
        ef->add_option("--sign", sign, "+1 upper edge, -1 lower edge")->check(CLI::IsMember({-1, 1}));
        ef->add_option("--n", n, "number of factors")->check(CLI::PositiveNumber);
        ef->callback([&] {
            action = [&] {
                for (cplx z : parse_complex_list(z_items)) {
                    const auto f = stab::edge_fit(z, sign, n);
                    std::cout << "z=" << exp::format_complex(z) << " sign=" << sign << " n=" << n
                              << " slope=" << format_double(f.slope)
                              << " l_n_at_edge=" << format_double(f.l_n_at_edge) << "\n";
                    for (std::size_t i = 0; i < f.offsets.size(); ++i)
                        std::cout << "  offset=" << format_double(f.offsets[i])
                                  << " inv_norm=" << format_double(f.norms[i]) << "\n";
                }
                return int(kOk);
            };
        });
        auto* c4 = st_cmd->add_subcommand("case4-scan", "positive-margin certificate in the bulk");
        c4->add_option("--z", z_items, "complex z values")->required();
        c4->add_option("--E-steps", E_steps)->check(CLI::PositiveNumber);
        c4->add_option("--omega-steps", omega_steps)->check(CLI::PositiveNumber);
        c4->callback([&] {
            action = [&] {
                bool ok = true;
                for (cplx z : parse_complex_list(z_items)) {
                    const auto r = stab::case4_margin_scan(z, E_steps, omega_steps, params);
                    std::cout << "z=" << exp::format_complex(z) << " E=[" << format_double(r.E_lo) << ", "
                              << format_double(r.E_hi) << "] margin=" << format_double(r.margin)
                              << " direct_margin=" << format_double(r.direct_margin)
                              << " E1=" << format_double(r.E1) << " E2=" << format_double(r.E2) << " "
                              << (r.margin > 0 ? "PASS" : "FAIL") << "\n";
                    ok = ok && r.margin > 0;
                }
                return int(ok ? kOk : kAcceptance);
            };
        });
    }

    // ensemble
    auto* en_cmd = app.add_subcommand("ensemble", "sample and persist matrix chains");
    en_cmd->require_subcommand(1);
    ens::EnsembleConfig ecfg;
    std::string dist = "complex_gaussian", field = "", dir = ".", file;
    {
        auto* sa = en_cmd->add_subcommand("sample", "sample a chain and write it to disk");
        sa->add_option("--N", ecfg.N);
        sa->add_option("--n", ecfg.n);
        sa->add_option("--dist", dist);
        sa->add_option("--p", ecfg.p);
        sa->add_option("--seed", ecfg.seed);
        sa->add_option("--field", field);
        sa->add_option("--dir", dir, "output directory");
        sa->callback([&] {
            action = [&] {
                ecfg.dist = ens::dist_from_string(dist);
                ecfg.field = field.empty() ? (ecfg.dist == ens::Dist::real_gaussian ? ens::Field::real
                                                                                     : ens::Field::complex)
                                           : ens::field_from_string(field);
                ecfg.seed = env_seed(ecfg.seed);
                const auto chain = ens::sample_chain(ecfg);
                std::filesystem::create_directories(dir);
                const auto path = (std::filesystem::path(dir) / ens::chain_filename(ecfg)).string();
                ens::save_chain(chain, path);
                std::cout << path << "\n";
                return int(kOk);
            };
        });
        auto* in = en_cmd->add_subcommand("inspect", "summarize a stored chain");
        in->add_option("file", file)->required();
        in->callback([&] {
            action = [&] {
                const auto chain = ens::load_chain(file);
                std::cout << ens::canonical(chain.cfg) << "\n"
                          << "hash=" << ens::hex64(ens::config_hash(chain.cfg)) << "\n";
                for (std::size_t a = 0; a < chain.matrices.size(); ++a)
                    std::cout << "X" << a + 1 << " frobenius^2=" << format_double(chain.matrices[a].squaredNorm())
                              << "\n";
                double r = 0.0;
                for (cplx m : ens::product_eigenvalues(chain))
                    r = std::max(r, std::abs(m));
                std::cout << "product spectral_radius=" << format_double(r) << "\n";
                return int(kOk);
            };
        });
    }

    // lab
    auto* lab_cmd = app.add_subcommand("lab", "Monte Carlo experiments from a config file");
    lab_cmd->require_subcommand(1);
    std::string config;
    int workers = 0;
    std::string output;
    for (const std::string name : {"run", "scan", "rigidity", "circular", "esd", "sv", "girko"}) {
        auto* sc = lab_cmd->add_subcommand(name, name == "run" ? "all experiments listed in the config"
                                                              : "run the " + name + " experiment");
        sc->add_option("config", config, "JSON run config")->required();
        sc->add_option("--workers", workers, "override worker count")->check(CLI::PositiveNumber);
        sc->add_option("--output", output, "override output directory");
        sc->callback([&, name] {
            action = [&, name] {
                return run_lab(config, name == "run" ? std::vector<std::string>{} : std::vector<std::string>{name},
                               workers, output);
            };
        });
    }
    auto* canon = lab_cmd->add_subcommand("canonical", "print the canonical form of a config");
    canon->add_option("config", config)->required();
    canon->callback([&] {
        action = [&] {
            std::cout << exp::canonical_text(exp::parse_run_config(read_file(config)));
            return int(kOk);
        };
    });

    // report
    auto* rp_cmd = app.add_subcommand("report", "render per-trial CSVs");
    rp_cmd->require_subcommand(1);
    {
        auto* re = rp_cmd->add_subcommand("render", "CSV to summary markdown");
        re->add_option("csv", file)->required();
        re->add_option("-o,--out", out, "markdown file (default stdout)");
        re->callback([&] {
            action = [&] {
                const std::string md =
                    render_markdown(std::filesystem::path(file).stem().string(), read_csv(read_file(file)));
                if (out.empty() || out == "-") {
                    std::cout << md;
                } else {
                    std::ofstream os(out, std::ios::binary);
                    os << md;
                    if (!os)
                        throw std::runtime_error("cannot write " + out);
                }
                return int(kOk);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kParse;
    }
    try {
        return action ? action() : int(kParse);
    } catch (const Usage& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kParse;
    } catch (const InvalidConfig& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kParse;
    } catch (const RegimeMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kParse;
    } catch (const Error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
}
