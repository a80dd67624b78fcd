// kgsim: command-line front end for the standing-wave instability lab.
//
//   kgsim groundstate | spectrum | evolve | instability | sweep [--config FILE] [--key value ...]
//
// Exit codes: 0 success, 2 invalid configuration, 3 blow-up detected (outputs
// still written), 4 internal error.

#include "kgsim/instability.hpp"
#include "kgsim/io.hpp"
#include "kgsim/linearized.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kgsim;

namespace {

constexpr const char* kVersion = "kgsim 0.1.0";

enum ExitCode { kOk = 0, kInvalid = 2, kBlowUp = 3, kInternal = 4 };

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- hashing and time ------------------------------------------------------

std::string sha1_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
        throw std::runtime_error("SHA-1 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// Git blob object id of `content`.
std::string blob_id(const std::string& content) {
    std::string obj = "blob " + std::to_string(content.size());
    obj.push_back('\0');
    return sha1_hex(obj + content);
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- settings --------------------------------------------------------------

using Settings = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string normalize_key(std::string k) {
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

Settings read_config_file(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ValidationError(e.what());
    }
    Settings out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key = value");
        out[normalize_key(trim(line.substr(0, eq)))] = trim(line.substr(eq + 1));
    }
    return out;
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0;
    const auto t = trim(s);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(v))
        throw ValidationError(key + ": not a finite number: '" + s + "'");
    return v;
}

int parse_int(const std::string& key, const std::string& s) {
    int v = 0;
    const auto t = trim(s);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
        throw ValidationError(key + ": not an integer: '" + s + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    const auto t = trim(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ValidationError(key + ": not a boolean: '" + s + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::string cell;
    std::string text = s;
    std::replace(text.begin(), text.end(), ';', ',');
    std::replace(text.begin(), text.end(), ' ', ',');
    std::istringstream in(text);
    while (std::getline(in, cell, ','))
        if (!trim(cell).empty()) out.push_back(parse_double(key, cell));
    return out;
}

/// Keys, defaults and help text per subcommand.
struct KeySpec {
    std::string key, fallback, help;
};

const std::vector<KeySpec>& keys_for(const std::string& cmd) {
    static const std::map<std::string, std::vector<KeySpec>> table = [] {
        const KeySpec p{"p", "3", "nonlinearity exponent, 1 < p < 5"};
        const KeySpec omega{"omega", "critical", "frequency, or 'critical' for sqrt((p-1)/4)"};
        const KeySpec L{"L", "100", "domain length"};
        const KeySpec n{"n", "1024", "grid nodes (power of two)"};
        const KeySpec auto_domain{"auto_domain", "true", "double L and n until the profile decays below 1e-12"};
        const KeySpec gnuplot{"gnuplot", "false", "also write a gnuplot script"};
        const KeySpec dt{"dt", "0.005", "time step"};
        const KeySpec rec{"record_every", "10", "steps between recorded samples"};
        const KeySpec R{"R", "20", "virial cutoff radius"};
        const KeySpec esc{"escape_factor", "10", "escape when the orbit distance exceeds this multiple of its start"};
        const KeySpec refine{"auto_refine", "true", "grow L and n for profile decay and spectral resolution"};
        const KeySpec ident{"check_identities", "true", "check the virial identities at every sample"};
        std::map<std::string, std::vector<KeySpec>> t;
        t["groundstate"] = {p, omega, L, n, auto_domain, gnuplot};
        t["spectrum"] = {p,
                         omega,
                         L,
                         n,
                         auto_domain,
                         {"k", "6", "number of lowest eigenpairs"},
                         {"dense_cap", "4096", "largest dense block dimension"},
                         {"coercivity", "true", "also compute the constrained minimum"},
                         {"vectors", "false", "write eigenvector fields"}};
        t["evolve"] = {p,
                       omega,
                       {"a", "0", "datum (1 + a) Phi_omega"},
                       L,
                       n,
                       auto_domain,
                       dt,
                       {"t_end", "10", "final time"},
                       rec,
                       {"blowup_threshold", "1e6", "blow-up when max |u| exceeds this"},
                       gnuplot};
        t["instability"] = {p, omega, {"a", "0.01", "datum (1 + a) Phi_omega, 0 < a <= 0.05"}, L, n, dt,
                            {"t_end", "200", "final time"}, rec, R, esc, refine, ident, gnuplot};
        t["sweep"] = {{"p", "3", "list of exponents"},
                      {"omega_ratio", "1", "list of omega / omega_c"},
                      {"a", "0.01", "list of amplitudes"},
                      L,
                      n,
                      dt,
                      {"t_end", "200", "final time"},
                      rec,
                      R,
                      esc,
                      refine,
                      {"check_identities", "false", "check the virial identities at every sample"},
                      {"jobs", "1", "concurrent runs"}};
        return t;
    }();
    return table.at(cmd);
}

struct Invocation {
    std::string command;
    std::string config_path;
    std::string out_dir;
    std::map<std::string, std::string> flags;  // raw flag storage, keyed like the settings
    CLI::App* app = nullptr;
};

Settings resolve_settings(const Invocation& inv) {
    Settings s;
    std::set<std::string> allowed;
    for (const auto& k : keys_for(inv.command)) {
        s[k.key] = k.fallback;
        allowed.insert(k.key);
    }
    if (!inv.config_path.empty()) {
        for (const auto& [k, v] : read_config_file(inv.config_path)) {
            if (k == "out_dir") continue;
            if (!allowed.count(k)) throw ValidationError("unknown configuration key '" + k + "' for " + inv.command);
            s[k] = v;
        }
    }
    for (const auto& k : keys_for(inv.command)) {
        if (inv.app->count("--" + k.key) > 0) s[k.key] = inv.flags.at(k.key);
    }
    return s;
}

std::string config_file_out_dir(const Invocation& inv) {
    if (inv.config_path.empty()) return "";
    const auto file = read_config_file(inv.config_path);
    const auto it = file.find("out_dir");
    return it == file.end() ? "" : it->second;
}

std::string canonical_text(const Settings& s) {
    std::string out;
    for (const auto& [k, v] : s) out += k + " = " + v + "\n";
    return out;
}

fs::path output_dir(const Invocation& inv, const Settings& s) {
    if (!inv.out_dir.empty()) return inv.out_dir;
    if (const auto d = config_file_out_dir(inv); !d.empty()) return d;
    const char* root = std::getenv("KGSIM_OUT_DIR");
    const fs::path base = root && *root ? root : "kgsim_out";
    return base / (inv.command + "-" + blob_id(canonical_text(s)).substr(0, 10));
}

double resolve_omega(const std::string& text, double p) {
    if (trim(text) == "critical") return critical_frequency(p);
    return parse_double("omega", text);
}

struct Common {
    double p = 3, omega = 0;
    double L = 100;
    int n = 1024;
};

Common common(const Settings& s, bool auto_domain) {
    Common c;
    c.p = parse_double("p", s.at("p"));
    if (!(c.p > 1 && c.p < 5)) throw ValidationError("p must lie in (1, 5)");
    c.omega = resolve_omega(s.at("omega"), c.p);
    if (!(std::abs(c.omega) < 1)) throw ValidationError("|omega| must be < 1");
    c.L = parse_double("L", s.at("L"));
    c.n = parse_int("n", s.at("n"));
    Grid(c.L, c.n);  // validates L, n
    if (auto_domain) {
        const auto d = resolve_domain(c.p, c.omega, c.L, c.n);
        c.L = d.length;
        c.n = d.n;
    }
    return c;
}

// ---- output bundle ---------------------------------------------------------

struct Bundle {
    std::map<std::string, std::string> files;
    json results = json::object();
    std::string status = "ok";
    int exit_code = kOk;
};

void write_bundle(const fs::path& dir, const Invocation& inv, const Settings& s, const std::string& started,
                  Bundle& b, const json& resolved) {
    json manifest;
    manifest["tool"] = kVersion;
    manifest["command"] = inv.command;
    json cfg = json::object();
    for (const auto& [k, v] : s) cfg[k] = v;
    manifest["config"] = cfg;
    manifest["config_hash"] = blob_id(canonical_text(s));
    manifest["resolved"] = resolved;
    manifest["started_at"] = started;
    manifest["finished_at"] = utc_now();
    manifest["status"] = b.status;
    manifest["exit_code"] = b.exit_code;
    manifest["results"] = b.results;
    json outputs = json::object();
    std::string all;
    for (const auto& [name, content] : b.files) {
        outputs[name] = blob_id(content);
        all += name + '\0' + blob_id(content) + '\n';
    }
    manifest["outputs"] = outputs;
    manifest["content_hash"] = sha1_hex(all);
    for (const auto& [name, content] : b.files) write_file_atomic(dir / name, content);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string gnuplot_script(const std::string& csv, const std::string& xcol, const std::vector<std::string>& ycols,
                           const CsvTable& table) {
    std::string out = "set datafile separator ','\nset key autotitle columnhead\nset grid\n";
    const int x = table.column(xcol) + 1;
    out += "plot ";
    for (std::size_t i = 0; i < ycols.size(); ++i) {
        if (i) out += ", \\\n     ";
        out += "'" + csv + "' using " + std::to_string(x) + ":" + std::to_string(table.column(ycols[i]) + 1) +
               " with lines";
    }
    out += "\npause -1\n";
    return out;
}

// ---- subcommands -----------------------------------------------------------

json resolved_json(const Common& c) {
    json r;
    r["p"] = c.p;
    r["omega"] = c.omega;
    r["L"] = c.L;
    r["n"] = c.n;
    return r;
}

Bundle cmd_groundstate(const Settings& s, json& resolved) {
    const Common c = common(s, parse_bool("auto_domain", s.at("auto_domain")));
    const bool plot = parse_bool("gnuplot", s.at("gnuplot"));
    resolved = resolved_json(c);
    const Grid g(c.L, c.n);
    const auto wave = build_family(c.p, c.omega, g);
    const double p = c.p, w = c.omega, m2 = 1 - w * w;
    const auto nrm = norms(wave.phi, p);
    const double E = energy(wave.Phi, p), Q = charge(wave.Phi);
    const double kin = nrm.h1sq - nrm.l2sq;

    Bundle b;
    auto& r = b.results;
    r["p"] = p;
    r["omega"] = w;
    r["omega_c"] = critical_frequency(p);
    r["m2"] = m2;
    r["l2sq"] = nrm.l2sq;
    r["h1sq"] = nrm.h1sq;
    r["lp1"] = nrm.lp1;
    r["energy"] = E;
    r["charge"] = Q;
    r["momentum"] = momentum(wave.Phi);
    r["action"] = action(wave.Phi, p, w);
    r["elliptic_residual"] = elliptic_residual(wave.phi, p, m2);
    r["pohozaev_first_residual"] = kin + m2 * nrm.l2sq - nrm.lp1;
    r["pohozaev_second_residual"] = kin - m2 * nrm.l2sq + 2.0 / (p + 1.0) * nrm.lp1;
    r["energy_charge_identity_residual"] = (p + 3) * E + 8 * w * Q;
    const double h = 1e-4;
    if (std::abs(w) + h < 1) {
        const double qp = charge(build_family(p, w + h, g, 0.0, false).Phi);
        const double qm = charge(build_family(p, w - h, g, 0.0, false).Phi);
        r["dQ_domega"] = (qp - qm) / (2 * h);
    }
    r["dQ_domega_formula"] =
        -std::pow(m2, 2.0 / (p - 1) - 1.5) * (1 - 4.0 / (p - 1) * w * w) * l2sq(build_phi0(p, g));

    CsvTable profile;
    profile.header = {"x", "phi", "dphi_domega"};
    for (int j = 0; j < g.size(); ++j)
        profile.add_row({format_double(g.x(j)), format_double(wave.phi[j].real()),
                         format_double(wave.dphi_domega[j].real())});
    CsvTable diag;
    diag.header = {"name", "value"};
    for (const auto& [k, v] : r.items()) diag.add_row({k, format_double(v.get<double>())});
    b.files["profile.csv"] = profile.str();
    b.files["diagnostics.csv"] = diag.str();
    if (plot) b.files["profile.gp"] = gnuplot_script("profile.csv", "x", {"phi", "dphi_domega"}, profile);
    return b;
}

Bundle cmd_spectrum(const Settings& s, json& resolved) {
    Common c = common(s, parse_bool("auto_domain", s.at("auto_domain")));
    const int k = parse_int("k", s.at("k"));
    const int cap = parse_int("dense_cap", s.at("dense_cap"));
    const bool coercive = parse_bool("coercivity", s.at("coercivity"));
    const bool vectors = parse_bool("vectors", s.at("vectors"));
    if (k < 1) throw ValidationError("k must be positive");
    if (cap < 32) throw ValidationError("dense_cap must be at least 32");
    bool reduced = false;
    while (2 * c.n > cap) {
        c.n /= 2;
        reduced = true;
    }
    Grid(c.L, c.n);
    resolved = resolved_json(c);
    resolved["n_reduced_for_dense_cap"] = reduced;
    const Grid g(c.L, c.n);
    const auto wave = build_family(c.p, c.omega, g);
    const HessianOperator H(wave);
    const auto rep = spectrum(H, k, cap);

    Bundle b;
    auto& r = b.results;
    r["omega_c"] = critical_frequency(c.p);
    r["l2sq"] = l2sq(wave.phi);
    r["energy"] = energy(wave.Phi, c.p);
    r["charge"] = charge(wave.Phi);
    r["n_negative"] = rep.n_negative;
    r["n_near_zero"] = rep.n_near_zero;
    r["threshold_zero"] = rep.threshold_zero;
    r["lowest_eigenvalue"] = rep.eigenvalues.front();
    r["psi_rayleigh"] = inner(H.apply(wave.psi), wave.psi);
    if (coercive) r["coercivity_margin"] = coercivity_margin(H, coercivity_constraints(wave), cap);

    CsvTable ev;
    ev.header = {"index", "eigenvalue", "class"};
    for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
        const double mu = rep.eigenvalues[i];
        const char* cls = std::abs(mu) < rep.threshold_zero ? "zero" : mu < 0 ? "negative" : "positive";
        ev.add_row({std::to_string(i), format_double(mu), cls});
    }
    b.files["eigenvalues.csv"] = ev.str();
    if (vectors) {
        CsvTable vt;
        vt.header = {"x"};
        for (std::size_t i = 0; i < rep.eigenvectors.size(); ++i)
            for (const char* part : {"u_re", "u_im", "v_re", "v_im"})
                vt.header.push_back("e" + std::to_string(i) + "_" + part);
        for (int j = 0; j < g.size(); ++j) {
            std::vector<std::string> row{format_double(g.x(j))};
            for (const auto& e : rep.eigenvectors) {
                row.push_back(format_double(e.u[j].real()));
                row.push_back(format_double(e.u[j].imag()));
                row.push_back(format_double(e.v[j].real()));
                row.push_back(format_double(e.v[j].imag()));
            }
            vt.add_row(std::move(row));
        }
        b.files["eigenvectors.csv"] = vt.str();
    }
    return b;
}

Bundle cmd_evolve(const Settings& s, json& resolved) {
    const Common c = common(s, parse_bool("auto_domain", s.at("auto_domain")));
    const double a = parse_double("a", s.at("a"));
    EvolverConfig ec;
    ec.dt = parse_double("dt", s.at("dt"));
    ec.t_end = parse_double("t_end", s.at("t_end"));
    ec.record_every = parse_int("record_every", s.at("record_every"));
    ec.blowup_threshold = parse_double("blowup_threshold", s.at("blowup_threshold"));
    const bool plot = parse_bool("gnuplot", s.at("gnuplot"));
    ec.validate();
    if (!(a > -1)) throw ValidationError("a must exceed -1");
    resolved = resolved_json(c);
    const Grid g(c.L, c.n);
    const auto wave = build_family(c.p, c.omega, g);
    const PhaseState u0 = cplx{1 + a} * wave.Phi;

    CsvTable t;
    t.header = {"t", "Q", "P", "E", "orbit_distance", "sup_u"};
    std::vector<ConservedTriple> series;
    double worst = 0;
    const auto summary = evolve_streaming(u0, ec, c.p, [&](const PhaseState& st, const ConservedTriple& q) {
        series.push_back(q);
        const double d = orbit_distance(st, c.p, c.omega).distance;
        worst = std::max(worst, d);
        t.add_row({format_double(st.t), format_double(q.Q), format_double(q.P), format_double(q.E), format_double(d),
                   format_double(st.u.max_abs())});
        return true;
    });
    const auto drift = conservation_drift(series, 1e-3 * h1l2sq(u0));

    Bundle b;
    auto& r = b.results;
    r["omega_c"] = critical_frequency(c.p);
    r["l2sq"] = l2sq(wave.phi);
    r["energy"] = energy(wave.Phi, c.p);
    r["charge"] = charge(wave.Phi);
    r["run_status"] = to_string(summary.status);
    r["blowup_time"] = summary.blowup_time ? json(*summary.blowup_time) : json(nullptr);
    r["last_finite_time"] = summary.last_finite_time;
    r["steps_taken"] = summary.steps_taken;
    r["drift_Q"] = drift.Q;
    r["drift_P"] = drift.P;
    r["drift_E"] = drift.E;
    r["max_orbit_distance"] = worst;
    b.files["trajectory.csv"] = t.str();
    if (plot) b.files["trajectory.gp"] = gnuplot_script("trajectory.csv", "t", {"orbit_distance"}, t);
    if (summary.status == RunStatus::blown_up) {
        b.status = "blown_up";
        b.exit_code = kBlowUp;
    }
    return b;
}

InstabilityConfig instability_config(const Settings& s, double p, double omega, double a) {
    InstabilityConfig ic;
    ic.p = p;
    ic.omega = omega;
    ic.a = a;
    ic.L = parse_double("L", s.at("L"));
    ic.n = parse_int("n", s.at("n"));
    ic.R = parse_double("R", s.at("R"));
    ic.evolver.dt = parse_double("dt", s.at("dt"));
    ic.evolver.t_end = parse_double("t_end", s.at("t_end"));
    ic.evolver.record_every = parse_int("record_every", s.at("record_every"));
    ic.escape_factor = parse_double("escape_factor", s.at("escape_factor"));
    ic.auto_refine = parse_bool("auto_refine", s.at("auto_refine"));
    ic.check_identities = parse_bool("check_identities", s.at("check_identities"));
    ic.validate();
    if (!ic.auto_refine) build_family(p, omega, Grid(ic.L, ic.n));  // surfaces an undecayed profile up front
    return ic;
}

json report_json(const InstabilityReport& rep, const std::string& config_hash) {
    json r;
    r["status"] = rep.status_label();
    r["t_star"] = rep.t_star ? json(*rep.t_star) : json(nullptr);
    r["escape_reason"] = to_string(rep.escape_reason);
    r["min_slope"] = std::isfinite(rep.min_I_dot_numeric) ? json(rep.min_I_dot_numeric) : json(nullptr);
    r["config_hash"] = config_hash;
    return r;
}

json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void fill_instability_results(json& r, const InstabilityReport& rep) {
    r["status"] = rep.status_label();
    r["omega"] = rep.omega;
    r["omega_c"] = rep.omega_c;
    r["critical"] = rep.critical;
    r["L_used"] = rep.L_used;
    r["n_used"] = rep.n_used;
    r["l2sq"] = rep.phi_l2sq;
    r["run_status"] = to_string(rep.run_status);
    r["escape_reason"] = to_string(rep.escape_reason);
    r["t_star"] = rep.t_star ? json(*rep.t_star) : json(nullptr);
    r["initial_distance"] = rep.initial_distance;
    r["max_distance_ratio"] = rep.max_distance_ratio;
    r["predicted_slope"] = rep.predicted_slope;
    r["slope_lower_bound"] = rep.slope_lower_bound;
    r["min_slope"] = nullable(rep.min_I_dot_numeric);
    r["I_strictly_increasing"] = rep.I_strictly_increasing;
    r["window_t_end"] = rep.initial_window.t_end;
    r["window_mean_slope"] = nullable(rep.initial_window.mean);
    r["window_secant_slope"] = nullable(rep.initial_window.secant);
    r["window_min_slope"] = nullable(rep.initial_window.min);
    r["window_max_slope"] = nullable(rep.initial_window.max);
    r["max_virial_residual_first"] = rep.max_virial_residual_first;
    r["max_virial_residual_second"] = rep.max_virial_residual_second;
    r["fitted_C_virial"] = nullable(rep.fitted_C_virial);
    r["fitted_C_control"] = nullable(rep.fitted_C_control);
    r["median_modulation_ratio"] = nullable(rep.median_modulation_ratio);
    r["drift_Q"] = rep.drift.Q;
    r["drift_P"] = rep.drift.P;
    r["drift_E"] = rep.drift.E;
}

Bundle cmd_instability(const Settings& s, json& resolved) {
    const double p = parse_double("p", s.at("p"));
    if (!(p > 1 && p < 5)) throw ValidationError("p must lie in (1, 5)");
    const double omega = resolve_omega(s.at("omega"), p);
    const auto ic = instability_config(s, p, omega, parse_double("a", s.at("a")));
    const bool plot = parse_bool("gnuplot", s.at("gnuplot"));
    const auto rep = instability_experiment(ic);
    resolved["p"] = p;
    resolved["omega"] = omega;
    resolved["L"] = rep.L_used;
    resolved["n"] = rep.n_used;

    Bundle b;
    fill_instability_results(b.results, rep);
    const Grid g(rep.L_used, rep.n_used);
    const auto wave = build_family(p, omega, g);
    b.results["energy"] = energy(wave.Phi, p);
    b.results["charge"] = charge(wave.Phi);
    const auto table = instability_timeseries(rep);
    b.files["timeseries.csv"] = table.str();
    b.files["report.json"] = report_json(rep, blob_id(canonical_text(s))).dump(2) + "\n";
    if (plot) b.files["timeseries.gp"] = gnuplot_script("timeseries.csv", "t", {"I", "orbit_distance"}, table);
    if (rep.run_status == RunStatus::blown_up) {
        b.status = "blown_up";
        b.exit_code = kBlowUp;
    }
    return b;
}

Bundle cmd_sweep(const Settings& s, json& resolved, const fs::path& dir) {
    const auto ps = parse_list("p", s.at("p"));
    const auto ratios = parse_list("omega_ratio", s.at("omega_ratio"));
    const auto as = parse_list("a", s.at("a"));
    const int jobs = parse_int("jobs", s.at("jobs"));
    if (jobs < 1) throw ValidationError("jobs must be at least 1");

    struct Job {
        double p, ratio, omega, a;
        InstabilityConfig cfg;
    };
    std::vector<Job> grid;
    for (double p : ps) {
        if (!(p > 1 && p < 5)) throw ValidationError("p must lie in (1, 5)");
        for (double ratio : ratios)
            for (double a : as) {
                const double omega = ratio * critical_frequency(p);
                grid.push_back({p, ratio, omega, a, instability_config(s, p, omega, a)});
            }
    }
    resolved["runs"] = grid.size();

    struct Outcome {
        std::string status = "ERROR", escape_reason, error;
        double t_star = NAN, min_slope = NAN, L_used = NAN;
        int n_used = 0;
        std::string timeseries, report;
    };
    std::vector<Outcome> outcomes(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
            auto& o = outcomes[i];
            try {
                const auto rep = instability_experiment(grid[i].cfg);
                o.status = rep.status_label();
                o.escape_reason = to_string(rep.escape_reason);
                o.t_star = rep.t_star.value_or(NAN);
                o.min_slope = rep.min_I_dot_numeric;
                o.L_used = rep.L_used;
                o.n_used = rep.n_used;
                o.timeseries = instability_timeseries(rep).str();
                o.report = report_json(rep, "").dump(2) + "\n";
            } catch (const std::exception& e) {
                o.error = e.what();
                std::replace(o.error.begin(), o.error.end(), ',', ';');
                std::replace(o.error.begin(), o.error.end(), '\n', ' ');
            }
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min<int>(jobs, std::max<std::size_t>(grid.size(), 1));
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    CsvTable summary;
    summary.header = {"index", "p", "omega_ratio", "omega", "a", "status", "t_star", "min_slope",
                      "escape_reason", "L_used", "n_used", "error"};
    Bundle b;
    int errors = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& j = grid[i];
        const auto& o = outcomes[i];
        char name[32];
        std::snprintf(name, sizeof name, "run_%04zu", i);
        summary.add_row({std::to_string(i), format_double(j.p), format_double(j.ratio), format_double(j.omega),
                         format_double(j.a), o.status, format_double(o.t_star), format_double(o.min_slope),
                         o.escape_reason, format_double(o.L_used), std::to_string(o.n_used), o.error});
        if (o.error.empty()) {
            write_file_atomic(dir / name / "timeseries.csv", o.timeseries);
            write_file_atomic(dir / name / "report.json", o.report);
        } else {
            ++errors;
        }
    }
    b.files["summary.csv"] = summary.str();
    b.results["runs"] = grid.size();
    b.results["failed_runs"] = errors;
    return b;
}

// ---- driver ----------------------------------------------------------------

int run(Invocation& inv) {
    const std::string started = utc_now();
    Settings s;
    fs::path dir;
    try {
        s = resolve_settings(inv);
        dir = output_dir(inv, s);
    } catch (const ValidationError& e) {
        std::cerr << "kgsim: invalid configuration: " << e.what() << "\n";
        return kInvalid;
    }
    json resolved = json::object();
    Bundle b;
    try {
        if (inv.command == "groundstate")
            b = cmd_groundstate(s, resolved);
        else if (inv.command == "spectrum")
            b = cmd_spectrum(s, resolved);
        else if (inv.command == "evolve")
            b = cmd_evolve(s, resolved);
        else if (inv.command == "instability")
            b = cmd_instability(s, resolved);
        else
            b = cmd_sweep(s, resolved, dir);
    } catch (const ValidationError& e) {
        std::cerr << "kgsim: invalid configuration: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "kgsim: invalid configuration: " << e.what() << "\n";
        return kInvalid;
    } catch (const ConfigurationError& e) {
        std::cerr << "kgsim: invalid configuration: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::length_error& e) {
        std::cerr << "kgsim: invalid configuration: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "kgsim: internal error: " << e.what() << "\n";
        return kInternal;
    }
    try {
        write_bundle(dir, inv, s, started, b, resolved);
    } catch (const std::exception& e) {
        std::cerr << "kgsim: cannot write outputs: " << e.what() << "\n";
        return kInternal;
    }
    std::cout << dir.string() << "\n";
    return b.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Klein-Gordon standing-wave instability lab"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"groundstate", "ground-state profile and its scalar diagnostics"},
        {"spectrum", "lowest eigenpairs of the linearized operator"},
        {"evolve", "evolve (1 + a) Phi_omega and record the conserved quantities"},
        {"instability", "instability experiment with modulation and virial tracking"},
        {"sweep", "instability experiments over a (p, omega/omega_c, a) grid"}};
    std::vector<Invocation> invocations(commands.size());
    for (std::size_t i = 0; i < commands.size(); ++i) {
        auto& inv = invocations[i];
        inv.command = commands[i].first;
        inv.app = app.add_subcommand(commands[i].first, commands[i].second);
        inv.app->add_option("--config", inv.config_path, "key = value configuration file (flags override it)");
        inv.app->add_option("--out-dir,--out", inv.out_dir, "output directory (default $KGSIM_OUT_DIR/<command>-<hash>)");
        for (const auto& k : keys_for(inv.command)) inv.flags[k.key];
        for (const auto& k : keys_for(inv.command)) {
            std::string flag = "--" + k.key;
            std::string dashed = k.key;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            if (dashed != k.key) flag += ",--" + dashed;
            inv.app->add_option(flag, inv.flags.at(k.key), k.help + " [" + k.fallback + "]");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInvalid;
    }
    for (auto& inv : invocations)
        if (inv.app->parsed()) return run(inv);
    return kInvalid;
}
