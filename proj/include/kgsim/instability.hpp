#pragma once

// Instability experiment: evolve u0 = (1 + a) Phi_omega, follow the modulation
// parameters, the orbit distance and the virial functional I(t), and report
// the first escape from the orbit neighborhood.

#include "kgsim/evolver.hpp"
#include "kgsim/modulation.hpp"
#include "kgsim/virial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace kgsim {

struct InstabilityConfig {
    double p = 3.0;
    std::optional<double> omega;  ///< unset = critical frequency
    double a = 0.01;
    double R = 20.0;
    double L = 100.0;
    int n = 1024;
    EvolverConfig evolver{.dt = 5e-3, .t_end = 200.0, .record_every = 10};
    double escape_factor = 10.0;
    double capture_radius = kCaptureRadius;
    bool auto_refine = true;        ///< grow L until phi(L/2) < 1e-12, then n until the spectral tail is below 1e-10
    bool check_identities = true;   ///< virial identity residuals at every sample

    double resolved_omega() const { return omega.value_or(critical_frequency(p)); }

    void validate() const {
        if (!(p > 1.0 && p < 5.0)) throw std::invalid_argument("p must lie in (1, 5)");
        const double w = resolved_omega();
        if (!(std::abs(w) < 1.0)) throw std::invalid_argument("|omega| must be < 1");
        if (!(a > 0.0 && a <= 0.05)) throw std::invalid_argument("a must lie in (0, 0.05]");
        if (!(L > 0)) throw std::invalid_argument("L must be positive");
        if (!(R > 0 && 2.0 * R < 0.5 * L)) throw std::invalid_argument("cutoff needs 0 < 2R < L/2");
        if (!(escape_factor > 1.0)) throw std::invalid_argument("escape factor must exceed 1");
        evolver.validate();
        Grid(L, n);
    }
};

enum class EscapeReason { none, orbit_distance, fit_failure, blow_up };

inline const char* to_string(EscapeReason r) {
    switch (r) {
        case EscapeReason::none: return "none";
        case EscapeReason::orbit_distance: return "orbit_distance";
        case EscapeReason::fit_failure: return "fit_failure";
        case EscapeReason::blow_up: return "blow_up";
    }
    return "unknown";
}

struct InstabilityRow {
    double t = 0;
    ConservedTriple conserved;
    double orbit_distance = 0;
    double sup_u = 0;
    bool tracked = false;   ///< modulation fit succeeded
    ModulationFit fit;
    double theta_dot = NAN, y_dot = NAN, lambda_dot = NAN;
    double I = NAN;
    double I_dot_numeric = NAN;
    double I_dot_main = NAN;
    double kinetic = NAN;
    double tail = NAN;
    double virial_residual_first = NAN;
    double virial_residual_second = NAN;
    double control_D = NAN;        ///< ||v - i w u||^2 - (lambda-1)^2 w^2 ||phi||^2 - ||eta - i w xi||^2
    double remainder_ratio = NAN;  ///< ||xi||^2 / (a|lambda-1| + a^2 + (lambda-1)^2)
};

struct SlopeWindow {
    double t_begin = 0, t_end = 0;
    double min = NAN, max = NAN, mean = NAN;
    double secant = NAN;   ///< (I(t_end) - I(t_begin)) / (t_end - t_begin)
    int samples = 0;
};

struct InstabilityReport {
    InstabilityConfig config;
    double omega = 0;
    double omega_c = 0;
    double L_used = 0;
    int n_used = 0;
    bool critical = false;
    RunStatus run_status = RunStatus::completed;
    bool instability_observed = false;
    EscapeReason escape_reason = EscapeReason::none;
    std::optional<double> t_star;
    double initial_distance = 0;
    double max_distance_ratio = 0;
    double phi_l2sq = 0;
    double predicted_slope = NAN;      ///< (5-p)/(p-1) 4 a w^2 ||phi||^2
    double slope_lower_bound = NAN;    ///< (5-p)/(p-1) 2 a w^2 ||phi||^2
    double min_I_dot_numeric = NAN;    ///< over the tracked window
    bool I_strictly_increasing = false;
    SlopeWindow initial_window;
    double max_virial_residual_first = 0, max_virial_residual_second = 0;
    double fitted_C_virial = NAN;      ///< |I'_num - main| <= C (tail + ||xi||^2 + dt^2)
    double fitted_C_control = NAN;     ///< |D| <= C (|l-1|^3 + a|l-1| + ||xi||^3)
    double median_modulation_ratio = NAN;
    ConservationDrift drift;
    std::vector<InstabilityRow> rows;

    const char* status_label() const { return instability_observed ? "INSTABILITY_OBSERVED" : "STAYED_NEAR_ORBIT"; }
};

/// Smallest power-of-two n >= n0 whose sampled datum has a spectral tail below 1e-10.
inline int resolve_grid_size(double p, double omega, double L, int n0, int n_max = 16384) {
    int n = n0;
    while (n < n_max) {
        const Grid g(L, n);
        const auto w = build_family(p, omega, g, 0.0, false);
        if (spectral_tail_ratio(w.phi) <= 1e-10) break;
        n *= 2;
    }
    return n;
}

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

inline InstabilityReport instability_experiment(const InstabilityConfig& cfg) {
    cfg.validate();
    InstabilityReport rep;
    rep.config = cfg;
    const double p = cfg.p;
    const double w = cfg.resolved_omega();
    rep.omega = w;
    rep.omega_c = critical_frequency(p);
    rep.critical = is_critical(p, w);
    Domain dom{cfg.L, cfg.n};
    if (cfg.auto_refine) {
        dom = resolve_domain(p, w, cfg.L, cfg.n);
        dom.n = resolve_grid_size(p, w, dom.length, dom.n);
    }
    rep.L_used = dom.length;
    rep.n_used = dom.n;
    const Grid grid(dom.length, dom.n);
    const double dt = cfg.evolver.dt;

    const auto wave = build_family(p, w, grid);
    rep.phi_l2sq = l2sq(wave.phi);
    const double a = cfg.a;
    rep.predicted_slope = (5.0 - p) / (p - 1.0) * 4.0 * a * w * w * rep.phi_l2sq;
    rep.slope_lower_bound = 0.5 * rep.predicted_slope;
    const PhaseState u0 = cplx{1.0 + a} * wave.Phi;
    const auto cutoff = build_cutoff(cfg.R, grid);
    const auto c0 = conserved(u0, p);
    rep.initial_distance = orbit_distance(u0, p, w).distance;
    const double escape_distance = cfg.escape_factor * std::max(rep.initial_distance, 1e-12);

    FitOptions fopt;
    fopt.capture_radius = cfg.capture_radius;
    Tracker tracker(p, w, fopt);
    std::vector<ConservedTriple> series;

    auto observer = [&](const PhaseState& s, const ConservedTriple& c) {
        InstabilityRow row;
        row.t = s.t;
        row.conserved = c;
        series.push_back(c);
        row.sup_u = s.u.max_abs();
        row.orbit_distance = orbit_distance(s, p, w).distance;
        rep.max_distance_ratio = std::max(rep.max_distance_ratio, row.orbit_distance / std::max(rep.initial_distance, 1e-300));

        const bool ok = tracker.push(s);
        if (ok) {
            row.tracked = true;
            row.fit = tracker.current().samples.back().fit;
            const double y = row.fit.y;
            row.I = I_of_t(s, cutoff, y, p);
            row.kinetic = kinetic_term(s, w);
            row.tail = tail_mass(s, cfg.R, y, p);
            if (rep.critical) row.I_dot_main = I_dot_analytic(s, cutoff, y, 0.0, p, w, c0).main;
            if (cfg.check_identities) {
                const auto chk = check_virial_identities(s, cutoff, y, p, dt);
                row.virial_residual_first = chk.residual_first();
                row.virial_residual_second = chk.residual_second();
            }
            const double lm1 = row.fit.lambda - 1.0;
            const double xi2 = row.fit.xi_h1l2 * row.fit.xi_h1l2;
            const double eta = row.fit.eta_minus_i_omega_xi;
            row.control_D = row.kinetic - lm1 * lm1 * w * w * rep.phi_l2sq - eta * eta;
            const double denom = a * std::abs(lm1) + a * a + lm1 * lm1;
            row.remainder_ratio = denom > 0 ? xi2 / denom : NAN;
        }
        rep.rows.push_back(row);

        if (!ok) {
            rep.escape_reason = EscapeReason::fit_failure;
            rep.t_star = s.t;
            return false;
        }
        if (row.orbit_distance > escape_distance) {
            rep.escape_reason = EscapeReason::orbit_distance;
            rep.t_star = s.t;
            return false;
        }
        return true;
    };

    const auto summary = evolve_streaming(u0, cfg.evolver, p, observer);
    rep.run_status = summary.status;
    if (summary.status == RunStatus::blown_up && !rep.t_star) {
        rep.escape_reason = EscapeReason::blow_up;
        rep.t_star = summary.blowup_time;
    }
    rep.instability_observed = rep.t_star.has_value();
    rep.drift = conservation_drift(series, 1e-3 * h1l2sq(u0));

    // Post-processing over the tracked prefix.
    const auto track = tracker.finish();
    std::vector<std::size_t> tracked;
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
        if (rep.rows[i].tracked) tracked.push_back(i);
    for (std::size_t k = 0; k < track.samples.size() && k < tracked.size(); ++k) {
        auto& row = rep.rows[tracked[k]];
        row.theta_dot = track.samples[k].theta_dot;
        row.y_dot = track.samples[k].y_dot;
        row.lambda_dot = track.samples[k].lambda_dot;
        // y is unwrapped in the track; keep the continuous branch in the rows.
        row.fit.theta = track.samples[k].fit.theta;
        row.fit.y = track.samples[k].fit.y;
    }
    const std::size_t m = tracked.size();
    for (std::size_t k = 0; k < m && m >= 2; ++k) {
        const std::size_t lo = k == 0 ? 0 : k - 1, hi = k + 1 == m ? m - 1 : k + 1;
        const auto& rl = rep.rows[tracked[lo]];
        const auto& rh = rep.rows[tracked[hi]];
        rep.rows[tracked[k]].I_dot_numeric = (rh.I - rl.I) / (rh.t - rl.t);
    }

    rep.I_strictly_increasing = m >= 2;
    double min_slope = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
        const auto& r = rep.rows[tracked[k]];
        if (std::isfinite(r.I_dot_numeric)) min_slope = std::min(min_slope, r.I_dot_numeric);
        if (k > 0 && !(r.I > rep.rows[tracked[k - 1]].I)) rep.I_strictly_increasing = false;
        if (std::isfinite(r.virial_residual_first))
            rep.max_virial_residual_first = std::max(rep.max_virial_residual_first, r.virial_residual_first);
        if (std::isfinite(r.virial_residual_second))
            rep.max_virial_residual_second = std::max(rep.max_virial_residual_second, r.virial_residual_second);
    }
    rep.min_I_dot_numeric = m >= 2 ? min_slope : NAN;

    // Initial slope window [0, min(5, t*/2)].
    SlopeWindow& win = rep.initial_window;
    win.t_begin = u0.t;
    win.t_end = std::min(5.0, rep.t_star ? 0.5 * *rep.t_star : cfg.evolver.t_end);
    double sum = 0.0;
    win.min = std::numeric_limits<double>::infinity();
    win.max = -std::numeric_limits<double>::infinity();
    const InstabilityRow* last_in = nullptr;
    for (std::size_t k = 0; k < m; ++k) {
        const auto& r = rep.rows[tracked[k]];
        if (r.t > win.t_end + 1e-12) break;
        last_in = &r;
        if (!std::isfinite(r.I_dot_numeric)) continue;
        win.min = std::min(win.min, r.I_dot_numeric);
        win.max = std::max(win.max, r.I_dot_numeric);
        sum += r.I_dot_numeric;
        ++win.samples;
    }
    if (win.samples > 0) win.mean = sum / win.samples;
    if (last_in && m > 0 && last_in->t > rep.rows[tracked[0]].t) {
        win.t_end = last_in->t;
        win.secant = (last_in->I - rep.rows[tracked[0]].I) / (last_in->t - rep.rows[tracked[0]].t);
    }

    // Fitted constants of the error budgets.
    if (rep.critical) {
        double cv = 0.0, cc = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const auto& r = rep.rows[tracked[k]];
            const double xi = r.fit.xi_h1l2;
            if (std::isfinite(r.I_dot_numeric)) {
                const double budget = r.tail + xi * xi + dt * dt;
                cv = std::max(cv, std::abs(r.I_dot_numeric - r.I_dot_main) / budget);
            }
            const double lm1 = std::abs(r.fit.lambda - 1.0);
            const double budget_c = lm1 * lm1 * lm1 + a * lm1 + xi * xi * xi;
            if (budget_c > 0) cc = std::max(cc, std::abs(r.control_D) / budget_c);
        }
        rep.fitted_C_virial = cv;
        rep.fitted_C_control = cc;
    }
    rep.median_modulation_ratio = detail::median(modulation_rate_ratios(track, w));
    return rep;
}

}  // namespace kgsim
