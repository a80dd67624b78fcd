#pragma once

// Strang-split integrator for u_tt - u_xx + u = |u|^{p-1} u written as
// u_t = v, v_t = u_xx - u + |u|^{p-1} u on the periodic grid.  Each step is a
// half kick with the nonlinearity, the exact linear Klein-Gordon rotation of
// every Fourier mode, and a second half kick.

#include "kgsim/fourier.hpp"
#include "kgsim/functionals.hpp"
#include "kgsim/grid.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace kgsim {

enum class Scheme { strang_split };

struct EvolverConfig {
    double dt = 5e-3;
    double t_end = 10.0;
    Scheme scheme = Scheme::strang_split;
    double blowup_threshold = 1e6;  ///< on max |u|
    int record_every = 10;
    double nonlinearity = 1.0;      ///< coefficient of |u|^{p-1} u

    void validate() const {
        if (!(dt > 0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
        if (!(t_end >= 0) || !std::isfinite(t_end)) throw std::invalid_argument("t_end must be >= 0");
        if (record_every < 1) throw std::invalid_argument("record_every must be >= 1");
        if (!(blowup_threshold > 0)) throw std::invalid_argument("blowup_threshold must be positive");
    }
    long steps() const { return std::lround(t_end / dt); }
};

class Evolver {
public:
    Evolver(const Grid& grid, double p, double nonlinearity = 1.0)
        : grid_(grid), p_(p), coeff_(nonlinearity), omega_(grid.size()), uh_(grid.size()), vh_(grid.size()) {
        if (!(p > 1.0)) throw std::invalid_argument("evolver: p must exceed 1");
        for (int j = 0; j < grid.size(); ++j) {
            const double k = grid.wavenumber(j);
            omega_[j] = std::sqrt(k * k + 1.0);
        }
    }

    const Grid& grid() const { return grid_; }

    /// Advances s by dt in place (dt may be negative).
    void step(PhaseState& s, double dt) {
        kick(s, 0.5 * dt);
        rotate(s, dt);
        kick(s, 0.5 * dt);
        s.t += dt;
    }

private:
    void kick(PhaseState& s, double h) const {
        if (coeff_ == 0.0) return;
        for (int j = 0; j < grid_.size(); ++j) {
            const cplx u = s.u[j];
            const double a = std::abs(u);
            if (a == 0.0) continue;
            s.v[j] += (h * coeff_ * std::pow(a, p_ - 1.0)) * u;
        }
    }

    void rotate(PhaseState& s, double dt) {
        const auto& plan = fourier_plan(grid_.size());
        plan.forward(s.u.values, uh_);
        plan.forward(s.v.values, vh_);
        for (int j = 0; j < grid_.size(); ++j) {
            const double W = omega_[j];
            const double c = std::cos(W * dt), sn = std::sin(W * dt);
            const cplx u = uh_[j], v = vh_[j];
            uh_[j] = c * u + (sn / W) * v;
            vh_[j] = -W * sn * u + c * v;
        }
        plan.backward(uh_, s.u.values);
        plan.backward(vh_, s.v.values);
        const double inv = 1.0 / grid_.size();
        for (auto& z : s.u.values) z *= inv;
        for (auto& z : s.v.values) z *= inv;
    }

    Grid grid_;
    double p_;
    double coeff_;
    std::vector<double> omega_;
    std::vector<cplx> uh_, vh_;
};

inline PhaseState step(const PhaseState& s, double dt, double p) {
    if (!s.finite()) throw std::domain_error("step: non-finite state");
    Evolver ev(s.grid(), p);
    PhaseState out = s;
    ev.step(out, dt);
    return out;
}

enum class RunStatus { completed, blown_up, rejected };

inline const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::completed: return "completed";
        case RunStatus::blown_up: return "blown_up";
        case RunStatus::rejected: return "rejected";
    }
    return "unknown";
}

struct TrajectorySample {
    PhaseState state;
    ConservedTriple conserved;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    RunStatus status = RunStatus::completed;
    std::optional<double> blowup_time;  ///< first time a non-finite or over-threshold state appeared
    double last_finite_time = 0;
};

/// Observer return value: false stops the run early (status stays `completed`).
using SampleObserver = std::function<bool(const PhaseState&, const ConservedTriple&)>;

struct RunSummary {
    RunStatus status = RunStatus::completed;
    std::optional<double> blowup_time;
    double last_finite_time = 0;
    long steps_taken = 0;
    bool stopped_by_observer = false;
};

/// Streams recorded samples (t = 0, every record_every steps, and the final
/// state) to `observe`.
inline RunSummary evolve_streaming(const PhaseState& s0, const EvolverConfig& cfg, double p,
                                   const SampleObserver& observe) {
    cfg.validate();
    RunSummary out;
    if (!s0.finite()) {
        out.status = RunStatus::rejected;
        return out;
    }
    Evolver ev(s0.grid(), p, cfg.nonlinearity);
    PhaseState s = s0;
    const long nsteps = cfg.steps();
    const double t0 = s0.t;
    if (!observe(s, conserved(s, p))) {
        out.stopped_by_observer = true;
        return out;
    }
    out.last_finite_time = t0;
    for (long k = 1; k <= nsteps; ++k) {
        ev.step(s, cfg.dt);
        s.t = t0 + k * cfg.dt;
        const double umax = s.u.max_abs();
        if (!s.finite() || !(umax <= cfg.blowup_threshold)) {
            out.status = RunStatus::blown_up;
            out.blowup_time = s.t;
            out.steps_taken = k;
            return out;
        }
        out.last_finite_time = s.t;
        out.steps_taken = k;
        if (k % cfg.record_every == 0 || k == nsteps) {
            const auto c = conserved(s, p);
            if (!(std::isfinite(c.Q) && std::isfinite(c.P) && std::isfinite(c.E))) {
                out.status = RunStatus::blown_up;
                out.blowup_time = s.t;
                return out;
            }
            if (!observe(s, c)) {
                out.stopped_by_observer = true;
                return out;
            }
        }
    }
    return out;
}

inline Trajectory evolve(const PhaseState& s0, const EvolverConfig& cfg, double p) {
    Trajectory traj;
    const auto summary = evolve_streaming(s0, cfg, p, [&](const PhaseState& s, const ConservedTriple& c) {
        traj.samples.push_back({s, c});
        return true;
    });
    traj.status = summary.status;
    traj.blowup_time = summary.blowup_time;
    traj.last_finite_time = summary.last_finite_time;
    return traj;
}

/// Largest |X(t) - X(0)| / scale over a trajectory, scale = max(|X(0)|, ||s0||^2_{H1 x L2}).
struct ConservationDrift {
    double Q = 0, P = 0, E = 0;
    double max() const { return std::max({Q, P, E}); }
};

inline ConservationDrift conservation_drift(const std::vector<ConservedTriple>& series, double scale_floor) {
    ConservationDrift d;
    if (series.empty()) return d;
    const auto& c0 = series.front();
    auto rel = [&](double x, double x0) { return std::abs(x - x0) / std::max(std::abs(x0), scale_floor); };
    for (const auto& c : series) {
        d.Q = std::max(d.Q, rel(c.Q, c0.Q));
        d.P = std::max(d.P, rel(c.P, c0.P));
        d.E = std::max(d.E, rel(c.E, c0.E));
    }
    return d;
}

}  // namespace kgsim
