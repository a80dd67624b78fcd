#pragma once

// Modulation decomposition u = e^{i theta} (Phi_{lambda omega} + xi)(. - y) with
//   <xi, i Phi_{lambda omega}> = <xi, d_x Phi_{lambda omega}> = <xi, Psi_{lambda omega}> = 0,
// and the orbit distance inf_{theta, y} || u - e^{i theta} Phi_omega(. - y) ||_{H1 x L2}.

#include "kgsim/evolver.hpp"
#include "kgsim/ground_state.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgsim {

inline constexpr double kCaptureRadius = 0.3;

/// Representative of angle in (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    if (a > std::numbers::pi) a -= two_pi;
    return a;
}

/// The branch of `value` (mod period) closest to `reference`.
inline double nearest_branch(double value, double reference, double period) {
    return value + period * std::round((reference - value) / period);
}

struct OrbitDistance {
    double distance = 0;
    double theta = 0;
    double y = 0;
};

/// Minimizes ||s - e^{i theta} Phi_omega(. - y)||_{H1 x L2}.  The optimal phase
/// for a given y is the argument of the H1 x L2 correlation c(y); y is located
/// on the grid by an FFT cross-correlation and refined by Newton's method on
/// |c(y)|^2 using the trigonometric interpolant.
inline OrbitDistance orbit_distance(const PhaseState& s, double p, double omega) {
    const Grid& g = s.grid();
    const int n = g.size();
    const auto wave = build_family(p, omega, g, 0.0, false);
    const cplx iw{0.0, omega};

    ComplexField a(g);
    for (int j = 0; j < n; ++j) a[j] = s.u[j] - iw * s.v[j];
    const auto ah = to_fourier(a.values);
    const auto bh = to_fourier(ddx(s.u).values);
    const auto ph = to_fourier(wave.phi.values);

    std::vector<cplx> ch(n);
    std::vector<double> ks(n);
    for (int j = 0; j < n; ++j) {
        const double k = g.is_nyquist(j) ? 0.0 : g.wavenumber(j);
        ks[j] = g.wavenumber(j);
        ch[j] = ah[j] * std::conj(ph[j]) + bh[j] * std::conj(cplx{0.0, k} * ph[j]);
    }
    const auto on_grid = from_fourier(ch);
    int best = 0;
    for (int m = 1; m < n; ++m)
        if (std::norm(on_grid[m]) > std::norm(on_grid[best])) best = m;

    auto correlation = [&](double y, cplx& c1, cplx& c2) {
        cplx c0{0.0};
        c1 = c2 = cplx{0.0};
        for (int j = 0; j < n; ++j) {
            const double k = g.is_nyquist(j) ? 0.0 : ks[j];
            const cplx term = ch[j] * std::polar(1.0, k * y);
            c0 += term;
            c1 += cplx{0.0, k} * term;
            c2 += -k * k * term;
        }
        const double L = g.length();
        c1 *= L;
        c2 *= L;
        return c0 * L;
    };

    double y = best * g.dx();
    for (int it = 0; it < 40; ++it) {
        cplx c1, c2;
        const cplx c0 = correlation(y, c1, c2);
        const double h1 = 2.0 * std::real(std::conj(c0) * c1);
        const double h2 = 2.0 * (std::norm(c1) + std::real(std::conj(c0) * c2));
        if (!(h2 < 0)) break;  // left the concave basin; keep the grid peak
        double dy = -h1 / h2;
        dy = std::clamp(dy, -g.dx(), g.dx());
        y += dy;
        if (std::abs(dy) < 1e-15 * std::max(1.0, std::abs(y))) break;
    }
    cplx c1, c2;
    const cplx c0 = correlation(y, c1, c2);

    OrbitDistance out;
    out.theta = std::arg(c0);
    out.y = g.wrap(y);
    const auto shifted = build_family(p, omega, g, out.y, false);
    PhaseState diff = s - std::polar(1.0, out.theta) * shifted.Phi;
    out.distance = std::sqrt(h1l2sq(diff));
    return out;
}

struct ModulationParams {
    double theta = 0;
    double y = 0;
    double lambda = 1;
};

struct ModulationFit {
    double theta = 0;
    double y = 0;
    double lambda = 1;
    std::optional<PhaseState> xi;        ///< (xi, eta); dropped in long tracks
    double xi_h1l2 = 0;                  ///< ||(xi, eta)||_{H1 x L2}
    double eta_minus_i_lomega_xi = 0;    ///< ||eta - i lambda omega xi||_{L2}
    double eta_minus_i_omega_xi = 0;     ///< ||eta - i omega xi||_{L2}
    std::array<double, 3> residuals{};   ///< F1, F2, F3
    int iterations = 0;
};

class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, ModulationParams best, std::array<double, 3> residuals)
        : std::runtime_error(what), best_(best), residuals_(residuals) {}
    const ModulationParams& best() const { return best_; }
    const std::array<double, 3>& residuals() const { return residuals_; }

private:
    ModulationParams best_;
    std::array<double, 3> residuals_;
};

struct FitOptions {
    double capture_radius = kCaptureRadius;
    double tolerance = 1e-10;
    int max_iterations = 50;
    double fd_step = 1e-6;  ///< relative step of the finite-difference Jacobian
    bool keep_xi = true;
};

namespace detail {

/// Evaluates the orthogonality residuals of a fixed state for trial parameters.
class ModulationProblem {
public:
    ModulationProblem(const PhaseState& s, double p, double omega)
        : grid_(s.grid()), p_(p), omega_(omega), uh_(to_fourier(s.u.values)), vh_(to_fourier(s.v.values)) {}

    /// e^{-i theta} s(. + y)
    PhaseState pulled_back(double theta, double y) const {
        const int n = grid_.size();
        std::vector<cplx> a(n), b(n);
        for (int j = 0; j < n; ++j) {
            const double k = grid_.wavenumber(j);
            const cplx m = grid_.is_nyquist(j) ? cplx{std::cos(k * y)} : std::polar(1.0, k * y);
            a[j] = uh_[j] * m;
            b[j] = vh_[j] * m;
        }
        PhaseState out(ComplexField(grid_, from_fourier(a)), ComplexField(grid_, from_fourier(b)));
        out *= std::polar(1.0, -theta);
        return out;
    }

    StandingWave wave(double lambda) const {
        const double w = lambda * omega_;
        if (!(lambda > 0) || !(std::abs(w) < 1.0))
            throw std::domain_error("lambda outside the admissible range");
        return build_family(p_, w, grid_, 0.0, false);
    }

    std::array<double, 3> residuals(const ModulationParams& m, PhaseState* xi_out = nullptr,
                                    StandingWave* wave_out = nullptr) const {
        auto w = wave(m.lambda);
        PhaseState xi = pulled_back(m.theta, m.y) - w.Phi;
        std::array<double, 3> F{inner(xi, w.i_Phi()), inner(xi, w.dx_Phi()), inner(xi, w.Psi)};
        if (xi_out) *xi_out = std::move(xi);
        if (wave_out) *wave_out = std::move(w);
        return F;
    }

    double omega() const { return omega_; }
    const Grid& grid() const { return grid_; }

private:
    Grid grid_;
    double p_, omega_;
    std::vector<cplx> uh_, vh_;
};

inline double max_abs(const std::array<double, 3>& F) {
    return std::max({std::abs(F[0]), std::abs(F[1]), std::abs(F[2])});
}

/// Solves J d = -F by Gaussian elimination with partial pivoting.
inline std::optional<std::array<double, 3>> solve3(std::array<std::array<double, 3>, 3> J, std::array<double, 3> F) {
    std::array<double, 3> b{-F[0], -F[1], -F[2]};
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::abs(J[r][c]) > std::abs(J[piv][c])) piv = r;
        if (J[piv][c] == 0.0) return std::nullopt;
        std::swap(J[piv], J[c]);
        std::swap(b[piv], b[c]);
        for (int r = c + 1; r < 3; ++r) {
            const double f = J[r][c] / J[c][c];
            for (int k = c; k < 3; ++k) J[r][k] -= f * J[c][k];
            b[r] -= f * b[c];
        }
    }
    std::array<double, 3> x{};
    for (int r = 2; r >= 0; --r) {
        double acc = b[r];
        for (int k = r + 1; k < 3; ++k) acc -= J[r][k] * x[k];
        x[r] = acc / J[r][r];
    }
    return x;
}

}  // namespace detail

/// Newton iteration on (theta, y, lambda) with a central-difference Jacobian.
inline ModulationFit fit(const PhaseState& s, double p, double omega, ModulationParams guess,
                         const FitOptions& opt = {}) {
    const Grid& g = s.grid();
    const double dist = orbit_distance(s, p, omega).distance;
    if (!(dist < opt.capture_radius))
        throw FitError("state outside the capture radius (orbit distance " + std::to_string(dist) + ")", guess,
                       {NAN, NAN, NAN});

    const detail::ModulationProblem prob(s, p, omega);
    ModulationParams x = guess;
    auto eval = [&](const ModulationParams& m) -> std::optional<std::array<double, 3>> {
        try {
            return prob.residuals(m);
        } catch (const std::domain_error&) {
            return std::nullopt;
        }
    };
    auto F0 = eval(x);
    if (!F0) throw FitError("initial guess outside the admissible range", guess, {NAN, NAN, NAN});
    std::array<double, 3> F = *F0;
    ModulationParams best = x;
    std::array<double, 3> bestF = F;

    int it = 0;
    for (; it < opt.max_iterations && detail::max_abs(F) >= opt.tolerance; ++it) {
        std::array<std::array<double, 3>, 3> J{};
        for (int c = 0; c < 3; ++c) {
            ModulationParams lo = x, hi = x;
            double* plo = c == 0 ? &lo.theta : c == 1 ? &lo.y : &lo.lambda;
            double* phi = c == 0 ? &hi.theta : c == 1 ? &hi.y : &hi.lambda;
            const double h = opt.fd_step * std::max(1.0, std::abs(*plo));
            *plo -= h;
            *phi += h;
            const auto Fl = eval(lo), Fh = eval(hi);
            if (!Fl || !Fh) throw FitError("Jacobian probe left the admissible range", best, bestF);
            for (int r = 0; r < 3; ++r) J[r][c] = ((*Fh)[r] - (*Fl)[r]) / (2.0 * h);
        }
        const auto d = detail::solve3(J, F);
        if (!d) throw FitError("singular modulation Jacobian", best, bestF);
        double scale = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 8; ++ls, scale *= 0.5) {
            ModulationParams trial{x.theta + scale * (*d)[0], x.y + scale * (*d)[1], x.lambda + scale * (*d)[2]};
            const auto Ft = eval(trial);
            if (Ft && detail::max_abs(*Ft) < detail::max_abs(F)) {
                x = trial;
                F = *Ft;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        if (detail::max_abs(F) < detail::max_abs(bestF)) {
            best = x;
            bestF = F;
        }
    }
    if (!(detail::max_abs(F) < opt.tolerance))
        throw FitError("modulation Newton did not converge (max residual " + std::to_string(detail::max_abs(F)) +
                           ")",
                       best, bestF);

    ModulationFit out;
    out.theta = wrap_angle(x.theta);
    out.y = g.wrap(x.y);
    out.lambda = x.lambda;
    out.iterations = it;
    PhaseState xi(g);
    StandingWave w = prob.wave(x.lambda);
    out.residuals = prob.residuals(x, &xi, &w);
    const cplx ilw{0.0, x.lambda * omega}, iw{0.0, omega};
    out.xi_h1l2 = std::sqrt(h1l2sq(xi));
    out.eta_minus_i_lomega_xi = std::sqrt(l2sq(xi.v - ilw * xi.u));
    out.eta_minus_i_omega_xi = std::sqrt(l2sq(xi.v - iw * xi.u));
    if (opt.keep_xi) out.xi = std::move(xi);
    return out;
}

/// e^{i theta} (Phi_{lambda omega} + xi)(. - y); inverse of the decomposition.
inline PhaseState reconstruct(const ModulationFit& f, double p, double omega) {
    if (!f.xi) throw std::invalid_argument("reconstruct: fit carries no xi");
    const Grid& g = f.xi->grid();
    const auto w = build_family(p, f.lambda * omega, g, 0.0, false);
    PhaseState body = w.Phi + *f.xi;
    PhaseState out(shift_by(body.u, -f.y), shift_by(body.v, -f.y));
    out *= std::polar(1.0, f.theta);
    return out;
}

// ---- tracking -------------------------------------------------------------

struct TrackedSample {
    double t = 0;
    ModulationFit fit;  ///< theta and y unwrapped continuously
    double theta_dot = NAN, y_dot = NAN, lambda_dot = NAN;
};

struct ModulationTrack {
    std::vector<TrackedSample> samples;
    bool exited = false;           ///< a fit failed; the track stops there
    std::optional<double> exit_time;
    std::string exit_reason;
};

/// Sequential warm-started fits; call push() per sample, then finish().
class Tracker {
public:
    Tracker(double p, double omega, FitOptions opt = {}) : p_(p), omega_(omega), opt_(opt) { opt_.keep_xi = false; }

    /// Returns false once the track has exited.
    bool push(const PhaseState& s) {
        if (track_.exited) return false;
        ModulationParams guess{0.0, 0.0, 1.0};
        if (!track_.samples.empty()) {
            const auto& last = track_.samples.back();
            const double dt = s.t - last.t;
            guess = {last.fit.theta + last.fit.lambda * omega_ * dt, last.fit.y, last.fit.lambda};
        } else {
            const auto od = orbit_distance(s, p_, omega_);
            guess = {od.theta, od.y, 1.0};
        }
        try {
            ModulationFit f = fit(s, p_, omega_, guess, opt_);
            f.theta = nearest_branch(f.theta, guess.theta, 2.0 * std::numbers::pi);
            f.y = nearest_branch(f.y, guess.y, s.grid().length());
            track_.samples.push_back({s.t, std::move(f)});
            return true;
        } catch (const FitError& e) {
            track_.exited = true;
            track_.exit_time = s.t;
            track_.exit_reason = e.what();
            return false;
        }
    }

    const ModulationTrack& current() const { return track_; }

    ModulationTrack finish() {
        auto& v = track_.samples;
        const std::size_t m = v.size();
        for (std::size_t i = 0; i < m && m >= 2; ++i) {
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = i + 1 == m ? m - 1 : i + 1;
            const double h = v[hi].t - v[lo].t;
            v[i].theta_dot = (v[hi].fit.theta - v[lo].fit.theta) / h;
            v[i].y_dot = (v[hi].fit.y - v[lo].fit.y) / h;
            v[i].lambda_dot = (v[hi].fit.lambda - v[lo].fit.lambda) / h;
        }
        return track_;
    }

private:
    double p_, omega_;
    FitOptions opt_;
    ModulationTrack track_;
};

inline ModulationTrack track(const Trajectory& traj, double p, double omega, FitOptions opt = {}) {
    Tracker tr(p, omega, opt);
    for (const auto& s : traj.samples)
        if (!tr.push(s.state)) break;
    return tr.finish();
}

/// (|theta_dot - lambda omega| + |y_dot| + |lambda_dot|) / ||xi||_{H1 x L2} per sample.
inline std::vector<double> modulation_rate_ratios(const ModulationTrack& tr, double omega) {
    std::vector<double> r;
    for (const auto& s : tr.samples) {
        if (std::isnan(s.theta_dot) || !(s.fit.xi_h1l2 > 0)) continue;
        r.push_back((std::abs(s.theta_dot - s.fit.lambda * omega) + std::abs(s.y_dot) + std::abs(s.lambda_dot)) /
                    s.fit.xi_h1l2);
    }
    return r;
}

}  // namespace kgsim
