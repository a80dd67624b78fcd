#pragma once

// Localized virial functional
//   I(t) = 4/(p-1) Re quad(u conj v) + 2 Re quad(phi_R(x - y) u_x conj v)
// and its derivative at the critical frequency,
//   I' = -2 (p+3)/(p-1) E - 16 omega/(p-1) Q - 2 y' P + 8/(p-1) ||v - i omega u||^2 + tail.

#include "kgsim/evolver.hpp"
#include "kgsim/functionals.hpp"
#include "kgsim/ground_state.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kgsim {

/// phi_R(x) = R psi(x/R): psi(s) = s on [0,1], 0 for s >= 2, odd, and on (1,2)
/// the quintic 1 + t - 16 t^3 + 23 t^4 - 9 t^5 (t = s - 1) matching value, slope
/// and curvature at both ends.  |psi'| <= 3 everywhere.
class CutoffProfile {
public:
    CutoffProfile(double R, const Grid& grid) : R_(R), grid_(grid) {
        if (!(R > 0)) throw std::invalid_argument("cutoff radius must be positive");
        if (!(2.0 * R < 0.5 * grid.length()))
            throw std::invalid_argument("cutoff support 2R must be smaller than L/2");
        values_.resize(grid.size());
        slopes_.resize(grid.size());
        for (int j = 0; j < grid.size(); ++j) {
            values_[j] = value(grid.x(j));
            slopes_[j] = slope(grid.x(j));
        }
    }

    double radius() const { return R_; }
    const Grid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& slopes() const { return slopes_; }

    static double shape(double s) {
        const double a = std::abs(s);
        double v;
        if (a <= 1.0)
            v = a;
        else if (a >= 2.0)
            v = 0.0;
        else {
            const double t = a - 1.0;
            v = 1.0 + t + t * t * t * (-16.0 + t * (23.0 - 9.0 * t));
        }
        return s < 0 ? -v : v;
    }
    static double shape_slope(double s) {
        const double a = std::abs(s);
        if (a <= 1.0) return 1.0;
        if (a >= 2.0) return 0.0;
        const double t = a - 1.0;
        return 1.0 + t * t * (-48.0 + t * (92.0 - 45.0 * t));  // even function
    }

    double value(double x) const { return R_ * shape(x / R_); }
    double slope(double x) const { return shape_slope(x / R_); }

    /// phi_R(x_j - y) at the periodic representative.
    std::vector<double> shifted_values(double y) const {
        std::vector<double> out(grid_.size());
        for (int j = 0; j < grid_.size(); ++j) out[j] = value(grid_.wrap(grid_.x(j) - y));
        return out;
    }
    std::vector<double> shifted_slopes(double y) const {
        std::vector<double> out(grid_.size());
        for (int j = 0; j < grid_.size(); ++j) out[j] = slope(grid_.wrap(grid_.x(j) - y));
        return out;
    }

private:
    double R_;
    Grid grid_;
    std::vector<double> values_, slopes_;
};

inline CutoffProfile build_cutoff(double R, const Grid& grid) { return CutoffProfile(R, grid); }

/// Re quad(u conj v).
inline double re_u_vbar(const PhaseState& s) { return inner(s.u, s.v); }

/// Re quad(phi_R(x - y) u_x conj v).
inline double localized_momentum(const PhaseState& s, const CutoffProfile& c, double y) {
    const auto ux = ddx(s.u);
    const auto w = c.shifted_values(y);
    double acc = 0.0;
    for (int j = 0; j < s.u.size(); ++j) acc += w[j] * std::real(ux[j] * std::conj(s.v[j]));
    return acc * s.grid().dx();
}

inline double I_of_t(const PhaseState& s, const CutoffProfile& c, double y, double p) {
    require_same_grid(s.grid(), c.grid());
    return 4.0 / (p - 1.0) * re_u_vbar(s) + 2.0 * localized_momentum(s, c, y);
}

/// ||v - i omega u||_{L2}^2.
inline double kinetic_term(const PhaseState& s, double omega) {
    const cplx iw{0.0, omega};
    double acc = 0.0;
    for (int j = 0; j < s.u.size(); ++j) acc += std::norm(s.v[j] - iw * s.u[j]);
    return acc * s.grid().dx();
}

/// quad over |x - y| >= R of |v|^2 + |u_x|^2 + |u|^2 + |u|^{p+1}.
inline double tail_mass(const PhaseState& s, double R, double y, double p) {
    const Grid& g = s.grid();
    const auto ux = ddx(s.u);
    double acc = 0.0;
    for (int j = 0; j < g.size(); ++j) {
        if (std::abs(g.wrap(g.x(j) - y)) < R) continue;
        const double au = std::abs(s.u[j]);
        acc += std::norm(s.v[j]) + std::norm(ux[j]) + au * au + std::pow(au, p + 1.0);
    }
    return acc * g.dx();
}

struct VirialDerivative {
    double main = 0;        ///< the four displayed terms
    double tail_bound = 0;  ///< remainder mass outside |x - y| < R
    double kinetic = 0;     ///< ||v - i omega u||^2
};

inline bool is_critical(double p, double omega) {
    return std::abs(std::abs(omega) - critical_frequency(p)) <= 1e-12;
}

inline VirialDerivative I_dot_analytic(const PhaseState& s, const CutoffProfile& c, double y, double ydot, double p,
                                       double omega, const ConservedTriple& initial) {
    if (!is_critical(p, omega))
        throw std::invalid_argument("virial derivative identity requires |omega| = omega_c(p)");
    VirialDerivative out;
    out.kinetic = kinetic_term(s, omega);
    out.main = -(p + 3.0) / (p - 1.0) * 2.0 * initial.E - 16.0 * omega / (p - 1.0) * initial.Q -
               2.0 * ydot * initial.P + 8.0 / (p - 1.0) * out.kinetic;
    out.tail_bound = tail_mass(s, c.radius(), y, p);
    return out;
}

/// Right-hand sides of the two local virial identities.
/// first:  d/dt Re quad(u conj v) = quad(|v|^2 - |u_x|^2 - |u|^2 + |u|^{p+1})
/// second: d/dt Re quad(phi_R u_x conj v) = -1/2 quad(phi_R' [|v|^2 + |u_x|^2 - |u|^2 + 2/(p+1)|u|^{p+1}])
struct VirialRates {
    double first = 0;
    double second = 0;
};

inline VirialRates virial_rates(const PhaseState& s, const CutoffProfile& c, double y, double p) {
    const auto ux = ddx(s.u);
    const auto slope = c.shifted_slopes(y);
    double a = 0.0, b = 0.0;
    for (int j = 0; j < s.u.size(); ++j) {
        const double au = std::abs(s.u[j]);
        const double v2 = std::norm(s.v[j]), ux2 = std::norm(ux[j]), u2 = au * au, up = std::pow(au, p + 1.0);
        a += v2 - ux2 - u2 + up;
        b += slope[j] * (v2 + ux2 - u2 + 2.0 / (p + 1.0) * up);
    }
    const double dx = s.grid().dx();
    return {a * dx, -0.5 * b * dx};
}

struct VirialIdentityCheck {
    VirialRates finite_difference;
    VirialRates analytic;
    double residual_first() const { return std::abs(finite_difference.first - analytic.first); }
    double residual_second() const { return std::abs(finite_difference.second - analytic.second); }
};

/// Central differences of both virial quantities from one step forward and one back.
inline VirialIdentityCheck check_virial_identities(const PhaseState& s, const CutoffProfile& c, double y, double p,
                                                   double dt) {
    Evolver ev(s.grid(), p);
    PhaseState fwd = s, bwd = s;
    ev.step(fwd, dt);
    ev.step(bwd, -dt);
    VirialIdentityCheck out;
    out.finite_difference.first = (re_u_vbar(fwd) - re_u_vbar(bwd)) / (2.0 * dt);
    out.finite_difference.second = (localized_momentum(fwd, c, y) - localized_momentum(bwd, c, y)) / (2.0 * dt);
    out.analytic = virial_rates(s, c, y, p);
    return out;
}

/// Tolerance for the identity checks: max(1e-6, 10 dt^2).
inline double virial_identity_tolerance(double dt) { return std::max(1e-6, 10.0 * dt * dt); }

}  // namespace kgsim
