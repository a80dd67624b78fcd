#pragma once

// Closed-form ground states of -phi'' + (1 - omega^2) phi = phi^p on the line,
// sampled on a periodic grid, together with the omega-derivative and the
// pair vectors built from them.

#include "kgsim/grid.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace kgsim {

class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double critical_frequency(double p) {
    if (!(p > 1.0 && p < 5.0)) throw std::invalid_argument("critical_frequency: p must lie in (1, 5)");
    return std::sqrt((p - 1.0) / 4.0);
}

struct SolitonParams {
    double p;
    double omega;

    SolitonParams(double p_, double omega_) : p(p_), omega(omega_) {
        if (!(p > 1.0 && p < 5.0)) throw std::invalid_argument("p must lie in (1, 5)");
        if (!(std::abs(omega) < 1.0)) throw std::invalid_argument("|omega| must be < 1");
    }
    double m2() const { return 1.0 - omega * omega; }
    double omega_c() const { return critical_frequency(p); }
};

namespace detail {

// log sech z, stable for large |z|.
inline double log_sech(double z) {
    const double a = std::abs(z);
    return -a + std::log(2.0) - std::log1p(std::exp(-2.0 * a));
}

inline constexpr double kUnderflow = 1e-300;

}  // namespace detail

/// Pointwise closed form of phi_omega and its omega-derivative at position x.
class ProfileFormula {
public:
    explicit ProfileFormula(const SolitonParams& sp)
        : omega_(sp.omega), m_(std::sqrt(sp.m2())),
          expo_(2.0 / (sp.p - 1.0)), beta_((sp.p - 1.0) / 2.0),
          log_amp_(std::log((sp.p + 1.0) / 2.0) / (sp.p - 1.0) + expo_ * std::log(m_)) {}

    double value(double x) const {
        const double lg = log_amp_ + expo_ * detail::log_sech(beta_ * m_ * x);
        return lg < std::log(detail::kUnderflow) ? 0.0 : std::exp(lg);
    }

    // d/domega log phi = expo * (dm/domega) * (1/m - beta x tanh(beta m x)), dm/domega = -omega/m.
    double domega(double x) const {
        const double phi = value(x);
        if (phi == 0.0) return 0.0;
        const double dm = -omega_ / m_;
        return phi * expo_ * dm * (1.0 / m_ - beta_ * x * std::tanh(beta_ * m_ * x));
    }

    double dx(double x) const {
        return -value(x) * expo_ * beta_ * m_ * std::tanh(beta_ * m_ * x);
    }

private:
    double omega_, m_, expo_, beta_, log_amp_;
};

/// max_j |-phi'' + m2 phi - phi^p| with the spectral second derivative.
inline double elliptic_residual(const ComplexField& phi, double p, double m2) {
    const auto d2 = d2dx2(phi);
    double r = 0.0;
    for (int j = 0; j < phi.size(); ++j) {
        const double f = phi[j].real();
        const double res = -d2[j].real() + m2 * f - std::pow(std::max(f, 0.0), p);
        r = std::max(r, std::abs(res));
    }
    return r;
}

inline constexpr double kEllipticTolerance = 1e-9;
inline constexpr double kBoundaryDecayTolerance = 1e-8;

/// Samples of f(x - offset), evaluated at the periodic representative.
template <class F>
ComplexField sample(const Grid& g, F&& f, double offset = 0.0) {
    ComplexField out(g);
    for (int j = 0; j < g.size(); ++j) out[j] = f(g.wrap(g.x(j) - offset));
    return out;
}

/// Samples of the periodic image sum f(x) + f(x - L) + f(x + L) of an even, decaying f.
template <class F>
ComplexField sample_periodic(const Grid& g, F&& f, double offset = 0.0) {
    ComplexField out(g);
    const double L = g.length();
    for (int j = 0; j < g.size(); ++j) {
        const double x = g.wrap(g.x(j) - offset);
        out[j] = f(x) + (f(x - L) + f(x + L));
    }
    return out;
}

inline ComplexField build_phi0(double p, const Grid& grid) {
    const SolitonParams sp(p, 0.0);
    const ProfileFormula formula(sp);
    auto phi = sample_periodic(grid, [&](double x) { return formula.value(x); });
    const double res = elliptic_residual(phi, p, 1.0);
    if (!(res < kEllipticTolerance)) {
        std::ostringstream os;
        os << "phi_0 elliptic residual " << res << " exceeds tolerance on grid (L="
           << grid.length() << ", n=" << grid.size() << ")";
        throw ConfigurationError(os.str());
    }
    return phi;
}

struct StandingWave {
    SolitonParams params;
    ComplexField phi;          ///< real, positive, even
    ComplexField dphi_domega;
    PhaseState Phi;            ///< (phi, i omega phi)
    PhaseState psi;            ///< (d_omega phi, i omega d_omega phi)
    PhaseState Psi;            ///< (4 omega phi, 0)

    const Grid& grid() const { return phi.grid; }

    /// Pair derivative of Phi_omega with respect to omega: (d phi, i phi + i omega d phi).
    PhaseState dPhi_domega() const {
        PhaseState out(grid());
        const cplx I{0.0, 1.0};
        for (int j = 0; j < grid().size(); ++j) {
            out.u[j] = dphi_domega[j];
            out.v[j] = I * (phi[j] + params.omega * dphi_domega[j]);
        }
        return out;
    }
    PhaseState i_Phi() const { return cplx{0.0, 1.0} * Phi; }
    PhaseState dx_Phi() const { return PhaseState(ddx(Phi.u), ddx(Phi.v)); }
};

/// Assembles the pair vectors for a sampled profile and its omega-derivative.
inline StandingWave assemble_wave(const SolitonParams& sp, ComplexField phi, ComplexField dphi) {
    const Grid g = phi.grid;
    const cplx iw{0.0, sp.omega};
    PhaseState Phi(phi, iw * phi);
    PhaseState psi(dphi, iw * dphi);
    PhaseState Psi((4.0 * sp.omega) * phi, ComplexField(g));
    return StandingWave{sp, std::move(phi), std::move(dphi), std::move(Phi), std::move(psi),
                        std::move(Psi)};
}

/// Builds the standing wave, optionally translated by `offset` (periodically).
inline StandingWave build_family(double p, double omega, const Grid& grid, double offset = 0.0,
                                 bool check = true) {
    const SolitonParams sp(p, omega);
    const ProfileFormula formula(sp);
    auto phi = sample_periodic(grid, [&](double x) { return formula.value(x); }, offset);
    auto dphi = sample_periodic(grid, [&](double x) { return formula.domega(x); }, offset);
    if (check) {
        const double edge = formula.value(0.5 * grid.length());
        std::ostringstream os;
        os << std::scientific << std::setprecision(3);
        if (!(edge < kBoundaryDecayTolerance)) {
            os << "ground state not decayed at the domain boundary: phi(L/2)=" << edge;
            throw ConfigurationError(os.str());
        }
        const double res = elliptic_residual(phi, p, sp.m2());
        if (!(res < kEllipticTolerance)) {
            os << "ground state elliptic residual " << res << " exceeds tolerance on grid (L=" << grid.length()
               << ", n=" << grid.size() << ")";
            throw ConfigurationError(os.str());
        }
    }
    return assemble_wave(sp, std::move(phi), std::move(dphi));
}

struct Domain {
    double length;
    int n;
};

/// Doubles L together with n (fixed dx) until phi_omega(L/2) < decay.
inline Domain resolve_domain(double p, double omega, double L, int n, double decay = 1e-12, int n_max = 1 << 16) {
    const ProfileFormula formula(SolitonParams(p, omega));
    while (!(formula.value(0.5 * L) < decay)) {
        if (2 * n > n_max) throw ConfigurationError("domain needed for the profile decay exceeds the node cap");
        L *= 2.0;
        n *= 2;
    }
    return {L, n};
}

}  // namespace kgsim
