#pragma once

// Conserved quantities of the Klein-Gordon flow and the action S = E + omega Q.

#include "kgsim/grid.hpp"

namespace kgsim {

struct ConservedTriple {
    double Q = 0;  ///< charge
    double P = 0;  ///< momentum
    double E = 0;  ///< energy
};

/// Q = Im quad(u conj(v)).
inline double charge(const PhaseState& s) {
    double acc = 0.0;
    for (int j = 0; j < s.u.size(); ++j) acc += std::imag(s.u[j] * std::conj(s.v[j]));
    return acc * s.grid().dx();
}

/// P = Re quad(u_x conj(v)).
inline double momentum(const PhaseState& s) { return inner(ddx(s.u), s.v); }

/// E = 1/2 (||v||^2 + ||u_x||^2 + ||u||^2) - 1/(p+1) ||u||_{p+1}^{p+1}.
/// With this normalization S = E + omega Q is stationary at Phi_omega and its
/// second variation is exactly the block operator of linearized.hpp.
inline double energy(const PhaseState& s, double p) {
    const Norms nu = norms(s.u, p);
    return 0.5 * (l2sq(s.v) + nu.h1sq) - nu.lp1 / (p + 1.0);
}

/// S = E + omega_eff Q; omega_eff may be a rescaled frequency.
inline double action(const PhaseState& s, double p, double omega_eff) {
    return energy(s, p) + omega_eff * charge(s);
}

inline ConservedTriple conserved(const PhaseState& s, double p) {
    return {charge(s), momentum(s), energy(s, p)};
}

/// Gradient of Q in the real pairing: <Q'(s), h> = dQ(s)[h], i.e. Q'(s) = (i v, -i u).
inline PhaseState charge_gradient(const PhaseState& s) {
    const cplx I{0.0, 1.0};
    return PhaseState(I * s.v, -I * s.u);
}

}  // namespace kgsim
