#pragma once

// Shared helpers for the unit tests: seeded random fields and small
// independent oracles that do not go through the library's spectral code.

#include "kgsim/grid.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

namespace kgsim::testing {

/// Smooth random field: random Fourier coefficients with Gaussian decay in k.
inline ComplexField smooth_random_field(const Grid& g, std::mt19937_64& rng, double kscale = 2.0) {
    std::normal_distribution<double> nd;
    std::vector<cplx> coeffs(g.size());
    for (int j = 0; j < g.size(); ++j) {
        const double k = g.wavenumber(j);
        const double env = std::exp(-0.5 * (k / kscale) * (k / kscale));
        coeffs[j] = env * cplx{nd(rng), nd(rng)};
    }
    coeffs[g.size() / 2] = 0.0;
    return ComplexField(g, from_fourier(coeffs));
}

inline PhaseState smooth_random_state(const Grid& g, std::mt19937_64& rng, double kscale = 2.0) {
    return PhaseState(smooth_random_field(g, rng, kscale), smooth_random_field(g, rng, kscale));
}

/// Random samples with no smoothness at all.
inline PhaseState white_noise_state(const Grid& g, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    PhaseState s(g);
    for (int j = 0; j < g.size(); ++j) {
        s.u[j] = {nd(rng), nd(rng)};
        s.v[j] = {nd(rng), nd(rng)};
    }
    return s;
}

/// Gram-Schmidt removal of span(basis) in the real pairing.
inline PhaseState project_out(PhaseState x, std::vector<PhaseState> basis) {
    for (std::size_t i = 0; i < basis.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) basis[i] -= cplx{inner(basis[i], basis[j])} * basis[j];
        basis[i] *= cplx{1.0 / std::sqrt(inner(basis[i], basis[i]))};
    }
    for (const auto& b : basis) x -= cplx{inner(x, b)} * b;
    return x;
}

/// Riemann sum dx * sum f(x_j) of a closed-form integrand.
template <class F>
double riemann(const Grid& g, F&& f) {
    double acc = 0.0;
    for (int j = 0; j < g.size(); ++j) acc += f(g.x(j));
    return acc * g.dx();
}

/// Composite 5-point Gauss-Legendre rule on [a, b].
template <class F>
double gauss_legendre(F&& f, double a, double b, int panels = 64) {
    static constexpr double nodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                        0.9061798459386640};
    static constexpr double weights[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                          0.2369268850561891, 0.2369268850561891};
    const double h = (b - a) / panels;
    double acc = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double mid = a + (k + 0.5) * h;
        for (int q = 0; q < 5; ++q) acc += weights[q] * f(mid + 0.5 * h * nodes[q]);
    }
    return acc * 0.5 * h;
}

inline double sech(double x) { return 1.0 / std::cosh(x); }

/// Least-squares slope of log|r| against log a.
inline double loglog_slope(const std::vector<double>& a, const std::vector<double>& r) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = std::log(a[i]), y = std::log(std::abs(r[i]));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace kgsim::testing
