#pragma once

// Periodic grid on [-L/2, L/2) and the Fourier spectral calculus used by every
// other module: differentiation, shifts, quadrature and norms.

#include "kgsim/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgsim {

class Grid {
public:
    Grid(double length, int n) : length_(length), n_(n) {
        if (!(length > 0.0) || !std::isfinite(length))
            throw std::invalid_argument("grid length must be positive and finite");
        if (n < 16 || (n & (n - 1)) != 0)
            throw std::invalid_argument("grid node count must be a power of two >= 16, got " +
                                        std::to_string(n));
    }

    double length() const { return length_; }
    int size() const { return n_; }
    double dx() const { return length_ / n_; }
    double x(int j) const { return -0.5 * length_ + j * dx(); }

    /// Angular wavenumber of FFT bin j (standard ordering, Nyquist negative).
    double wavenumber(int j) const {
        const int m = (j < n_ / 2) ? j : j - n_;
        return 2.0 * std::numbers::pi * m / length_;
    }
    bool is_nyquist(int j) const { return j == n_ / 2; }

    std::vector<double> nodes() const {
        std::vector<double> xs(n_);
        for (int j = 0; j < n_; ++j) xs[j] = x(j);
        return xs;
    }
    std::vector<double> wavenumbers() const {
        std::vector<double> ks(n_);
        for (int j = 0; j < n_; ++j) ks[j] = wavenumber(j);
        return ks;
    }

    /// Periodic representative of x in [-L/2, L/2).
    double wrap(double xv) const {
        double r = std::fmod(xv + 0.5 * length_, length_);
        if (r < 0) r += length_;
        return r - 0.5 * length_;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    double length_;
    int n_;
};

struct ComplexField {
    Grid grid;
    std::vector<cplx> values;

    explicit ComplexField(const Grid& g) : grid(g), values(g.size()) {}
    ComplexField(const Grid& g, std::vector<cplx> v) : grid(g), values(std::move(v)) {
        if (static_cast<int>(values.size()) != grid.size())
            throw std::invalid_argument("field length does not match grid");
    }

    int size() const { return grid.size(); }
    cplx& operator[](int j) { return values[j]; }
    const cplx& operator[](int j) const { return values[j]; }

    bool finite() const {
        return std::all_of(values.begin(), values.end(), [](cplx z) {
            return std::isfinite(z.real()) && std::isfinite(z.imag());
        });
    }
    double max_abs() const {
        double m = 0;
        for (auto z : values) m = std::max(m, std::abs(z));
        return m;
    }

    ComplexField& operator+=(const ComplexField& o) {
        for (int j = 0; j < size(); ++j) values[j] += o.values[j];
        return *this;
    }
    ComplexField& operator-=(const ComplexField& o) {
        for (int j = 0; j < size(); ++j) values[j] -= o.values[j];
        return *this;
    }
    ComplexField& operator*=(cplx s) {
        for (auto& z : values) z *= s;
        return *this;
    }
};

inline ComplexField operator+(ComplexField a, const ComplexField& b) { return a += b; }
inline ComplexField operator-(ComplexField a, const ComplexField& b) { return a -= b; }
inline ComplexField operator*(cplx s, ComplexField a) { return a *= s; }

/// Pair (u, v) with v = u_t; also used for pair-valued perturbations.
struct PhaseState {
    ComplexField u;
    ComplexField v;
    double t = 0.0;

    explicit PhaseState(const Grid& g) : u(g), v(g) {}
    PhaseState(ComplexField uu, ComplexField vv, double time = 0.0)
        : u(std::move(uu)), v(std::move(vv)), t(time) {
        if (!(u.grid == v.grid)) throw std::invalid_argument("u and v must share one grid");
    }

    const Grid& grid() const { return u.grid; }
    bool finite() const { return u.finite() && v.finite(); }

    PhaseState& operator+=(const PhaseState& o) {
        u += o.u;
        v += o.v;
        return *this;
    }
    PhaseState& operator-=(const PhaseState& o) {
        u -= o.u;
        v -= o.v;
        return *this;
    }
    PhaseState& operator*=(cplx s) {
        u *= s;
        v *= s;
        return *this;
    }
};

inline PhaseState operator+(PhaseState a, const PhaseState& b) { return a += b; }
inline PhaseState operator-(PhaseState a, const PhaseState& b) { return a -= b; }
inline PhaseState operator*(cplx s, PhaseState a) { return a *= s; }

inline void require_same_grid(const Grid& a, const Grid& b) {
    if (!(a == b)) throw std::invalid_argument("grid mismatch");
}

inline void require_finite(const ComplexField& f) {
    if (!f.finite()) throw std::domain_error("non-finite samples in field");
}

namespace detail {

template <class Multiplier>
ComplexField apply_multiplier(const ComplexField& f, Multiplier&& mult) {
    auto coeffs = to_fourier(f.values);
    for (int j = 0; j < f.size(); ++j) coeffs[j] *= mult(j);
    return ComplexField(f.grid, from_fourier(coeffs));
}

}  // namespace detail

/// Spectral first derivative; the Nyquist mode is dropped.
inline ComplexField ddx(const ComplexField& f) {
    require_finite(f);
    const Grid& g = f.grid;
    return detail::apply_multiplier(f, [&](int j) {
        return g.is_nyquist(j) ? cplx{0.0} : cplx{0.0, g.wavenumber(j)};
    });
}

/// Spectral second derivative (multiplier -k^2, Nyquist included).
inline ComplexField d2dx2(const ComplexField& f) {
    require_finite(f);
    const Grid& g = f.grid;
    return detail::apply_multiplier(f, [&](int j) {
        const double k = g.wavenumber(j);
        return cplx{-k * k};
    });
}

/// Returns x -> f(x + shift) by Fourier interpolation.
inline ComplexField shift_by(const ComplexField& f, double shift) {
    const Grid& g = f.grid;
    return detail::apply_multiplier(f, [&](int j) {
        const double k = g.wavenumber(j);
        if (g.is_nyquist(j)) return cplx{std::cos(k * shift)};
        return std::polar(1.0, k * shift);
    });
}

/// Periodic trapezoid rule dx * sum f_j.
inline cplx quad(std::span<const cplx> f, const Grid& g) {
    cplx s{0.0};
    for (auto z : f) s += z;
    return s * g.dx();
}

inline double quad(std::span<const double> f, const Grid& g) {
    double s = 0.0;
    for (auto z : f) s += z;
    return s * g.dx();
}

inline cplx quad(const ComplexField& f) { return quad(f.values, f.grid); }

/// Re quad(f * conj(g)).
inline double inner(const ComplexField& f, const ComplexField& g) {
    require_same_grid(f.grid, g.grid);
    double s = 0.0;
    for (int j = 0; j < f.size(); ++j)
        s += f[j].real() * g[j].real() + f[j].imag() * g[j].imag();
    return s * f.grid.dx();
}

/// Real pairing <a, b> = Re quad(a.u conj(b.u) + a.v conj(b.v)).
inline double inner(const PhaseState& a, const PhaseState& b) {
    return inner(a.u, b.u) + inner(a.v, b.v);
}

inline double l2sq(const ComplexField& f) { return inner(f, f); }
inline double l2sq(const PhaseState& s) { return inner(s, s); }

struct Norms {
    double l2sq = 0;
    double h1sq = 0;
    double lp1 = 0;  ///< quad(|f|^{p+1})
};

inline Norms norms(const ComplexField& f, double p) {
    if (!(p > 1.0)) throw std::invalid_argument("norms: exponent p must exceed 1");
    require_finite(f);
    Norms out;
    out.l2sq = l2sq(f);
    out.h1sq = out.l2sq + l2sq(ddx(f));
    double s = 0.0;
    for (auto z : f.values) s += std::pow(std::abs(z), p + 1.0);
    out.lp1 = s * f.grid.dx();
    return out;
}

/// ||u||_{H1}^2 + ||v||_{L2}^2.
inline double h1l2sq(const PhaseState& s) {
    return l2sq(s.u) + l2sq(ddx(s.u)) + l2sq(s.v);
}

/// Ratio of the largest coefficient magnitude in the outer third of the
/// spectrum to the overall maximum; a resolution (spectral blocking) gauge.
inline double spectral_tail_ratio(const ComplexField& f) {
    const auto c = to_fourier(f.values);
    const Grid& g = f.grid;
    const double kcut = (2.0 / 3.0) * std::numbers::pi / g.dx();
    double peak = 0.0, tail = 0.0;
    for (int j = 0; j < f.size(); ++j) {
        const double a = std::abs(c[j]);
        peak = std::max(peak, a);
        if (std::abs(g.wavenumber(j)) > kcut) tail = std::max(tail, a);
    }
    return peak > 0 ? tail / peak : 0.0;
}

}  // namespace kgsim
