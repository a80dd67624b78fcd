#pragma once

// The Hessian H = (1/2) S''_omega(Phi_omega) as a grid operator on pairs (f, g):
//
//   H(f, g) = ( -f'' + f - p V Re f - i V Im f + i omega g ,  g - i omega f ),  V = phi^{p-1}.
//
// H is real-linear but not complex-linear, so it is analyzed in the real
// embedding (Re f, Im f, Re g, Im g), scaled by sqrt(dx) so that the Euclidean
// product equals the pairing <a, b> = Re quad(a1 conj b1 + a2 conj b2).  In that
// embedding H splits into two decoupled 2n x 2n blocks:
//
//   A on (Re f, Im g):  [ -d2 + 1 - p V   -omega ]      B on (Im f, Re g):  [ -d2 + 1 - V   omega ]
//                       [ -omega            1    ]                          [  omega          1   ]

#include "kgsim/dense.hpp"
#include "kgsim/ground_state.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace kgsim {

inline constexpr int kDefaultDenseCap = 4096;

class HessianOperator {
public:
    explicit HessianOperator(const StandingWave& wave)
        : params_(wave.params), grid_(wave.grid()), potential_(grid_.size()) {
        for (int j = 0; j < grid_.size(); ++j)
            potential_[j] = std::pow(std::max(wave.phi[j].real(), 0.0), params_.p - 1.0);
    }

    /// Operator with an arbitrary real potential V (V = 0 gives the free operator).
    HessianOperator(const SolitonParams& params, const Grid& grid, std::vector<double> potential)
        : params_(params), grid_(grid), potential_(std::move(potential)) {
        if (static_cast<int>(potential_.size()) != grid_.size())
            throw std::invalid_argument("potential length does not match grid");
    }

    const SolitonParams& params() const { return params_; }
    const Grid& grid() const { return grid_; }
    const std::vector<double>& potential() const { return potential_; }
    int dimension() const { return 4 * grid_.size(); }

    PhaseState apply(const PhaseState& x) const {
        require_same_grid(x.grid(), grid_);
        const double p = params_.p, w = params_.omega;
        const cplx I{0.0, 1.0};
        const auto d2 = d2dx2(x.u);
        PhaseState out(grid_);
        for (int j = 0; j < grid_.size(); ++j) {
            const cplx f = x.u[j], g = x.v[j];
            const double V = potential_[j];
            out.u[j] = -d2[j] + f - p * V * f.real() - I * (V * f.imag()) + I * w * g;
            out.v[j] = g - I * w * f;
        }
        return out;
    }

    /// Crude upper bound on the spectral radius.
    double norm_estimate() const {
        const double kmax = std::numbers::pi / grid_.dx();
        const double vmax = *std::max_element(potential_.begin(), potential_.end());
        return kmax * kmax + 2.0 + params_.p * vmax + std::abs(params_.omega);
    }

private:
    SolitonParams params_;
    Grid grid_;
    std::vector<double> potential_;
};

// ---- real embedding -------------------------------------------------------

inline std::vector<double> embed(const PhaseState& x) {
    const int n = x.grid().size();
    const double s = std::sqrt(x.grid().dx());
    std::vector<double> out(4 * std::size_t(n));
    for (int j = 0; j < n; ++j) {
        out[j] = s * x.u[j].real();
        out[n + j] = s * x.u[j].imag();
        out[2 * n + j] = s * x.v[j].real();
        out[3 * n + j] = s * x.v[j].imag();
    }
    return out;
}

inline PhaseState unembed(std::span<const double> e, const Grid& g) {
    const int n = g.size();
    const double s = 1.0 / std::sqrt(g.dx());
    PhaseState x(g);
    for (int j = 0; j < n; ++j) {
        x.u[j] = s * cplx{e[j], e[n + j]};
        x.v[j] = s * cplx{e[2 * n + j], e[3 * n + j]};
    }
    return x;
}

/// Full 4n x 4n matrix M with <H x, y> = embed(y)^T M embed(x), built column by column from apply().
inline DenseMatrix assemble_dense(const HessianOperator& H, int dense_cap = kDefaultDenseCap) {
    const int N = H.dimension();
    if (N > dense_cap)
        throw std::length_error("dense assembly of dimension " + std::to_string(N) +
                                " exceeds the configured cap " + std::to_string(dense_cap));
    DenseMatrix M(N, N);
    std::vector<double> e(N, 0.0);
    for (int c = 0; c < N; ++c) {
        e[c] = 1.0;
        const auto col = embed(H.apply(unembed(e, H.grid())));
        std::copy(col.begin(), col.end(), M.column(c).begin());
        e[c] = 0.0;
    }
    const double asym = M.asymmetry();
    if (!(asym < 1e-10))
        throw std::runtime_error("assembled Hessian asymmetric: " + std::to_string(asym));
    M.symmetrize();
    return M;
}

enum class Block { A, B };

namespace detail {

/// First column of the circulant matrix of -d^2/dx^2 on real grid vectors.
inline std::vector<double> minus_laplacian_stencil(const Grid& g) {
    ComplexField delta(g);
    delta[0] = 1.0;
    const auto d2 = d2dx2(delta);
    std::vector<double> c(g.size());
    for (int j = 0; j < g.size(); ++j) c[j] = -d2[j].real();
    return c;
}

// Component offsets (in units of n) of the two coordinates spanned by a block.
inline std::array<int, 2> block_slots(Block b) { return b == Block::A ? std::array{0, 3} : std::array{1, 2}; }

}  // namespace detail

/// Dense 2n x 2n matrix of one decoupled block.
inline DenseMatrix assemble_block(const HessianOperator& H, Block block) {
    const Grid& g = H.grid();
    const int n = g.size();
    const auto stencil = detail::minus_laplacian_stencil(g);
    const double w = H.params().omega;
    const double pv = block == Block::A ? H.params().p : 1.0;
    const double off = block == Block::A ? -w : w;
    DenseMatrix M(2 * n, 2 * n);
    for (int l = 0; l < n; ++l)
        for (int j = 0; j < n; ++j) M(j, l) = stencil[(j - l + n) % n];
    for (int j = 0; j < n; ++j) {
        M(j, j) += 1.0 - pv * H.potential()[j];
        M(n + j, n + j) = 1.0;
        M(j, n + j) = off;
        M(n + j, j) = off;
    }
    M.symmetrize();
    return M;
}

/// Restriction of an embedded 4n vector to a block's coordinates.
inline std::vector<double> restrict_to_block(std::span<const double> e, int n, Block b) {
    const auto slots = detail::block_slots(b);
    std::vector<double> out(2 * std::size_t(n));
    for (int j = 0; j < n; ++j) {
        out[j] = e[slots[0] * n + j];
        out[n + j] = e[slots[1] * n + j];
    }
    return out;
}

inline std::vector<double> extend_from_block(std::span<const double> r, int n, Block b) {
    const auto slots = detail::block_slots(b);
    std::vector<double> out(4 * std::size_t(n), 0.0);
    for (int j = 0; j < n; ++j) {
        out[slots[0] * n + j] = r[j];
        out[slots[1] * n + j] = r[n + j];
    }
    return out;
}

// ---- spectrum -------------------------------------------------------------

struct SpectrumReport {
    std::vector<double> eigenvalues;       ///< ascending
    std::vector<PhaseState> eigenvectors;  ///< orthonormal in the real pairing
    int n_negative = 0;
    int n_near_zero = 0;
    double threshold_zero = 0;
};

/// Lowest k eigenpairs of H (union of both blocks).
inline SpectrumReport spectrum(const HessianOperator& H, int k, int dense_cap = kDefaultDenseCap,
                               std::optional<double> threshold_zero = std::nullopt) {
    const Grid& g = H.grid();
    const int n = g.size();
    if (2 * n > dense_cap)
        throw std::length_error("block dimension " + std::to_string(2 * n) +
                                " exceeds the configured dense cap " + std::to_string(dense_cap));
    struct Entry {
        double value;
        Block block;
        int column;
    };
    std::vector<Entry> entries;
    std::array<EigenPairs, 2> pairs;
    for (Block b : {Block::A, Block::B}) {
        auto& ep = pairs[b == Block::A ? 0 : 1];
        ep = lowest_eigenpairs(assemble_block(H, b), std::min(k, 2 * n));
        for (int c = 0; c < static_cast<int>(ep.values.size()); ++c) entries.push_back({ep.values[c], b, c});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.value < b.value; });
    entries.resize(std::min<std::size_t>(entries.size(), k));

    SpectrumReport report;
    report.threshold_zero = threshold_zero.value_or(1e-6 * H.norm_estimate());
    for (const auto& e : entries) {
        const auto& ep = pairs[e.block == Block::A ? 0 : 1];
        report.eigenvalues.push_back(e.value);
        report.eigenvectors.push_back(unembed(extend_from_block(ep.vectors.column(e.column), n, e.block), g));
        if (std::abs(e.value) < report.threshold_zero)
            ++report.n_near_zero;
        else if (e.value < 0)
            ++report.n_negative;
    }
    return report;
}

/// Lowest eigenvalue of the scalar operator -d2 + (1 - omega^2) - c V.
inline double scalar_ground_eigenvalue(const HessianOperator& H, double c) {
    const Grid& g = H.grid();
    const int n = g.size();
    const auto stencil = detail::minus_laplacian_stencil(g);
    const double m2 = H.params().m2();
    DenseMatrix M(n, n);
    for (int l = 0; l < n; ++l)
        for (int j = 0; j < n; ++j) M(j, l) = stencil[(j - l + n) % n];
    for (int j = 0; j < n; ++j) M(j, j) += m2 - c * H.potential()[j];
    M.symmetrize();
    return lowest_eigenpairs(std::move(M), 1, false).values.front();
}

// ---- constrained Rayleigh quotient ---------------------------------------

struct ConstrainedMinimum {
    double margin = 0;     ///< min <Hx,x>/<x,x> over x orthogonal to the constraints
    PhaseState minimizer;  ///< unit-norm minimizer in the real pairing
};

namespace detail {

/// Modified Gram-Schmidt; throws on (numerical) rank deficiency.
inline std::vector<std::vector<double>> orthonormalize(std::vector<std::vector<double>> vs) {
    for (std::size_t i = 0; i < vs.size(); ++i) {
        double before = 0;
        for (double a : vs[i]) before += a * a;
        before = std::sqrt(before);
        for (std::size_t j = 0; j < i; ++j) {
            double d = 0;
            for (std::size_t r = 0; r < vs[i].size(); ++r) d += vs[i][r] * vs[j][r];
            for (std::size_t r = 0; r < vs[i].size(); ++r) vs[i][r] -= d * vs[j][r];
        }
        double nrm = 0;
        for (double a : vs[i]) nrm += a * a;
        nrm = std::sqrt(nrm);
        if (!(before > 0) || nrm < 1e-10 * before)
            throw std::invalid_argument("constraint set is rank-deficient");
        for (double& a : vs[i]) a /= nrm;
    }
    return vs;
}

/// Lowest eigenpair of P M P + shift (I - P), P the projector off span(basis).
inline std::pair<double, std::vector<double>> projected_minimum(DenseMatrix M,
                                                                const std::vector<std::vector<double>>& basis,
                                                                double shift) {
    const int N = M.rows();
    const int m = static_cast<int>(basis.size());
    if (m > 0) {
        std::vector<std::vector<double>> MU(m);
        for (int a = 0; a < m; ++a) MU[a] = M.multiply(basis[a]);
        std::vector<double> UMU(std::size_t(m) * m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                double d = 0;
                for (int r = 0; r < N; ++r) d += basis[a][r] * MU[b][r];
                UMU[a * m + b] = d;
            }
        for (int c = 0; c < N; ++c)
            for (int r = 0; r < N; ++r) {
                double delta = 0;
                for (int a = 0; a < m; ++a) {
                    delta -= basis[a][r] * MU[a][c] + MU[a][r] * basis[a][c];
                    for (int b = 0; b < m; ++b) delta += basis[a][r] * UMU[a * m + b] * basis[b][c];
                    delta += shift * basis[a][r] * basis[a][c];
                }
                M(r, c) += delta;
            }
        M.symmetrize();
    }
    auto ep = lowest_eigenpairs(std::move(M), 1, true);
    auto col = ep.vectors.column(0);
    return {ep.values.front(), std::vector<double>(col.begin(), col.end())};
}

}  // namespace detail

inline ConstrainedMinimum constrained_minimum(const HessianOperator& H, const std::vector<PhaseState>& constraints,
                                              int dense_cap = kDefaultDenseCap) {
    const Grid& g = H.grid();
    const int n = g.size();
    for (const auto& c : constraints) require_same_grid(c.grid(), g);
    const double shift = 2.0 * H.norm_estimate() + 1.0;

    // Assign each constraint to the block that carries it, if any single block does.
    std::vector<std::vector<double>> embedded;
    for (const auto& c : constraints) embedded.push_back(embed(c));
    std::array<std::vector<std::vector<double>>, 2> per_block;
    bool separable = true;
    for (const auto& e : embedded) {
        double na = 0, nb = 0;
        for (double a : restrict_to_block(e, n, Block::A)) na += a * a;
        for (double b : restrict_to_block(e, n, Block::B)) nb += b * b;
        const double total = na + nb;
        if (nb <= 1e-24 * total)
            per_block[0].push_back(restrict_to_block(e, n, Block::A));
        else if (na <= 1e-24 * total)
            per_block[1].push_back(restrict_to_block(e, n, Block::B));
        else
            separable = false;
    }

    ConstrainedMinimum out{0.0, PhaseState(g)};
    if (separable) {
        if (2 * n > dense_cap) throw std::length_error("block dimension exceeds the configured dense cap");
        double best = std::numeric_limits<double>::infinity();
        for (Block b : {Block::A, Block::B}) {
            const auto basis = detail::orthonormalize(per_block[b == Block::A ? 0 : 1]);
            auto [value, vec] = detail::projected_minimum(assemble_block(H, b), basis, shift);
            if (value < best) {
                best = value;
                out.minimizer = unembed(extend_from_block(vec, n, b), g);
            }
        }
        out.margin = best;
    } else {
        const auto basis = detail::orthonormalize(embedded);
        auto [value, vec] = detail::projected_minimum(assemble_dense(H, dense_cap), basis, shift);
        out.margin = value;
        out.minimizer = unembed(vec, g);
    }
    return out;
}

inline double coercivity_margin(const HessianOperator& H, const std::vector<PhaseState>& constraints,
                                int dense_cap = kDefaultDenseCap) {
    return constrained_minimum(H, constraints, dense_cap).margin;
}

/// The three orthogonality directions i Phi, d_x Phi, Psi.
inline std::vector<PhaseState> coercivity_constraints(const StandingWave& w) {
    return {w.i_Phi(), w.dx_Phi(), w.Psi};
}

/// C with ||xi||^2_{H1 x L2} <= <H xi, xi> + C ||xi||^2_{L2 x L2}.
inline double bootstrap_constant(const HessianOperator& H) {
    const double vmax = *std::max_element(H.potential().begin(), H.potential().end());
    return H.params().p * vmax + std::abs(H.params().omega);
}

/// c with <H xi, xi> >= c ||xi||^2_{H1 x L2} on the constrained subspace, given margin > 0.
inline double h1_coercivity_constant(double margin, double bootstrap) {
    if (!(margin > 0)) return 0.0;
    return 1.0 / (1.0 + bootstrap / margin);
}

}  // namespace kgsim
