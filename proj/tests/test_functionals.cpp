#include "kgsim/functionals.hpp"
#include "kgsim/ground_state.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace kgsim;
using kgsim::testing::sech;

namespace {

const double kRoot2 = std::sqrt(2.0);

struct Critical : ::testing::Test {
    Grid grid{80.0, 1024};
    double w = critical_frequency(3.0);
    StandingWave wave = build_family(3.0, w, grid);
};

double charge_of(double p, double omega, const Grid& g) { return charge(build_family(p, omega, g).Phi); }

}  // namespace

TEST_F(Critical, ChargeAnchors) {
    EXPECT_NEAR(charge(wave.Phi), -2.0, 2e-8);
    EXPECT_NEAR(charge(wave.Phi), -w * l2sq(wave.phi), 1e-13);
    PhaseState still(wave.phi, ComplexField(grid));
    EXPECT_EQ(charge(still), 0.0);
}

TEST_F(Critical, EnergyAndActionAnchors) {
    const double E = energy(wave.Phi, 3.0);
    EXPECT_NEAR(E, 4.0 * kRoot2 / 3.0, 1e-8 * E);
    EXPECT_NEAR(E, (3.0 - 1.0 + 4.0 * w * w) / 6.0 * l2sq(wave.phi), 1e-12);
    EXPECT_EQ(energy(PhaseState(grid), 3.0), 0.0);
    const double S = action(wave.Phi, 3.0, w);
    EXPECT_NEAR(S, kRoot2 / 3.0, 1e-8);
    EXPECT_DOUBLE_EQ(action(wave.Phi, 3.0, 0.0), E);
}

TEST_F(Critical, MomentumVanishesByParity) {
    EXPECT_LT(std::abs(momentum(wave.Phi)), 1e-14);
    const PhaseState u0 = cplx{1.01} * wave.Phi;
    EXPECT_LT(std::abs(momentum(u0)), 1e-14);
}

TEST(Momentum, ModulatedPulseAgainstRiemannSum) {
    // u = e^{ix} sech(x), v = i u; analytic u_x = (i sech - sech tanh) e^{ix}
    const Grid g(80.0, 1024);
    ComplexField u(g);
    for (int j = 0; j < g.size(); ++j) u[j] = sech(g.x(j)) * std::polar(1.0, g.x(j));
    const PhaseState s(u, cplx{0.0, 1.0} * u);
    const double oracle = kgsim::testing::riemann(g, [](double x) {
        const cplx ux = (cplx{0.0, 1.0} * sech(x) - sech(x) * std::tanh(x)) * std::polar(1.0, x);
        const cplx v = cplx{0.0, 1.0} * sech(x) * std::polar(1.0, x);
        return std::real(ux * std::conj(v));
    });
    EXPECT_NEAR(momentum(s), oracle, 1e-10);
    EXPECT_NEAR(oracle, 2.0, 1e-10);  // = quad(sech^2)
}

TEST(Functionals, EnergyCharacterization) {
    // (p + 3) E(Phi) + 8 omega Q(Phi) = 0 holds at the critical frequency only
    const Grid g(80.0, 1024);
    for (double p : {2.0, 2.5, 3.0, 4.0}) {
        for (double frac : {0.3, 0.7, 1.0}) {
            const double w = frac * critical_frequency(p);
            const auto wave = build_family(p, w, g);
            const double E = energy(wave.Phi, p), Q = charge(wave.Phi);
            EXPECT_NEAR(E, (p - 1 + 4 * w * w) / (p + 3) * l2sq(wave.phi), 1e-10 * E);
            if (frac == 1.0) {
                EXPECT_LT(std::abs((p + 3) * E + 8 * w * Q), 1e-10 * std::abs(E)) << "p=" << p;
            }
        }
    }
}

TEST(Functionals, ChargeIsStationaryAtCriticalFrequency) {
    const Grid g(80.0, 1024);
    const double h = 1e-4;
    for (double p : {2.0, 2.5, 3.0, 4.0}) {
        const double wc = critical_frequency(p);
        const double dQ = (charge_of(p, wc + h, g) - charge_of(p, wc - h, g)) / (2 * h);
        EXPECT_LT(std::abs(dQ), 1e-6) << "p=" << p;
    }
}

TEST(Functionals, ChargeDerivativeFormulaChangesSign) {
    const Grid g(160.0, 2048);
    for (double p : {2.0, 3.0, 4.0}) {
        const double wc = critical_frequency(p);
        const double phi0_sq = l2sq(build_phi0(p, g));
        auto formula = [&](double w) {
            return -std::pow(1 - w * w, 2.0 / (p - 1) - 1.5) * (1 - 4.0 / (p - 1) * w * w) * phi0_sq;
        };
        for (double w : {0.8 * wc, 1.05 * wc}) {
            const double h = 1e-4;
            const double d1 = charge_of(p, w + h, g) - charge_of(p, w - h, g);
            const double d2 = charge_of(p, w + 2 * h, g) - charge_of(p, w - 2 * h, g);
            const double fd = (8 * d1 - d2) / (12 * h);
            EXPECT_NEAR(fd, formula(w), 1e-6 * std::max(1.0, std::abs(formula(w)))) << "p=" << p << " w=" << w;
        }
        EXPECT_LT(formula(0.8 * wc), 0.0);
        EXPECT_GT(formula(1.05 * wc), 0.0);
    }
}

TEST_F(Critical, RescaledActionIsFlatToSecondOrder) {
    auto gap = [&](double lambda) {
        const double lw = lambda * w;
        const auto moved = build_family(3.0, lw, grid);
        return action(moved.Phi, 3.0, lw) - action(wave.Phi, 3.0, lw);
    };
    for (double sign : {-1.0, 1.0}) {
        const double r2 = std::abs(gap(1 + sign * 1e-2)) / 1e-4;
        const double r3 = std::abs(gap(1 + sign * 1e-3)) / 1e-6;
        EXPECT_GE(r2 / r3, 5.0) << "sign " << sign;
    }
}

TEST_F(Critical, ChargeOfScaledDatumIsExact) {
    const double phi2 = l2sq(wave.phi);
    for (double a : {1e-1, 1e-2, 1e-3}) {
        const PhaseState u0 = cplx{1 + a} * wave.Phi;
        const double lhs = charge(u0) - charge(wave.Phi);
        EXPECT_NEAR(lhs, -2 * a * w * phi2 - a * a * w * phi2, 1e-12);
    }
}

TEST_F(Critical, ActionExpansionAroundScaledDatum) {
    const double phi2 = l2sq(wave.phi);
    const std::vector<double> as{1e-2, 1e-3, 1e-4};
    std::vector<double> worst;
    for (double a : as) {
        const PhaseState u0 = cplx{1 + a} * wave.Phi;
        double m = 0.0;
        for (double lambda = 0.9; lambda <= 1.1 + 1e-12; lambda += 0.02) {
            const double lw = lambda * w;
            const double r = action(u0, 3.0, lw) - action(wave.Phi, 3.0, lw) + 2 * (lambda - 1) * a * w * w * phi2;
            m = std::max(m, std::abs(r));
        }
        worst.push_back(m);
    }
    EXPECT_GT(kgsim::testing::loglog_slope(as, worst), 1.9);
}

TEST(Functionals, VirialMainPartIsLinearInAmplitude) {
    const Grid g(80.0, 1024);
    for (double p : {2.0, 3.0, 4.0}) {
        const double w = critical_frequency(p);
        const auto wave = build_family(p, w, g);
        const double phi2 = l2sq(wave.phi);
        const std::vector<double> as{1e-2, 1e-3, 1e-4};
        std::vector<double> res;
        for (double a : as) {
            const PhaseState u0 = cplx{1 + a} * wave.Phi;
            const double main = -(p + 3) / (p - 1) * 2 * energy(u0, p) - 16 * w / (p - 1) * charge(u0);
            res.push_back(main - (5 - p) / (p - 1) * 4 * a * w * w * phi2);
        }
        EXPECT_GT(kgsim::testing::loglog_slope(as, res), 1.9) << "p=" << p;
    }
}

TEST(Functionals, ChargeGradientMatchesFiniteDifference) {
    const Grid g(40.0, 256);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto s = kgsim::testing::smooth_random_state(g, rng);
        const auto h = kgsim::testing::smooth_random_state(g, rng);
        const double eps = 1e-6;
        const double fd = (charge(s + cplx{eps} * h) - charge(s - cplx{eps} * h)) / (2 * eps);
        EXPECT_NEAR(inner(charge_gradient(s), h), fd, 1e-7 * (1 + std::abs(fd)));
    }
}

TEST(Functionals, ConservedTripleBundlesTheThree) {
    const Grid g(40.0, 256);
    std::mt19937_64 rng(9);
    const auto s = kgsim::testing::smooth_random_state(g, rng);
    const auto c = conserved(s, 2.5);
    EXPECT_EQ(c.Q, charge(s));
    EXPECT_EQ(c.P, momentum(s));
    EXPECT_EQ(c.E, energy(s, 2.5));
}
