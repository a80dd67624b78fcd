#include "kgsim/evolver.hpp"
#include "kgsim/ground_state.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace kgsim;

namespace {

PhaseState final_state(const PhaseState& s0, double dt, double t_end, double p) {
    EvolverConfig cfg;
    cfg.dt = dt;
    cfg.t_end = t_end;
    cfg.record_every = 1 << 30;
    const auto tr = evolve(s0, cfg, p);
    return tr.samples.back().state;
}

/// inf over theta of ||u - e^{i theta} phi||_{L2}, closed form.
double phase_distance(const ComplexField& u, const ComplexField& phi) {
    cplx c{0.0};
    for (int j = 0; j < u.size(); ++j) c += u[j] * std::conj(phi[j]);
    c *= u.grid.dx();
    return std::sqrt(std::max(0.0, l2sq(u) + l2sq(phi) - 2.0 * std::abs(c)));
}

ComplexField roll(const ComplexField& f, int m) {
    ComplexField out(f.grid);
    const int n = f.size();
    for (int j = 0; j < n; ++j) out[(j + m) % n] = f[j];
    return out;
}

}  // namespace

TEST(EvolverConfig, Validation) {
    EvolverConfig c;
    EXPECT_NO_THROW(c.validate());
    c.dt = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.t_end = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.record_every = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_THROW(Evolver(Grid(10.0, 16), 1.0), std::invalid_argument);
}

TEST(Step, LinearSingleModeRotatesExactly) {
    const Grid g(20.0, 64);
    const int m = 3;
    const double k = g.wavenumber(m), Om = std::sqrt(k * k + 1);
    ComplexField u(g);
    for (int j = 0; j < g.size(); ++j) u[j] = std::polar(1.0, k * g.x(j));
    PhaseState s(u, ComplexField(g));
    EvolverConfig cfg;
    cfg.dt = 0.01;
    cfg.t_end = 3.0;
    cfg.nonlinearity = 0.0;
    cfg.record_every = 100;
    const auto tr = evolve(s, cfg, 3.0);
    for (const auto& smp : tr.samples) {
        const double t = smp.state.t;
        double err = 0.0;
        for (int j = 0; j < g.size(); ++j) {
            err = std::max(err, std::abs(smp.state.u[j] - std::cos(Om * t) * u[j]));
            err = std::max(err, std::abs(smp.state.v[j] + Om * std::sin(Om * t) * u[j]));
        }
        EXPECT_LT(err, 1e-12) << "t=" << t;
    }
}

TEST(Step, RejectsNonFiniteState) {
    const Grid g(10.0, 16);
    PhaseState s(g);
    s.u[2] = cplx{INFINITY, 0};
    EXPECT_THROW(step(s, 0.01, 3.0), std::domain_error);
    EXPECT_EQ(evolve(s, EvolverConfig{}, 3.0).status, RunStatus::rejected);
}

TEST(Evolve, ZeroStateStaysZero) {
    const Grid g(40.0, 128);
    EvolverConfig cfg;
    cfg.t_end = 2.0;
    const auto tr = evolve(PhaseState(g), cfg, 3.0);
    EXPECT_EQ(tr.status, RunStatus::completed);
    for (const auto& s : tr.samples) {
        EXPECT_EQ(s.state.u.max_abs(), 0.0);
        EXPECT_EQ(s.state.v.max_abs(), 0.0);
    }
}

TEST(Evolve, StandingWaveStaysOnItsOrbit) {
    const Grid g(80.0, 1024);
    const double w = critical_frequency(3.0);
    const auto wave = build_family(3.0, w, g);
    EvolverConfig cfg;
    cfg.dt = 2.5e-3;
    cfg.t_end = 10.0;
    cfg.record_every = 40;
    const auto tr = evolve(wave.Phi, cfg, 3.0);
    ASSERT_EQ(tr.status, RunStatus::completed);
    double worst = 0.0;
    for (const auto& s : tr.samples) worst = std::max(worst, phase_distance(s.state.u, wave.phi));
    EXPECT_LT(worst, 1e-4);
    // the phase advances at the frequency
    const auto& last = tr.samples.back().state;
    cplx c{0.0};
    for (int j = 0; j < g.size(); ++j) c += last.u[j] * wave.phi[j];
    EXPECT_NEAR(std::remainder(std::arg(c) - w * last.t, 2 * std::numbers::pi), 0.0, 1e-3);
}

TEST(Evolve, RecordsTimestampsInOrder) {
    const Grid g(40.0, 128);
    const auto wave = build_family(3.0, 0.8, g, 0.0, false);
    EvolverConfig cfg;
    cfg.dt = 0.01;
    cfg.t_end = 1.05;
    cfg.record_every = 10;
    const auto tr = evolve(wave.Phi, cfg, 3.0);
    ASSERT_EQ(tr.samples.size(), 12u);  // t = 0, 0.1, ..., 1.0, 1.05
    for (std::size_t i = 1; i < tr.samples.size(); ++i) EXPECT_GT(tr.samples[i].state.t, tr.samples[i - 1].state.t);
    EXPECT_NEAR(tr.samples.back().state.t, 1.05, 1e-12);
}

TEST(Evolve, SecondOrderInTimeStep) {
    const Grid g(80.0, 512);
    const auto wave = build_family(3.0, critical_frequency(3.0), g);
    const PhaseState s0 = cplx{1.01} * wave.Phi;
    const double T = 2.0;
    const auto ref = final_state(s0, 0.01 / 8, T, 3.0);
    std::vector<double> errs;
    for (double dt : {0.04, 0.02, 0.01}) errs.push_back(std::sqrt(h1l2sq(final_state(s0, dt, T, 3.0) - ref)));
    const double order = std::log2(errs[1] / errs[2]);
    EXPECT_NEAR(order, 2.0, 0.2);
    EXPECT_NEAR(std::log2(errs[0] / errs[1]), 2.0, 0.2);
}

TEST(Evolve, ConservationOnBoundedRuns) {
    // stable side of the family: (1 + a) Phi_{0.9}
    const double w = 0.9;
    const auto dom = resolve_domain(3.0, w, 100.0, 1024);
    const Grid g(dom.length, dom.n);
    const auto wave = build_family(3.0, w, g);
    EvolverConfig cfg;
    cfg.dt = 5e-3;
    cfg.t_end = 50.0;
    cfg.record_every = 100;
    for (double a : {0.0, 0.01}) {
        const PhaseState s0 = cplx{1 + a} * wave.Phi;
        const auto tr = evolve(s0, cfg, 3.0);
        ASSERT_EQ(tr.status, RunStatus::completed);
        std::vector<ConservedTriple> series;
        for (const auto& s : tr.samples) series.push_back(s.conserved);
        const auto d = conservation_drift(series, 1e-3 * h1l2sq(s0));
        EXPECT_LT(d.Q, 1e-6) << "a=" << a;
        EXPECT_LT(d.P, 1e-6) << "a=" << a;
        EXPECT_LT(d.E, 1e-6) << "a=" << a;
    }
}

TEST(Evolve, TimeReversal) {
    const Grid g(80.0, 512);
    const auto wave = build_family(3.0, critical_frequency(3.0), g);
    std::mt19937_64 rng(1);
    PhaseState s0 = cplx{1.02} * wave.Phi + cplx{0.01} * kgsim::testing::smooth_random_state(g, rng, 1.0);
    auto fwd = final_state(s0, 5e-3, 2.0, 3.0);
    fwd.v *= cplx{-1.0};
    fwd.t = 0;
    auto back = final_state(fwd, 5e-3, 2.0, 3.0);
    back.v *= cplx{-1.0};
    EXPECT_LT(std::sqrt(h1l2sq(back - s0)), 1e-8);

    Evolver ev(g, 3.0);
    PhaseState s = s0;
    for (int k = 0; k < 200; ++k) ev.step(s, 1e-2);
    for (int k = 0; k < 200; ++k) ev.step(s, -1e-2);
    EXPECT_LT(std::sqrt(h1l2sq(s - s0)), 1e-8);
}

TEST(Evolve, GaugeEquivariance) {
    const Grid g(60.0, 256);
    std::mt19937_64 rng(8);
    const auto wave = build_family(2.5, 0.5, g, 0.0, false);
    const PhaseState s0 = wave.Phi + cplx{0.05} * kgsim::testing::smooth_random_state(g, rng, 1.0);
    const cplx rot = std::polar(1.0, 0.7);
    const auto a = final_state(rot * s0, 1e-2, 3.0, 2.5);
    const auto b = rot * final_state(s0, 1e-2, 3.0, 2.5);
    EXPECT_LT(std::sqrt(h1l2sq(a - b)), 1e-10);
}

TEST(Evolve, TranslationEquivariance) {
    const Grid g(60.0, 256);
    std::mt19937_64 rng(12);
    const auto wave = build_family(3.0, 0.6, g, 0.0, false);
    const PhaseState s0 = wave.Phi + cplx{0.05} * kgsim::testing::smooth_random_state(g, rng, 1.0);
    const int m = 37;
    const PhaseState moved(roll(s0.u, m), roll(s0.v, m));
    const auto a = final_state(moved, 1e-2, 3.0, 3.0);
    const auto b = final_state(s0, 1e-2, 3.0, 3.0);
    const PhaseState b_moved(roll(b.u, m), roll(b.v, m));
    EXPECT_LT(std::sqrt(h1l2sq(a - b_moved)), 1e-10);
}

TEST(Evolve, BlowUpIsReported) {
    const Grid g(80.0, 1024);
    const auto wave = build_family(3.0, critical_frequency(3.0), g);
    EvolverConfig cfg;
    cfg.dt = 5e-3;
    cfg.t_end = 50.0;
    cfg.record_every = 20;
    const auto tr = evolve(cplx{1.1} * wave.Phi, cfg, 3.0);
    ASSERT_EQ(tr.status, RunStatus::blown_up);
    ASSERT_TRUE(tr.blowup_time.has_value());
    EXPECT_LT(*tr.blowup_time, 50.0);
    EXPECT_LE(tr.last_finite_time, *tr.blowup_time);
    for (const auto& s : tr.samples) {
        EXPECT_TRUE(s.state.finite());
        EXPECT_LE(s.state.u.max_abs(), cfg.blowup_threshold);
        EXPECT_TRUE(std::isfinite(s.conserved.E));
    }
}

TEST(Evolve, ObserverCanStopTheRun) {
    const Grid g(40.0, 128);
    const auto wave = build_family(3.0, 0.8, g, 0.0, false);
    EvolverConfig cfg;
    cfg.dt = 0.01;
    cfg.t_end = 5.0;
    cfg.record_every = 10;
    int calls = 0;
    const auto summary = evolve_streaming(wave.Phi, cfg, 3.0, [&](const PhaseState&, const ConservedTriple&) {
        return ++calls < 4;
    });
    EXPECT_TRUE(summary.stopped_by_observer);
    EXPECT_EQ(calls, 4);
    EXPECT_EQ(summary.status, RunStatus::completed);
}

TEST(ConservationDrift, RelativeToInitialValues) {
    const std::vector<ConservedTriple> series{{-2.0, 0.0, 1.0}, {-2.0 + 1e-7, 1e-9, 1.0 - 2e-7}};
    const auto d = conservation_drift(series, 1e-3);
    EXPECT_NEAR(d.Q, 5e-8, 1e-15);
    EXPECT_NEAR(d.P, 1e-6, 1e-18);
    EXPECT_NEAR(d.E, 2e-7, 1e-15);
    EXPECT_NEAR(d.max(), 1e-6, 1e-18);
}
