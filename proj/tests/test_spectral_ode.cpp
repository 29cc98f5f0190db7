#include <gtest/gtest.h>

#include <random>

#include "rns/history.hpp"
#include "rns/spectral_ode.hpp"

using namespace rns;

namespace {

ModelParams damping() {
    ModelParams p{1, 2, 1, 1, 1, 3, 2, 1, 1, 0, std::nullopt};
    return p;
}

ModelParams memory() {
    auto p = damping();
    p.tau0 = 1;
    p.kernel = KernelParams{0.5, 1.0};
    return p;
}

// J is quadratic in the state, so its error is compared against |U|^2.
double rel_diff(const SpectralState& a, const SpectralState& b, double xi) {
    const double amp = (a.amp - b.amp).norm() / std::max(a.amp.norm(), 1e-300);
    const double j = std::pow(xi, 4) * std::abs(a.J - b.J) / std::max(modulus_squared(a, xi), 1e-300);
    return std::max(amp, j);
}

}  // namespace

TEST(Integrator, ExponentialDecayScalar) {
    DormandPrince dp([](double, const RVector& y, RVector& dy) { dy = -y; }, IntegratorConfig{});
    RVector y0(1);
    y0 << 1.0;
    const auto ys = dp.solve(y0, {0.0, 1.0, 5.0});
    EXPECT_NEAR(ys[1](0), std::exp(-1.0), 1e-10);
    EXPECT_NEAR(ys[2](0), std::exp(-5.0), 1e-11);
}

TEST(Integrator, RejectsBadTolerances) {
    IntegratorConfig c;
    c.rel_tol = 0.5;
    EXPECT_THROW(c.check(), std::invalid_argument);
}

TEST(Integrator, StepUnderflowReportsFrequencyAndTime) {
    // finite-time blow-up y' = y^2 forces the step to collapse near t = 1
    DormandPrince dp([](double, const RVector& y, RVector& dy) { dy = y.array().square(); }, IntegratorConfig{}, 0.25);
    RVector y0(1);
    y0 << 1.0;
    try {
        dp.solve(y0, {0.0, 2.0});
        FAIL() << "expected failure";
    } catch (const IntegrationError& e) {
        EXPECT_EQ(e.xi(), 0.25);
        EXPECT_NEAR(e.t(), 1.0, 1e-3);
    }
}

TEST(EvolveMode, ZeroStateStaysZero) {
    const auto s = assemble_symbol(memory(), 1.3);
    const auto tr = evolve_mode(s, SpectralState(8), uniform_times(2.0, 0.5));
    for (const auto& st : tr.states) {
        EXPECT_EQ(st.amp.norm(), 0.0);
        EXPECT_EQ(st.J, 0.0);
    }
}

TEST(EvolveMode, FirstStateIsInitialStateExactly) {
    const auto p = damping();
    const auto d = initial_data(p, InitialProfile{}, 0.9);
    const auto tr = evolve_mode(assemble_symbol(p, 0.9), d.state, {0.0, 0.1});
    EXPECT_EQ(tr.states[0].amp, d.state.amp);
}

TEST(EvolveMode, RejectsBadGrid) {
    const auto s = assemble_symbol(damping(), 1.0);
    EXPECT_THROW(evolve_mode(s, SpectralState(7), {0.0, 1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(evolve_mode(s, SpectralState(7), {0.5, 1.0}), std::invalid_argument);
    EXPECT_THROW(evolve_mode(s, SpectralState(8), {0.0, 1.0}), std::invalid_argument);
}

TEST(Oracle, IdentityAtTimeZero) {
    const auto p = memory();
    const auto d = initial_data(p, InitialProfile{}, 0.4);
    auto st = d.state;
    st.J = 0.3;
    const auto r = matrix_exponential_oracle(assemble_symbol(p, 0.4), st, 0.0);
    EXPECT_LT((r.state.amp - st.amp).norm(), 1e-15);
    EXPECT_NEAR(r.state.J, 0.3, 1e-15);
}

TEST(Oracle, DiagonalGenerator) {
    FourierSymbol s;
    s.xi = 0;
    s.matrix = CMatrix::Zero(7, 7);
    for (int k = 0; k < 7; ++k) s.matrix(k, k) = k + 1.0;
    s.energy_scale = RVector::Ones(7);
    SpectralState st(7);
    st.amp.setOnes();
    const auto r = matrix_exponential_oracle(s, st, 0.7);
    for (int k = 0; k < 7; ++k) EXPECT_NEAR(r.state.amp(k).real(), std::exp(-(k + 1.0) * 0.7), 1e-14);
}

TEST(Oracle, WarnsOnDefectiveGenerator) {
    FourierSymbol s;
    s.matrix = CMatrix::Zero(7, 7);
    s.matrix(0, 1) = 1.0;  // nilpotent Jordan block
    s.energy_scale = RVector::Ones(7);
    SpectralState st(7);
    st.amp.setOnes();
    const auto r = matrix_exponential_oracle(s, st, 1.0);
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_NEAR(r.state.amp(0).real(), 0.0, 1e-14);
}

TEST(Oracle, RandomGeneratorMatchesIntegrator) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    FourierSymbol s;
    s.xi = 0.0;
    s.matrix = CMatrix(7, 7);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) s.matrix(i, j) = cplx(nd(rng), nd(rng));
    s.matrix += 4.0 * CMatrix::Identity(7, 7);
    s.energy_scale = RVector::Ones(7);
    s.forcing = CMatrix::Zero(7, 7);
    SpectralState st(7);
    for (int i = 0; i < 7; ++i) st.amp(i) = cplx(nd(rng), nd(rng));
    const auto tr = evolve_mode(s, st, {0.0, 1.0});
    const auto r = matrix_exponential_oracle(s, st, 1.0);
    EXPECT_LT((tr.states[1].amp - r.state.amp).norm() / r.state.amp.norm(), 1e-7);
}

TEST(Oracle, MemoryMomentMatchesIntegrator) {
    const auto p = memory();
    for (double xi : {0.2, 1.0, 3.0}) {
        const auto s = assemble_symbol(p, xi);
        const auto d = initial_data(p, InitialProfile{}, xi);
        const auto tr = evolve_mode(s, d.state, {0.0, 2.5, 7.0});
        for (size_t k = 1; k < 3; ++k) {
            const auto r = matrix_exponential_oracle(s, d.state, tr.times[k]);
            EXPECT_LT(rel_diff(r.state, tr.states[k], xi), 1e-8) << xi;
            EXPECT_NEAR(r.state.J, tr.states[k].J, 1e-8 * (1 + r.state.J));
        }
    }
}

TEST(Exponential, DyadicLadderMatchesFreshExponentials) {
    const auto p = memory();
    const double xi = 0.6;
    const auto s = assemble_symbol(p, xi);
    const auto d = initial_data(p, InitialProfile{}, xi);
    const auto times = dyadic_times(10);
    const auto tr = evolve_exponential(s, d.state, times);
    for (size_t k = 1; k < times.size(); ++k) {
        const auto r = matrix_exponential_oracle(s, d.state, times[k]);
        EXPECT_LT(rel_diff(r.state, tr.states[k], xi), 1e-8) << times[k];
    }
}

TEST(Exponential, SensitivityBlockMatchesIntegrator) {
    for (const auto& p : {damping(), memory()}) {
        const double xi = 1.4;
        const auto s = assemble_symbol(p, xi);
        const auto d = initial_data(p, InitialProfile{}, xi);
        const auto a = evolve_with_sensitivity(s, d.state, d.sensitivity, {0.0, 1.0, 2.0, 4.0});
        const auto b = evolve_exponential(s, d.state, {0.0, 1.0, 2.0, 4.0}, &d.sensitivity);
        for (size_t k = 1; k < 4; ++k)
            EXPECT_LT((a.sensitivity[k] - b.sensitivity[k]).norm(), 1e-7 * a.sensitivity[k].norm());
    }
}

TEST(Sensitivity, FlatDataBecomesNonzeroThroughForcing) {
    const auto p = damping();
    InitialProfile pr;
    pr.kind = ProfileKind::FlatSpectrum;
    pr.constrained = false;
    const auto s = assemble_symbol(p, 0.8);
    const auto d = initial_data(p, pr, 0.8);
    EXPECT_EQ(d.sensitivity.norm(), 0.0);
    const auto tr = evolve_with_sensitivity(s, d.state, d.sensitivity, {0.0, 0.5});
    EXPECT_GT(tr.sensitivity[1].norm(), 1e-3);
}

TEST(Sensitivity, ForcingActiveAtZeroFrequency) {
    const auto p = damping();
    const auto F = sensitivity_forcing_matrix(p, 0.0);
    EXPECT_EQ(F(V, U), I_UNIT);
    EXPECT_EQ(F(U, V), I_UNIT * p.k1 / p.rho1);
    CVector z = CVector::Zero(7);
    EXPECT_EQ((F * z).norm(), 0.0);
}

TEST(Sensitivity, MatchesCentralDifference) {
    for (const auto& p : {damping(), memory()}) {
        for (double xi : {0.5, 2.0}) {
            const double h = 1e-4;
            const InitialProfile pr;
            const auto dp = initial_data(p, pr, xi + h);
            const auto dm = initial_data(p, pr, xi - h);
            const auto d = initial_data(p, pr, xi);
            const std::vector<double> t{0.0, 10.0};
            const auto up = evolve_mode(assemble_symbol(p, xi + h), dp.state, t);
            const auto um = evolve_mode(assemble_symbol(p, xi - h), dm.state, t);
            const auto tr = evolve_with_sensitivity(assemble_symbol(p, xi), d.state, d.sensitivity, t);
            const CVector fd = (up.states[1].amp - um.states[1].amp) / (2 * h);
            EXPECT_LT((fd - tr.sensitivity[1]).norm() / tr.sensitivity[1].norm(), 1e-4) << p.tau0 << " " << xi;
        }
    }
}

TEST(Energy, CauchySchwarzAlongTrajectory) {
    const auto p = memory();
    const double g0 = p.g0();
    for (double xi : {0.3, 1.0, 2.0}) {
        const auto d = initial_data(p, InitialProfile{}, xi);
        const auto tr = evolve_mode(assemble_symbol(p, xi), d.state, uniform_times(20.0, 0.25));
        for (const auto& st : tr.states) {
            EXPECT_GE(st.J, -1e-14);
            EXPECT_LE(std::norm(st.amp(M)), g0 * st.J * (1 + 1e-8) + 1e-14);
        }
    }
}

TEST(Scan, OrderingSymmetryAndEmptyGrid) {
    const auto p = damping();
    InitialProfile pr;
    EXPECT_TRUE(scan_modes(p, pr, {}, {0.0, 1.0}).empty());
    const std::vector<double> grid{-1.5, -0.2, 0.2, 1.5};
    const auto t = uniform_times(3.0, 1.0);
    const auto res = scan_modes(p, pr, grid, t, {}, false, EvolutionPath::Adaptive, 2);
    ASSERT_EQ(res.size(), 4u);
    for (size_t i = 0; i < grid.size(); ++i) {
        ASSERT_TRUE(res[i].ok());
        EXPECT_EQ(res[i].xi, grid[i]);
    }
    for (size_t k = 0; k < t.size(); ++k) {
        const CVector a = res[0].trajectory->states[k].amp;
        const CVector b = res[3].trajectory->states[k].amp.conjugate();
        EXPECT_LT((a - b).norm(), 1e-10 * (1 + a.norm()));
    }
    const auto single = scan_modes(p, pr, {0.2}, t);
    const auto direct = evolve_mode(assemble_symbol(p, 0.2), initial_data(p, pr, 0.2).state, t);
    EXPECT_EQ(single[0].trajectory->states.back().amp, direct.states.back().amp);
}

TEST(Scan, PerModeFailuresAreCollected) {
    auto p = damping();
    const auto res = scan_modes(p, InitialProfile{}, {0.5, NAN}, {0.0, 1.0});
    EXPECT_TRUE(res[0].ok());
    EXPECT_FALSE(res[1].ok());
    EXPECT_FALSE(res[1].error.empty());
}

TEST(History, DiscretizedHistoryAgreesWithMomentClosure) {
    const auto p = memory();
    const double xi = 0.8;
    const auto d = initial_data(p, InitialProfile{}, xi);
    const std::vector<double> t{0.0, 1.0, 3.0};
    const auto tr = evolve_mode(assemble_symbol(p, xi), d.state, t);
    const auto h = evolve_history(p, xi, d.state.amp.head(7), t, HistoryGrid{4000, 40.0});
    for (size_t k = 1; k < t.size(); ++k) {
        const cplx m = tr.states[k].amp(M);
        EXPECT_LT(std::abs(h.m[k] - m), 2e-2 * std::abs(m)) << t[k];
        EXPECT_LT(std::abs(h.J[k] - tr.states[k].J), 2e-2 * tr.states[k].J) << t[k];
        EXPECT_LT((h.fields[k] - tr.states[k].amp.head(7)).norm(), 2e-2 * tr.states[k].amp.norm());
    }
}

TEST(Trajectory, CsvLayout) {
    const auto p = memory();
    const auto d = initial_data(p, InitialProfile{}, 0.5);
    const auto tr = evolve_mode(assemble_symbol(p, 0.5), d.state, {0.0, 1.0});
    const auto s = trajectory_table(tr).str();
    EXPECT_EQ(s.substr(0, s.find('\n')),
              "t,re_v,im_v,re_u,im_u,re_z,im_z,re_y,im_y,re_phi,im_phi,re_theta,im_theta,re_p,im_p,re_m,im_m,J");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
    EXPECT_EQ(trajectory_filename(0.1).string(), "mode_0.10000000000000001.csv");
}
