#include <gtest/gtest.h>

#include "rns/spectral_analysis.hpp"

using namespace rns;

namespace {

ModelParams damping() { return ModelParams{1, 2, 1, 1, 1, 3, 2, 1, 1, 0, std::nullopt}; }

ModelParams memory() {
    auto p = damping();
    p.tau0 = 1;
    p.kernel = KernelParams{0.5, 1.0};
    return p;
}

ModelParams all_ones(int tau0 = 0) {
    ModelParams p{1, 1, 1, 1, 1, 1, 1, 1, 1, tau0, std::nullopt};
    if (tau0) p.kernel = KernelParams{0.25, 1.0};
    return p;
}

bool has_eigenvalue(const std::vector<Eigenpair>& v, cplx mu, double tol) {
    for (const auto& e : v)
        if (std::abs(e.value - mu) < tol) return true;
    return false;
}

}  // namespace

TEST(Spectrum, CountAndResiduals) {
    for (const auto& p : {damping(), memory()})
        for (double xi : {0.0, 0.1, 1.0, 5.0}) {
            const auto sp = mode_spectrum(assemble_symbol(p, xi));
            EXPECT_EQ(static_cast<int>(sp.pairs.size()), p.dimension());
            EXPECT_EQ(static_cast<int>(sp.physical.size()), p.dimension() - 1);
            EXPECT_LE(sp.max_residual, EIGEN_RESIDUAL_TOL) << "xi=" << xi;
        }
}

TEST(Spectrum, ConstraintModeIsTheExtraZero) {
    // the full spectrum is the physical one plus the eigenvalue 0 of the conserved constraint
    const auto sp = mode_spectrum(assemble_symbol(damping(), 1.3));
    EXPECT_TRUE(has_eigenvalue(sp.pairs, 0.0, 1e-12));
    for (const auto& e : sp.physical) EXPECT_TRUE(has_eigenvalue(sp.pairs, e.value, 1e-9));
}

TEST(Spectrum, ConservativeSystemIsNeutral) {
    auto p = damping();
    p.gamma = 0;
    for (double xi : {0.2, 1.0, 7.0}) {
        const auto sp = mode_spectrum(assemble_symbol(p, xi));
        for (const auto& e : sp.pairs) EXPECT_LT(std::abs(e.value.real()), NEUTRAL_TOL);
        EXPECT_EQ(sp.neutral_modes.size(), sp.physical.size());
    }
}

TEST(Spectrum, EqualSpeedNeutralFrequencies) {
    for (int tau0 : {0, 1}) {
        const auto p = all_ones(tau0);
        const auto s1 = mode_spectrum(assemble_symbol(p, 1.0));
        EXPECT_TRUE(has_eigenvalue(s1.neutral_modes, cplx(0, 1.0), 1e-9) ||
                    has_eigenvalue(s1.neutral_modes, cplx(0, -1.0), 1e-9));
        const auto s0 = mode_spectrum(assemble_symbol(p, 0.0));
        EXPECT_TRUE(has_eigenvalue(s0.neutral_modes, cplx(0, std::sqrt(2.0)), 1e-9));
        for (double xi : {0.0, 0.5, 1.0, 5.0})
            EXPECT_NEAR(mode_spectrum(assemble_symbol(p, xi)).spectral_abscissa, 0.0, NEUTRAL_TOL);
    }
}

TEST(Spectrum, DistinctSpeedsDecayAwayFromZero) {
    for (const auto& p : {damping(), memory()})
        for (double xi : log_grid(1e-2, 1e2, 21)) EXPECT_LT(mode_spectrum(assemble_symbol(p, xi)).spectral_abscissa, 0);
}

TEST(Spectrum, RefinedRealPartsAgreeWithSolverAtModerateFrequency) {
    const auto sym = assemble_symbol(damping(), 1.0);
    Eigen::ComplexEigenSolver<CMatrix> es(CMatrix(-sym.matrix));
    double raw = -INFINITY;
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j)
        if (std::abs(es.eigenvalues()(j)) > 1e-8) raw = std::max(raw, es.eigenvalues()(j).real());
    EXPECT_NEAR(mode_spectrum(sym).spectral_abscissa, raw, 1e-12);
}

TEST(Spectrum, CsvLayout) {
    const auto t = spectrum_table({mode_spectrum(assemble_symbol(damping(), 1.0))});
    EXPECT_EQ(t.str().substr(0, 9), "xi,re,im\n");
    EXPECT_EQ(t.size(), 7u);
}

TEST(Modal, AgreesWithExponentialPath) {
    for (const auto& p : {damping(), memory()})
        for (double xi : {0.7, 3.0}) {
            const auto sym = assemble_symbol(p, xi);
            const auto d = initial_data(p, InitialProfile{}, xi);
            const std::vector<double> t{0, 5, 50};
            const auto a = evolve_modal(sym, d.state, t);
            const auto b = evolve_exponential(sym, d.state, t);
            for (size_t k = 0; k < t.size(); ++k) {
                const double n0 = modulus(b.states[k], xi);
                EXPECT_LE((a.states[k].amp - b.states[k].amp).head(FIELD_COUNT).norm(), 1e-9 * n0);
                EXPECT_LE(std::pow(xi, 4) * std::abs(a.states[k].J - b.states[k].J), 1e-9 * n0 * n0);
            }
        }
}

TEST(Certificate, AllOnesHoldsOverLongHorizon) {
    for (int tau0 : {0, 1})
        for (double xi : {0.0, 1.0, 5.0}) {
            const auto c = instability_certificate(all_ones(tau0), xi);
            EXPECT_TRUE(c.holds) << "tau0=" << tau0 << " xi=" << xi << " min=" << c.min_ratio << " max=" << c.max_ratio
                                 << " res=" << c.residual;
            EXPECT_NEAR(std::abs(c.eigenvalue.imag()), neutral_frequency(all_ones(tau0), xi), 1e-15);
            EXPECT_EQ(c.eigenvalue.real(), 0.0);
            EXPECT_NEAR(modulus(c.mode, xi), 1.0, 1e-12);
        }
}

TEST(Certificate, FrequencyAtZero) {
    EXPECT_NEAR(neutral_frequency(all_ones(), 0.0), std::sqrt(2.0), 1e-15);
    ModelParams p = all_ones();
    p.k0 = 3;
    p.rho2 = 2;
    p.k2 = 2;
    EXPECT_NEAR(instability_certificate(p, 0.0, 10, 10).frequency, std::sqrt(3 * 1.5), 1e-15);
}

TEST(Certificate, RefusesDistinctSpeeds) { EXPECT_THROW(instability_certificate(damping(), 1.0), RefusalError); }

TEST(Fit, LeastSquaresExactLine) {
    const auto f = least_squares({0, 1, 2, 3}, {1, 3, 5, 7});
    EXPECT_NEAR(f.slope, 2, 1e-14);
    EXPECT_NEAR(f.intercept, 1, 1e-14);
    EXPECT_NEAR(f.r_squared, 1, 1e-14);
    EXPECT_THROW(least_squares({1}, {1}), std::invalid_argument);
}

TEST(Fit, PositiveRateMatchingSpectrum) {
    for (const auto& p : {damping(), memory()}) {
        const auto fit = fit_pointwise_decay(rate_trajectory(p, 1.0), p);
        EXPECT_FALSE(fit.anomaly) << fit.note;
        EXPECT_GT(fit.rate, 0);
        EXPECT_GE(fit.r_squared, 0.0);
        EXPECT_LE(fit.r_squared, 1.0);
        const double a = -mode_spectrum(assemble_symbol(p, 1.0)).spectral_abscissa;
        EXPECT_NEAR(fit.rate, a, 0.05 * a);
    }
}

TEST(Fit, AdaptiveTrajectoryGivesSameRate) {
    const auto p = damping();
    const double xi = 1.0;
    const auto ref = rate_trajectory(p, xi, 512);
    const auto sym = assemble_symbol(p, xi);
    const auto tr = evolve_mode(sym, ref.states.front(), ref.times, {1e-10, 1e-14, 10, 0});
    EXPECT_NEAR(fit_pointwise_decay(tr, p).rate, fit_pointwise_decay(ref, p).rate, 1e-3 * fit_pointwise_decay(ref, p).rate);
}

TEST(Fit, EvenInFrequency) {
    for (const auto& p : {damping(), memory()})
        for (double xi : {0.3, 2.0}) {
            const double a = fit_pointwise_decay(rate_trajectory(p, xi), p).rate;
            const double b = fit_pointwise_decay(rate_trajectory(p, -xi), p).rate;
            EXPECT_NEAR(a, b, 1e-6 * a);
        }
}

TEST(Fit, RefusesEqualSpeeds) {
    const auto p = all_ones();
    const auto sym = assemble_symbol(p, 1.0);
    const auto d = initial_data(p, InitialProfile{}, 1.0);
    EXPECT_THROW(fit_pointwise_decay(evolve_modal(sym, d.state, uniform_times(100, 1)), p), RefusalError);
}

TEST(RateCurve, BranchSlopes) {
    const auto grid = log_grid(1e-2, 1e2, 41);
    const auto rc0 = rate_curve(damping(), grid);
    EXPECT_NEAR(rc0.low_slope, 4, 0.3);
    EXPECT_NEAR(rc0.high_slope, -6, 0.5);
    const auto rc1 = rate_curve(memory(), grid);
    EXPECT_NEAR(rc1.low_slope, 6, 0.3);
    EXPECT_NEAR(rc1.high_slope, -4, 0.5);
    for (const auto* rc : {&rc0, &rc1})
        for (const auto& r : rc->rows) {
            EXPECT_TRUE(r.error.empty()) << r.error;
            EXPECT_GT(r.rate, 0);
        }
}

TEST(RateCurve, RateAboveScaledEnvelope) {
    // rate >= 0.01 f(xi) times the smallest parameter
    for (const auto& p : {damping(), memory()}) {
        double scale = std::min({p.rho1, p.rho2, p.rho3, p.k0, p.k1, p.k2, p.k3, p.l});
        if (p.memory()) scale = std::min({scale, p.kernel->d1, p.kernel->d2});
        else scale = std::min(scale, p.gamma);
        const auto rc = rate_curve(p, log_grid(1e-2, 1e2, 13));
        for (const auto& r : rc.rows) EXPECT_GE(r.rate, 0.01 * r.f * scale) << "xi=" << r.xi;
    }
}

TEST(RateCurve, CsvLayout) {
    const auto rc = rate_curve(damping(), {0.5, 1.0});
    const std::string s = rate_curve_table(rc).str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "xi,fitted_rate,f_xi,ratio");
}

TEST(SensitivityBound, HoldsWithSingleConstantPair) {
    for (const auto& p : {damping(), memory()}) {
        const auto grid = log_grid(0.1, 10, 9);
        const auto all = sensitivity_samples(p, InitialProfile{}, grid, 128);
        const auto rc = rate_curve(p, grid, 1024);
        std::vector<SensitivitySample> early;
        for (const auto& s : all) {
            const double a = -mode_spectrum(assemble_symbol(p, s.xi)).spectral_abscissa;
            if (s.t <= 1.5 * std::log(10.0) / a) early.push_back(s);
        }
        const auto b = fit_sensitivity_bound(early, all, 0.5 * rc.c0);
        EXPECT_TRUE(b.holds) << "worst=" << b.worst_ratio << " C=" << b.C;
        EXPECT_GT(b.C, 0);
        EXPECT_EQ(b.points, all.size());
    }
}

TEST(SensitivityBound, SingularAtZero) {
    EXPECT_THROW(sensitivity_samples(damping(), InitialProfile{}, {0.0}), std::invalid_argument);
}
