// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "rns/pipelines.hpp"

using namespace rns;

namespace {

// Pinned tolerances.
constexpr double DISSIPATION_TOL = 1e-6;
constexpr double CONSERVATION_TOL = 1e-8;
constexpr double NEUTRAL_RE_TOL = 1e-10;
constexpr double EIGEN_RES_TOL = 1e-8;
constexpr double WITNESS_LO = 0.99, WITNESS_HI = 1.01;
constexpr double WITNESS_HORIZON = 1e4;
constexpr double IDENTITY_TOL = 1e-10;
constexpr double LOW_SLOPE_TOL = 0.3, HIGH_SLOPE_TOL = 0.5;
constexpr double L2_SLOPE_TOL = 0.05;
constexpr double SENSITIVITY_FD_TOL = 1e-4;
constexpr double ORACLE_TOL = 1e-6;

const std::string CONFIGS = std::string(RNS_SOURCE_DIR) + "/configs/";

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "first failure: " << what << "; ";
            pass = false;
        }
    }
};

ExperimentConfig damping_cfg() { return load_config(CONFIGS + "damping.cfg"); }
ExperimentConfig memory_cfg() { return load_config(CONFIGS + "memory.cfg"); }

std::vector<ExperimentConfig> reference() { return {damping_cfg(), memory_cfg()}; }

std::string sys(const ModelParams& p) { return p.tau0 ? "memory" : "damping"; }

// 1. Dissipation identity and the conservative sub-case.
void dissipation(Outcome& o) {
    const auto times = uniform_times(100.0, 1e-3);
    const IntegratorConfig tight{1e-12, 1e-14, 1.0, 0.0};
    double worst_res = 0, worst_drift = 0;
    for (const auto& c : reference())
        for (double xi : {0.1, 1.0, 10.0}) {
            ModelParams cons = c.model;
            if (cons.memory()) cons.kernel->d1 = 0;
            else cons.gamma = 0;
            for (const ModelParams* p : {&c.model, static_cast<const ModelParams*>(&cons)}) {
                SpectralState u0 = initial_data(*p, c.profile, xi).state;
                u0.amp /= modulus(u0, xi);
                const auto tr = evolve_mode(assemble_symbol(*p, xi), u0, times, tight);
                const std::string at = sys(c.model) + " xi=" + fmt_short(xi);
                if (p == &c.model) {
                    const double r = dissipation_residual(tr, *p).max_normalized;
                    worst_res = std::max(worst_res, r);
                    o.require(r <= DISSIPATION_TOL, "residual " + fmt_short(r) + " at " + at);
                } else {
                    const double e0 = energy(*p, xi, tr.states.front()).total;
                    double d = 0;
                    for (const auto& s : tr.states) d = std::max(d, std::abs(energy(*p, xi, s).total - e0) / e0);
                    worst_drift = std::max(worst_drift, d);
                    o.require(d <= CONSERVATION_TOL, "conservative drift " + fmt_short(d) + " at " + at);
                }
            }
        }
    o.detail << "max residual/E(0) " << fmt_short(worst_res) << " (<= " << DISSIPATION_TOL << "), max conservative drift "
             << fmt_short(worst_drift) << " (<= " << CONSERVATION_TOL << ")";
}

// 2. Neutral eigenvalue and its long-horizon witness under equal speeds.
void instability(Outcome& o) {
    auto eq = load_config(CONFIGS + "equal_speed.cfg").model;
    auto eq_mem = eq;
    eq_mem.tau0 = 1;
    eq_mem.kernel = KernelParams{0.25, 1.0};
    double worst_re = 0, worst_res = 0, lo = INFINITY, hi = 0;
    for (const auto& p : {eq, eq_mem})
        for (double xi : {0.0, 1.0, 5.0}) {
            const auto c = instability_certificate(p, xi, WITNESS_HORIZON, 1000);
            const std::string at = sys(p) + " xi=" + fmt_short(xi);
            worst_re = std::max(worst_re, std::abs(c.eigenvalue.real()));
            worst_res = std::max(worst_res, c.residual);
            lo = std::min(lo, c.min_ratio);
            hi = std::max(hi, c.max_ratio);
            o.require(std::abs(c.eigenvalue.real()) <= NEUTRAL_RE_TOL, "Re at " + at);
            o.require(std::abs(std::abs(c.eigenvalue.imag()) - neutral_frequency(p, xi)) <= 1e-10 * std::max(1.0, c.frequency),
                      "frequency at " + at);
            o.require(c.residual <= EIGEN_RES_TOL, "residual at " + at);
            o.require(c.min_ratio >= WITNESS_LO && c.max_ratio <= WITNESS_HI, "witness ratio at " + at);
        }
    o.detail << "max |Re| " << fmt_short(worst_re) << ", max residual " << fmt_short(worst_res) << ", |U(t)|/|U(0)| in ["
             << fmt_short(lo) << ", " << fmt_short(hi) << "] up to t=" << WITNESS_HORIZON;
}

// 3. Coefficient identities and positivity on random draws.
void coefficients(Outcome& o) {
    std::mt19937_64 rng(20260101);
    std::uniform_real_distribution<double> logu(std::log(0.2), std::log(5.0)), unit(0.05, 0.95);
    auto draw = [&] { return std::exp(logu(rng)); };
    int draws = 0;
    double worst_identity = 0, min_positive = INFINITY;
    for (int tau0 : {0, 1})
        for (int k = 0; k < 200;) {
            ModelParams p{draw(), draw(), draw(), draw(), draw(), draw(), draw(), draw(), draw(), tau0, std::nullopt};
            if (tau0) {
                const double d2 = draw();
                p.kernel = KernelParams{unit(rng) * p.k3 * d2, d2};
            }
            if (classify_speeds(p, 1e-3) == SpeedClass::Equal || !validate_params(p).valid()) continue;
            ++k;
            ++draws;
            for (double xi : {0.1, 1.0, 10.0}) {
                LyapunovCoefficients c;
                try {
                    c = select_lambdas(p, xi);
                } catch (const std::exception& e) {
                    o.require(false, std::string("selection failed: ") + e.what());
                    continue;
                }
                o.require(c.lambda4_lower < c.lambda4_upper, "empty lambda4 interval");
                for (const auto& chk : c.checks) {
                    if (chk.identity) {
                        worst_identity = std::max(worst_identity, chk.value);
                        o.require(chk.value <= IDENTITY_TOL, chk.name + " identity");
                    } else {
                        min_positive = std::min(min_positive, chk.value);
                        o.require(chk.value > 0, chk.name + " positivity");
                    }
                    o.require(chk.pass, chk.name);
                }
            }
        }
    o.detail << draws << " draws x 3 frequencies, max identity residual " << fmt_short(worst_identity)
             << ", min positive quantity " << fmt_short(min_positive);
}

// 4. Pointwise decay rates and branch slopes.
void pointwise(Outcome& o) {
    const auto grid = log_grid(1e-2, 1e2, 41);
    for (const auto& c : reference()) {
        const auto rc = rate_curve(c.model, grid);
        const int tau0 = c.model.tau0;
        for (const auto& r : rc.rows) o.require(r.error.empty() && r.rate > 0, "rate at xi=" + fmt_short(r.xi));
        o.require(std::abs(rc.low_slope - (4 + 2 * tau0)) <= LOW_SLOPE_TOL, sys(c.model) + " low slope");
        o.require(std::abs(rc.high_slope - (-6 + 2 * tau0)) <= HIGH_SLOPE_TOL, sys(c.model) + " high slope");
        o.detail << sys(c.model) << ": low " << fmt_short(rc.low_slope) << " (target " << 4 + 2 * tau0 << " +- "
                 << LOW_SLOPE_TOL << "), high " << fmt_short(rc.high_slope) << " (target " << -6 + 2 * tau0 << " +- "
                 << HIGH_SLOPE_TOL << "); ";
    }
}

// 5. Lyapunov functional decay and equivalence band.
void lyapunov(Outcome& o) {
    for (const auto& c : reference()) {
        const auto scale = choose_lyapunov_lambda(c.model, default_lyapunov_grid());
        double min_c = INFINITY;
        for (double xi : {0.5, 1.0, 2.0}) {
            const LyapunovFunctional fn(c.model, select_lambdas(c.model, xi), scale.lambda);
            const auto d = initial_data(c.model, c.profile, xi);
            const auto tr = evolve_mode(assemble_symbol(c.model, xi), d.state, uniform_times(20, 0.01), c.integrator);
            const auto chk = check_F_decay(tr, c.model, fn, 1.0);
            const std::string at = sys(c.model) + " xi=" + fmt_short(xi);
            o.require(chk.monotone, "F increases at t=" + fmt_short(chk.first_increase) + " for " + at);
            o.require(chk.c > 0, "c <= 0 for " + at);
            min_c = std::min(min_c, chk.c);
            for (size_t k = 0; k < chk.F.size(); ++k) {
                const double q = chk.F[k] / chk.E[k];
                o.require(q >= (scale.lambda - 2 * scale.c3) * (1 - 1e-12) && q <= (scale.lambda + 2 * scale.c3) * (1 + 1e-12),
                          "F/E outside band for " + at);
            }
        }
        o.detail << sys(c.model) << ": lambda " << fmt_short(scale.lambda) << ", min c " << fmt_short(min_c) << "; ";
    }
}

// 6. L2 decay slopes.
void l2_rates(Outcome& o) {
    for (const auto& c : reference()) {
        const auto f = build_field(c.model, c.profile, SpectralGrid::sinh(), dyadic_times(20));
        o.detail << sys(c.model) << ":";
        for (int j : {0, 1, 2}) {
            const double slope = fit_time_slope(l2_series(f, j), 1e3, 1e6).rate;
            const double target = theoretical_exponents(j, 1, c.model.tau0).l2_data;
            o.require(std::abs(slope - target) <= L2_SLOPE_TOL, sys(c.model) + " j=" + std::to_string(j));
            o.detail << " j=" << j << " " << fmt_short(slope) << " (" << fmt_short(target) << ")";
        }
        o.detail << "; ";
    }
}

// 7. Variational state vs finite differences, and the sensitivity bound.
void sensitivity(Outcome& o) {
    double worst = 0;
    for (const auto& c : reference()) {
        const auto& p = c.model;
        for (double xi : {0.5, 2.0}) {
            const double h = 1e-4;
            const std::vector<double> t{0.0, 10.0};
            const auto dp = initial_data(p, c.profile, xi + h), dm = initial_data(p, c.profile, xi - h);
            const auto d = initial_data(p, c.profile, xi);
            const auto up = evolve_mode(assemble_symbol(p, xi + h), dp.state, t);
            const auto um = evolve_mode(assemble_symbol(p, xi - h), dm.state, t);
            const auto tr = evolve_with_sensitivity(assemble_symbol(p, xi), d.state, d.sensitivity, t);
            const CVector fd = (up.states[1].amp - um.states[1].amp) / (2 * h);
            const double rel = (fd - tr.sensitivity[1]).norm() / tr.sensitivity[1].norm();
            worst = std::max(worst, rel);
            o.require(rel <= SENSITIVITY_FD_TOL, "finite difference at " + sys(p) + " xi=" + fmt_short(xi));
        }
        const auto grid = log_grid(0.1, 10, 9);
        const auto all = sensitivity_samples(p, c.profile, grid, 128);
        const auto rc = rate_curve(p, grid, 1024);
        std::vector<SensitivitySample> early;
        for (const auto& s : all) {
            const double a = -mode_spectrum(assemble_symbol(p, s.xi)).spectral_abscissa;
            if (s.t <= 1.5 * std::log(10.0) / a) early.push_back(s);
        }
        const auto b = fit_sensitivity_bound(early, all, 0.5 * rc.c0);
        o.require(b.holds, sys(p) + " sensitivity bound, worst ratio " + fmt_short(b.worst_ratio));
        o.detail << sys(p) << ": C " << fmt_short(b.C) << ", c " << fmt_short(b.c) << ", worst ratio "
                 << fmt_short(b.worst_ratio) << "; ";
    }
    o.detail << "max FD mismatch " << fmt_short(worst) << " (<= " << SENSITIVITY_FD_TOL << ")";
}

// 8. L1 and L^q inequalities, and the L1 envelope at j = 4 + 2 tau0.
void l1_lq(Outcome& o) {
    for (const auto& c : reference()) {
        const int jl1 = 4 + 2 * c.model.tau0;
        const auto times = dyadic_times(10);
        const auto pf = build_physical_field(c.model, c.profile, times, {0, 1, 2, jl1});
        const std::vector<double> qs{1, 1.5, 2, 3, 6, INFINITY};
        double worst_ratio = 0;
        NormSeries direct{jl1, 1, times, {}, ""};
        for (size_t ti = 0; ti < times.size(); ++ti)
            for (int j : {0, 1, 2, jl1}) {
                const auto r = lq_norms(pf.field, j, ti, qs);
                for (const auto& ck : r.checks) {
                    if (ck.name != "plancherel") worst_ratio = std::max(worst_ratio, ck.ratio);
                    o.require(ck.pass, sys(c.model) + " " + ck.name + " j=" + std::to_string(j) + " t=" + fmt_short(times[ti]));
                }
                o.require(r.direct[0] <= r.carlson, "direct L1 above Carlson");
                if (j == jl1) direct.values.push_back(r.direct[0]);
            }
        const double ex = l1_exponent(jl1, 1, c.model.tau0);
        const auto env = check_power_envelope(direct, ex, 1, times.back());
        o.require(env.holds, sys(c.model) + " L1 envelope");
        o.detail << sys(c.model) << ": max lhs/rhs " << fmt_short(worst_ratio) << ", j=" << jl1 << " C "
                 << fmt_short(env.C) << " exponent " << fmt_short(ex) << " final-decade slope " << fmt_short(env.tail_slope)
                 << "; ";
    }
}

// 9. Adaptive integrator against the matrix exponential.
void oracle(Outcome& o) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> logu(std::log(0.2), std::log(5.0)), unit(0.05, 0.95), tu(0.0, 10.0),
        lx(std::log(0.01), std::log(20.0));
    auto draw = [&] { return std::exp(logu(rng)); };
    std::normal_distribution<double> nd;
    double worst = 0;
    int n = 0;
    while (n < 100) {
        const int tau0 = n % 2;
        ModelParams p{draw(), draw(), draw(), draw(), draw(), draw(), draw(), draw(), draw(), tau0, std::nullopt};
        if (tau0) {
            const double d2 = draw();
            p.kernel = KernelParams{unit(rng) * p.k3 * d2, d2};
        }
        if (!validate_params(p).valid()) continue;
        ++n;
        const double xi = std::exp(lx(rng)), t = tu(rng);
        SpectralState s0(p.dimension());
        for (int i = 0; i < FIELD_COUNT; ++i) s0.amp(i) = cplx(nd(rng), nd(rng));
        const auto sym = assemble_symbol(p, xi);
        const auto a = evolve_mode(sym, s0, {0.0, t}).states[1];
        const auto b = matrix_exponential_oracle(sym, s0, t).state;
        const double scale = modulus_squared(b, xi);
        const double rel = std::max((a.amp - b.amp).norm() / b.amp.norm(), std::pow(xi, 4) * std::abs(a.J - b.J) / scale);
        worst = std::max(worst, rel);
        o.require(rel <= ORACLE_TOL, "draw " + std::to_string(n) + " rel " + fmt_short(rel));
    }
    o.detail << n << " draws, max relative difference " << fmt_short(worst) << " (<= " << ORACLE_TOL << ")";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"dissipation identity", dissipation},
        {"instability certificate", instability},
        {"coefficient ledger", coefficients},
        {"pointwise envelope", pointwise},
        {"Lyapunov decay", lyapunov},
        {"L2 rates", l2_rates},
        {"sensitivity", sensitivity},
        {"L1/Lq inequalities", l1_lq},
        {"oracle equivalence", oracle},
    };
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.str().c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
