#pragma once
/*
 * Experiment pipelines behind the CLI. Each pipeline returns report sections
 * and CSV tables; run_experiment writes them and maps the outcome to an exit
 * code (0 all checks pass, 1 a check failed, 2 configuration or runtime error).
 */

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rns/config.hpp"
#include "rns/csv.hpp"
#include "rns/functionals.hpp"
#include "rns/norms.hpp"
#include "rns/spectral_analysis.hpp"
#include "rns/spectral_ode.hpp"

namespace rns {

struct CheckResult {
    std::string name;
    double value = 0;
    std::string relation;  // "<=", ">=", "<", ">", "in"
    std::string limit;
    bool pass = false;
};

struct ReportSection {
    std::string title;
    std::vector<std::string> lines;
    std::vector<CheckResult> checks;

    void check(std::string name, double value, const std::string& rel, double limit) {
        bool ok = false;
        if (rel == "<=") ok = value <= limit;
        else if (rel == ">=") ok = value >= limit;
        else if (rel == "<") ok = value < limit;
        else if (rel == ">") ok = value > limit;
        else throw std::logic_error("unknown relation " + rel);
        checks.push_back({std::move(name), value, rel, fmt_short(limit), ok && std::isfinite(value)});
    }
    void check_near(std::string name, double value, double target, double tol) {
        checks.push_back({std::move(name), value, "in", fmt_short(target) + " +- " + fmt_short(tol),
                          std::abs(value - target) <= tol});
    }
    void check_flag(std::string name, bool ok) { checks.push_back({std::move(name), ok ? 1.0 : 0.0, "==", "1", ok}); }
};

struct RunResult {
    std::string experiment;
    std::vector<ReportSection> sections;
    std::vector<std::pair<std::string, CsvTable>> csvs;  // written in this order

    size_t check_count() const {
        size_t n = 0;
        for (const auto& s : sections) n += s.checks.size();
        return n;
    }
    bool all_pass() const {
        for (const auto& s : sections)
            for (const auto& c : s.checks)
                if (!c.pass) return false;
        return true;
    }
    void append(RunResult other) {
        for (auto& s : other.sections) sections.push_back(std::move(s));
        for (auto& c : other.csvs) csvs.push_back(std::move(c));
    }
};

struct RunOptions {
    int threads = 0;
};

// Tolerances of the check suite.
namespace tol {
inline constexpr double dissipation = 1e-6;
inline constexpr double conservation = 1e-8;
inline constexpr double neutral_re = 1e-10;
inline constexpr double eigen_residual = 1e-8;
inline constexpr double witness_lo = 0.99, witness_hi = 1.01;
inline constexpr double low_slope = 0.3, high_slope = 0.5;
inline constexpr double l2_slope = 0.05;
}  // namespace tol

inline std::string describe_model(const ModelParams& p) {
    std::ostringstream os;
    os << "tau0=" << p.tau0 << " rho=(" << fmt_short(p.rho1) << ", " << fmt_short(p.rho2) << ", " << fmt_short(p.rho3)
       << ") k=(" << fmt_short(p.k0) << ", " << fmt_short(p.k1) << ", " << fmt_short(p.k2) << ", " << fmt_short(p.k3)
       << ") l=" << fmt_short(p.l);
    if (p.memory()) os << " d1=" << fmt_short(p.kernel->d1) << " d2=" << fmt_short(p.kernel->d2);
    else os << " gamma=" << fmt_short(p.gamma);
    return os.str();
}

inline std::string speed_line(const ModelParams& p) {
    return classify_speeds(p) == SpeedClass::Equal
               ? "speeds: Equal; non-decaying regime (neutral modes at every frequency)"
               : "speeds: Distinct; polynomial decay regime";
}

inline void require_distinct(const ModelParams& p, const std::string& what) {
    if (classify_speeds(p) == SpeedClass::Equal)
        throw RefusalError(what + " requires distinct wave speeds (k1/rho1 != k2/rho2); this config has equal speeds");
}

inline std::vector<double> rate_grid(const ExperimentConfig& c) {
    return log_grid(c.grid.rate_lo, c.grid.rate_hi, c.grid.rate_points);
}

inline RunResult run_validate(const ExperimentConfig& c, const RunOptions& = {}) {
    RunResult r;
    ReportSection s{"validation", {}, {}};
    const auto v = validate_params(c.model);
    s.lines.push_back(describe_model(c.model));
    s.lines.push_back(speed_line(c.model));
    s.lines.push_back("k1/rho1=" + fmt(c.model.k1 / c.model.rho1) + " k2/rho2=" + fmt(c.model.k2 / c.model.rho2));
    if (v.g0) s.lines.push_back("g0=" + fmt(*v.g0) + " (must be < k3=" + fmt(c.model.k3) + ")");
    for (const auto& e : v.violations) s.lines.push_back("violation: " + e);
    s.check("parameter violations", static_cast<double>(v.violations.size()), "<=", 0);
    r.sections.push_back(std::move(s));
    return r;
}

inline RunResult run_spectrum(const ExperimentConfig& c, const RunOptions& = {}) {
    RunResult r;
    ReportSection s{"spectrum", {}, {}};
    auto grid = rate_grid(c);
    grid.insert(grid.begin(), 0.0);
    std::vector<SpectrumReport> reps;
    double worst_res = 0, worst_abscissa = -INFINITY;
    size_t without_neutral = 0;
    for (double xi : grid) {
        reps.push_back(mode_spectrum(assemble_symbol(c.model, xi)));
        const auto& sp = reps.back();
        worst_res = std::max(worst_res, sp.max_residual);
        if (xi > 0) worst_abscissa = std::max(worst_abscissa, sp.spectral_abscissa);
        if (sp.neutral_modes.empty()) ++without_neutral;
    }
    s.lines.push_back(speed_line(c.model));
    s.lines.push_back("frequencies: " + std::to_string(grid.size()) + " (0 and " + std::to_string(grid.size() - 1) +
                      " log-spaced in [" + fmt_short(c.grid.rate_lo) + ", " + fmt_short(c.grid.rate_hi) + "])");
    s.lines.push_back("largest physical real part over xi > 0: " + fmt(worst_abscissa));
    s.check("max eigen-residual", worst_res, "<=", tol::eigen_residual);
    if (classify_speeds(c.model) == SpeedClass::Distinct) s.check("spectral abscissa over xi > 0", worst_abscissa, "<", 0);
    else s.check("frequencies without a neutral mode", static_cast<double>(without_neutral), "<=", 0);
    r.sections.push_back(std::move(s));
    r.csvs.emplace_back("spectrum.csv", spectrum_table(reps));
    return r;
}

inline RunResult run_instability(const ExperimentConfig& c, const RunOptions& = {}) {
    if (classify_speeds(c.model) != SpeedClass::Equal)
        throw RefusalError("instability certificate requires equal wave speeds (k1/rho1 == k2/rho2); this config has distinct speeds");
    RunResult r;
    ReportSection s{"instability", {}, {}};
    CsvTable t({"xi", "frequency", "re", "im", "residual", "min_ratio", "max_ratio"});
    for (double xi : {0.0, 1.0, 5.0}) {
        const auto cert = instability_certificate(c.model, xi);
        const std::string at = " (xi=" + fmt_short(xi) + ")";
        s.lines.push_back("xi=" + fmt_short(xi) + ": eigenvalue " + fmt(cert.eigenvalue.real()) + " + " +
                          fmt(cert.eigenvalue.imag()) + "i, predicted frequency " + fmt(cert.frequency));
        s.check("|Re lambda|" + at, std::abs(cert.eigenvalue.real()), "<=", tol::neutral_re);
        s.check("|Im lambda| - frequency" + at, std::abs(std::abs(cert.eigenvalue.imag()) - cert.frequency), "<=",
                1e-10 * std::max(1.0, cert.frequency));
        s.check("eigen-residual" + at, cert.residual, "<=", tol::eigen_residual);
        s.check("min |U(t)|/|U(0)|" + at, cert.min_ratio, ">=", tol::witness_lo);
        s.check("max |U(t)|/|U(0)|" + at, cert.max_ratio, "<=", tol::witness_hi);
        t.add_row({xi, cert.frequency, cert.eigenvalue.real(), cert.eigenvalue.imag(), cert.residual, cert.min_ratio,
                   cert.max_ratio});
    }
    r.sections.push_back(std::move(s));
    r.csvs.emplace_back("instability.csv", std::move(t));
    return r;
}

inline RunResult run_pointwise(const ExperimentConfig& c, const RunOptions& o = {}) {
    require_distinct(c.model, "pointwise decay fitting");
    RunResult r;
    ReportSection s{"pointwise", {}, {}};
    const auto rc = rate_curve(c.model, rate_grid(c), 4096, o.threads);
    double min_rate = INFINITY;
    size_t errors = 0;
    for (const auto& row : rc.rows) {
        if (!row.error.empty()) {
            ++errors;
            s.lines.push_back("xi=" + fmt_short(row.xi) + ": " + row.error);
        } else {
            min_rate = std::min(min_rate, row.rate);
        }
    }
    const int tau0 = c.model.tau0;
    s.lines.push_back("low-branch slope " + fmt(rc.low_slope) + ", high-branch slope " + fmt(rc.high_slope) +
                      ", min rate/f = " + fmt(rc.c0));
    s.check("failed fits", static_cast<double>(errors), "<=", 0);
    s.check("min fitted rate", min_rate, ">", 0);
    s.check_near("low-branch slope", rc.low_slope, 4 + 2 * tau0, tol::low_slope);
    s.check_near("high-branch slope", rc.high_slope, -6 + 2 * tau0, tol::high_slope);
    r.sections.push_back(std::move(s));
    r.csvs.emplace_back("rate_curve.csv", rate_curve_table(rc));
    return r;
}

// Tight tolerances so integration error sits below the residual limit.
inline IntegratorConfig energy_integrator() { return {1e-12, 1e-14, 1.0, 0.0}; }

inline RunResult run_energy(const ExperimentConfig& c, double t_end = 100.0, const RunOptions& o = {}) {
    RunResult r;
    ReportSection s{"energy", {}, {}};
    const std::vector<double> xis{0.1, 1.0, 10.0};
    const auto times = uniform_times(t_end, 1e-3);
    CsvTable t({"xi", "max_normalized_residual", "conservative_drift"});
    std::vector<double> res(xis.size()), drift(xis.size());
    ModelParams cons = c.model;
    if (cons.memory()) cons.kernel->d1 = 0;  // g = 0
    else cons.gamma = 0;
    parallel_for(
        xis.size() * 2,
        [&](size_t k) {
            const size_t i = k / 2;
            const double xi = xis[i];
            const auto& p = k % 2 ? cons : c.model;
            // both measures are scale invariant; unit data keeps abs_tol meaningful
            // where the Gaussian spectrum is tiny
            SpectralState u0 = initial_data(p, c.profile, xi).state;
            u0.amp /= modulus(u0, xi);
            const auto tr = evolve_mode(assemble_symbol(p, xi), u0, times, energy_integrator());
            if (k % 2 == 0) {
                res[i] = dissipation_residual(tr, p).max_normalized;
            } else {
                const double e0 = energy(p, xi, tr.states.front()).total;
                double w = 0;
                for (const auto& st : tr.states) w = std::max(w, std::abs(energy(p, xi, st).total - e0));
                drift[i] = w / e0;
            }
        },
        o.threads);
    s.lines.push_back("t in [0, " + fmt_short(t_end) + "], dt = 1e-3, 8th-order differences");
    for (size_t i = 0; i < xis.size(); ++i) {
        const std::string at = " (xi=" + fmt_short(xis[i]) + ")";
        s.check("dissipation residual / E(0)" + at, res[i], "<=", tol::dissipation);
        s.check("conservative |E(t)-E(0)|/E(0)" + at, drift[i], "<=", tol::conservation);
        t.add_row({xis[i], res[i], drift[i]});
    }
    r.sections.push_back(std::move(s));
    r.csvs.emplace_back("energy.csv", std::move(t));
    return r;
}

inline RunResult run_lyapunov(const ExperimentConfig& c, const RunOptions& o = {}) {
    require_distinct(c.model, "the Lyapunov functional");
    RunResult r;
    ReportSection s{"lyapunov", {}, {}};
    const auto scale = choose_lyapunov_lambda(c.model, default_lyapunov_grid());
    s.lines.push_back("lambda=" + fmt(scale.lambda) + " (lambda*=" + fmt(scale.lambda_star) + ", c3=" + fmt(scale.c3) + ")");
    CsvTable coeffs(coefficient_header());
    CsvTable traj({"xi", "t", "F", "E"});
    const std::vector<double> xis{0.5, 1.0, 2.0};
    std::vector<FDecayCheck> checks(xis.size());
    std::vector<ModeTrajectory> trs(xis.size());
    std::vector<LyapunovCoefficients> cs(xis.size());
    parallel_for(
        xis.size(),
        [&](size_t i) {
            cs[i] = select_lambdas(c.model, xis[i]);
            const LyapunovFunctional fn(c.model, cs[i], scale.lambda);
            const auto d = initial_data(c.model, c.profile, xis[i]);
            trs[i] = evolve_mode(assemble_symbol(c.model, xis[i]), d.state, uniform_times(20, 0.01), c.integrator);
            checks[i] = check_F_decay(trs[i], c.model, fn);
        },
        o.threads);
    for (size_t i = 0; i < xis.size(); ++i) {
        const std::string at = " (xi=" + fmt_short(xis[i]) + ")";
        coeffs.add_row(coefficient_row(cs[i]));
        size_t failed = 0;
        for (const auto& ck : cs[i].checks) failed += !ck.pass;
        double lo = INFINITY, hi = 0;
        for (size_t k = 0; k < checks[i].F.size(); ++k) {
            const double q = checks[i].F[k] / checks[i].E[k];
            lo = std::min(lo, q);
            hi = std::max(hi, q);
            traj.add_row({xis[i], trs[i].times[k], checks[i].F[k], checks[i].E[k]});
        }
        s.check("coefficient checks failed" + at, static_cast<double>(failed), "<=", 0);
        s.check_flag("F non-increasing after t=1" + at, checks[i].monotone);
        s.check("decay constant c" + at, checks[i].c, ">", 0);
        s.check("min F/E" + at, lo, ">=", (scale.lambda - 2 * scale.c3) * (1 - 1e-12));
        s.check("max F/E" + at, hi, "<=", (scale.lambda + 2 * scale.c3) * (1 + 1e-12));
    }
    r.sections.push_back(std::move(s));
    r.csvs.emplace_back("coefficients.csv", std::move(coeffs));
    r.csvs.emplace_back("lyapunov.csv", std::move(traj));
    return r;
}

inline SpectralGrid norm_grid(const ExperimentConfig& c) {
    return SpectralGrid::sinh(c.grid.xi_nodes, c.grid.xi_min, c.grid.xi_max);
}

inline RunResult run_decay_l2(const ExperimentConfig& c, const RunOptions& o = {}) {
    require_distinct(c.model, "L2 decay fitting");
    RunResult r;
    ReportSection s{"decay-l2", {}, {}};
    const auto times = dyadic_times(c.grid.tmax_exp);
    const auto field = build_field(c.model, c.profile, norm_grid(c), times, false, o.threads);
    s.lines.push_back(field.grid.provenance + ", t = 0, 2^0 .. 2^" + std::to_string(c.grid.tmax_exp) +
                      ", fit window [" + fmt_short(c.decay.fit_lo) + ", " + fmt_short(c.decay.fit_hi) + "]");
    std::vector<NormSeries> all;
    std::optional<std::pair<int, double>> prev;  // (j, slope)
    const double step = c.model.tau0 ? -1.0 / 6 : -1.0 / 4;
    for (int j : c.decay.j) {
        auto series = l2_series(field, j);
        const auto fit = fit_time_slope(series, c.decay.fit_lo, c.decay.fit_hi);
        const auto ex = theoretical_exponents(j, 1, c.model.tau0);
        const std::string at = " (j=" + std::to_string(j) + ")";
        s.lines.push_back("j=" + std::to_string(j) + ": slope " + fmt(fit.rate) + ", target " + fmt(ex.l2_data) +
                          ", r^2 " + fmt_short(fit.r_squared));
        s.check_near("L2 slope" + at, fit.rate, ex.l2_data, tol::l2_slope);
        bool tail = false;
        for (size_t ti = 0; ti < times.size(); ++ti) tail |= l2_norm(field, j, ti).truncated();
        s.check_flag("grid resolves the integrand" + at, !tail);
        const auto env = check_power_envelope(series, ex.l2_dominant, 1e2, std::min(c.decay.fit_hi, times.back()));
        s.check("tail slope vs dominant exponent " + fmt_short(ex.l2_dominant) + at, env.tail_slope, "<=",
                ex.l2_dominant + tol::l2_slope);
        if (prev && prev->first == j - 1) s.check_near("slope increment" + at, fit.rate - prev->second, step, tol::l2_slope);
        prev = {j, fit.rate};
        all.push_back(std::move(series));
    }
    r.sections.push_back(std::move(s));
    r.csvs.emplace_back("norms_l2.csv", norm_series_table(all));
    return r;
}

inline int l1_order(const ModelParams& p) { return 4 + 2 * p.tau0; }

inline RunResult run_decay_l1(const ExperimentConfig& c, const RunOptions& o = {}) {
    require_distinct(c.model, "L1 decay checks");
    RunResult r;
    ReportSection s{"decay-l1", {}, {}};
    const int j = l1_order(c.model);
    const auto times = dyadic_times(c.decay.l1_tmax_exp);
    const auto pf = build_physical_field(c.model, c.profile, times, {j}, 12, 6, o.threads);
    s.lines.push_back(pf.field.grid.provenance + " (" + std::to_string(pf.doublings) + " box doublings), j=" +
                      std::to_string(j) + ", t = 0, 2^0 .. 2^" + std::to_string(c.decay.l1_tmax_exp));
    NormSeries direct{j, 1, times, {}, pf.field.grid.provenance};
    NormSeries carlson{j, 1, times, {}, "carlson bound"};
    double worst = 0;
    for (size_t ti = 0; ti < times.size(); ++ti) {
        const double d = physical_lq(reconstruct(pf.field, j, ti), 1);
        const double b = l1_bound(pf.field, j, ti);
        direct.values.push_back(d);
        carlson.values.push_back(b);
        worst = std::max(worst, d / b);
    }
    const double ex = l1_exponent(j, 1, c.model.tau0);
    const auto env = check_power_envelope(direct, ex, 1, times.back());
    s.lines.push_back("dominant exponent " + fmt(ex) + ", fitted C " + fmt(env.C) + ", final-decade slope " + fmt(env.tail_slope));
    s.check("max direct L1 / Carlson bound", worst, "<=", 1 + INEQUALITY_SLACK);
    s.check("final-decade slope vs dominant exponent", env.tail_slope, "<=", ex + tol::l2_slope);
    r.sections.push_back(std::move(s));
    CsvTable t({"t", "direct_l1", "carlson_bound", "j"});
    for (size_t ti = 0; ti < times.size(); ++ti)
        t.add_row_text({fmt(times[ti]), fmt(direct.values[ti]), fmt(carlson.values[ti]), std::to_string(j)});
    r.csvs.emplace_back("norms_l1.csv", std::move(t));
    return r;
}

inline RunResult run_decay_lq(const ExperimentConfig& c, const RunOptions& o = {}) {
    RunResult r;
    ReportSection s{"decay-lq", {}, {}};
    std::vector<double> times = c.decay.lq_times;
    if (times.empty() || times.front() != 0) times.insert(times.begin(), 0.0);
    std::vector<int> js = c.decay.j;
    const int jl1 = l1_order(c.model);
    if (std::find(js.begin(), js.end(), jl1) == js.end()) js.push_back(jl1);
    const auto pf = build_physical_field(c.model, c.profile, times, js, 12, 6, o.threads);
    const std::vector<double> qs{1, 1.5, 2, 3, 6, INFINITY};
    s.lines.push_back(pf.field.grid.provenance + ", q in {1, 1.5, 2, 3, 6, inf}");
    CsvTable t({"t", "j", "check", "q", "ratio", "pass"});
    std::map<std::string, double> worst;
    std::vector<NormSeries> series;
    for (int j : js)
        for (double q : qs) series.push_back({j, q, {}, {}, pf.field.grid.provenance});
    for (size_t ti = 0; ti < times.size(); ++ti)
        for (size_t ji = 0; ji < js.size(); ++ji) {
            const auto rep = lq_norms(pf.field, js[ji], ti, qs);
            for (size_t qi = 0; qi < qs.size(); ++qi) {
                series[ji * qs.size() + qi].times.push_back(times[ti]);
                series[ji * qs.size() + qi].values.push_back(rep.direct[qi]);
            }
            for (const auto& ck : rep.checks) {
                const double ratio = ck.name == "plancherel" ? rep.l2_consistency : ck.ratio;
                worst[ck.name] = std::max(worst[ck.name], ratio);
                t.add_row_text({fmt(times[ti]), std::to_string(js[ji]), ck.name, std::isinf(ck.q) ? "inf" : fmt(ck.q),
                                fmt(ratio), ck.pass ? "1" : "0"});
            }
        }
    s.check("plancherel |L2 physical - L2 spectral| / L2", worst["plancherel"], "<=", L2_CONSISTENCY_TOL);
    for (const char* name : {"carlson", "interpol_1", "interpol_2", "interpol_3"})
        s.check(std::string("max ") + name + " lhs/rhs", worst[name], "<=", 1 + INEQUALITY_SLACK);
    r.sections.push_back(std::move(s));
    r.csvs.emplace_back("lq_checks.csv", std::move(t));
    r.csvs.emplace_back("norms_lq.csv", norm_series_table(series));
    return r;
}

inline ReportSection not_applicable(const std::string& title, const std::string& why) {
    ReportSection s{title, {}, {}};
    s.lines.push_back("not applicable: " + why);
    return s;
}

inline RunResult run_full_report(const ExperimentConfig& c, const RunOptions& o = {}) {
    RunResult r;
    r.append(run_validate(c, o));
    r.append(run_spectrum(c, o));
    r.append(run_energy(c, 100.0, o));
    const bool equal = classify_speeds(c.model) == SpeedClass::Equal;
    if (equal) {
        r.append(run_instability(c, o));
        const std::string why = "equal wave speeds, no decay";
        r.sections.push_back(not_applicable("lyapunov", why));
        r.sections.push_back(not_applicable("decay-l2", why));
        r.sections.push_back(not_applicable("decay-l1-lq", why));
        return r;
    }
    r.append(run_pointwise(c, o));
    r.append(run_lyapunov(c, o));
    r.append(run_decay_l2(c, o));
    auto l1 = run_decay_l1(c, o);
    auto lq = run_decay_lq(c, o);
    ReportSection merged{"decay-l1-lq", {}, {}};
    for (auto* part : {&l1, &lq})
        for (auto& sec : part->sections) {
            merged.lines.insert(merged.lines.end(), sec.lines.begin(), sec.lines.end());
            merged.checks.insert(merged.checks.end(), sec.checks.begin(), sec.checks.end());
        }
    r.sections.push_back(std::move(merged));
    for (auto* part : {&l1, &lq})
        for (auto& csv : part->csvs) r.csvs.push_back(std::move(csv));
    return r;
}

using Pipeline = std::function<RunResult(const ExperimentConfig&, const RunOptions&)>;

inline const std::vector<std::pair<std::string, Pipeline>>& pipelines() {
    static const std::vector<std::pair<std::string, Pipeline>> p{
        {"validate", run_validate},
        {"spectrum", run_spectrum},
        {"instability", run_instability},
        {"pointwise", run_pointwise},
        {"lyapunov", [](const ExperimentConfig& c, const RunOptions& o) {
             auto r = run_energy(c, 100.0, o);
             r.append(run_lyapunov(c, o));
             return r;
         }},
        {"decay-l2", run_decay_l2},
        {"decay-l1", run_decay_l1},
        {"decay-lq", run_decay_lq},
        {"full-report", run_full_report},
    };
    return p;
}

inline std::string report_text(const RunResult& r, const ExperimentConfig& c) {
    std::ostringstream os;
    os << "experiment: " << r.experiment << "\n";
    os << "model: " << describe_model(c.model) << "\n";
    os << "profile: " << to_string(c.profile.kind) << " sigma=" << fmt_short(c.profile.sigma)
       << (c.profile.constrained ? " constrained" : " unconstrained") << "\n";
    for (const auto& s : r.sections) {
        os << "\n== " << s.title << " ==\n";
        for (const auto& l : s.lines) os << "  " << l << "\n";
        for (const auto& ck : s.checks)
            os << "  [" << (ck.pass ? "PASS" : "FAIL") << "] " << ck.name << ": " << fmt(ck.value) << " " << ck.relation
               << " " << ck.limit << "\n";
    }
    size_t failed = 0;
    for (const auto& s : r.sections)
        for (const auto& ck : s.checks) failed += !ck.pass;
    os << "\noverall: " << (failed ? "FAIL" : "PASS") << " (" << r.check_count() - failed << "/" << r.check_count()
       << " checks passed)\n";
    return os.str();
}

// Writes report.txt, config.cfg (the resolved config) and every CSV.
inline void emit_report(const RunResult& r, const ExperimentConfig& c, const std::filesystem::path& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out.string() + ": " + ec.message());
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream os(out / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (out / name).string());
        os << text;
    };
    write("report.txt", report_text(r, c));
    write("config.cfg", emit_config(c));
    for (const auto& [name, table] : r.csvs) table.write(out / name);
}

inline RunResult run_named(const std::string& experiment, const ExperimentConfig& c, const RunOptions& o = {}) {
    for (const auto& [name, fn] : pipelines())
        if (name == experiment) {
            RunResult r = fn(c, o);
            r.experiment = experiment;
            return r;
        }
    throw ConfigError("unknown experiment '" + experiment + "'");
}

enum ExitCode : int { EXIT_PASS = 0, EXIT_CHECK_FAILED = 1, EXIT_ERROR = 2 };

// Full CLI flow minus argument parsing. Messages go to err; the report is
// echoed to out.
inline int run_experiment(const std::string& experiment, const std::string& config_path,
                          const std::filesystem::path& out_dir, const RunOptions& o, std::ostream& out,
                          std::ostream& err, const std::function<void(ExperimentConfig&)>& override = {}) {
    try {
        ExperimentConfig c = load_config(config_path);
        if (override) override(c);
        const RunResult r = run_named(experiment, c, o);
        emit_report(r, c, out_dir);
        out << report_text(r, c);
        return r.all_pass() ? EXIT_PASS : EXIT_CHECK_FAILED;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
    } catch (const RefusalError& e) {
        err << "refused: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return EXIT_ERROR;
}

}  // namespace rns
