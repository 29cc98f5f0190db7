#pragma once
/*
 * Spectra of -A(xi), the equal-speed instability certificate and decay-rate
 * fitting.
 *
 * Eigenproblems are solved in energy-scaled coordinates where the Hermitian
 * part of the generator is the damping alone, and real parts are recomputed
 * as Rayleigh quotients of that Hermitian part. At large xi the decay rate is
 * far below eps*|A|, so the eigensolver's own real parts would be noise.
 */

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "rns/csv.hpp"
#include "rns/functionals.hpp"
#include "rns/model.hpp"
#include "rns/parallel.hpp"
#include "rns/propagator.hpp"
#include "rns/spectral_ode.hpp"

namespace rns {

inline constexpr double NEUTRAL_TOL = 1e-10;
inline constexpr double EIGEN_RESIDUAL_TOL = 1e-8;

struct Eigenpair {
    cplx value;
    CVector vector;  // original coordinates, unit norm
    double residual = 0;
};

struct SpectrumReport {
    double xi = 0;
    std::vector<Eigenpair> pairs;     // all eigenvalues of -A
    std::vector<Eigenpair> physical;  // restricted to the constraint subspace c U = 0
    double spectral_abscissa = 0;     // over the physical spectrum
    std::vector<Eigenpair> neutral_modes;
    double max_residual = 0;

    std::vector<cplx> eigenvalues() const {
        std::vector<cplx> v;
        for (const auto& p : pairs) v.push_back(p.value);
        return v;
    }
};

namespace detail {

inline std::string matrix_dump(const CMatrix& a) {
    std::ostringstream os;
    os.precision(17);
    os << a;
    return os.str();
}

// Eigenpairs of B (scaled coordinates, columns mapped back by `back`), with real
// parts taken from the Hermitian part hb.
inline std::vector<Eigenpair> refined_pairs(const CMatrix& B, const CMatrix& hb, const CMatrix& back,
                                            const CMatrix& original) {
    Eigen::ComplexEigenSolver<CMatrix> es(B);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigensolver did not converge for matrix:\n" + matrix_dump(original));
    std::vector<Eigenpair> out;
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        const CVector w = es.eigenvectors().col(j);
        const double re = std::real(w.dot(hb * w)) / w.squaredNorm();
        Eigenpair e;
        e.value = cplx(re, es.eigenvalues()(j).imag());
        e.vector = back * w;
        e.vector.normalize();
        e.residual = (-original * e.vector - e.value * e.vector).norm();
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const Eigenpair& a, const Eigenpair& b) {
        return a.value.real() != b.value.real() ? a.value.real() > b.value.real() : a.value.imag() > b.value.imag();
    });
    return out;
}

}  // namespace detail

inline SpectrumReport mode_spectrum(const FourierSymbol& sym, double neutral_tol = NEUTRAL_TOL) {
    const RVector& d = sym.energy_scale;
    const CMatrix B = -detail::scaled_generator(sym);
    const CMatrix hb = 0.5 * (B + B.adjoint());
    const CMatrix dinv = d.cwiseInverse().asDiagonal();
    SpectrumReport r;
    r.xi = sym.xi;
    r.pairs = detail::refined_pairs(B, hb, dinv, sym.matrix);
    // the constraint in scaled coordinates is c D^-1
    const Eigen::Matrix<cplx, 1, Eigen::Dynamic> cs = sym.constraint * dinv;
    const CMatrix Q = constraint_basis(cs);
    r.physical = detail::refined_pairs(Q.adjoint() * B * Q, Q.adjoint() * hb * Q, dinv * Q, sym.matrix);
    r.spectral_abscissa = -INFINITY;
    for (const auto& e : r.physical) {
        r.spectral_abscissa = std::max(r.spectral_abscissa, e.value.real());
        if (std::abs(e.value.real()) < neutral_tol) r.neutral_modes.push_back(e);
    }
    for (const auto& e : r.pairs) r.max_residual = std::max(r.max_residual, e.residual);
    for (const auto& e : r.physical) r.max_residual = std::max(r.max_residual, e.residual);
    return r;
}

inline CsvTable spectrum_table(const std::vector<SpectrumReport>& reports) {
    CsvTable t({"xi", "re", "im"});
    for (const auto& r : reports)
        for (const auto& e : r.pairs) t.add_row({r.xi, e.value.real(), e.value.imag()});
    return t;
}

// Modal representation U(t) = D^-1 W e^{Lambda t} W^-1 D U0 with refined
// eigenvalues. Exact decay over arbitrarily long horizons, where scaling and
// squaring would swamp the tiny real parts. J follows in closed form.
class ModalEvolution {
  public:
    explicit ModalEvolution(const FourierSymbol& sym)
        : n_(sym.dimension()), d2_(sym.memory_decay), scale_(sym.energy_scale) {
        const CMatrix B = -detail::scaled_generator(sym);
        const CMatrix hb = 0.5 * (B + B.adjoint());
        Eigen::ComplexEigenSolver<CMatrix> es(B);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("eigensolver did not converge for matrix:\n" + detail::matrix_dump(sym.matrix));
        W_ = es.eigenvectors();
        lambda_.resize(n_);
        for (int j = 0; j < n_; ++j) {
            W_.col(j).normalize();
            const CVector w = W_.col(j);
            lambda_(j) = cplx(std::real(w.dot(hb * w)), es.eigenvalues()(j).imag());
        }
        Eigen::PartialPivLU<CMatrix> lu(W_);
        Winv_ = lu.inverse();
        condition_ = W_.norm() * Winv_.norm();
        if (!std::isfinite(condition_) || condition_ > 1e10)
            throw std::runtime_error("modal evolution: eigenvector matrix too ill-conditioned at xi=" + fmt(sym.xi));
    }

    double condition() const { return condition_; }
    const CVector& eigenvalues() const { return lambda_; }

    std::vector<SpectralState> evolve(const SpectralState& s0, const std::vector<double>& t_grid) const {
        const CVector a = Winv_ * (scale_.asDiagonal() * s0.amp);
        const bool memory = n_ == 8;
        CVector th, mm;
        if (memory) {
            th = W_.row(THETA).transpose() / scale_(THETA);
            mm = W_.row(M).transpose() / scale_(M);
        }
        std::vector<SpectralState> out;
        out.reserve(t_grid.size());
        for (double t : t_grid) {
            SpectralState s(n_);
            CVector e(n_);
            for (int j = 0; j < n_; ++j) e(j) = a(j) * std::exp(lambda_(j) * t);
            s.amp = scale_.cwiseInverse().asDiagonal() * (W_ * e);
            if (memory) {
                double J = std::exp(-d2_ * t) * s0.J;
                for (int j = 0; j < n_; ++j)
                    for (int k = 0; k < n_; ++k) {
                        const cplx coef = a(j) * th(j) * std::conj(a(k) * mm(k));
                        J += 2 * std::real(coef * damped_integral(lambda_(j) + std::conj(lambda_(k)), t));
                    }
                s.J = J;
            }
            out.push_back(std::move(s));
        }
        return out;
    }

  private:
    // int_0^t e^{-d2 (t-s)} e^{nu s} ds
    cplx damped_integral(cplx nu, double t) const {
        const cplx z = (nu + d2_) * t;
        if (std::abs(z) >= 1e-3) return (std::exp(nu * t) - std::exp(-d2_ * t)) / (nu + d2_);
        return std::exp(-d2_ * t) * t * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
    }

    int n_;
    double d2_;
    RVector scale_;
    CMatrix W_, Winv_;
    CVector lambda_;
    double condition_ = 0;
};

inline ModeTrajectory evolve_modal(const FourierSymbol& sym, const SpectralState& s0, const std::vector<double>& t_grid) {
    check_time_grid(t_grid);
    ModeTrajectory tr;
    tr.xi = sym.xi;
    tr.tau0 = sym.tau0;
    tr.times = t_grid;
    tr.states = ModalEvolution(sym).evolve(s0, t_grid);
    tr.states.front() = s0;
    return tr;
}

struct InstabilityCertificate {
    double xi = 0;
    double frequency = 0;  // lambda: the mode behaves like e^{i lambda t}
    cplx eigenvalue;
    SpectralState mode;    // unit modulus
    double residual = 0;   // |(-A - i lambda) v| / |v|
    std::vector<double> times;
    std::vector<double> modulus_ratio;
    double min_ratio = 1, max_ratio = 1;
    bool holds = false;
};

inline double neutral_frequency(const ModelParams& p, double xi) {
    if (xi == 0) return std::sqrt(p.k0 * (1 / p.rho1 + 1 / p.rho2));
    return std::sqrt(p.k1 / p.rho1) * std::abs(xi);
}

inline InstabilityCertificate instability_certificate(const ModelParams& p, double xi, double t_end = 1e4,
                                                      int samples = 1000) {
    if (classify_speeds(p) != SpeedClass::Equal)
        throw RefusalError("instability certificate requires equal wave speeds (k1/rho1 == k2/rho2)");
    const FourierSymbol sym = assemble_symbol(p, xi);
    const int n = sym.dimension();
    InstabilityCertificate c;
    c.xi = xi;
    c.frequency = neutral_frequency(p, xi);
    // try both signs of i lambda; keep the one with a genuine null vector
    double best = INFINITY;
    CVector v;
    for (double sg : {1.0, -1.0}) {
        const cplx mu = I_UNIT * (sg * c.frequency);
        const CMatrix Mx = -sym.matrix - mu * CMatrix::Identity(n, n);
        Eigen::JacobiSVD<CMatrix> svd(Mx, Eigen::ComputeFullV);
        const double smin = svd.singularValues()(n - 1);
        if (smin < best) {
            best = smin;
            v = svd.matrixV().col(n - 1);
            c.eigenvalue = mu;
        }
    }
    SpectralState s(n);
    s.amp = v;
    if (p.memory()) {
        // history eta(s) = (1 - e^{-i lambda s}) theta / (i lambda) integrated against d1 e^{-d2 s}
        const double lam = c.eigenvalue.imag();
        const double d2 = p.d2(), g0 = p.g0();
        s.amp(M) = g0 * s.amp(THETA) / (d2 + I_UNIT * lam);
        s.J = 2 * g0 * std::norm(s.amp(THETA)) / (d2 * d2 + lam * lam);
    }
    const double nrm = modulus(s, xi);
    s.amp /= nrm;
    s.J /= nrm * nrm;
    c.mode = s;
    c.residual = (-sym.matrix * s.amp - c.eigenvalue * s.amp).norm() / s.amp.norm();

    const Propagator prop(sym, t_end / samples);
    SpectralState cur = s;
    c.times.push_back(0);
    c.modulus_ratio.push_back(1);
    for (int k = 1; k <= samples; ++k) {
        cur = prop.step(cur);
        const double r = modulus(cur, xi);
        c.times.push_back(k * t_end / samples);
        c.modulus_ratio.push_back(r);
        c.min_ratio = std::min(c.min_ratio, r);
        c.max_ratio = std::max(c.max_ratio, r);
    }
    c.holds = c.min_ratio >= 0.99 && c.max_ratio <= 1.01 && c.residual <= EIGEN_RESIDUAL_TOL;
    return c;
}

enum class FitKind { Exponential, PowerLaw };

inline const char* to_string(FitKind k) { return k == FitKind::Exponential ? "exponential-in-t" : "power-law-in-t"; }

struct DecayFit {
    double rate = 0;  // |U| ~ C e^{-rate t}, or C t^{rate} for power laws
    double amplitude = 0;
    double t_lo = 0, t_hi = 0;
    double r_squared = 0;
    FitKind kind = FitKind::Exponential;
    bool anomaly = false;
    std::string note;
};

struct LinearFit {
    double slope = 0, intercept = 0, r_squared = 0;
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("least squares fit needs at least two points");
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0) throw std::invalid_argument("least squares fit: abscissae are all equal");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
    return f;
}

// Largest period among the oscillating physical modes, 0 if none oscillate.
inline double slowest_period(const SpectrumReport& sp) {
    double wmin = INFINITY, scale = 0;
    for (const auto& e : sp.physical) scale = std::max(scale, std::abs(e.value));
    for (const auto& e : sp.physical) {
        const double w = std::abs(e.value.imag());
        if (w > 1e-10 * scale) wmin = std::min(wmin, w);
    }
    return std::isfinite(wmin) ? 2 * PI / wmin : 0.0;
}

// Peaks of |U| over consecutive windows of length 4 x slowest period. The window
// is floored at span/64 so that undersampled fast oscillations still yield
// at least a few dozen samples per window.
inline DecayFit fit_pointwise_decay(const ModeTrajectory& tr, const ModelParams& p) {
    if (classify_speeds(p) == SpeedClass::Equal)
        throw RefusalError("pointwise decay fit requires distinct wave speeds");
    if (tr.times.size() < 16) throw std::invalid_argument("fit_pointwise_decay: need at least 16 samples");
    const SpectrumReport sp = mode_spectrum(assemble_symbol(p, tr.xi));
    const double period = slowest_period(sp);
    const double span = tr.times.back() - tr.times.front();
    const double window = std::max(4 * period, span / 64);
    std::vector<double> mod(tr.states.size());
    for (size_t k = 0; k < mod.size(); ++k) mod[k] = modulus(tr.states[k], tr.xi);
    const double top = *std::max_element(mod.begin(), mod.end());

    std::vector<double> et, ev;
    size_t k = 0;
    while (k < mod.size()) {
        const double w_end = tr.times[k] + window;
        size_t arg = k;
        for (; k < mod.size() && tr.times[k] < w_end; ++k)
            if (mod[k] > mod[arg]) arg = k;
        et.push_back(tr.times[arg]);
        ev.push_back(mod[arg]);
    }
    // tail: after a quarter of the span and one period, above the roundoff floor
    const double t_start = std::max(span / 4, period);
    std::vector<double> x, y;
    for (size_t i = 0; i < et.size(); ++i)
        if (et[i] >= t_start && ev[i] > 1e-11 * top) x.push_back(et[i]), y.push_back(std::log(ev[i]));
    DecayFit f;
    f.kind = FitKind::Exponential;
    if (x.size() < 3) {
        f.anomaly = true;
        f.note = "fewer than 3 envelope points in the tail window";
        return f;
    }
    const LinearFit lf = least_squares(x, y);
    f.rate = -lf.slope;
    f.amplitude = std::exp(lf.intercept);
    f.r_squared = lf.r_squared;
    f.t_lo = x.front();
    f.t_hi = x.back();
    if (!(f.rate > 0)) {
        f.anomaly = true;
        f.note = "no decay detected although wave speeds are distinct";
    }
    return f;
}

// Uniform samples over roughly `decades` decades of decay of the slowest
// physical mode, from the constrained flat spectrum.
inline ModeTrajectory rate_trajectory(const ModelParams& p, double xi, int samples = 4096, double decades = 3) {
    const FourierSymbol sym = assemble_symbol(p, xi);
    const SpectrumReport sp = mode_spectrum(sym);
    if (!(sp.spectral_abscissa < 0))
        throw std::runtime_error("no decaying spectrum at xi=" + fmt(xi) + " (abscissa " + fmt(sp.spectral_abscissa) + ")");
    const double T = decades * std::log(10.0) / -sp.spectral_abscissa;
    InitialProfile pr;
    pr.kind = ProfileKind::FlatSpectrum;
    const InitialData d = initial_data(p, pr, xi);
    return evolve_modal(sym, d.state, uniform_times(T, T / samples));
}

struct RateRow {
    double xi = 0;
    double rate = NAN;
    double f = 0;
    double abscissa = NAN;
    DecayFit fit;
    std::string error;
};

struct RateCurve {
    std::vector<RateRow> rows;
    double low_slope = NAN, high_slope = NAN;
    double c0 = NAN;  // min rate / f over the grid
};

inline std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = n == 1 ? lo : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
    return g;
}

inline double branch_slope(const std::vector<RateRow>& rows, double lo, double hi) {
    std::vector<double> x, y;
    for (const auto& r : rows)
        if (r.xi >= lo * (1 - 1e-12) && r.xi <= hi * (1 + 1e-12) && r.rate > 0)
            x.push_back(std::log(r.xi)), y.push_back(std::log(r.rate));
    if (x.size() < 2) return NAN;
    return least_squares(x, y).slope;
}

inline RateCurve rate_curve(const ModelParams& p, const std::vector<double>& xi_grid, int samples = 4096,
                            int threads = 0) {
    if (classify_speeds(p) == SpeedClass::Equal) throw RefusalError("rate curve requires distinct wave speeds");
    RateCurve rc;
    rc.rows.resize(xi_grid.size());
    parallel_for(
        xi_grid.size(),
        [&](size_t i) {
            auto& r = rc.rows[i];
            r.xi = xi_grid[i];
            r.f = f_rate(r.xi, p.tau0);
            try {
                r.abscissa = mode_spectrum(assemble_symbol(p, r.xi)).spectral_abscissa;
                r.fit = fit_pointwise_decay(rate_trajectory(p, r.xi, samples), p);
                r.rate = r.fit.rate;
                if (r.fit.anomaly) r.error = r.fit.note;
            } catch (const std::exception& e) {
                r.error = e.what();
            }
        },
        threads);
    rc.low_slope = branch_slope(rc.rows, 0.03, 0.3);
    rc.high_slope = branch_slope(rc.rows, 3, 30);
    rc.c0 = INFINITY;
    for (const auto& r : rc.rows)
        if (r.f > 0 && r.rate > 0) rc.c0 = std::min(rc.c0, r.rate / r.f);
    return rc;
}

inline CsvTable rate_curve_table(const RateCurve& rc) {
    CsvTable t({"xi", "fitted_rate", "f_xi", "ratio"});
    for (const auto& r : rc.rows) t.add_row({r.xi, r.rate, r.f, r.rate / r.f});
    return t;
}

// |dU/dxi (t)| <= C e^{-c f t} (|dU0/dxi| + (xi^{7-2tau0} + xi^{-(4+2tau0)}) |U0|)
struct SensitivityBound {
    double C = 0, c = 0;
    bool holds = false;
    double worst_ratio = 0;  // max lhs / rhs over the check set
    size_t points = 0;
};

inline double sensitivity_weight(double xi, int tau0) {
    const double a = std::abs(xi);
    return std::pow(a, 7 - 2 * tau0) + std::pow(a, -(4 + 2 * tau0));
}

struct SensitivitySample {
    double xi, t, f, lhs, base;  // base = |S0| + weight |U0|
};

// Sensitivity trajectories on each grid frequency over `decades` decades of the
// slowest decay. Frequency 0 is excluded: the weight is singular there.
inline std::vector<SensitivitySample> sensitivity_samples(const ModelParams& p, const InitialProfile& pr,
                                                          const std::vector<double>& xi_grid, int samples = 256,
                                                          double decades = 3, int threads = 0) {
    std::vector<std::vector<SensitivitySample>> per(xi_grid.size());
    parallel_for(
        xi_grid.size(),
        [&](size_t i) {
            const double xi = xi_grid[i];
            if (xi == 0) throw std::invalid_argument("sensitivity bound is singular at xi=0");
            const FourierSymbol sym = assemble_symbol(p, xi);
            const double a = -mode_spectrum(sym).spectral_abscissa;
            if (!(a > 0)) throw std::runtime_error("no decaying spectrum at xi=" + fmt(xi));
            const double T = decades * std::log(10.0) / a;
            const InitialData d = initial_data(p, pr, xi);
            const auto tr = evolve_exponential(sym, d.state, uniform_times(T, T / samples), &d.sensitivity);
            const double base = d.sensitivity.head(FIELD_COUNT).norm() +
                                sensitivity_weight(xi, p.tau0) * modulus(d.state, xi);
            for (size_t k = 0; k < tr.times.size(); ++k)
                per[i].push_back({xi, tr.times[k], f_rate(xi, p.tau0), tr.sensitivity[k].head(FIELD_COUNT).norm(), base});
        },
        threads);
    std::vector<SensitivitySample> all;
    for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
    return all;
}

// c is half the smallest rate/f ratio (leaving room for the secular t e^{-rt}
// growth of the sensitivity); C is the smallest constant that covers the fit
// set. The check set is the full sample set.
inline SensitivityBound fit_sensitivity_bound(const std::vector<SensitivitySample>& fit_set,
                                              const std::vector<SensitivitySample>& check_set, double c) {
    SensitivityBound b;
    b.c = c;
    for (const auto& s : fit_set)
        if (s.base > 0) b.C = std::max(b.C, s.lhs / s.base * std::exp(c * s.f * s.t));
    b.holds = true;
    for (const auto& s : check_set) {
        if (s.base == 0) continue;
        const double rhs = b.C * std::exp(-c * s.f * s.t) * s.base;
        const double ratio = rhs > 0 ? s.lhs / rhs : (s.lhs > 0 ? INFINITY : 0.0);
        b.worst_ratio = std::max(b.worst_ratio, ratio);
        ++b.points;
    }
    b.holds = b.worst_ratio <= 1.0 && std::isfinite(b.C) && b.C > 0;
    return b;
}

}  // namespace rns
