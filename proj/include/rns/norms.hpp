#pragma once
/*
 * Plancherel norms of d_x^j U from mode trajectories, physical-space
 * reconstruction for L^q norms, and power-law regression in time.
 *
 * Fourier convention: h^(xi) = int e^{-i xi x} h dx, so ||h||_2^2 = (1/2pi) int |h^|^2.
 */

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rns/csv.hpp"
#include "rns/model.hpp"
#include "rns/parallel.hpp"
#include "rns/spectral_analysis.hpp"
#include "rns/spectral_ode.hpp"

namespace rns {

enum class GridKind { Sinh, Uniform };

// Symmetric quadrature grid that never contains 0.
struct SpectralGrid {
    GridKind kind = GridKind::Sinh;
    std::vector<double> xi;
    std::vector<double> w;
    double dxi = 0;  // uniform spacing, Uniform only
    std::string provenance;

    size_t size() const { return xi.size(); }

    // xi = a sinh(s) at midpoints of a uniform s-grid: log spacing for |xi| >> a,
    // linear spacing a*h near 0. The midpoint rule in s converges spectrally for
    // smooth decaying integrands.
    static SpectralGrid sinh(int nodes = 2048, double a = 1e-3, double xi_max = 1e3) {
        if (nodes < 2 || nodes % 2) throw std::invalid_argument("sinh grid needs an even node count >= 2");
        if (!(a > 0) || !(xi_max > a)) throw std::invalid_argument("sinh grid needs 0 < a < xi_max");
        SpectralGrid g;
        g.kind = GridKind::Sinh;
        const double smax = std::asinh(xi_max / a);
        const double h = 2 * smax / nodes;
        for (int k = 0; k < nodes; ++k) {
            const double s = (k - nodes / 2 + 0.5) * h;
            g.xi.push_back(a * std::sinh(s));
            g.w.push_back(a * std::cosh(s) * h);
        }
        std::ostringstream os;
        os << "sinh grid nodes=" << nodes << " a=" << fmt_short(a) << " xi_max=" << fmt_short(xi_max);
        g.provenance = os.str();
        return g;
    }

    // xi_k = (k - N/2 + 1/2) dxi, k = 0..N-1; FFT-compatible.
    static SpectralGrid uniform(int nodes, double dxi) {
        if (nodes < 2 || nodes % 2) throw std::invalid_argument("uniform grid needs an even node count >= 2");
        if (!(dxi > 0)) throw std::invalid_argument("uniform grid needs dxi > 0");
        SpectralGrid g;
        g.kind = GridKind::Uniform;
        g.dxi = dxi;
        for (int k = 0; k < nodes; ++k) {
            g.xi.push_back((k - nodes / 2 + 0.5) * dxi);
            g.w.push_back(dxi);
        }
        std::ostringstream os;
        os << "uniform grid nodes=" << nodes << " dxi=" << fmt_short(dxi);
        g.provenance = os.str();
        return g;
    }
};

struct SpectralField {
    SpectralGrid grid;
    int tau0 = 0;
    std::vector<double> times;
    std::vector<std::vector<SpectralState>> states;  // [node][time]
    std::vector<std::vector<CVector>> sensitivity;   // [node][time], optional

    bool has_sensitivity() const { return !sensitivity.empty(); }
};

// Evolves every grid node through the exponential path. Nodes whose data
// underflow to zero stay zero without an exponential.
inline SpectralField build_field(const ModelParams& p, const InitialProfile& pr, SpectralGrid grid,
                                 const std::vector<double>& times, bool with_sensitivity = false, int threads = 0) {
    check_time_grid(times);
    SpectralField f;
    f.tau0 = p.tau0;
    f.times = times;
    const size_t n = grid.size();
    f.states.resize(n);
    if (with_sensitivity) f.sensitivity.resize(n);
    parallel_for(
        n,
        [&](size_t k) {
            const double xi = grid.xi[k];
            const InitialData d = initial_data(p, pr, xi);
            if (d.state.amp.squaredNorm() == 0 && (!with_sensitivity || d.sensitivity.squaredNorm() == 0)) {
                f.states[k].assign(times.size(), SpectralState(p.dimension()));
                if (with_sensitivity) f.sensitivity[k].assign(times.size(), CVector::Zero(p.dimension()));
                return;
            }
            auto tr = evolve_exponential(assemble_symbol(p, xi), d.state, times,
                                         with_sensitivity ? &d.sensitivity : nullptr);
            f.states[k] = std::move(tr.states);
            if (with_sensitivity) f.sensitivity[k] = std::move(tr.sensitivity);
        },
        threads);
    f.grid = std::move(grid);
    return f;
}

inline constexpr double TAIL_TOL = 1e-6;

struct NormValue {
    double value = 0;
    double tail_ratio = 0;  // share of the integral carried by the outermost 2% of nodes

    bool truncated() const { return tail_ratio > TAIL_TOL; }
};

namespace detail {

inline NormValue plancherel(const SpectralGrid& g, const std::vector<double>& integrand) {
    const size_t n = g.size();
    const size_t edge = std::max<size_t>(1, n / 100);
    double total = 0, tail = 0;
    for (size_t k = 0; k < n; ++k) {
        const double v = g.w[k] * integrand[k];
        total += v;
        if (k < edge || k >= n - edge) tail += v;
    }
    NormValue r;
    r.value = std::sqrt(std::max(0.0, total) / (2 * PI));
    r.tail_ratio = total > 0 ? tail / total : 0.0;
    return r;
}

inline size_t time_index(const SpectralField& f, size_t ti) {
    if (ti >= f.times.size()) throw std::out_of_range("time index out of range");
    return ti;
}

}  // namespace detail

// ||d_x^j U(t)||_2. With include_memory the memory term xi^4 J is part of |U|^2;
// without it only the seven physical fields count.
inline NormValue l2_norm(const SpectralField& f, int j, size_t ti, bool include_memory = true) {
    if (j < 0) throw std::invalid_argument("derivative order must be >= 0");
    detail::time_index(f, ti);
    std::vector<double> g(f.grid.size());
    for (size_t k = 0; k < g.size(); ++k) {
        const double xi = f.grid.xi[k];
        const SpectralState& s = f.states[k][ti];
        const double m2 = include_memory ? modulus_squared(s, xi) : s.amp.head(FIELD_COUNT).squaredNorm();
        g[k] = std::pow(xi * xi, j) * m2;
    }
    return detail::plancherel(f.grid, g);
}

// ||x d_x^j U(t)||_2 = ||d_xi (xi^j U^)||_2 / sqrt(2pi), fields only.
inline NormValue weighted_norm(const SpectralField& f, int j, size_t ti) {
    if (j < 0) throw std::invalid_argument("derivative order must be >= 0");
    if (!f.has_sensitivity()) throw std::invalid_argument("weighted_norm needs sensitivities");
    detail::time_index(f, ti);
    std::vector<double> g(f.grid.size());
    for (size_t k = 0; k < g.size(); ++k) {
        const double xi = f.grid.xi[k];
        const CVector u = f.states[k][ti].amp.head(FIELD_COUNT);
        const CVector s = f.sensitivity[k][ti].head(FIELD_COUNT);
        CVector d = std::pow(xi, j) * s;
        if (j > 0) d += (j * std::pow(xi, j - 1)) * u;
        g[k] = d.squaredNorm();
    }
    return detail::plancherel(f.grid, g);
}

// Carlson: ||h||_1 <= sqrt(2 pi) ||h||_2^{1/2} ||x h||_2^{1/2}. The constant is
// sharp (take h = 1/(1 + x^2)); it cannot be dropped to 1.
inline constexpr double CARLSON_CONSTANT = 2.5066282746310002;  // sqrt(2 pi)

inline double l1_bound(const SpectralField& f, int j, size_t ti) {
    const double a = l2_norm(f, j, ti, false).value;
    const double b = weighted_norm(f, j, ti).value;
    return CARLSON_CONSTANT * std::sqrt(a * b);
}

struct PhysicalProfile {
    std::vector<double> x;
    std::vector<double> magnitude;  // Euclidean norm over the seven fields of d_x^j U
    double dx = 0;
    double tail_ratio = 0;  // L2 mass share in the outer 10% of the periodic box
};

namespace detail {

inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace detail

// Inverse transform on the uniform grid. The half-shifted nodes only change a
// phase common to all components, so magnitudes follow from one FFT per field.
inline PhysicalProfile reconstruct(const SpectralField& f, int j, size_t ti, bool check_alias = true) {
    if (f.grid.kind != GridKind::Uniform) throw std::invalid_argument("physical reconstruction needs a uniform grid");
    if (j < 0) throw std::invalid_argument("derivative order must be >= 0");
    detail::time_index(f, ti);
    const int N = static_cast<int>(f.grid.size());
    const double dxi = f.grid.dxi;
    PhysicalProfile out;
    out.dx = 2 * PI / (N * dxi);
    out.x.resize(N);
    for (int m = 0; m < N; ++m) out.x[m] = (m - N / 2) * out.dx;
    std::vector<double> mag2(N, 0.0);

    fftw_complex* buf = fftw_alloc_complex(N);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lk(detail::fftw_plan_mutex());
        plan = fftw_plan_dft_1d(N, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    const cplx ij = std::pow(I_UNIT, j);
    for (int c = 0; c < FIELD_COUNT; ++c) {
        for (int k = 0; k < N; ++k) {
            const double xi = f.grid.xi[k];
            cplx v = ij * std::pow(xi, j) * f.states[k][ti].amp(c);
            if (k % 2) v = -v;
            buf[k][0] = v.real();
            buf[k][1] = v.imag();
        }
        fftw_execute(plan);
        for (int m = 0; m < N; ++m) mag2[m] += buf[m][0] * buf[m][0] + buf[m][1] * buf[m][1];
    }
    {
        std::lock_guard<std::mutex> lk(detail::fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);

    const double scale = dxi / (2 * PI);
    out.magnitude.resize(N);
    double total = 0, tail = 0;
    const int edge = std::max(1, N / 20);
    for (int m = 0; m < N; ++m) {
        out.magnitude[m] = scale * std::sqrt(mag2[m]);
        const double e = out.magnitude[m] * out.magnitude[m];
        total += e;
        if (m < edge || m >= N - edge) tail += e;
    }
    out.tail_ratio = total > 0 ? tail / total : 0.0;
    if (check_alias && out.tail_ratio > TAIL_TOL) {
        std::ostringstream os;
        os << "aliasing: physical tail carries " << fmt_short(out.tail_ratio) << " of the mass (limit "
           << fmt_short(TAIL_TOL) << ") for j=" << j << " t=" << fmt_short(f.times[ti]) << "; enlarge the box";
        throw ResolutionError(os.str());
    }
    return out;
}

inline double physical_lq(const PhysicalProfile& ph, double q) {
    if (!(q >= 1)) throw std::invalid_argument("q must be in [1, inf]");
    if (std::isinf(q)) return *std::max_element(ph.magnitude.begin(), ph.magnitude.end());
    double s = 0;
    for (double v : ph.magnitude) s += std::pow(v, q);
    return std::pow(s * ph.dx, 1 / q);
}

struct InequalityCheck {
    std::string name;
    double q = 0;
    double ratio = 0;  // lhs / rhs; the inequality holds with constant 1 iff ratio <= 1
    bool pass = false;
};

struct LqReport {
    int j = 0;
    double t = 0;
    std::vector<double> q;
    std::vector<double> direct;  // physical-space norms, same order as q
    double spectral_l2 = 0;      // fields only
    double l2_consistency = 0;   // |physical L2 - spectral L2| / spectral L2
    double carlson = 0;
    std::vector<InequalityCheck> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

inline constexpr double INEQUALITY_SLACK = 1e-9;
inline constexpr double L2_CONSISTENCY_TOL = 1e-6;

// Direct L^q norms of d_x^j U plus the Carlson and interpolation checks. Norm
// values inside each inequality come from the same discrete samples, except
// for the L^infinity bound which uses the exact spectral L2 norms.
inline LqReport lq_norms(const SpectralField& f, int j, size_t ti, const std::vector<double>& q_list) {
    LqReport r;
    r.j = j;
    r.t = f.times.at(ti);
    const PhysicalProfile ph = reconstruct(f, j, ti);
    r.q = q_list;
    for (double q : q_list) r.direct.push_back(physical_lq(ph, q));
    const double l1 = physical_lq(ph, 1), l2 = physical_lq(ph, 2), linf = physical_lq(ph, INFINITY);
    r.spectral_l2 = l2_norm(f, j, ti, false).value;
    r.l2_consistency = r.spectral_l2 > 0 ? std::abs(l2 - r.spectral_l2) / r.spectral_l2 : std::abs(l2);
    r.checks.push_back({"plancherel", 2, r.l2_consistency / L2_CONSISTENCY_TOL, r.l2_consistency <= L2_CONSISTENCY_TOL});
    auto add = [&](const std::string& name, double q, double lhs, double rhs) {
        const double ratio = rhs > 0 ? lhs / rhs : (lhs > 0 ? INFINITY : 0.0);
        r.checks.push_back({name, q, ratio, ratio <= 1 + INEQUALITY_SLACK});
    };
    if (f.has_sensitivity()) {
        r.carlson = l1_bound(f, j, ti);
        add("carlson", 1, l1, r.carlson);
    }
    const double next = l2_norm(f, j + 1, ti, false).value;
    add("interpol_1", INFINITY, linf, std::sqrt(r.spectral_l2 * next));
    for (double q : q_list) {
        if (q > 2 && std::isfinite(q))
            add("interpol_2", q, physical_lq(ph, q), std::pow(linf, 1 - 2 / q) * std::pow(l2, 2 / q));
        if (q > 1 && q < 2)
            add("interpol_3", q, physical_lq(ph, q), std::pow(l2, 2 * (q - 1) / q) * std::pow(l1, (2 - q) / q));
    }
    return r;
}

// Box length covering the data after time t: speeds from the spectrum on a few
// frequencies, plus the initial width.
inline double suggested_box(const ModelParams& p, double t, double sigma = 1.0) {
    double vmax = std::sqrt(std::max(p.k1 / p.rho1, p.k2 / p.rho2));
    for (double xi : {0.5, 1.0, 2.0}) {
        const auto sp = mode_spectrum(assemble_symbol(p, xi));
        for (const auto& e : sp.physical) vmax = std::max(vmax, std::abs(e.value.imag()) / xi);
    }
    return 2 * (1.2 * vmax * t + 12 * sigma);
}

struct PhysicalField {
    SpectralField field;
    int doublings = 0;
};

// Uniform field resolving |xi| <= xi_max, doubling the box until no output time
// aliases for any j in j_list.
inline PhysicalField build_physical_field(const ModelParams& p, const InitialProfile& pr,
                                          const std::vector<double>& times, const std::vector<int>& j_list,
                                          double xi_max = 12, int max_doublings = 6, int threads = 0) {
    double L = suggested_box(p, times.back(), pr.kind == ProfileKind::Gaussian ? pr.sigma : 1.0);
    for (int d = 0; d <= max_doublings; ++d, L *= 2) {
        const double dxi = 2 * PI / L;
        int N = static_cast<int>(std::ceil(2 * xi_max / dxi));
        N += N % 2;
        PhysicalField out{build_field(p, pr, SpectralGrid::uniform(N, dxi), times, true, threads), d};
        bool ok = true;
        for (int j : j_list)
            for (size_t ti = 0; ti < times.size() && ok; ++ti)
                if (reconstruct(out.field, j, ti, false).tail_ratio > TAIL_TOL) ok = false;
        if (ok) return out;
    }
    throw ResolutionError("physical box still aliases after " + std::to_string(max_doublings) + " doublings");
}

struct NormSeries {
    int j = 0;
    double q = 2;  // 1, 2, q > 2 or infinity
    std::vector<double> times;
    std::vector<double> values;
    std::string provenance;
};

inline NormSeries l2_series(const SpectralField& f, int j, bool include_memory = true) {
    NormSeries s;
    s.j = j;
    s.q = 2;
    s.times = f.times;
    s.provenance = f.grid.provenance;
    for (size_t ti = 0; ti < f.times.size(); ++ti) s.values.push_back(l2_norm(f, j, ti, include_memory).value);
    return s;
}

inline CsvTable norm_series_table(const std::vector<NormSeries>& all) {
    CsvTable t({"t", "value", "j", "q"});
    for (const auto& s : all)
        for (size_t k = 0; k < s.times.size(); ++k)
            t.add_row_text({fmt(s.times[k]), fmt(s.values[k]), std::to_string(s.j), std::isinf(s.q) ? "inf" : fmt(s.q)});
    return t;
}

// Slope of log(value) against log(1 + t) over t_lo <= t <= t_hi.
inline DecayFit fit_time_slope(const NormSeries& s, double t_lo, double t_hi) {
    std::vector<double> x, y;
    for (size_t k = 0; k < s.times.size(); ++k) {
        const double t = s.times[k];
        if (t < t_lo || t > t_hi) continue;
        if (!(s.values[k] > 0) || !std::isfinite(s.values[k]))
            throw std::invalid_argument("fit_time_slope: non-positive value at t=" + fmt(t));
        x.push_back(std::log1p(t));
        y.push_back(std::log(s.values[k]));
    }
    if (x.size() < 2) throw std::invalid_argument("fit_time_slope: fewer than two samples in the window");
    const LinearFit lf = least_squares(x, y);
    DecayFit f;
    f.kind = FitKind::PowerLaw;
    f.rate = lf.slope;
    f.amplitude = std::exp(lf.intercept);
    f.r_squared = lf.r_squared;
    f.t_lo = std::expm1(x.front());
    f.t_hi = std::expm1(x.back());
    return f;
}

struct TheoreticalExponents {
    double l2_data = 0;        // multiplies ||U0||_1
    double l2_regularity = 0;  // multiplies ||d^{j+l} U0||_2
    double l2_dominant = 0;
    std::optional<double> l1_moment;      // multiplies ||x U0||_1
    std::optional<double> l1_mass;        // multiplies ||U0||_1
    std::optional<double> l1_regularity;  // multiplies the H^N terms
    std::optional<double> l1_dominant;
};

// l >= 1. The L1 exponents exist only for j >= 4 + 2 tau0.
inline TheoreticalExponents theoretical_exponents(int j, int ell, int tau0) {
    if (ell < 1) throw std::invalid_argument("ell must be >= 1");
    if (j < 0) throw std::invalid_argument("j must be >= 0");
    TheoreticalExponents e;
    if (tau0 == 0) {
        e.l2_data = -1.0 / 8 - j / 4.0;
        e.l2_regularity = -ell / 6.0;
    } else {
        e.l2_data = -1.0 / 12 - j / 6.0;
        e.l2_regularity = -ell / 4.0;
    }
    e.l2_dominant = std::max(e.l2_data, e.l2_regularity);
    if (j >= 4 + 2 * tau0) {
        e.l1_moment = e.l2_data;
        e.l1_mass = tau0 == 0 ? 7.0 / 8 - j / 4.0 : 11.0 / 12 - j / 6.0;
        e.l1_regularity = e.l2_regularity;
        e.l1_dominant = std::max({*e.l1_moment, *e.l1_mass, *e.l1_regularity});
    }
    return e;
}

inline double l1_exponent(int j, int ell, int tau0) {
    const auto e = theoretical_exponents(j, ell, tau0);
    if (!e.l1_dominant)
        throw std::out_of_range("L1 decay estimate needs j >= " + std::to_string(4 + 2 * tau0) + ", got j=" +
                                std::to_string(j));
    return *e.l1_dominant;
}

inline constexpr double SLOPE_TOL = 0.05;

// Dominance of value <= C (1+t)^exponent on [t_lo, t_hi]. C is the smallest
// constant that works on the window; the bound is only meaningful if it keeps
// working past t_hi, so the series must not decay slower than the exponent
// over the final decade.
struct EnvelopeCheck {
    double C = 0;
    double exponent = 0;
    double tail_slope = 0;
    bool holds = false;
};

inline EnvelopeCheck check_power_envelope(const NormSeries& s, double exponent, double t_lo, double t_hi,
                                          double slope_tol = SLOPE_TOL) {
    EnvelopeCheck e;
    e.exponent = exponent;
    for (size_t k = 0; k < s.times.size(); ++k)
        if (s.times[k] >= t_lo && s.times[k] <= t_hi)
            e.C = std::max(e.C, s.values[k] / std::pow(1 + s.times[k], exponent));
    e.tail_slope = fit_time_slope(s, std::max(t_lo, t_hi / 10), t_hi).rate;
    e.holds = e.C > 0 && std::isfinite(e.C) && e.tail_slope <= exponent + slope_tol;
    return e;
}

}  // namespace rns
