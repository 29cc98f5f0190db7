#pragma once
/*
 * Sandwich-beam mode model: parameters, kernel, per-frequency state,
 * the Fourier symbol A(xi) with dU/dt = -A(xi) U, and initial spectra.
 *
 * State order: (v, u, z, y, phi, theta, p) and, for the memory system,
 * the kernel moment m. The real energy moment J is carried beside the
 * complex vector because it obeys a real (non-linear in U) equation.
 */

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rns/types.hpp"

namespace rns {

struct KernelParams {
    double d1 = 0.0;
    double d2 = 0.0;

    double g0() const { return d1 / d2; }
    double beta1() const { return d2; }
    double beta2() const { return d2; }
    double value(double s) const { return d1 * std::exp(-d2 * s); }
    double derivative(double s) const { return -d2 * value(s); }
};

struct ModelParams {
    double rho1 = 1, rho2 = 1, rho3 = 1;
    double k0 = 1, k1 = 1, k2 = 1, k3 = 1;
    double gamma = 1;
    double l = 1;
    int tau0 = 0;
    std::optional<KernelParams> kernel;

    bool memory() const { return tau0 == 1; }
    double g0() const { return memory() && kernel ? kernel->g0() : 0.0; }
    double d2() const { return memory() && kernel ? kernel->d2 : 0.0; }
    // k3 - tau0*g0, the effective bending stiffness.
    double k3_eff() const { return k3 - g0(); }
    int dimension() const { return memory() ? 8 : 7; }
};

enum class SpeedClass { Equal, Distinct };

inline const char* to_string(SpeedClass s) { return s == SpeedClass::Equal ? "Equal" : "Distinct"; }

inline SpeedClass classify_speeds(const ModelParams& p, double rel_tol = 1e-12) {
    const double a = p.k1 / p.rho1;
    const double b = p.k2 / p.rho2;
    return std::abs(a - b) <= rel_tol * std::max(std::abs(a), std::abs(b)) ? SpeedClass::Equal
                                                                           : SpeedClass::Distinct;
}

struct ValidationReport {
    std::vector<std::string> violations;
    SpeedClass speeds = SpeedClass::Distinct;
    std::optional<double> g0;
    std::optional<bool> kernel_admissible;

    bool valid() const { return violations.empty(); }
};

inline ValidationReport validate_params(const ModelParams& p) {
    ValidationReport rep;
    auto positive = [&](const char* name, double v) {
        if (!(std::isfinite(v) && v > 0.0))
            rep.violations.push_back(std::string(name) + " must be finite and > 0 (got " + std::to_string(v) + ")");
    };
    positive("rho1", p.rho1);
    positive("rho2", p.rho2);
    positive("rho3", p.rho3);
    positive("k0", p.k0);
    positive("k1", p.k1);
    positive("k2", p.k2);
    positive("k3", p.k3);
    positive("l", p.l);
    if (p.tau0 != 0 && p.tau0 != 1) {
        rep.violations.push_back("tau0 must be 0 or 1 (got " + std::to_string(p.tau0) + ")");
    } else if (p.tau0 == 0) {
        positive("gamma", p.gamma);
    } else {
        if (!p.kernel) {
            rep.violations.push_back("memory system requires kernel parameters d1, d2");
        } else {
            positive("d1", p.kernel->d1);
            positive("d2", p.kernel->d2);
            if (p.kernel->d1 > 0 && p.kernel->d2 > 0) {
                const double g0 = p.kernel->g0();
                rep.g0 = g0;
                rep.kernel_admissible = g0 < p.k3;
                if (!(g0 < p.k3))
                    rep.violations.push_back("kernel mass g0=" + std::to_string(g0) + " must be < k3=" +
                                             std::to_string(p.k3));
            }
        }
    }
    if (p.k1 > 0 && p.k2 > 0 && p.rho1 > 0 && p.rho2 > 0) rep.speeds = classify_speeds(p);
    return rep;
}

struct SpectralState {
    CVector amp;   // 7 or 8 complex components
    double J = 0;  // memory energy moment, unused when tau0 = 0

    SpectralState() = default;
    explicit SpectralState(int n) : amp(CVector::Zero(n)) {}
    SpectralState(CVector a, double j) : amp(std::move(a)), J(j) {}

    int dimension() const { return static_cast<int>(amp.size()); }
    bool memory() const { return amp.size() == 8; }
};

// |U|^2 = sum of the seven field moduli + tau0 xi^4 J; the auxiliary moment m
// is not part of the state norm (|m|^2 <= g0 J anyway).
inline double modulus_squared(const SpectralState& s, double xi) {
    double r = s.amp.head(FIELD_COUNT).squaredNorm();
    if (s.memory()) r += std::pow(xi, 4) * s.J;
    return r;
}

inline double modulus(const SpectralState& s, double xi) { return std::sqrt(modulus_squared(s, xi)); }

struct FourierSymbol {
    double xi = 0;
    int tau0 = 0;
    double memory_decay = 0;  // d2, drives the J equation
    CMatrix matrix;
    // Row functional annihilated by the generator; c U is conserved.
    Eigen::Matrix<cplx, 1, Eigen::Dynamic> constraint;
    // Right null vector of the generator, with constraint * null_vector != 0.
    CVector null_vector;
    // Diagonal similarity that makes the generator skew-Hermitian up to damping.
    RVector energy_scale;
    // Linear map U -> forcing of the xi-sensitivity equation.
    CMatrix forcing;

    int dimension() const { return static_cast<int>(matrix.rows()); }
};

inline Eigen::Matrix<cplx, 1, Eigen::Dynamic> constraint_row(const ModelParams& p, double xi) {
    Eigen::Matrix<cplx, 1, Eigen::Dynamic> c = Eigen::Matrix<cplx, 1, Eigen::Dynamic>::Zero(p.dimension());
    c(V) = -1.0;
    c(Z) = -1.0;
    c(PHI) = -p.l;
    c(P) = I_UNIT * xi;
    return c;
}

inline CVector null_vector(const ModelParams& p, double xi) {
    CVector r = CVector::Zero(p.dimension());
    r(V) = p.k0 / p.k1;
    r(Z) = p.k0 / p.k2;
    r(PHI) = p.l * p.k0 / p.k3_eff();
    r(P) = I_UNIT * xi;
    return r;
}

// Square roots of the energy weights; the memory slot uses xi^2/sqrt(g0) so that
// the theta-m coupling becomes skew in the scaled coordinates.
inline RVector energy_scale(const ModelParams& p, double xi) {
    RVector s(p.dimension());
    s(V) = std::sqrt(p.k1);
    s(U) = std::sqrt(p.rho1);
    s(Z) = std::sqrt(p.k2);
    s(Y) = std::sqrt(p.rho2);
    s(PHI) = std::sqrt(p.k3_eff());
    s(THETA) = std::sqrt(p.rho3);
    s(P) = std::sqrt(p.k0);
    if (p.memory()) {
        const double x2 = xi * xi;
        s(M) = x2 > 0 ? x2 / std::sqrt(p.g0()) : 1.0;
    }
    return s;
}

// Forcing of dS/dt = -A S + F U for S = dU/dxi, written row by row:
// (i u, i k1 v, i y, i k2 z, -2 xi theta, G0, i l theta) / inertia, G0 = 2 k3' xi phi + i l k0 p - 4 tau0 xi^3 m.
inline CMatrix sensitivity_forcing_matrix(const ModelParams& p, double xi) {
    const int n = p.dimension();
    CMatrix f = CMatrix::Zero(n, n);
    f(V, U) = I_UNIT;
    f(U, V) = I_UNIT * p.k1 / p.rho1;
    f(Z, Y) = I_UNIT;
    f(Y, Z) = I_UNIT * p.k2 / p.rho2;
    f(PHI, THETA) = -2 * xi;
    f(THETA, PHI) = 2 * p.k3_eff() * xi / p.rho3;
    f(THETA, P) = I_UNIT * p.l * p.k0 / p.rho3;
    if (p.memory()) f(THETA, M) = -4 * xi * xi * xi / p.rho3;
    f(P, THETA) = I_UNIT * p.l;
    return f;
}

inline FourierSymbol assemble_symbol(const ModelParams& p, double xi) {
    if (!std::isfinite(xi)) throw std::invalid_argument("assemble_symbol: non-finite xi");
    const int n = p.dimension();
    const double x2 = xi * xi;
    const cplx ix = I_UNIT * xi;
    CMatrix a = CMatrix::Zero(n, n);

    a(V, U) = -ix;
    a(U, V) = -ix * p.k1 / p.rho1;
    a(U, P) = p.k0 / p.rho1;
    a(Z, Y) = -ix;
    a(Y, Z) = -ix * p.k2 / p.rho2;
    a(Y, P) = p.k0 / p.rho2;
    a(PHI, THETA) = x2;
    a(THETA, PHI) = -p.k3_eff() * x2 / p.rho3;
    a(THETA, P) = -ix * p.l * p.k0 / p.rho3;
    a(P, U) = -1.0;
    a(P, Y) = -1.0;
    a(P, THETA) = -ix * p.l;
    if (p.memory()) {
        a(THETA, M) = x2 * x2 / p.rho3;
        a(M, THETA) = -p.g0();
        a(M, M) = p.d2();
    } else {
        a(THETA, THETA) = p.gamma / p.rho3;
    }

    FourierSymbol s;
    s.xi = xi;
    s.tau0 = p.tau0;
    s.memory_decay = p.d2();
    s.matrix = std::move(a);
    s.constraint = constraint_row(p, xi);
    s.null_vector = null_vector(p, xi);
    s.energy_scale = energy_scale(p, xi);
    s.forcing = sensitivity_forcing_matrix(p, xi);
    return s;
}

// d A / d xi, closed form.
inline CMatrix symbol_derivative(const ModelParams& p, double xi) {
    const int n = p.dimension();
    CMatrix d = CMatrix::Zero(n, n);
    d(V, U) = -I_UNIT;
    d(U, V) = -I_UNIT * p.k1 / p.rho1;
    d(Z, Y) = -I_UNIT;
    d(Y, Z) = -I_UNIT * p.k2 / p.rho2;
    d(PHI, THETA) = 2 * xi;
    d(THETA, PHI) = -2 * p.k3_eff() * xi / p.rho3;
    d(THETA, P) = -I_UNIT * p.l * p.k0 / p.rho3;
    d(P, THETA) = -I_UNIT * p.l;
    if (p.memory()) d(THETA, M) = 4 * xi * xi * xi / p.rho3;
    return d;
}

inline double f_rate(double xi, int tau0) {
    const double x2 = xi * xi;
    const double x10 = x2 * x2 * x2 * x2 * x2;
    return std::pow(std::abs(xi), 4 + 2 * tau0) / (x10 + 1.0);
}

enum class ProfileKind { Gaussian, FlatSpectrum, PointMode };

inline const char* to_string(ProfileKind k) {
    switch (k) {
        case ProfileKind::Gaussian: return "gaussian";
        case ProfileKind::FlatSpectrum: return "flat";
        case ProfileKind::PointMode: return "point";
    }
    return "?";
}

struct InitialProfile {
    ProfileKind kind = ProfileKind::Gaussian;
    double sigma = 1.0;
    std::array<double, FIELD_COUNT> weights{1, 1, 1, 1, 1, 1, 1};
    int component = THETA;  // PointMode only
    // Project onto the invariant subspace on which iξp = v + z + l·phi holds.
    bool constrained = true;
};

inline void check_profile(const InitialProfile& pr) {
    if (pr.kind == ProfileKind::Gaussian && !(pr.sigma > 0 && std::isfinite(pr.sigma)))
        throw std::invalid_argument("gaussian profile needs sigma > 0");
    if (pr.kind == ProfileKind::PointMode && (pr.component < 0 || pr.component >= FIELD_COUNT))
        throw std::invalid_argument("point profile component out of range");
}

// Exact transform of the physical profile. Memory moments start at zero.
inline SpectralState initial_spectrum(const InitialProfile& pr, double xi, int tau0) {
    check_profile(pr);
    SpectralState s(tau0 == 1 ? 8 : 7);
    switch (pr.kind) {
        case ProfileKind::Gaussian: {
            const double g = pr.sigma * std::sqrt(2 * PI) * std::exp(-0.5 * pr.sigma * pr.sigma * xi * xi);
            for (int c = 0; c < FIELD_COUNT; ++c) s.amp(c) = pr.weights[c] * g;
            break;
        }
        case ProfileKind::FlatSpectrum:
            for (int c = 0; c < FIELD_COUNT; ++c) s.amp(c) = pr.weights[c];
            break;
        case ProfileKind::PointMode:
            s.amp(pr.component) = 1.0;
            break;
    }
    return s;
}

// d/dxi of initial_spectrum.
inline CVector initial_sensitivity(const InitialProfile& pr, double xi, int tau0) {
    CVector d = CVector::Zero(tau0 == 1 ? 8 : 7);
    if (pr.kind == ProfileKind::Gaussian) {
        const SpectralState s = initial_spectrum(pr, xi, tau0);
        d = (-pr.sigma * pr.sigma * xi) * s.amp;
    }
    return d;
}

// Spectral projector onto ker(c) along the null vector; commutes with A(xi).
inline CMatrix constraint_projector(const ModelParams& p, double xi) {
    const auto c = constraint_row(p, xi);
    const CVector r = null_vector(p, xi);
    const cplx cr = (c * r)(0, 0);
    return CMatrix::Identity(p.dimension(), p.dimension()) - (r * c) / cr;
}

inline CMatrix constraint_projector_derivative(const ModelParams& p, double xi) {
    const int n = p.dimension();
    const auto c = constraint_row(p, xi);
    const CVector r = null_vector(p, xi);
    const cplx cr = (c * r)(0, 0);
    CVector dr = CVector::Zero(n);
    dr(P) = I_UNIT;
    Eigen::Matrix<cplx, 1, Eigen::Dynamic> dc = Eigen::Matrix<cplx, 1, Eigen::Dynamic>::Zero(n);
    dc(P) = I_UNIT;
    const cplx dcr = -2.0 * xi;
    return -(dr * c + r * dc) / cr + (r * c) * (dcr / (cr * cr));
}

struct InitialData {
    SpectralState state;
    CVector sensitivity;
};

inline InitialData initial_data(const ModelParams& p, const InitialProfile& pr, double xi) {
    InitialData d{initial_spectrum(pr, xi, p.tau0), initial_sensitivity(pr, xi, p.tau0)};
    if (pr.constrained) {
        const CMatrix P = constraint_projector(p, xi);
        const CMatrix dP = constraint_projector_derivative(p, xi);
        d.sensitivity = dP * d.state.amp + P * d.sensitivity;
        d.state.amp = P * d.state.amp;
    }
    return d;
}

}  // namespace rns
