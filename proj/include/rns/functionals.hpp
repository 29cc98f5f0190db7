#pragma once
/*
 * Energy, dissipation identity, Lyapunov coefficients and the composite
 * functional F = lambda*E + w(xi)*F0 with w = xi^{2+2tau0}/(xi^10+1).
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rns/csv.hpp"
#include "rns/model.hpp"
#include "rns/spectral_ode.hpp"

namespace rns {

struct EnergyValue {
    double total = 0;
    std::array<double, 8> parts{};  // seven field terms, then (tau0/2) xi^4 J
};

inline std::array<double, FIELD_COUNT> energy_weights(const ModelParams& p) {
    return {p.k1, p.rho1, p.k2, p.rho2, p.k3_eff(), p.rho3, p.k0};
}

inline EnergyValue energy(const ModelParams& p, double xi, const SpectralState& s) {
    if (s.dimension() != p.dimension()) throw std::invalid_argument("energy: state dimension does not match tau0");
    EnergyValue e;
    const auto w = energy_weights(p);
    for (int c = 0; c < FIELD_COUNT; ++c) e.parts[c] = 0.5 * w[c] * std::norm(s.amp(c));
    e.parts[7] = p.memory() ? 0.5 * std::pow(xi, 4) * s.J : 0.0;
    for (double v : e.parts) e.total += v;
    return e;
}

// c1 |U|^2 <= E <= c2 |U|^2
struct EquivalenceConstants {
    double c1, c2;
};

inline EquivalenceConstants energy_equivalence(const ModelParams& p) {
    const auto w = energy_weights(p);
    double lo = 1.0, hi = 1.0;
    for (double v : w) lo = std::min(lo, v), hi = std::max(hi, v);
    return {0.5 * lo, 0.5 * hi};
}

// Finite-difference weights for the first derivative at x0 (Fornberg).
inline std::vector<double> fd_weights(double x0, const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<std::vector<double>> c(n, std::vector<double>(2, 0.0));
    double c1 = 1.0, c4 = x[0] - x0;
    c[0][0] = 1.0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, 1);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = c[i][1];
    return w;
}

// Derivative of uniformly sampled data; central stencils inside. Near the ends
// the stencil is off-centre and twice as wide, since one-sided error constants
// are far larger than central ones.
inline std::vector<double> differentiate_uniform(const std::vector<double>& f, double h, int order) {
    if (order < 2 || order % 2) throw std::invalid_argument("stencil order must be even and >= 2");
    const int n = static_cast<int>(f.size());
    const int width = order + 1;
    if (n < width) throw std::invalid_argument("need at least order+1 samples to differentiate");
    const int half = order / 2;
    const int edge_width = std::min(n, 2 * order + 1);
    std::vector<double> d(n);
    auto apply = [&](int k, int start, const std::vector<double>& w) {
        double acc = 0;
        for (size_t i = 0; i < w.size(); ++i) acc += w[i] * f[start + i];
        d[k] = acc / h;
    };
    auto weights = [](int off, int w) {
        std::vector<double> x(w);
        for (int i = 0; i < w; ++i) x[i] = i;
        return fd_weights(off, x);
    };
    const auto central = weights(half, width);
    for (int k = 0; k < n; ++k) {
        if (k >= half && k < n - half) {
            apply(k, k - half, central);
        } else if (k < half) {
            apply(k, 0, weights(k, edge_width));
        } else {
            const int start = n - edge_width;
            apply(k, start, weights(k - start, edge_width));
        }
    }
    return d;
}

struct DissipationResidual {
    std::vector<double> times;
    std::vector<double> residual;
    double max_normalized = 0;  // max |residual| / E(0)
};

inline constexpr int DEFAULT_RESIDUAL_ORDER = 8;

// residual = dE/dt - [-(1-tau0) gamma |theta|^2 - (tau0/2) d2 xi^4 J]
inline DissipationResidual dissipation_residual(const ModeTrajectory& tr, const ModelParams& p,
                                                int order = DEFAULT_RESIDUAL_ORDER) {
    const size_t n = tr.times.size();
    if (n < 5) throw std::invalid_argument("dissipation_residual: fewer than 5 time points");
    const double h = tr.times[1] - tr.times[0];
    for (size_t k = 1; k < n; ++k)
        if (std::abs(tr.times[k] - tr.times[k - 1] - h) > 1e-9 * h)
            throw std::invalid_argument("dissipation_residual: time grid must be uniform");
    std::vector<double> E(n);
    for (size_t k = 0; k < n; ++k) E[k] = energy(p, tr.xi, tr.states[k]).total;
    int ord = order;
    while (ord + 1 > static_cast<int>(n)) ord -= 2;
    const auto dE = differentiate_uniform(E, h, ord);
    DissipationResidual r;
    r.times = tr.times;
    r.residual.resize(n);
    const double x4 = std::pow(tr.xi, 4);
    double mx = 0;
    for (size_t k = 0; k < n; ++k) {
        const auto& s = tr.states[k];
        const double rhs = p.memory() ? -0.5 * p.d2() * x4 * s.J : -p.gamma * std::norm(s.amp(THETA));
        r.residual[k] = dE[k] - rhs;
        mx = std::max(mx, std::abs(r.residual[k]));
    }
    r.max_normalized = E[0] > 0 ? mx / E[0] : mx;
    return r;
}

struct LyapunovCoefficients {
    double xi = 0;
    int tau0 = 0;
    std::array<double, 14> lambda{};  // 1-based
    std::array<double, 10> A{};       // 1-based
    std::array<double, 8> B{};        // 1-based
    std::array<double, 4> Btilde{};   // 1-based
    double B0 = 0;
    double lambda4_lower = 0, lambda4_upper = 0;

    struct Check {
        std::string name;
        double value;  // relative residual for identities, raw value for positivity
        bool identity;
        bool pass;
    };
    std::vector<Check> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

inline constexpr double IDENTITY_REL_TOL = 1e-10;

inline LyapunovCoefficients select_lambdas(const ModelParams& p, double xi) {
    if (classify_speeds(p) == SpeedClass::Equal)
        throw RefusalError("coefficient selection requires distinct wave speeds (k1/rho1 != k2/rho2)");
    const double k0 = p.k0, k1 = p.k1, k2 = p.k2, k3 = p.k3_eff(), l = p.l;
    const double r1 = p.rho1, r2 = p.rho2, r3 = p.rho3, g0 = p.g0();
    const double x2 = xi * xi;
    const int tau0 = p.tau0;
    LyapunovCoefficients c;
    c.xi = xi;
    c.tau0 = tau0;
    auto& L = c.lambda;

    L[2] = -k0 / 2;
    const double l3_bound =
        std::max(2 * k0, (-k2 * k3 * L[2] + k0 * (2 * l * l * k1 * k2 - k1 * k3 - k2 * k3)) / (l * l * k1 * k2));
    L[3] = 1 + 2 * l3_bound;
    const double D = k1 * k3 + k2 * (l * l * k1 + k3);
    c.lambda4_lower =
        std::max(0.0, (k1 * k3 / D) * ((k2 / k1) * L[2] + (l * l * k2 / k3) * L[3] + k0 * (k2 / k1 - 2 * l * l * k2 / k3)));
    c.lambda4_upper =
        (l * k2 / D) * ((k3 / l) * L[2] + l * k1 * L[3] + k0 * (k1 * k3 / (l * k2) + k3 / l - 2 * l * k1));
    if (!(c.lambda4_lower < c.lambda4_upper)) {
        std::ostringstream os;
        os << "empty lambda4 interval: lower=" << fmt(c.lambda4_lower) << " upper=" << fmt(c.lambda4_upper);
        throw std::runtime_error(os.str());
    }
    L[4] = 0.5 * (c.lambda4_lower + c.lambda4_upper);
    L[1] = -(k2 / k1) * L[2] - (l * l * k2 / k3) * L[3] + (l * l * k2 / k3 + k2 / k1) * L[4] +
           k0 * (2 * l * l * k2 / k3 - 1 - k2 / k1);
    L[5] = -(k2 / l) * x2 + L[1] / l - k0 * r2 * (k1 + k2) / (l * (k1 * r2 - k2 * r1));
    L[6] = (l * k2 * L[4] - k3 * L[5] + k0 * (l * k2 - 2 * k3 / l)) / k2;
    L[10] = (-2 * k1 * k2 * x2 + k1 * L[1] + k2 * L[2] - k2 * L[4] - l * k1 * L[5] - k0 * (k1 + k2)) / (l * k2);
    L[7] = k2 * x2 + l * L[5] - L[1];
    L[8] = -2 * k3 * x2 / l + L[6] - l * L[3];
    L[9] = -k1 * x2 + L[2] - l * L[10];
    if (tau0 == 1) {
        L[13] = L[8] * x2 / g0 - r3 * L[10] / (g0 * r1);
        L[12] = (l * L[4] - L[6]) * x2 / g0 - r3 * L[5] / (g0 * r2);
        L[11] = 2 * L[3] / g0;
    }

    auto& B = c.B;
    B[1] = k2 * L[1];
    B[2] = k1 * L[2];
    B[3] = k3 * L[3];
    B[4] = -r1 * L[2];
    B[5] = k0 * L[4];
    B[6] = -r2 * (L[1] + L[4]);
    B[7] = r3 * (tau0 * g0 * L[11] - L[3]);
    auto& A = c.A;
    A[1] = k0 * L[1] + k2 * L[4] * x2 - l * k0 * L[5] + k0 * L[7];
    A[2] = k0 * (L[2] - L[9] - l * L[10]);
    A[3] = k0 * (l * L[3] - L[6] + L[8]);
    A[4] = k3 * L[5] * x2 + k2 * L[6] * x2;
    A[5] = -k1 * L[7] * x2 + k2 * L[9] * x2;
    A[6] = -k1 * L[8] * x2 + k3 * L[10] * x2;
    A[7] = r1 * L[7] + r2 * (L[4] - L[9]);
    A[8] = r1 * (L[8] * x2 - tau0 * g0 * L[13]) - r3 * L[10];
    A[9] = r2 * (l * L[4] - L[6]) * x2 - r3 * L[5] - tau0 * r2 * g0 * L[12];
    c.Btilde[1] = B[1] + k2 * L[4] + k0 * k2;
    c.Btilde[2] = B[2] + k0 * k1;
    c.Btilde[3] = B[3] - 2 * k0 * k3;
    c.B0 = std::min({c.Btilde[1], c.Btilde[2], c.Btilde[3], B[4], B[5], B[6]});

    auto identity = [&](const std::string& name, std::initializer_list<double> terms) {
        double sum = 0, mag = 0;
        for (double t : terms) sum += t, mag += std::abs(t);
        const double rel = mag > 0 ? std::abs(sum) / mag : 0.0;
        c.checks.push_back({name, rel, true, rel <= IDENTITY_REL_TOL});
    };
    identity("A4-A3-lA1", {A[4], -A[3], -l * A[1]});
    identity("A5-A1-A2", {A[5], -A[1], -A[2]});
    identity("A6-lA2-A3", {A[6], -l * A[2], -A[3]});
    identity("A7", {r1 * L[7], r2 * L[4], -r2 * L[9]});
    identity("B1xi2+A1=Bt1xi2", {B[1] * x2, A[1], -c.Btilde[1] * x2});
    identity("B2xi2+A2=Bt2xi2", {B[2] * x2, A[2], -c.Btilde[2] * x2});
    identity("B3xi2+lA3=Bt3xi2", {B[3] * x2, l * A[3], -c.Btilde[3] * x2});
    if (tau0 == 1) {
        identity("A8", {r1 * L[8] * x2, -r1 * g0 * L[13], -r3 * L[10]});
        identity("A9", {r2 * (l * L[4] - L[6]) * x2, -r3 * L[5], -r2 * g0 * L[12]});
    }
    auto positive = [&](const std::string& name, double v) { c.checks.push_back({name, v, false, v > 0}); };
    positive("Bt1", c.Btilde[1]);
    positive("Bt2", c.Btilde[2]);
    positive("Bt3", c.Btilde[3]);
    positive("B4", B[4]);
    positive("B5", B[5]);
    positive("B6", B[6]);
    if (tau0 == 1) positive("B7", B[7]);
    positive("B0", c.B0);
    return c;
}

inline std::vector<std::string> coefficient_header() {
    std::vector<std::string> h{"xi"};
    for (int i = 1; i <= 13; ++i) h.push_back("lambda" + std::to_string(i));
    for (int i = 1; i <= 9; ++i) h.push_back("A" + std::to_string(i));
    for (int i = 1; i <= 7; ++i) h.push_back("B" + std::to_string(i));
    for (int i = 1; i <= 3; ++i) h.push_back("Btilde" + std::to_string(i));
    h.push_back("B0");
    return h;
}

inline std::vector<double> coefficient_row(const LyapunovCoefficients& c) {
    std::vector<double> r{c.xi};
    for (int i = 1; i <= 13; ++i) r.push_back(c.lambda[i]);
    for (int i = 1; i <= 9; ++i) r.push_back(c.A[i]);
    for (int i = 1; i <= 7; ++i) r.push_back(c.B[i]);
    for (int i = 1; i <= 3; ++i) r.push_back(c.Btilde[i]);
    r.push_back(c.B0);
    return r;
}

// Hermitian H with F0(U) = U* H U (memory integral replaced by m).
inline CMatrix f0_form(const ModelParams& p, const LyapunovCoefficients& c) {
    const int n = p.dimension();
    const double xi = c.xi, x2 = xi * xi;
    const auto& L = c.lambda;
    CMatrix H = CMatrix::Zero(n, n);
    // Re(alpha a conj(b))
    auto term = [&](cplx alpha, int a, int b) {
        H(b, a) += 0.5 * alpha;
        H(a, b) += 0.5 * std::conj(alpha);
    };
    const cplx i = I_UNIT;
    term(i * p.rho2 * L[1] * xi, Y, Z);
    term(i * p.rho1 * L[2] * xi, U, V);
    term(-p.rho3 * L[3], THETA, PHI);
    term(p.rho2 * L[4] * x2, P, Y);
    term(p.rho3 * L[5], Z, THETA);
    term(i * p.rho2 * L[6] * xi, PHI, Y);
    term(i * p.rho1 * L[7] * xi, U, Z);
    term(i * p.rho1 * L[8] * xi, U, PHI);
    term(i * p.rho2 * L[9] * xi, V, Y);
    term(p.rho3 * L[10], V, THETA);
    if (p.memory()) {
        term(-p.rho3 * L[11] * x2, THETA, M);
        term(i * p.rho2 * L[12] * xi, Y, M);
        term(i * p.rho1 * L[13] * xi, U, M);
    }
    return H;
}

inline double lyapunov_weight(double xi, int tau0) {
    const double x2 = xi * xi;
    return std::pow(x2, 1 + tau0) / (std::pow(x2, 5) + 1.0);
}

// Orthonormal basis of ker(c), the invariant subspace of physical states.
inline CMatrix constraint_basis(const Eigen::Matrix<cplx, 1, Eigen::Dynamic>& c) {
    const Eigen::Index n = c.size();
    Eigen::HouseholderQR<CMatrix> qr(CMatrix(c.adjoint()));
    const CMatrix q = qr.householderQ() * CMatrix::Identity(n, n);
    return q.rightCols(n - 1);
}

struct LyapunovScale {
    double lambda = 0;
    double c3 = 0;           // |F - lambda E| <= 2 c3 E
    double lambda_star = 0;  // smallest lambda with dF/dt <= 0 on the grid
};

namespace detail {

// Energy as a Hermitian form, with xi^4 J bounded below by xi^4 |m|^2 / g0.
inline RVector energy_lower_diag(const ModelParams& p, double xi) {
    RVector d(p.dimension());
    const auto w = energy_weights(p);
    for (int c = 0; c < FIELD_COUNT; ++c) d(c) = 0.5 * w[c];
    if (p.memory()) d(M) = 0.5 * std::pow(xi, 4) / p.g0();
    return d;
}

// sup over U of |w F0(U)| / E(U)
inline double f0_energy_ratio(const ModelParams& p, const LyapunovCoefficients& c) {
    const double w = lyapunov_weight(c.xi, p.tau0);
    if (w == 0) return 0;
    const RVector d = energy_lower_diag(p, c.xi);
    const RVector s = d.cwiseSqrt().cwiseInverse();
    const CMatrix M = w * (s.asDiagonal() * f0_form(p, c) * s.asDiagonal());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (M + M.adjoint()));
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double lambda_star(const ModelParams& p, const LyapunovCoefficients& c) {
    const double xi = c.xi;
    const double w = lyapunov_weight(xi, p.tau0);
    if (w == 0) return 0;
    const FourierSymbol sym = assemble_symbol(p, xi);
    const CMatrix H = f0_form(p, c);
    const CMatrix K = -(H * sym.matrix + sym.matrix.adjoint() * H);
    const int n = p.dimension();
    CMatrix D = CMatrix::Zero(n, n);
    if (p.memory())
        D(M, M) = -0.5 * p.d2() * std::pow(xi, 4) / p.g0();
    else
        D(THETA, THETA) = -p.gamma;
    const CMatrix Q = constraint_basis(sym.constraint);
    // scale by the energy so eigenvalues compare like quantities
    const RVector e = energy_lower_diag(p, xi).cwiseSqrt().cwiseInverse();
    const CMatrix Kq = Q.adjoint() * (e.asDiagonal() * (w * K) * e.asDiagonal()) * Q;
    const CMatrix Dq = Q.adjoint() * (e.asDiagonal() * D * e.asDiagonal()) * Q;
    auto top = [&](double lam) {
        const CMatrix Mx = Kq + lam * Dq;
        Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (Mx + Mx.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    };
    const double tol = 1e-13 * (Kq.norm() + 1e-300);
    if (top(0) <= tol) return 0;
    double hi = 1;
    while (top(hi) > tol * (1 + hi)) {
        hi *= 2;
        if (hi > 1e30) throw std::runtime_error("no finite lambda makes dF/dt non-positive at xi=" + fmt(xi));
    }
    double lo = hi / 2;
    if (hi == 1) lo = 0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (top(mid) > tol * (1 + mid) ? lo : hi) = mid;
    }
    return hi;
}

}  // namespace detail

inline std::vector<double> default_lyapunov_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 40; ++k) g.push_back(std::pow(10.0, -2.0 + 0.1 * k));
    return g;
}

// lambda = 1 + 2 max{lambda*, 2 c3}, both maximised over the grid.
inline LyapunovScale choose_lyapunov_lambda(const ModelParams& p, const std::vector<double>& xi_grid) {
    LyapunovScale s;
    double ratio = 0;
    for (double xi : xi_grid) {
        const auto c = select_lambdas(p, xi);
        ratio = std::max(ratio, detail::f0_energy_ratio(p, c));
        s.lambda_star = std::max(s.lambda_star, detail::lambda_star(p, c));
    }
    s.c3 = 0.5 * ratio;
    s.lambda = 1 + 2 * std::max(s.lambda_star, 2 * s.c3);
    return s;
}

class LyapunovFunctional {
  public:
    LyapunovFunctional(const ModelParams& p, LyapunovCoefficients coeffs, double lambda)
        : p_(p), c_(std::move(coeffs)), lambda_(lambda), w_(lyapunov_weight(c_.xi, p.tau0)), H_(f0_form(p, c_)) {}

    double xi() const { return c_.xi; }
    double lambda() const { return lambda_; }
    const LyapunovCoefficients& coefficients() const { return c_; }
    const CMatrix& f0_matrix() const { return H_; }

    double F0(const SpectralState& s) const { return std::real(s.amp.dot(H_ * s.amp)); }

    double operator()(const SpectralState& s) const { return lambda_ * energy(p_, c_.xi, s).total + w_ * F0(s); }

  private:
    ModelParams p_;
    LyapunovCoefficients c_;
    double lambda_;
    double w_;
    CMatrix H_;
};

inline double lyapunov_F(const ModelParams& p, double xi, const SpectralState& s, const LyapunovCoefficients& c,
                         double lambda) {
    if (std::abs(c.xi - xi) > 1e-15 * std::max(1.0, std::abs(xi)))
        throw std::invalid_argument("lyapunov_F: coefficients were selected at xi=" + fmt(c.xi) + ", called at " + fmt(xi));
    return LyapunovFunctional(p, c, lambda)(s);
}

struct FDecayCheck {
    double c = 0;                 // largest c with F(t) <= F(0) exp(-2 c f t) on the grid
    bool monotone = true;         // F non-increasing for t >= transient
    double first_increase = NAN;  // time of the first increase, if any
    std::vector<double> F;
    std::vector<double> E;
};

inline FDecayCheck check_F_decay(const ModeTrajectory& tr, const ModelParams& p, const LyapunovFunctional& fn,
                                 double transient = 1.0) {
    if (classify_speeds(p) == SpeedClass::Equal) throw RefusalError("check_F_decay requires distinct wave speeds");
    FDecayCheck r;
    for (const auto& s : tr.states) {
        r.F.push_back(fn(s));
        r.E.push_back(energy(p, tr.xi, s).total);
    }
    if (!(r.F.front() > 0)) throw std::invalid_argument("check_F_decay: F(0) must be positive");
    const double f = f_rate(tr.xi, p.tau0);
    r.c = INFINITY;
    for (size_t k = 1; k < r.F.size(); ++k) {
        if (tr.times[k] >= transient && r.F[k] > r.F[k - 1] * (1 + 1e-12) && r.monotone) {
            r.monotone = false;
            r.first_increase = tr.times[k];
        }
        const double ratio = r.F[k] / r.F[0];
        const double ck = ratio > 0 ? -std::log(ratio) / (2 * f * tr.times[k]) : INFINITY;
        r.c = std::min(r.c, ck);
    }
    return r;
}

}  // namespace rns
