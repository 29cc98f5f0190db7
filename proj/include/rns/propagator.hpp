#pragma once
/*
 * Matrix-exponential evolution of one mode.
 *
 * All exponentials are taken in energy-scaled coordinates S = D A D^-1,
 * where the generator is skew-Hermitian apart from the damping entries.
 * The memory moment J(t) = e^{-d2 t} J0 + U0* W(t) U0 is carried through
 * the Van Loan block exponential of [[-B* - d2 I, Q], [0, B]] with B = -S.
 */

#include <cmath>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "rns/model.hpp"

namespace rns {

namespace detail {

inline CMatrix scaled_generator(const FourierSymbol& s) {
    const RVector& d = s.energy_scale;
    return d.asDiagonal() * s.matrix * d.cwiseInverse().asDiagonal();
}

// Q with U*QU = 2 Re(theta conj(m)), expressed in scaled coordinates.
inline CMatrix scaled_memory_form(const FourierSymbol& s) {
    const int n = s.dimension();
    CMatrix q = CMatrix::Zero(n, n);
    if (n == 8) {
        const double w = 1.0 / (s.energy_scale(THETA) * s.energy_scale(M));
        q(THETA, M) = w;
        q(M, THETA) = w;
    }
    return q;
}

inline double eigenvector_condition(const CMatrix& a) {
    Eigen::ComplexEigenSolver<CMatrix> es(a);
    if (es.info() != Eigen::Success) return INFINITY;
    Eigen::JacobiSVD<CMatrix> svd(es.eigenvectors());
    const auto& sv = svd.singularValues();
    return sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
}

}  // namespace detail

// Propagates (U, J) and optionally the xi-sensitivity over a fixed step dt.
class Propagator {
  public:
    Propagator(const FourierSymbol& s, double dt, bool with_sensitivity = false)
        : n_(s.dimension()), dt_(dt), d2_(s.memory_decay), memory_(s.dimension() == 8),
          sens_(with_sensitivity), scale_(s.energy_scale) {
        if (!(dt >= 0) || !std::isfinite(dt)) throw std::invalid_argument("Propagator: dt must be finite and >= 0");
        const CMatrix S = detail::scaled_generator(s);
        if (sens_) {
            const CMatrix F = scale_.asDiagonal() * s.forcing * scale_.cwiseInverse().asDiagonal();
            CMatrix g = CMatrix::Zero(2 * n_, 2 * n_);
            g.topLeftCorner(n_, n_) = -S;
            g.bottomRightCorner(n_, n_) = -S;
            g.bottomLeftCorner(n_, n_) = F;
            psi_ = (g * cplx(dt)).exp();
        } else {
            psi_ = (CMatrix(-S) * cplx(dt)).exp();
        }
        if (memory_) {
            const CMatrix Q = detail::scaled_memory_form(s);
            const CMatrix B = -S;
            CMatrix vl = CMatrix::Zero(2 * n_, 2 * n_);
            vl.topLeftCorner(n_, n_) = -B.adjoint() - d2_ * CMatrix::Identity(n_, n_);
            vl.topRightCorner(n_, n_) = Q;
            vl.bottomRightCorner(n_, n_) = B;
            const CMatrix e = (vl * cplx(dt)).exp();
            w_ = e.bottomRightCorner(n_, n_).adjoint() * e.topRightCorner(n_, n_);
            w_ = 0.5 * (w_ + w_.adjoint());
        }
    }

    double dt() const { return dt_; }
    bool with_sensitivity() const { return sens_; }

    // Propagator over 2*dt from this one, without a new exponential.
    Propagator doubled() const {
        Propagator r = *this;
        r.dt_ = 2 * dt_;
        r.psi_ = psi_ * psi_;
        if (memory_) {
            const CMatrix base = psi_.topLeftCorner(n_, n_);
            r.w_ = base.adjoint() * w_ * base + std::exp(-d2_ * dt_) * w_;
            r.w_ = 0.5 * (r.w_ + r.w_.adjoint());
        }
        return r;
    }

    SpectralState step(const SpectralState& s) const {
        const CVector x = scale_.asDiagonal() * s.amp;
        SpectralState out(n_);
        out.amp = scale_.cwiseInverse().asDiagonal() * (psi_.topLeftCorner(n_, n_) * x);
        if (memory_) out.J = std::exp(-d2_ * dt_) * s.J + std::real(x.dot(w_ * x));
        return out;
    }

    // Advances state and sensitivity together.
    void step(SpectralState& s, CVector& sens) const {
        if (!sens_) throw std::logic_error("Propagator built without sensitivity block");
        CVector x(2 * n_);
        x.head(n_) = scale_.asDiagonal() * s.amp;
        x.tail(n_) = scale_.asDiagonal() * sens;
        const CVector y = psi_ * x;
        if (memory_) s.J = std::exp(-d2_ * dt_) * s.J + std::real(x.head(n_).dot(w_ * x.head(n_)));
        s.amp = scale_.cwiseInverse().asDiagonal() * y.head(n_);
        sens = scale_.cwiseInverse().asDiagonal() * y.tail(n_);
    }

  private:
    int n_;
    double dt_;
    double d2_;
    bool memory_;
    bool sens_;
    RVector scale_;
    CMatrix psi_;
    CMatrix w_;
};

struct OracleResult {
    SpectralState state;
    std::vector<std::string> warnings;
};

// e^{-A t} U0 via scaling-and-squaring Pade; J from the Van Loan block.
inline OracleResult matrix_exponential_oracle(const FourierSymbol& s, const SpectralState& state0, double t) {
    if (!(t >= 0)) throw std::invalid_argument("matrix_exponential_oracle: t must be >= 0");
    if (state0.dimension() != s.dimension()) throw std::invalid_argument("state dimension does not match symbol");
    OracleResult r;
    const double cond = detail::eigenvector_condition(s.matrix);
    if (cond > 1e12) r.warnings.push_back("eigenvector matrix condition " + std::to_string(cond) + " > 1e12");
    r.state = Propagator(s, t).step(state0);
    return r;
}

}  // namespace rns
