#pragma once
// Discretized-history path for the memory system: the relative history
// eta(s) is transported on a uniform s-grid (upwind) and the kernel moments are
// composite-trapezoid sums. Used only to cross-check the moment closure.

#include <cmath>
#include <vector>

#include "rns/integrator.hpp"
#include "rns/model.hpp"

namespace rns {

struct HistoryGrid {
    int nodes = 2000;
    double s_max = 0;  // 0: 40/d2
};

struct HistoryTrajectory {
    std::vector<double> times;
    std::vector<CVector> fields;  // 7 field components
    std::vector<cplx> m;
    std::vector<double> J;
};

// eta_t + eta_s = theta, eta(0) = 0; theta row uses -xi^4 * sum g(s) eta(s) ds.
inline HistoryTrajectory evolve_history(const ModelParams& p, double xi, const CVector& fields0,
                                        const std::vector<double>& t_grid, HistoryGrid grid = {},
                                        IntegratorConfig cfg = {1e-8, 1e-10, 1.0, 0.0}) {
    if (!p.memory() || !p.kernel) throw std::invalid_argument("history path needs the memory system");
    const KernelParams k = *p.kernel;
    const int ns = grid.nodes;
    const double smax = grid.s_max > 0 ? grid.s_max : 40.0 / k.d2;
    const double ds = smax / ns;
    std::vector<double> w(ns + 1);
    for (int i = 0; i <= ns; ++i) w[i] = k.value(i * ds) * ds * ((i == 0 || i == ns) ? 0.5 : 1.0);

    ModelParams base = p;
    base.tau0 = 0;
    base.gamma = 0;
    CMatrix A = assemble_symbol(base, xi).matrix;
    A(THETA, PHI) = -p.k3_eff() * xi * xi / p.rho3;  // keep k3 - g0
    const double x4 = std::pow(xi, 4);

    // packed as 7 complex fields then ns complex history values at s_1..s_ns
    const int dim = 2 * (FIELD_COUNT + ns);
    CVector u(FIELD_COUNT), du(FIELD_COUNT);
    auto rhs = [&](double, const RVector& y, RVector& dy) {
        dy.resize(dim);
        for (int i = 0; i < FIELD_COUNT; ++i) u(i) = cplx(y(2 * i), y(2 * i + 1));
        cplx m = 0;
        for (int i = 1; i <= ns; ++i) m += w[i] * cplx(y(2 * (FIELD_COUNT + i - 1)), y(2 * (FIELD_COUNT + i - 1) + 1));
        du.noalias() = -A * u;
        du(THETA) -= x4 * m / p.rho3;
        for (int i = 0; i < FIELD_COUNT; ++i) {
            dy(2 * i) = du(i).real();
            dy(2 * i + 1) = du(i).imag();
        }
        const cplx th = u(THETA);
        for (int i = 1; i <= ns; ++i) {
            const int o = 2 * (FIELD_COUNT + i - 1);
            const cplx cur(y(o), y(o + 1));
            const cplx prev = i == 1 ? cplx(0) : cplx(y(o - 2), y(o - 1));
            const cplx d = th - (cur - prev) / ds;
            dy(o) = d.real();
            dy(o + 1) = d.imag();
        }
    };
    RVector y0 = RVector::Zero(dim);
    for (int i = 0; i < FIELD_COUNT; ++i) {
        y0(2 * i) = fields0(i).real();
        y0(2 * i + 1) = fields0(i).imag();
    }
    DormandPrince dp(rhs, cfg, xi);
    const auto ys = dp.solve(y0, t_grid);
    HistoryTrajectory out;
    out.times = t_grid;
    for (const auto& y : ys) {
        CVector f(FIELD_COUNT);
        for (int i = 0; i < FIELD_COUNT; ++i) f(i) = cplx(y(2 * i), y(2 * i + 1));
        cplx m = 0;
        double J = 0;
        for (int i = 1; i <= ns; ++i) {
            const cplx e(y(2 * (FIELD_COUNT + i - 1)), y(2 * (FIELD_COUNT + i - 1) + 1));
            m += w[i] * e;
            J += w[i] * std::norm(e);
        }
        out.fields.push_back(f);
        out.m.push_back(m);
        out.J.push_back(J);
    }
    return out;
}

}  // namespace rns
