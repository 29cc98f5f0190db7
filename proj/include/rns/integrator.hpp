#pragma once
// Dormand-Prince 5(4), classic step control, output on a prescribed grid.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rns/types.hpp"

namespace rns {

struct IntegratorConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = 1.0;
    double initial_step = 0.0;  // 0: pick automatically

    void check() const {
        auto ok = [](double v) { return v > 0 && v <= 1e-2; };
        if (!ok(rel_tol) || !ok(abs_tol)) throw std::invalid_argument("integrator tolerances must lie in (0, 1e-2]");
        if (!(max_step > 0)) throw std::invalid_argument("integrator max_step must be > 0");
    }
};

using OdeRhs = std::function<void(double, const RVector&, RVector&)>;

class DormandPrince {
  public:
    DormandPrince(OdeRhs f, IntegratorConfig cfg, double xi_tag = 0.0)
        : f_(std::move(f)), cfg_(cfg), xi_(xi_tag) {
        cfg_.check();
    }

    // Integrates y from times.front() and stores y at every grid time. The first
    // entry is y0 itself.
    std::vector<RVector> solve(const RVector& y0, const std::vector<double>& times) {
        std::vector<RVector> out;
        out.reserve(times.size());
        if (times.empty()) return out;
        out.push_back(y0);
        RVector y = y0;
        double t = times.front();
        double h = cfg_.initial_step > 0 ? cfg_.initial_step : initial_step(t, y);
        for (size_t k = 1; k < times.size(); ++k) {
            advance(t, y, h, times[k]);
            out.push_back(y);
        }
        return out;
    }

    long steps_taken() const { return accepted_; }

  private:
    OdeRhs f_;
    IntegratorConfig cfg_;
    double xi_;
    long accepted_ = 0;

    double error_norm(const RVector& e, const RVector& y0, const RVector& y1) const {
        double acc = 0;
        for (Eigen::Index i = 0; i < e.size(); ++i) {
            const double sc = cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
            const double r = e(i) / sc;
            acc += r * r;
        }
        return std::sqrt(acc / std::max<Eigen::Index>(1, e.size()));
    }

    double initial_step(double t, const RVector& y) {
        RVector d(y.size());
        f_(t, y, d);
        const double yn = y.norm(), dn = d.norm();
        double h = (yn > 0 && dn > 0) ? 0.01 * yn / dn : 1e-6;
        return std::min(h, cfg_.max_step);
    }

    void advance(double& t, RVector& y, double& h, double t_end) {
        static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                                a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                                b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                                e6 = 22.0 / 525, e7 = -1.0 / 40;
        const Eigen::Index n = y.size();
        RVector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y1(n), err(n);
        while (t < t_end) {
            const double remaining = t_end - t;
            const double step = std::min({h, remaining, cfg_.max_step});
            if (step < 1e-14 * std::max(1.0, std::abs(t))) throw IntegrationError("step size underflow", xi_, t);
            f_(t, y, k1);
            tmp = y + step * a21 * k1;
            f_(t + c2 * step, tmp, k2);
            tmp = y + step * (a31 * k1 + a32 * k2);
            f_(t + c3 * step, tmp, k3);
            tmp = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
            f_(t + c4 * step, tmp, k4);
            tmp = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            f_(t + c5 * step, tmp, k5);
            tmp = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            f_(t + step, tmp, k6);
            y1 = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            f_(t + step, y1, k7);
            err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            const double en = error_norm(err, y, y1);
            if (!std::isfinite(en)) throw IntegrationError("non-finite state", xi_, t);
            const double fac = en > 0 ? std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0) : 5.0;
            if (en <= 1.0) {
                const bool clipped = step < h;
                t = step >= remaining ? t_end : t + step;
                y = y1;
                ++accepted_;
                // a step shortened to hit an output time says little about the proposal
                if (!(clipped && fac >= 1.0)) h = std::min(step * fac, cfg_.max_step);
            } else {
                h = step * std::max(fac, 0.2);
            }
        }
    }
};

}  // namespace rns
