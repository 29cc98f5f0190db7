#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rns/csv.hpp"
#include "rns/integrator.hpp"
#include "rns/model.hpp"
#include "rns/parallel.hpp"
#include "rns/propagator.hpp"

namespace rns {

struct ModeTrajectory {
    double xi = 0;
    int tau0 = 0;
    std::vector<double> times;
    std::vector<SpectralState> states;
    std::vector<CVector> sensitivity;  // empty unless requested

    bool has_sensitivity() const { return !sensitivity.empty(); }
};

inline void check_time_grid(const std::vector<double>& t) {
    if (t.empty()) throw std::invalid_argument("time grid is empty");
    if (t.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
    for (size_t k = 1; k < t.size(); ++k)
        if (!(t[k] > t[k - 1]) || !std::isfinite(t[k])) throw std::invalid_argument("time grid must be strictly increasing");
}

inline std::vector<double> uniform_times(double t_end, double dt) {
    const auto n = static_cast<size_t>(std::llround(t_end / dt));
    std::vector<double> t(n + 1);
    for (size_t k = 0; k <= n; ++k) t[k] = static_cast<double>(k) * dt;
    return t;
}

// {0, 2^0, 2^1, ..., 2^kmax}
inline std::vector<double> dyadic_times(int kmax) {
    std::vector<double> t{0.0};
    for (int k = 0; k <= kmax; ++k) t.push_back(std::ldexp(1.0, k));
    return t;
}

namespace detail {

inline RVector pack(const SpectralState& s, const CVector* sens) {
    const int n = s.dimension();
    const int extra = sens ? 2 * n : 0;
    RVector y(2 * n + 1 + extra);
    for (int i = 0; i < n; ++i) {
        y(2 * i) = s.amp(i).real();
        y(2 * i + 1) = s.amp(i).imag();
    }
    y(2 * n) = s.J;
    if (sens)
        for (int i = 0; i < n; ++i) {
            y(2 * n + 1 + 2 * i) = (*sens)(i).real();
            y(2 * n + 2 + 2 * i) = (*sens)(i).imag();
        }
    return y;
}

inline void unpack(const RVector& y, int n, SpectralState& s, CVector* sens) {
    s = SpectralState(n);
    for (int i = 0; i < n; ++i) s.amp(i) = cplx(y(2 * i), y(2 * i + 1));
    s.J = y(2 * n);
    if (sens) {
        sens->resize(n);
        for (int i = 0; i < n; ++i) (*sens)(i) = cplx(y(2 * n + 1 + 2 * i), y(2 * n + 2 + 2 * i));
    }
}

inline ModeTrajectory integrate(const FourierSymbol& sym, const SpectralState& state0, const CVector* sens0,
                                const std::vector<double>& t_grid, const IntegratorConfig& cfg) {
    check_time_grid(t_grid);
    const int n = sym.dimension();
    if (state0.dimension() != n) throw std::invalid_argument("state dimension does not match symbol");
    if (sens0 && sens0->size() != n) throw std::invalid_argument("sensitivity dimension does not match symbol");
    const CMatrix A = sym.matrix;
    const CMatrix F = sym.forcing;
    const double d2 = sym.memory_decay;
    const bool memory = n == 8;
    const bool with_sens = sens0 != nullptr;
    CVector u(n), du(n), s(n), ds(n);
    auto rhs = [&](double, const RVector& y, RVector& dy) {
        for (int i = 0; i < n; ++i) u(i) = cplx(y(2 * i), y(2 * i + 1));
        du.noalias() = -A * u;
        dy.resize(y.size());
        for (int i = 0; i < n; ++i) {
            dy(2 * i) = du(i).real();
            dy(2 * i + 1) = du(i).imag();
        }
        dy(2 * n) = memory ? 2.0 * std::real(u(THETA) * std::conj(u(M))) - d2 * y(2 * n) : 0.0;
        if (with_sens) {
            for (int i = 0; i < n; ++i) s(i) = cplx(y(2 * n + 1 + 2 * i), y(2 * n + 2 + 2 * i));
            ds.noalias() = -A * s;
            ds.noalias() += F * u;
            for (int i = 0; i < n; ++i) {
                dy(2 * n + 1 + 2 * i) = ds(i).real();
                dy(2 * n + 2 + 2 * i) = ds(i).imag();
            }
        }
    };
    DormandPrince dp(rhs, cfg, sym.xi);
    const auto ys = dp.solve(pack(state0, sens0), t_grid);
    ModeTrajectory tr;
    tr.xi = sym.xi;
    tr.tau0 = sym.tau0;
    tr.times = t_grid;
    tr.states.resize(ys.size());
    if (with_sens) tr.sensitivity.resize(ys.size());
    for (size_t k = 0; k < ys.size(); ++k) unpack(ys[k], n, tr.states[k], with_sens ? &tr.sensitivity[k] : nullptr);
    tr.states[0] = state0;
    if (with_sens) tr.sensitivity[0] = *sens0;
    return tr;
}

}  // namespace detail

inline ModeTrajectory evolve_mode(const FourierSymbol& sym, const SpectralState& state0,
                                  const std::vector<double>& t_grid, const IntegratorConfig& cfg = {}) {
    return detail::integrate(sym, state0, nullptr, t_grid, cfg);
}

inline ModeTrajectory evolve_with_sensitivity(const FourierSymbol& sym, const SpectralState& state0,
                                              const CVector& sens0, const std::vector<double>& t_grid,
                                              const IntegratorConfig& cfg = {}) {
    return detail::integrate(sym, state0, &sens0, t_grid, cfg);
}

// Exponential-path trajectory. Consecutive gaps that double reuse the previous
// propagator by squaring, so the dyadic ladder costs one exponential.
inline ModeTrajectory evolve_exponential(const FourierSymbol& sym, const SpectralState& state0,
                                         const std::vector<double>& t_grid, const CVector* sens0 = nullptr) {
    check_time_grid(t_grid);
    ModeTrajectory tr;
    tr.xi = sym.xi;
    tr.tau0 = sym.tau0;
    tr.times = t_grid;
    tr.states.reserve(t_grid.size());
    tr.states.push_back(state0);
    const bool with_sens = sens0 != nullptr;
    CVector sens;
    if (with_sens) {
        sens = *sens0;
        tr.sensitivity.push_back(sens);
    }
    SpectralState cur = state0;
    std::optional<Propagator> prop;
    for (size_t k = 1; k < t_grid.size(); ++k) {
        const double gap = t_grid[k] - t_grid[k - 1];
        const bool same = prop && std::abs(gap - prop->dt()) <= 1e-14 * gap;
        if (!same) {
            if (prop && std::abs(gap - 2 * prop->dt()) <= 1e-14 * gap)
                prop = prop->doubled();
            else
                prop.emplace(sym, gap, with_sens);
        }
        if (with_sens) {
            prop->step(cur, sens);
            tr.sensitivity.push_back(sens);
        } else {
            cur = prop->step(cur);
        }
        tr.states.push_back(cur);
    }
    return tr;
}

struct ScanEntry {
    double xi = 0;
    std::optional<ModeTrajectory> trajectory;
    std::string error;

    bool ok() const { return trajectory.has_value(); }
};

enum class EvolutionPath { Adaptive, Exponential };

// Evolves every grid frequency; failures are recorded per entry, output order = input order.
inline std::vector<ScanEntry> scan_modes(const ModelParams& params, const InitialProfile& profile,
                                         const std::vector<double>& xi_grid, const std::vector<double>& t_grid,
                                         const IntegratorConfig& cfg = {}, bool with_sensitivity = false,
                                         EvolutionPath path = EvolutionPath::Adaptive, int threads = 0) {
    std::vector<ScanEntry> out(xi_grid.size());
    parallel_for(
        xi_grid.size(),
        [&](size_t i) {
            out[i].xi = xi_grid[i];
            try {
                const FourierSymbol sym = assemble_symbol(params, xi_grid[i]);
                const InitialData d = initial_data(params, profile, xi_grid[i]);
                if (path == EvolutionPath::Exponential)
                    out[i].trajectory = evolve_exponential(sym, d.state, t_grid, with_sensitivity ? &d.sensitivity : nullptr);
                else if (with_sensitivity)
                    out[i].trajectory = evolve_with_sensitivity(sym, d.state, d.sensitivity, t_grid, cfg);
                else
                    out[i].trajectory = evolve_mode(sym, d.state, t_grid, cfg);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        },
        threads);
    return out;
}

inline CsvTable trajectory_table(const ModeTrajectory& tr) {
    std::vector<std::string> header{"t"};
    const int n = tr.states.empty() ? (tr.tau0 == 1 ? 8 : 7) : tr.states.front().dimension();
    for (int c = 0; c < n; ++c) {
        header.push_back(std::string("re_") + component_name(c));
        header.push_back(std::string("im_") + component_name(c));
    }
    header.push_back("J");
    CsvTable t(header);
    for (size_t k = 0; k < tr.states.size(); ++k) {
        std::vector<double> row{tr.times[k]};
        for (int c = 0; c < n; ++c) {
            row.push_back(tr.states[k].amp(c).real());
            row.push_back(tr.states[k].amp(c).imag());
        }
        row.push_back(tr.states[k].J);
        t.add_row(row);
    }
    return t;
}

inline std::filesystem::path trajectory_filename(double xi) { return "mode_" + fmt(xi) + ".csv"; }

inline void write_trajectory(const std::filesystem::path& dir, const ModeTrajectory& tr) {
    trajectory_table(tr).write(dir / trajectory_filename(tr.xi));
}

}  // namespace rns
