#pragma once
/*
 * key=value experiment configs.
 *
 *   [model]       tau0 rho1 rho2 rho3 k0 k1 k2 k3 l gamma
 *   [kernel]      d1 d2                      (tau0 = 1 only)
 *   [profile]     kind sigma weights component constrained
 *   [grid]        xi_nodes xi_min xi_max tmax_exp rate_points rate_lo rate_hi
 *   [integrator]  rel_tol abs_tol max_step
 *   [decay]       j fit_lo fit_hi l1_tmax_exp lq_times
 *
 * '#' starts a comment. [model] keys are mandatory (gamma only for tau0 = 0,
 * [kernel] only for tau0 = 1); everything else has defaults.
 */

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rns/csv.hpp"
#include "rns/integrator.hpp"
#include "rns/model.hpp"
#include "rns/types.hpp"

namespace rns {

struct GridConfig {
    int xi_nodes = 2048;
    double xi_min = 1e-3;  // sinh-grid scale: spacing is linear below it, logarithmic above
    double xi_max = 1e3;
    int tmax_exp = 20;  // dyadic ladder 2^0 .. 2^tmax_exp
    int rate_points = 41;
    double rate_lo = 1e-2, rate_hi = 1e2;

    bool operator==(const GridConfig&) const = default;
};

struct DecayConfig {
    std::vector<int> j{0, 1, 2};
    double fit_lo = 1e3, fit_hi = 1e6;
    int l1_tmax_exp = 10;
    std::vector<double> lq_times{0, 1, 4, 16};

    bool operator==(const DecayConfig&) const = default;
};

struct ExperimentConfig {
    ModelParams model;
    InitialProfile profile;
    GridConfig grid;
    IntegratorConfig integrator;
    DecayConfig decay;
};

inline bool operator==(const KernelParams& a, const KernelParams& b) { return a.d1 == b.d1 && a.d2 == b.d2; }

inline bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.rho1 == b.rho1 && a.rho2 == b.rho2 && a.rho3 == b.rho3 && a.k0 == b.k0 && a.k1 == b.k1 &&
           a.k2 == b.k2 && a.k3 == b.k3 && a.gamma == b.gamma && a.l == b.l && a.tau0 == b.tau0 &&
           a.kernel == b.kernel;
}

inline bool operator==(const InitialProfile& a, const InitialProfile& b) {
    return a.kind == b.kind && a.sigma == b.sigma && a.weights == b.weights && a.component == b.component &&
           a.constrained == b.constrained;
}

inline bool operator==(const IntegratorConfig& a, const IntegratorConfig& b) {
    return a.rel_tol == b.rel_tol && a.abs_tol == b.abs_tol && a.max_step == b.max_step &&
           a.initial_step == b.initial_step;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.model == b.model && a.profile == b.profile && a.grid == b.grid && a.integrator == b.integrator &&
           a.decay == b.decay;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

// Collects every problem before failing so one run reports them all.
class KeyReader {
  public:
    KeyReader(const std::map<std::string, std::map<std::string, std::pair<std::string, int>>>& kv,
              std::vector<std::string>& errors)
        : kv_(kv), errors_(errors) {}

    bool has(const std::string& sec, const std::string& key) const {
        auto s = kv_.find(sec);
        return s != kv_.end() && s->second.count(key);
    }

    template <class T>
    void get(const std::string& sec, const std::string& key, T& out, bool required = false) {
        auto s = kv_.find(sec);
        if (s == kv_.end() || !s->second.count(key)) {
            if (required) errors_.push_back("missing key [" + sec + "] " + key);
            return;
        }
        const auto& [text, line] = s->second.at(key);
        if (!convert(text, out)) errors_.push_back("line " + std::to_string(line) + ": bad value for [" + sec + "] " + key + ": '" + text + "'");
    }

  private:
    const std::map<std::string, std::map<std::string, std::pair<std::string, int>>>& kv_;
    std::vector<std::string>& errors_;

    static bool convert(const std::string& t, double& v) {
        try {
            size_t pos = 0;
            v = std::stod(t, &pos);
            return pos == t.size();
        } catch (...) {
            return false;
        }
    }
    static bool convert(const std::string& t, int& v) {
        try {
            size_t pos = 0;
            v = std::stoi(t, &pos);
            return pos == t.size();
        } catch (...) {
            return false;
        }
    }
    static bool convert(const std::string& t, bool& v) {
        if (t == "true" || t == "1") return v = true, true;
        if (t == "false" || t == "0") return v = false, true;
        return false;
    }
    static bool convert(const std::string& t, ProfileKind& v) {
        for (auto k : {ProfileKind::Gaussian, ProfileKind::FlatSpectrum, ProfileKind::PointMode})
            if (t == to_string(k)) return v = k, true;
        return false;
    }
    template <class T>
    static bool convert(const std::string& t, std::vector<T>& v) {
        std::vector<T> out;
        for (const auto& item : split_list(t)) {
            T x{};
            if (!convert(item, x)) return false;
            out.push_back(x);
        }
        if (out.empty()) return false;
        v = std::move(out);
        return true;
    }
    static bool convert(const std::string& t, std::array<double, FIELD_COUNT>& v) {
        std::vector<double> tmp;
        if (!convert(t, tmp) || tmp.size() != FIELD_COUNT) return false;
        std::copy(tmp.begin(), tmp.end(), v.begin());
        return true;
    }
};

inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> k{
        {"model", {"tau0", "rho1", "rho2", "rho3", "k0", "k1", "k2", "k3", "l", "gamma"}},
        {"kernel", {"d1", "d2"}},
        {"profile", {"kind", "sigma", "weights", "component", "constrained"}},
        {"grid", {"xi_nodes", "xi_min", "xi_max", "tmax_exp", "rate_points", "rate_lo", "rate_hi"}},
        {"integrator", {"rel_tol", "abs_tol", "max_step"}},
        {"decay", {"j", "fit_lo", "fit_hi", "l1_tmax_exp", "lq_times"}},
    };
    return k;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    std::vector<std::string> errors;
    std::map<std::string, std::map<std::string, std::pair<std::string, int>>> kv;
    std::string section;
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back(where + "malformed section header '" + line + "'");
                continue;
            }
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!detail::known_keys().count(section)) errors.push_back(where + "unknown section [" + section + "]");
            if (kv.count(section)) errors.push_back(where + "duplicate section [" + section + "]");
            kv[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(where + "expected key = value, got '" + line + "'");
            continue;
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) {
            errors.push_back(where + "key '" + key + "' outside any section");
            continue;
        }
        const auto known = detail::known_keys().find(section);
        if (known != detail::known_keys().end() && !known->second.count(key))
            errors.push_back(where + "unknown key '" + key + "' in [" + section + "]");
        if (kv[section].count(key)) errors.push_back(where + "duplicate key '" + key + "' in [" + section + "]");
        kv[section][key] = {value, lineno};
    }

    ExperimentConfig c;
    detail::KeyReader r(kv, errors);
    auto& m = c.model;
    r.get("model", "tau0", m.tau0, true);
    for (auto [name, ptr] : std::initializer_list<std::pair<const char*, double*>>{
             {"rho1", &m.rho1}, {"rho2", &m.rho2}, {"rho3", &m.rho3}, {"k0", &m.k0}, {"k1", &m.k1},
             {"k2", &m.k2}, {"k3", &m.k3}, {"l", &m.l}})
        r.get("model", name, *ptr, true);
    if (m.tau0 == 1) {
        KernelParams k;
        r.get("kernel", "d1", k.d1, true);
        r.get("kernel", "d2", k.d2, true);
        m.kernel = k;
        if (r.has("model", "gamma")) errors.push_back("[model] gamma is not used by the memory system (tau0 = 1)");
        m.gamma = 0;
    } else {
        r.get("model", "gamma", m.gamma, true);
        if (kv.count("kernel")) errors.push_back("[kernel] is only valid with tau0 = 1");
    }

    r.get("profile", "kind", c.profile.kind);
    r.get("profile", "sigma", c.profile.sigma);
    r.get("profile", "weights", c.profile.weights);
    r.get("profile", "component", c.profile.component);
    r.get("profile", "constrained", c.profile.constrained);

    auto& g = c.grid;
    r.get("grid", "xi_nodes", g.xi_nodes);
    r.get("grid", "xi_min", g.xi_min);
    r.get("grid", "xi_max", g.xi_max);
    r.get("grid", "tmax_exp", g.tmax_exp);
    r.get("grid", "rate_points", g.rate_points);
    r.get("grid", "rate_lo", g.rate_lo);
    r.get("grid", "rate_hi", g.rate_hi);

    r.get("integrator", "rel_tol", c.integrator.rel_tol);
    r.get("integrator", "abs_tol", c.integrator.abs_tol);
    r.get("integrator", "max_step", c.integrator.max_step);

    r.get("decay", "j", c.decay.j);
    r.get("decay", "fit_lo", c.decay.fit_lo);
    r.get("decay", "fit_hi", c.decay.fit_hi);
    r.get("decay", "l1_tmax_exp", c.decay.l1_tmax_exp);
    r.get("decay", "lq_times", c.decay.lq_times);

    if (errors.empty()) {
        const auto v = validate_params(c.model);
        for (const auto& e : v.violations) errors.push_back("[model] " + e);
        try {
            check_profile(c.profile);
            c.integrator.check();
        } catch (const std::exception& e) {
            errors.push_back(e.what());
        }
        if (g.xi_nodes < 2 || g.xi_nodes % 2) errors.push_back("[grid] xi_nodes must be even and >= 2");
        if (!(g.xi_min > 0 && g.xi_max > g.xi_min)) errors.push_back("[grid] need 0 < xi_min < xi_max");
        if (g.tmax_exp < 1 || g.tmax_exp > 40) errors.push_back("[grid] tmax_exp must lie in [1, 40]");
        if (g.rate_points < 2 || !(g.rate_lo > 0 && g.rate_hi > g.rate_lo))
            errors.push_back("[grid] need rate_points >= 2 and 0 < rate_lo < rate_hi");
        for (int j : c.decay.j)
            if (j < 0) errors.push_back("[decay] derivative orders must be >= 0");
        if (!(c.decay.fit_lo > 0 && c.decay.fit_hi > c.decay.fit_lo)) errors.push_back("[decay] need 0 < fit_lo < fit_hi");
        if (c.decay.l1_tmax_exp < 0 || c.decay.l1_tmax_exp > 14) errors.push_back("[decay] l1_tmax_exp must lie in [0, 14]");
    }

    if (!errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem" + (errors.size() > 1 ? "s" : "") + "):";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline std::string emit_config(const ExperimentConfig& c) {
    std::ostringstream os;
    auto list = [](const auto& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            if constexpr (std::is_same_v<std::decay_t<decltype(v[i])>, int>) s += std::to_string(v[i]);
            else s += fmt(v[i]);
        }
        return s;
    };
    const auto& m = c.model;
    os << "[model]\n"
       << "tau0 = " << m.tau0 << "\n"
       << "rho1 = " << fmt(m.rho1) << "\nrho2 = " << fmt(m.rho2) << "\nrho3 = " << fmt(m.rho3) << "\n"
       << "k0 = " << fmt(m.k0) << "\nk1 = " << fmt(m.k1) << "\nk2 = " << fmt(m.k2) << "\nk3 = " << fmt(m.k3) << "\n"
       << "l = " << fmt(m.l) << "\n";
    if (m.tau0 == 1 && m.kernel)
        os << "\n[kernel]\nd1 = " << fmt(m.kernel->d1) << "\nd2 = " << fmt(m.kernel->d2) << "\n";
    else
        os << "gamma = " << fmt(m.gamma) << "\n";
    os << "\n[profile]\nkind = " << to_string(c.profile.kind) << "\nsigma = " << fmt(c.profile.sigma)
       << "\nweights = " << list(c.profile.weights) << "\ncomponent = " << c.profile.component
       << "\nconstrained = " << (c.profile.constrained ? "true" : "false") << "\n";
    const auto& g = c.grid;
    os << "\n[grid]\nxi_nodes = " << g.xi_nodes << "\nxi_min = " << fmt(g.xi_min) << "\nxi_max = " << fmt(g.xi_max)
       << "\ntmax_exp = " << g.tmax_exp << "\nrate_points = " << g.rate_points << "\nrate_lo = " << fmt(g.rate_lo)
       << "\nrate_hi = " << fmt(g.rate_hi) << "\n";
    os << "\n[integrator]\nrel_tol = " << fmt(c.integrator.rel_tol) << "\nabs_tol = " << fmt(c.integrator.abs_tol)
       << "\nmax_step = " << fmt(c.integrator.max_step) << "\n";
    os << "\n[decay]\nj = " << list(c.decay.j) << "\nfit_lo = " << fmt(c.decay.fit_lo) << "\nfit_hi = "
       << fmt(c.decay.fit_hi) << "\nl1_tmax_exp = " << c.decay.l1_tmax_exp << "\nlq_times = " << list(c.decay.lq_times)
       << "\n";
    return os.str();
}

}  // namespace rns
