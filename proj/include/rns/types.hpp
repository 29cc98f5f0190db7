#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rns {

using cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;
using CVector = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;
using RVector = Eigen::VectorXd;

inline constexpr cplx I_UNIT{0.0, 1.0};
inline constexpr double PI = 3.14159265358979323846;

// Component slots of the mode state. M is present only for the memory system.
enum Component : int { V = 0, U = 1, Z = 2, Y = 3, PHI = 4, THETA = 5, P = 6, M = 7 };
inline constexpr int FIELD_COUNT = 7;

inline const char* component_name(int c) {
    static const char* names[] = {"v", "u", "z", "y", "phi", "theta", "p", "m"};
    return (c >= 0 && c < 8) ? names[c] : "?";
}

// Thrown when an operation's precondition on the wave-speed regime fails.
class RefusalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IntegrationError : public std::runtime_error {
  public:
    IntegrationError(const std::string& what, double xi, double t)
        : std::runtime_error(what + " (xi=" + std::to_string(xi) + ", t=" + std::to_string(t) + ")"),
          xi_(xi), t_(t) {}
    double xi() const { return xi_; }
    double t() const { return t_; }

  private:
    double xi_, t_;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ResolutionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace rns
