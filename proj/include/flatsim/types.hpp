#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace flatsim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Discretization rule for a continuous-time system.
enum class Scheme { implicit_euler, explicit_euler };

inline const char* scheme_name(Scheme s) {
  return s == Scheme::implicit_euler ? "implicit" : "explicit";
}

/// A computation produced non-finite values or an iteration broke down.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A map was evaluated at (or too close to) a structural singularity.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace flatsim
