#pragma once

#include <memory>

#include "flatsim/core.hpp"
#include "flatsim/parameterize.hpp"
#include "flatsim/triangular.hpp"

namespace flatsim {

/// Planar VTOL aircraft. Two rotor thrusts act at lateral offset l and height
/// offset h from the center of mass, tilted outward by alpha.
struct VtolParams {
  double m = 1.0;      // mass
  double J = 0.1;      // moment of inertia
  double l = 0.2;      // lateral rotor offset
  double h = 0.05;     // vertical rotor offset
  double alpha = 0.3;  // rotor tilt angle
  double g = 9.81;     // gravity

  void validate() const;
  /// Torque per unit thrust difference.
  double kappa() const;
  /// Distance from the center of mass to the oscillation-free output point.
  double epsilon() const;
  /// Per-rotor thrust that holds level hover.
  double hover_thrust() const;
};

/// x = (qx, qz, theta, vx, vz, omega), u = (F1, F2). Equilibrium at the
/// origin with both rotors at hover thrust.
ContinuousSystem vtol_system(const VtolParams& p = {});

/// State change to (px, pz, wx, wz, theta, omega) where (px, pz) is the
/// oscillation-free point and (wx, wz) its velocity, plus the input change to
/// ub = (sin(theta) B, kappa (F2 - F1)) with B the specific thrust along the
/// body axis corrected by the centripetal term. The input inverse is singular
/// at theta = 0 where ub1 carries no thrust information.
CoordinateChange vtol_transforms(const VtolParams& p = {});

/// Dynamics in the transformed state with the original input; smooth
/// everywhere including hover.
ContinuousSystem vtol_transformed_system(const VtolParams& p = {});

/// Triangular form of the transformed system in the transformed input, four
/// blocks deep with the output point as flat output. Carries a stage seed for
/// the pitch block that picks the Newton branch continuous in the window.
std::shared_ptr<const TriangularForm> vtol_triangular_form(const VtolParams& p = {});

/// Closed-form parameterization for the given scheme and step size. The input
/// recovery stays regular at hover (it resolves B by projection instead of
/// dividing by sin(theta)) and reproduces the hover thrust on constant
/// windows. Scheme and Ts must match the discrete system the form is
/// registered with.
ClosedFormParam vtol_closed_form_param(const VtolParams& p, Scheme scheme, double Ts);

/// Reconstructs the four-sample flat-output window of the re-anchored
/// implicit-scheme map from the transformed state xb and the controller
/// memory z = (y2 at shift 0, y2 at shift 1). Errors when no window maps back
/// to (xb, z), which also catches a pitch outside the principal branch.
ShiftWindow vtol_psi_hat(const VtolParams& p, double Ts, const Vec& xb, const Vec& z);

}  // namespace flatsim
