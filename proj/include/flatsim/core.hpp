#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "flatsim/types.hpp"

namespace flatsim {

using DynamicsFn = std::function<Vec(const Vec&, const Vec&)>;  // (x, u) -> dx/dt
using StateJacFn = std::function<Mat(const Vec&, const Vec&)>;  // (x, u) -> df/dx

/// Continuous-time system x' = f(x, u).
///
/// An equilibrium may be attached; when present it must satisfy
/// |f(x_eq, u_eq)| <= 1e-12. Systems produced by coordinate changes whose
/// input transformation is singular at the physical equilibrium carry none.
struct ContinuousSystem {
  int n = 0;  // state dimension
  int m = 0;  // input dimension
  DynamicsFn f;
  StateJacFn jac_x;  // optional analytic df/dx, finite differences otherwise
  std::optional<std::pair<Vec, Vec>> equilibrium;

  ContinuousSystem() = default;
  ContinuousSystem(int n_, int m_, DynamicsFn f_, std::optional<std::pair<Vec, Vec>> eq = {},
                   StateJacFn jac = {});
};

/// Evaluates the dynamics with dimension and finiteness checks.
Vec eval_dynamics(const ContinuousSystem& sys, const Vec& x, const Vec& u);

/// Central-difference Jacobian of fn at point.
/// The default step is 1e-6 * max(1, |point|); an explicit eps must be > 0.
Mat jacobian_fd(const std::function<Vec(const Vec&)>& fn, const Vec& point,
                std::optional<double> eps = std::nullopt);

/// Invertible change of state coordinates xb = state_fwd(x), optionally paired
/// with an input transformation ub = input_fwd(x, u).
///
/// input_inv_shifted recovers u from (xb_arg, ub); it is a pointwise inverse in
/// the state argument. Trajectory-level uses of an implicit discretization feed
/// it the forward-shifted state.
struct CoordinateChange {
  int n = 0;
  int m = 0;
  std::function<Vec(const Vec&)> state_fwd;
  std::function<Vec(const Vec&)> state_inv;
  std::function<Mat(const Vec&)> state_jac;  // optional analytic d(state_fwd)/dx
  std::function<Vec(const Vec&, const Vec&)> input_fwd;
  std::function<Vec(const Vec&, const Vec&)> input_inv_shifted;

  bool has_input_transform() const {
    return static_cast<bool>(input_fwd) && static_cast<bool>(input_inv_shifted);
  }
};

/// Dense table of flat-output samples indexed by integer shift over [lo, hi].
/// Every sample has dimension m; missing shifts do not exist by construction.
class ShiftWindow {
 public:
  ShiftWindow() = default;
  ShiftWindow(int m, int lo, int hi, std::vector<int> component_dims = {});

  int dim() const { return m_; }
  int lo() const { return lo_; }
  int hi() const { return hi_; }
  /// Per-flat-output-component dimensions; defaults to {m}. Sums to m.
  const std::vector<int>& component_dims() const { return component_dims_; }

  const Vec& at(int shift) const;
  void set(int shift, const Vec& y);

  /// Window as seen from a base advanced by d: shifted(d).at(j) == at(j + d).
  ShiftWindow shifted(int d) const;
  /// True when [a, b] is contained in [lo, hi].
  bool covers(int a, int b) const { return lo_ <= a && hi_ >= b; }

 private:
  int m_ = 0;
  int lo_ = 0;
  int hi_ = -1;
  std::vector<int> component_dims_;
  std::vector<Vec> data_;
};

enum class TransformMode { state_only, state_and_input };

/// Pushes a system through a coordinate change:
///   state_only:      xb' = J(x) f(x, u),                  x = state_inv(xb)
///   state_and_input: xb' = J(x) f(x, input_inv(xb, ub)),  inputs transformed too
/// The equilibrium is mapped along when the transformed dynamics evaluate
/// cleanly there and dropped otherwise.
ContinuousSystem transform_system(const ContinuousSystem& sys, const CoordinateChange& change,
                                  TransformMode mode);

}  // namespace flatsim
