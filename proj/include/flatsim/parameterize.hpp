#pragma once

#include <memory>
#include <optional>

#include "flatsim/discretize.hpp"
#include "flatsim/triangular.hpp"

namespace flatsim {

/// Euler discretization of a triangular form with step size Ts. Construction
/// verifies the block solvability conditions at the reference point for the
/// chosen scheme and reports the first failing block otherwise.
class DiscreteTriangularSystem {
 public:
  DiscreteTriangularSystem(std::shared_ptr<const TriangularForm> tf, Scheme scheme, double Ts,
                           ImplicitStepSettings solver = {});

  const TriangularForm& form() const { return *tf_; }
  std::shared_ptr<const TriangularForm> form_ptr() const { return tf_; }
  Scheme scheme() const { return scheme_; }
  double Ts() const { return settings_.Ts; }
  const ImplicitStepSettings& solver() const { return settings_; }

  /// Advances the discrete system one sample. For the implicit scheme this
  /// solves x_next = x + Ts f(x_next, u) by damped Newton (explicit predictor
  /// unless a guess is given).
  Vec step(const Vec& x, const Vec& u, const Vec* guess = nullptr) const;

 private:
  std::shared_ptr<const TriangularForm> tf_;
  Scheme scheme_;
  ImplicitStepSettings settings_;
};

/// Closed-form replacements for the generic block solves, registered per model.
/// eval produces (x, u_transformed) at the given window shift; state produces
/// the state part alone (it must get by with the state window coverage); input
/// recovers the original (untransformed) input there. All receive the map's
/// window in its own shift indexing.
struct ClosedFormParam {
  std::function<std::pair<Vec, Vec>(const ShiftWindow&, int base)> eval;
  std::function<Vec(const ShiftWindow&, int base)> state;
  std::function<Vec(const ShiftWindow&, int base)> input;
};

/// Map from a window of flat-output samples to the state and input of the
/// discrete system, built block by block from the top. back_shifts/fwd_shifts
/// hold, per scalar flat-output component, how many backward and forward
/// shifts of that component evaluation may touch; they are derived from the
/// declared block dependencies, so they are exact integers.
class ParameterizingMap {
 public:
  struct Result {
    Vec x;  // full state of the triangular form
    Vec u;  // transformed input vector
  };

  const Eigen::VectorXi& back_shifts() const { return r1_; }          // R1 per component
  const Eigen::VectorXi& fwd_shifts() const { return r2_; }           // R2 per component
  const Eigen::VectorXi& state_fwd_shifts() const { return r2_state_; }
  int max_back() const { return r1_.size() ? r1_.maxCoeff() : 0; }
  int max_fwd() const { return r2_.size() ? r2_.maxCoeff() : 0; }
  /// Per-component window depth R1 + R2 (the chain length after re-origin).
  Eigen::VectorXi window_depths() const { return r1_ + r2_; }

  const DiscreteTriangularSystem& system() const { return *dts_; }
  std::shared_ptr<const DiscreteTriangularSystem> system_ptr() const { return dts_; }
  bool has_closed_form() const { return closed_.has_value() && static_cast<bool>(closed_->eval); }

  /// Evaluates the map at the given shift. The window must cover
  /// [base - max_back, base + max_fwd]. Solver failures identify the block
  /// and shift they occurred at.
  Result evaluate(const ShiftWindow& w, int base = 0) const;
  /// Like evaluate but forces the generic block-solve path even when a closed
  /// form is registered.
  Result evaluate_generic(const ShiftWindow& w, int base = 0) const;
  /// State part only; needs window coverage [base - max_back, base + max state fwd].
  Vec evaluate_state(const ShiftWindow& w, int base = 0) const;

  /// Original-system input at the given shift via the registered closed form,
  /// or u = input_inv(x_next, u_transformed) with x_next the once-shifted
  /// state for the implicit scheme (non-shifted for the explicit one).
  Vec recover_input(const ShiftWindow& w, const CoordinateChange& change, int base = 0) const;

  friend ParameterizingMap build_parameterizer(std::shared_ptr<const DiscreteTriangularSystem>,
                                               std::optional<ClosedFormParam>);
  friend ParameterizingMap redefine_shift_origin(const ParameterizingMap&);

 private:
  ParameterizingMap() = default;
  Result evaluate_impl(const ShiftWindow& w, int base, bool allow_closed) const;

  std::shared_ptr<const DiscreteTriangularSystem> dts_;
  Eigen::VectorXi r1_, r2_, r2_state_;
  Eigen::VectorXi origin_;  // per-component shift added by redefine_shift_origin
  std::optional<ClosedFormParam> closed_;
};

/// Builds the parameterizing map of a discrete triangular system, optionally
/// registering closed-form solvers. Explicit-scheme maps never consume
/// backward shifts (R1 = 0).
ParameterizingMap build_parameterizer(std::shared_ptr<const DiscreteTriangularSystem> dts,
                                      std::optional<ClosedFormParam> closed = std::nullopt);

/// Original-system input from the window (see ParameterizingMap::recover_input).
Vec recover_original_input(const ParameterizingMap& map, const ShiftWindow& w,
                           const CoordinateChange& change);

/// Replays the parameterization against the discrete dynamics: for each of the
/// given steps, the state evaluated at shift k+1 is compared with stepping the
/// discrete system from the evaluation at shift k. Returns the largest
/// mismatch norm. The window must cover [-max_back, steps + max_fwd].
double roundtrip_validate(const ParameterizingMap& map, const ShiftWindow& sequence, int steps);

/// Re-anchors every flat-output component so the map consumes shifts
/// [0, R1_j + R2_j] only. Applying it twice is an error.
ParameterizingMap redefine_shift_origin(const ParameterizingMap& map);

}  // namespace flatsim
