#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "flatsim/core.hpp"
#include "flatsim/parameterize.hpp"

namespace flatsim {

/// Coefficients a (low order first) of z^R + a_{R-1} z^{R-1} + ... + a_0 with
/// the given roots. Roots must lie strictly inside the unit circle and close
/// under conjugation so the coefficients are real.
Vec pole_gains(const std::vector<std::complex<double>>& poles);
Vec pole_gains(const Vec& real_poles);

/// One controller memory entry: the window sample of `component` at `shift`.
struct ZEntry {
  int component = 0;
  int shift = 0;
};
using ZSelect = std::vector<ZEntry>;

/// Raised when a control update cannot be completed; the controller state is
/// left untouched. stage() is one of "transform", "invert", "input".
class ControllerFault : public std::runtime_error {
 public:
  ControllerFault(std::string stage, const std::string& message);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Verifies that the state map of the re-anchored `map`, extended by the
/// selected window entries, is a local diffeomorphism of the window at the
/// given point. Returns sigma_min/sigma_max of the square Jacobian; a ratio
/// below 1e-8, a non-square extension, or duplicate entries are errors.
double extend_to_diffeo(const ParameterizingMap& map, const ZSelect& z, const ShiftWindow& at);

struct ControllerConfig {
  std::vector<Vec> gains;  // per flat component, one coefficient per shift
  ZSelect z_select;
  /// Optional closed-form window reconstruction from (transformed state,
  /// memory); the generic path is a warm-started Newton solve.
  std::function<ShiftWindow(const Vec& xb, const Vec& z)> psi_hat;
  double newton_tol = 1e-10;
  int max_iters = 50;
};

/// Tracking controller by dynamic feedback: its memory holds selected window
/// entries, each update reconstructs the output window from the measured
/// state and the memory, appends the stabilizing sample and reads the input
/// off the extended window. Needs a map that consumes no backward shifts and
/// a uniform window depth R across components.
class FlatnessController {
 public:
  FlatnessController(ParameterizingMap map, CoordinateChange change, ControllerConfig cfg);

  struct State {
    Vec z;
    ShiftWindow warm;  // previous window estimate advanced one shift
    Vec last_u;        // input of the previous update, held on faults
  };

  struct StepResult {
    Vec u;               // physical input
    Vec v;               // appended window sample (virtual input)
    ShiftWindow window;  // estimate plus v, shifts [0, R]
    Vec y_est;           // flat-output estimate at shift 0
  };

  int depth() const { return R_; }
  int flat_dim() const { return m_; }
  const ParameterizingMap& map() const { return map_; }

  /// Memory matching the reference: z from its selected entries, the warm
  /// start from its samples, the held input from its window.
  State init_state(const ShiftWindow& ref) const;

  /// One update from a measurement in original coordinates; ref must cover
  /// shifts [0, R]. Mutates st only on success.
  StepResult control_step(const Vec& x, const ShiftWindow& ref, State& st) const;
  StepResult control_step_transformed(const Vec& xb, const ShiftWindow& ref, State& st) const;

  /// Window estimate w with state map w -> xb and selected entries z.
  ShiftWindow invert_psi(const Vec& xb, const Vec& z, const ShiftWindow* warm = nullptr) const;

  /// v per component: reference at shift R plus the gain-weighted estimate
  /// errors below it.
  Vec stabilizing_v(const ShiftWindow& est, const ShiftWindow& ref) const;

  /// Reads the input off the assembled window [0, R] and advances the memory
  /// to the once-shifted selected entries. Mutates st only on success.
  Vec dynamic_feedback_step(const ShiftWindow& window, State& st) const;

 private:
  ParameterizingMap map_;
  CoordinateChange change_;
  ControllerConfig cfg_;
  int m_ = 0;
  int R_ = 0;
};

}  // namespace flatsim
