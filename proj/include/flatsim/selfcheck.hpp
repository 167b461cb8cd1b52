#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flatsim/control.hpp"
#include "flatsim/core.hpp"
#include "flatsim/sim.hpp"

namespace flatsim {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Fast identity checks across the whole pipeline, one result per line of the
/// CLI validate subcommand. Never throws; failures land in the results.
std::vector<CheckResult> run_identity_suites();

struct DiscreteLoopStep {
  Vec xb;              // transformed state the update saw
  Vec u;               // physical input applied
  Vec v;               // appended window sample
  ShiftWindow window;  // controller window, shifts [0, R]
  Vec y_est;
};

/// Closed loop of the controller against the matching Euler discretization of
/// the transformed dynamics, the model the control law is exact for.
/// override_v, when given, replaces the stabilizing sample.
std::vector<DiscreteLoopStep> run_discrete_loop(
    const FlatnessController& ctrl, const ContinuousSystem& transformed, Scheme scheme, double Ts,
    const Vec& xb0, int steps, const std::function<ShiftWindow(int)>& ref_at,
    const std::function<Vec(int, const ShiftWindow&)>& override_v = nullptr);

}  // namespace flatsim
