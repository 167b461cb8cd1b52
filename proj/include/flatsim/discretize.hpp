#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "flatsim/core.hpp"
#include "flatsim/types.hpp"

namespace flatsim {

/// Settings for the damped Newton iteration behind implicit stepping and the
/// block solves. Damping halves the step only when the full step would
/// increase the residual norm.
struct ImplicitStepSettings {
  double Ts = 0.1;
  double newton_tol = 1e-12;
  int max_iters = 50;
  double damping = 0.5;

  void validate() const;
};

struct NewtonReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
};

/// A Newton-based solve failed to converge; carries the iteration report.
class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& what, NewtonReport rep)
      : std::runtime_error(what), report(rep) {}
  NewtonReport report;
};

namespace detail {

/// Solves residual(w) = 0 by damped Newton from guess. The Jacobian is
/// computed by central differences unless jac is supplied. Throws StepFailure
/// on iteration cap or a singular Jacobian, NumericError on non-finite values.
Vec newton_solve(const std::function<Vec(const Vec&)>& residual, const Vec& guess,
                 const ImplicitStepSettings& settings, NewtonReport* report = nullptr,
                 const std::function<Mat(const Vec&)>& jac = {});

}  // namespace detail

/// One implicit-Euler step: solves xn = x + Ts f(xn, u).
/// The initial guess defaults to the explicit-Euler predictor.
Vec implicit_step(const ContinuousSystem& sys, const Vec& x, const Vec& u,
                  const ImplicitStepSettings& settings, NewtonReport* report = nullptr,
                  const Vec* guess = nullptr);

/// One explicit-Euler step x + Ts f(x, u).
Vec explicit_step(const ContinuousSystem& sys, const Vec& x, const Vec& u, double Ts);

/// Classical fixed-step RK4 with the input held constant. duration must be an
/// integer multiple of Tn (within 1e-9 relative). Returns the final state;
/// when trajectory is non-null every intermediate state is appended.
Vec rk4_integrate(const ContinuousSystem& sys, const Vec& x0, const Vec& u, double Tn,
                  double duration, std::vector<Vec>* trajectory = nullptr);

/// One RK4 step of size Tn.
Vec rk4_step(const ContinuousSystem& sys, const Vec& x, const Vec& u, double Tn);

/// Least-squares slope of log(error) against log(step) for a one-step method
/// iterated over a fixed horizon. Errors are measured against a reference
/// trajectory integrator supplied by the caller.
/// step_sizes must hold at least 3 entries in geometric progression and divide
/// the horizon.
double observed_order(const std::function<Vec(double step)>& final_state_at_step,
                      const Vec& reference, const std::vector<double>& step_sizes);

}  // namespace flatsim
