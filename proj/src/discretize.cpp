#include "flatsim/discretize.hpp"

#include <cmath>

namespace flatsim {

void ImplicitStepSettings::validate() const {
  if (!(Ts > 0.0)) throw std::invalid_argument("ImplicitStepSettings: Ts must be > 0");
  if (!(newton_tol > 0.0)) throw std::invalid_argument("ImplicitStepSettings: newton_tol must be > 0");
  if (max_iters < 1) throw std::invalid_argument("ImplicitStepSettings: max_iters must be >= 1");
  if (!(damping > 0.0 && damping < 1.0))
    throw std::invalid_argument("ImplicitStepSettings: damping must lie in (0, 1)");
}

namespace detail {

Vec newton_solve(const std::function<Vec(const Vec&)>& residual, const Vec& guess,
                 const ImplicitStepSettings& settings, NewtonReport* report,
                 const std::function<Mat(const Vec&)>& jac) {
  NewtonReport rep;
  Vec w = guess;
  Vec r = residual(w);
  if (!all_finite(r)) throw NumericError("newton_solve: non-finite residual at initial guess");
  double rnorm = r.norm();

  while (rnorm > settings.newton_tol) {
    if (rep.iterations >= settings.max_iters) {
      rep.final_residual = rnorm;
      rep.converged = false;
      if (report) *report = rep;
      throw StepFailure("newton_solve: iteration cap reached, residual " + std::to_string(rnorm),
                        rep);
    }
    Mat J = jac ? jac(w) : jacobian_fd(residual, w);
    Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) {
      rep.final_residual = rnorm;
      rep.converged = false;
      if (report) *report = rep;
      throw StepFailure("newton_solve: singular Jacobian at iteration " +
                            std::to_string(rep.iterations),
                        rep);
    }
    Vec dw = lu.solve(-r);
    // Backtracking: engage damping only if the full step makes things worse.
    double lambda = 1.0;
    Vec w_try, r_try;
    double rnorm_try;
    for (;;) {
      w_try = w + lambda * dw;
      r_try = residual(w_try);
      if (all_finite(r_try)) {
        rnorm_try = r_try.norm();
        if (rnorm_try < rnorm || lambda < 1e-8) break;
      }
      lambda *= settings.damping;
      if (lambda < 1e-12) {
        rep.final_residual = rnorm;
        rep.converged = false;
        if (report) *report = rep;
        throw StepFailure("newton_solve: line search stalled, residual " + std::to_string(rnorm),
                          rep);
      }
    }
    w = w_try;
    r = r_try;
    rnorm = rnorm_try;
    ++rep.iterations;
  }
  rep.final_residual = rnorm;
  rep.converged = true;
  if (report) *report = rep;
  return w;
}

}  // namespace detail

Vec implicit_step(const ContinuousSystem& sys, const Vec& x, const Vec& u,
                  const ImplicitStepSettings& settings, NewtonReport* report, const Vec* guess) {
  settings.validate();
  if (x.size() != sys.n || u.size() != sys.m)
    throw std::invalid_argument("implicit_step: argument dimension mismatch");
  const double Ts = settings.Ts;
  auto residual = [&](const Vec& xn) -> Vec { return xn - x - Ts * eval_dynamics(sys, xn, u); };
  std::function<Mat(const Vec&)> jac;
  if (sys.jac_x) {
    jac = [&](const Vec& xn) -> Mat {
      return Mat::Identity(sys.n, sys.n) - Ts * sys.jac_x(xn, u);
    };
  }
  Vec w0 = guess ? *guess : Vec(x + Ts * eval_dynamics(sys, x, u));
  return detail::newton_solve(residual, w0, settings, report, jac);
}

Vec explicit_step(const ContinuousSystem& sys, const Vec& x, const Vec& u, double Ts) {
  if (!(Ts > 0.0)) throw std::invalid_argument("explicit_step: Ts must be > 0");
  return x + Ts * eval_dynamics(sys, x, u);
}

Vec rk4_step(const ContinuousSystem& sys, const Vec& x, const Vec& u, double Tn) {
  Vec k1 = eval_dynamics(sys, x, u);
  Vec k2 = eval_dynamics(sys, x + 0.5 * Tn * k1, u);
  Vec k3 = eval_dynamics(sys, x + 0.5 * Tn * k2, u);
  Vec k4 = eval_dynamics(sys, x + Tn * k3, u);
  return x + (Tn / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vec rk4_integrate(const ContinuousSystem& sys, const Vec& x0, const Vec& u, double Tn,
                  double duration, std::vector<Vec>* trajectory) {
  if (!(Tn > 0.0)) throw std::invalid_argument("rk4_integrate: Tn must be > 0");
  if (duration < 0.0) throw std::invalid_argument("rk4_integrate: negative duration");
  const double ratio = duration / Tn;
  const long steps = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio))
    throw std::invalid_argument("rk4_integrate: duration is not an integer multiple of Tn");
  Vec x = x0;
  for (long i = 0; i < steps; ++i) {
    x = rk4_step(sys, x, u, Tn);
    if (!all_finite(x))
      throw NumericError("rk4_integrate: state blew up at t = " +
                         std::to_string(static_cast<double>(i + 1) * Tn));
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

double observed_order(const std::function<Vec(double step)>& final_state_at_step,
                      const Vec& reference, const std::vector<double>& step_sizes) {
  if (step_sizes.size() < 3)
    throw std::invalid_argument("observed_order: need at least 3 step sizes");
  const double q = step_sizes[1] / step_sizes[0];
  for (size_t i = 1; i + 1 < step_sizes.size(); ++i) {
    const double qi = step_sizes[i + 1] / step_sizes[i];
    if (std::abs(qi - q) > 1e-9 * std::abs(q))
      throw std::invalid_argument("observed_order: step sizes must form a geometric progression");
  }
  // Least-squares fit of log(err) = p log(h) + c.
  const int N = static_cast<int>(step_sizes.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < N; ++i) {
    const double err = (final_state_at_step(step_sizes[i]) - reference).norm();
    if (!(err > 0.0)) throw NumericError("observed_order: zero or non-finite error sample");
    const double lx = std::log(step_sizes[i]);
    const double ly = std::log(err);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (N * sxy - sx * sy) / (N * sxx - sx * sx);
}

}  // namespace flatsim
