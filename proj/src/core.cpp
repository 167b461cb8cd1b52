#include "flatsim/core.hpp"

#include <cmath>

namespace flatsim {

ContinuousSystem::ContinuousSystem(int n_, int m_, DynamicsFn f_,
                                   std::optional<std::pair<Vec, Vec>> eq, StateJacFn jac)
    : n(n_), m(m_), f(std::move(f_)), jac_x(std::move(jac)), equilibrium(std::move(eq)) {
  if (n <= 0 || m < 0) throw std::invalid_argument("ContinuousSystem: need n > 0, m >= 0");
  if (!f) throw std::invalid_argument("ContinuousSystem: dynamics callable missing");
  if (equilibrium) {
    const auto& [xs, us] = *equilibrium;
    if (xs.size() != n || us.size() != m)
      throw std::invalid_argument("ContinuousSystem: equilibrium dimension mismatch");
    Vec r = eval_dynamics(*this, xs, us);
    if (r.norm() > 1e-12)
      throw std::invalid_argument("ContinuousSystem: declared equilibrium has residual " +
                                  std::to_string(r.norm()));
  }
}

Vec eval_dynamics(const ContinuousSystem& sys, const Vec& x, const Vec& u) {
  if (x.size() != sys.n || u.size() != sys.m)
    throw std::invalid_argument("eval_dynamics: argument dimension mismatch");
  Vec dx = sys.f(x, u);
  if (dx.size() != sys.n)
    throw std::invalid_argument("eval_dynamics: dynamics returned wrong dimension");
  if (!all_finite(dx)) throw NumericError("eval_dynamics: non-finite dynamics value");
  return dx;
}

Mat jacobian_fd(const std::function<Vec(const Vec&)>& fn, const Vec& point,
                std::optional<double> eps) {
  if (eps && *eps <= 0.0) throw std::invalid_argument("jacobian_fd: eps must be > 0");
  const double h = eps ? *eps : 1e-6 * std::max(1.0, point.norm());
  Mat J;
  Vec p = point;
  for (int i = 0; i < point.size(); ++i) {
    const double pi = p(i);
    p(i) = pi + h;
    Vec fp = fn(p);
    p(i) = pi - h;
    Vec fm = fn(p);
    p(i) = pi;
    if (!all_finite(fp) || !all_finite(fm))
      throw NumericError("jacobian_fd: non-finite function value while probing column " +
                         std::to_string(i));
    if (J.size() == 0) J.resize(fp.size(), point.size());
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  if (J.size() == 0) J.resize(fn(point).size(), 0);
  return J;
}

ShiftWindow::ShiftWindow(int m, int lo, int hi, std::vector<int> component_dims)
    : m_(m), lo_(lo), hi_(hi), component_dims_(std::move(component_dims)) {
  if (m <= 0) throw std::invalid_argument("ShiftWindow: dimension must be positive");
  if (hi < lo) throw std::invalid_argument("ShiftWindow: empty shift range");
  if (component_dims_.empty()) component_dims_ = {m};
  int total = 0;
  for (int d : component_dims_) {
    if (d <= 0) throw std::invalid_argument("ShiftWindow: component dimensions must be positive");
    total += d;
  }
  if (total != m) throw std::invalid_argument("ShiftWindow: component dimensions must sum to m");
  data_.assign(static_cast<size_t>(hi - lo + 1), Vec::Zero(m));
}

const Vec& ShiftWindow::at(int shift) const {
  if (shift < lo_ || shift > hi_)
    throw std::out_of_range("ShiftWindow: shift " + std::to_string(shift) + " outside [" +
                            std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
  return data_[static_cast<size_t>(shift - lo_)];
}

void ShiftWindow::set(int shift, const Vec& y) {
  if (shift < lo_ || shift > hi_)
    throw std::out_of_range("ShiftWindow::set: shift outside range");
  if (y.size() != m_) throw std::invalid_argument("ShiftWindow::set: sample dimension mismatch");
  data_[static_cast<size_t>(shift - lo_)] = y;
}

ShiftWindow ShiftWindow::shifted(int d) const {
  ShiftWindow w = *this;
  w.lo_ -= d;
  w.hi_ -= d;
  return w;
}

ContinuousSystem transform_system(const ContinuousSystem& sys, const CoordinateChange& change,
                                  TransformMode mode) {
  if (change.n != sys.n || change.m != sys.m)
    throw std::invalid_argument("transform_system: change dimensions do not match system");
  if (!change.state_fwd || !change.state_inv)
    throw std::invalid_argument("transform_system: state maps missing");
  if (mode == TransformMode::state_and_input && !change.has_input_transform())
    throw std::invalid_argument("transform_system: input transformation required for this mode");

  auto jac_at = [change](const Vec& x) -> Mat {
    if (change.state_jac) return change.state_jac(x);
    return jacobian_fd(change.state_fwd, x);
  };
  DynamicsFn fwd = [sys, change, mode, jac_at](const Vec& xb, const Vec& w) -> Vec {
    Vec x = change.state_inv(xb);
    Vec u = (mode == TransformMode::state_and_input) ? change.input_inv_shifted(xb, w) : w;
    return jac_at(x) * eval_dynamics(sys, x, u);
  };

  std::optional<std::pair<Vec, Vec>> eq;
  if (sys.equilibrium) {
    const auto& [xs, us] = *sys.equilibrium;
    Vec xbs = change.state_fwd(xs);
    try {
      Vec ws = (mode == TransformMode::state_and_input) ? change.input_fwd(xs, us) : us;
      Vec r = fwd(xbs, ws);
      if (all_finite(r) && r.norm() <= 1e-12) eq = {{xbs, ws}};
    } catch (const std::exception&) {
      // transformed dynamics not evaluable at the mapped equilibrium; leave it undeclared
    }
  }
  return ContinuousSystem(sys.n, sys.m, std::move(fwd), std::move(eq));
}

}  // namespace flatsim
