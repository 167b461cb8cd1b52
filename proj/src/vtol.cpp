#include "flatsim/vtol.hpp"

#include <cmath>

namespace flatsim {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;

// Angle increment a - b mapped to (-pi, pi], keeps difference quotients of a
// wrapped angle continuous.
double angdiff(double a, double b) { return std::remainder(a - b, kTwoPi); }
}  // namespace

void VtolParams::validate() const {
  if (!(m > 0.0) || !(J > 0.0) || !(l > 0.0) || !(g > 0.0))
    throw std::invalid_argument("VtolParams: m, J, l, g must be positive");
  if (!(h >= 0.0)) throw std::invalid_argument("VtolParams: h must be nonnegative");
  if (!(alpha > 0.0) || !(alpha < 1.5707963267948966))
    throw std::invalid_argument("VtolParams: alpha must lie in (0, pi/2)");
}

double VtolParams::kappa() const {
  return (l * std::cos(alpha) + h * std::sin(alpha)) / J;
}

double VtolParams::epsilon() const {
  return J * std::sin(alpha) / (m * (l * std::cos(alpha) + h * std::sin(alpha)));
}

double VtolParams::hover_thrust() const { return m * g / (2.0 * std::cos(alpha)); }

ContinuousSystem vtol_system(const VtolParams& p) {
  p.validate();
  const double ca = std::cos(p.alpha), sa = std::sin(p.alpha);
  const double m = p.m, g = p.g, kap = p.kappa();
  auto f = [=](const Vec& x, const Vec& u) -> Vec {
    const double st = std::sin(x(2)), ct = std::cos(x(2));
    const double sum = (u(0) + u(1)) / m, dif = (u(0) - u(1)) / m;
    Vec dx(6);
    dx << x(3), x(4), x(5),
        sum * ca * st + dif * sa * ct,
        sum * ca * ct - dif * sa * st - g,
        kap * (u(1) - u(0));
    return dx;
  };
  auto jac = [=](const Vec& x, const Vec& u) -> Mat {
    const double st = std::sin(x(2)), ct = std::cos(x(2));
    const double sum = (u(0) + u(1)) / m, dif = (u(0) - u(1)) / m;
    Mat J = Mat::Zero(6, 6);
    J(0, 3) = J(1, 4) = J(2, 5) = 1.0;
    J(3, 2) = sum * ca * ct - dif * sa * st;
    J(4, 2) = -sum * ca * st - dif * sa * ct;
    return J;
  };
  Vec xe = Vec::Zero(6);
  Vec ue = Vec::Constant(2, p.hover_thrust());
  return ContinuousSystem(6, 2, f, std::make_pair(xe, ue), jac);
}

CoordinateChange vtol_transforms(const VtolParams& p) {
  p.validate();
  const double eps = p.epsilon(), kap = p.kappa();
  const double ca = std::cos(p.alpha), m = p.m;
  CoordinateChange ch;
  ch.n = 6;
  ch.m = 2;
  ch.state_fwd = [eps](const Vec& x) -> Vec {
    const double st = std::sin(x(2)), ct = std::cos(x(2));
    Vec xb(6);
    xb << x(0) + eps * st, x(1) + eps * ct,
        x(3) + eps * x(5) * ct, x(4) - eps * x(5) * st,
        x(2), x(5);
    return xb;
  };
  ch.state_inv = [eps](const Vec& xb) -> Vec {
    const double th = xb(4), om = xb(5);
    const double st = std::sin(th), ct = std::cos(th);
    Vec x(6);
    x << xb(0) - eps * st, xb(1) - eps * ct, th,
        xb(2) - eps * om * ct, xb(3) + eps * om * st, om;
    return x;
  };
  ch.state_jac = [eps](const Vec& x) -> Mat {
    const double st = std::sin(x(2)), ct = std::cos(x(2)), om = x(5);
    Mat J = Mat::Zero(6, 6);
    J(0, 0) = 1.0;
    J(0, 2) = eps * ct;
    J(1, 1) = 1.0;
    J(1, 2) = -eps * st;
    J(2, 2) = -eps * om * st;
    J(2, 3) = 1.0;
    J(2, 5) = eps * ct;
    J(3, 2) = -eps * om * ct;
    J(3, 4) = 1.0;
    J(3, 5) = -eps * st;
    J(4, 2) = 1.0;
    J(5, 5) = 1.0;
    return J;
  };
  ch.input_fwd = [eps, kap, ca, m](const Vec& x, const Vec& u) -> Vec {
    const double om = x(5);
    const double B = (u(0) + u(1)) * ca / m - eps * om * om;
    Vec ub(2);
    ub << std::sin(x(2)) * B, kap * (u(1) - u(0));
    return ub;
  };
  ch.input_inv_shifted = [eps, kap, ca, m](const Vec& xb, const Vec& ub) -> Vec {
    const double th = xb(4), om = xb(5);
    const double a = std::sin(th) * ca / m;
    const double det = 2.0 * a * kap;
    if (std::abs(det) <= 1e-10)
      throw SingularityError("vtol input transformation not invertible (determinant " +
                             std::to_string(det) + ")");
    const double sum = (ub(0) + eps * om * om * std::sin(th)) / a;
    const double dif = ub(1) / kap;
    Vec u(2);
    u << 0.5 * (sum - dif), 0.5 * (sum + dif);
    return u;
  };
  return ch;
}

ContinuousSystem vtol_transformed_system(const VtolParams& p) {
  p.validate();
  const double eps = p.epsilon(), kap = p.kappa();
  const double ca = std::cos(p.alpha), m = p.m, g = p.g;
  auto f = [=](const Vec& xb, const Vec& u) -> Vec {
    const double th = xb(4), om = xb(5);
    const double B = (u(0) + u(1)) * ca / m - eps * om * om;
    Vec dx(6);
    dx << xb(2), xb(3), std::sin(th) * B, std::cos(th) * B - g, om, kap * (u(1) - u(0));
    return dx;
  };
  auto jac = [=](const Vec& xb, const Vec& u) -> Mat {
    const double th = xb(4), om = xb(5);
    const double st = std::sin(th), ct = std::cos(th);
    const double B = (u(0) + u(1)) * ca / m - eps * om * om;
    Mat J = Mat::Zero(6, 6);
    J(0, 2) = J(1, 3) = 1.0;
    J(2, 4) = ct * B;
    J(2, 5) = -2.0 * eps * om * st;
    J(3, 4) = -st * B;
    J(3, 5) = -2.0 * eps * om * ct;
    J(4, 5) = 1.0;
    return J;
  };
  Vec xe(6);
  xe << 0.0, eps, 0.0, 0.0, 0.0, 0.0;
  Vec ue = Vec::Constant(2, p.hover_thrust());
  return ContinuousSystem(6, 2, f, std::make_pair(xe, ue), jac);
}

std::shared_ptr<const TriangularForm> vtol_triangular_form(const VtolParams& p) {
  p.validate();
  const double g = p.g;
  std::vector<TriangularBlock> blocks(4);

  // Level 4: output point positions, driven by their velocities.
  blocks[0].y_dim = 2;
  blocks[0].xhat_dim = 0;
  blocks[0].u_dim = 0;
  blocks[0].state_deps = {3};
  blocks[0].f = [](const Vec& x, const Vec&) -> Vec {
    Vec v(2);
    v << x(2), x(3);
    return v;
  };

  // Level 3: velocities, driven by the pitch and the first transformed input.
  // Undefined at pitch 0; the parameterization handles hover in closed form.
  blocks[1].y_dim = 0;
  blocks[1].xhat_dim = 2;
  blocks[1].u_dim = 1;
  blocks[1].state_deps = {2};
  blocks[1].input_deps = {2};
  blocks[1].f = [g](const Vec& x, const Vec& u) -> Vec {
    Vec v(2);
    v << u(0), u(0) / std::tan(x(4)) - g;
    return v;
  };
  // Exact solution of this block's stage equations; fixes the pitch branch
  // (the equations only see cot(theta), so theta and theta - pi both solve
  // them). The same difference quotients solve both schemes.
  blocks[1].stage_seed = [g](const StageContext& sc) -> Vec {
    const Vec w0 = sc.state(3, sc.base);
    const Vec w1 = sc.state(3, sc.base + 1);
    const double mu = (w1(0) - w0(0)) / sc.Ts;
    const double th = std::atan2(sc.Ts * mu, w1(1) - w0(1) + sc.Ts * g);
    Vec v(2);
    v << th, mu;
    return v;
  };

  // Level 2: pitch, driven by the pitch rate.
  blocks[2].y_dim = 0;
  blocks[2].xhat_dim = 1;
  blocks[2].u_dim = 0;
  blocks[2].state_deps = {1};
  blocks[2].f = [](const Vec& x, const Vec&) -> Vec { return Vec::Constant(1, x(5)); };

  // Level 1: pitch rate, driven by the second transformed input.
  blocks[3].y_dim = 0;
  blocks[3].xhat_dim = 1;
  blocks[3].u_dim = 1;
  blocks[3].input_deps = {0};
  blocks[3].f = [](const Vec&, const Vec& u) -> Vec { return Vec::Constant(1, u(1)); };

  Vec x_ref(6);
  x_ref << 0.0, p.epsilon(), 0.4, 0.2, 0.3, 0.05;
  Vec u_ref(2);
  u_ref << 1.5, 0.1;
  return std::make_shared<const TriangularForm>(std::move(blocks), x_ref, u_ref);
}

namespace {

// Pitch solving the velocity-block equations from three consecutive output
// samples: tan(theta) matches the horizontal and vertical acceleration
// difference quotients. Degenerate when both vanish (ballistic window).
double pitch_from(const ShiftWindow& w, int t, double Ts, double g) {
  const Vec a = w.at(t), b = w.at(t - 1), c = w.at(t - 2);
  const double num = a(0) - 2.0 * b(0) + c(0);
  const double den = a(1) - 2.0 * b(1) + c(1) + Ts * Ts * g;
  if (std::hypot(num, den) <= 1e-12)
    throw SingularityError("vtol parameterization: window in free fall, pitch undefined");
  return std::atan2(num, den);
}

}  // namespace

ClosedFormParam vtol_closed_form_param(const VtolParams& p, Scheme scheme, double Ts) {
  p.validate();
  if (!(Ts > 0.0)) throw std::invalid_argument("vtol_closed_form_param: Ts must be positive");
  const double g = p.g, eps = p.epsilon(), kap = p.kappa();
  const double ca = std::cos(p.alpha), m = p.m;
  ClosedFormParam cf;

  if (scheme == Scheme::implicit_euler) {
    // Backward difference quotients; pitch at shift t uses samples t-2..t.
    auto theta = [g, Ts](const ShiftWindow& w, int t) { return pitch_from(w, t, Ts, g); };
    auto state = [theta, Ts](const ShiftWindow& w, int b) -> Vec {
      const Vec y0 = w.at(b), ym = w.at(b - 1);
      const double th = theta(w, b);
      Vec x(6);
      x << y0(0), y0(1), (y0(0) - ym(0)) / Ts, (y0(1) - ym(1)) / Ts, th,
          angdiff(th, theta(w, b - 1)) / Ts;
      return x;
    };
    cf.state = state;
    cf.eval = [theta, state, Ts](const ShiftWindow& w, int b) -> std::pair<Vec, Vec> {
      Vec x = state(w, b);
      const Vec yp = w.at(b + 1), y0 = w.at(b), ym = w.at(b - 1);
      const double thp = theta(w, b + 1);
      Vec u(2);
      u << (yp(0) - 2.0 * y0(0) + ym(0)) / (Ts * Ts),
          (angdiff(thp, x(4)) - Ts * x(5)) / (Ts * Ts);
      return {std::move(x), std::move(u)};
    };
    cf.input = [theta, g, eps, kap, ca, m, Ts](const ShiftWindow& w, int b) -> Vec {
      const Vec y2 = w.at(b + 1), y1 = w.at(b), y0 = w.at(b - 1);
      const double N = (y2(0) - 2.0 * y1(0) + y0(0)) / (Ts * Ts);
      const double D = (y2(1) - 2.0 * y1(1) + y0(1)) / (Ts * Ts) + g;
      const double thp = theta(w, b + 1), th = theta(w, b), thm = theta(w, b - 1);
      // B recovered by projection onto the thrust direction; regular at hover
      // where dividing ub1 by sin(theta) is not.
      const double B = std::sin(thp) * N + std::cos(thp) * D;
      const double omp = angdiff(thp, th) / Ts;
      const double sum = m * (B + eps * omp * omp) / ca;
      const double dif = (angdiff(thp, th) - angdiff(th, thm)) / (Ts * Ts) / kap;
      Vec u(2);
      u << 0.5 * (sum - dif), 0.5 * (sum + dif);
      return u;
    };
    return cf;
  }

  // Explicit scheme: forward difference quotients, pitch at t uses t..t+2.
  auto theta = [g, Ts](const ShiftWindow& w, int t) { return pitch_from(w, t + 2, Ts, g); };
  auto state = [theta, Ts](const ShiftWindow& w, int b) -> Vec {
    const Vec y0 = w.at(b), yp = w.at(b + 1);
    const double th = theta(w, b);
    Vec x(6);
    x << y0(0), y0(1), (yp(0) - y0(0)) / Ts, (yp(1) - y0(1)) / Ts, th,
        angdiff(theta(w, b + 1), th) / Ts;
    return x;
  };
  cf.state = state;
  cf.eval = [theta, state, Ts](const ShiftWindow& w, int b) -> std::pair<Vec, Vec> {
    Vec x = state(w, b);
    const Vec y0 = w.at(b), y1 = w.at(b + 1), y2 = w.at(b + 2);
    const double th2 = theta(w, b + 2), th1 = theta(w, b + 1);
    Vec u(2);
    u << (y2(0) - 2.0 * y1(0) + y0(0)) / (Ts * Ts),
        (angdiff(th2, th1) - Ts * x(5)) / (Ts * Ts);
    return {std::move(x), std::move(u)};
  };
  cf.input = [theta, state, g, eps, kap, ca, m, Ts](const ShiftWindow& w, int b) -> Vec {
    Vec x = state(w, b);
    const Vec y0 = w.at(b), y1 = w.at(b + 1), y2 = w.at(b + 2);
    const double N = (y2(0) - 2.0 * y1(0) + y0(0)) / (Ts * Ts);
    const double D = (y2(1) - 2.0 * y1(1) + y0(1)) / (Ts * Ts) + g;
    const double B = std::sin(x(4)) * N + std::cos(x(4)) * D;
    const double sum = m * (B + eps * x(5) * x(5)) / ca;
    const double th2 = theta(w, b + 2), th1 = theta(w, b + 1);
    const double dif = (angdiff(th2, th1) - Ts * x(5)) / (Ts * Ts) / kap;
    Vec u(2);
    u << 0.5 * (sum - dif), 0.5 * (sum + dif);
    return u;
  };
  return cf;
}

ShiftWindow vtol_psi_hat(const VtolParams& p, double Ts, const Vec& xb, const Vec& z) {
  p.validate();
  if (xb.size() != 6 || z.size() != 2)
    throw std::invalid_argument("vtol_psi_hat: expected state of dimension 6 and memory of 2");
  const double g = p.g;
  Mat W(2, 4);  // column t holds the window sample at shift t
  W(0, 3) = xb(0);
  W(1, 3) = xb(1);
  W(0, 2) = xb(0) - Ts * xb(2);
  W(1, 2) = xb(1) - Ts * xb(3);
  W(1, 0) = z(0);
  W(1, 1) = z(1);
  const double d1 = W(1, 3) - 2.0 * W(1, 2) + W(1, 1) + Ts * Ts * g;
  W(0, 1) = d1 * std::tan(xb(4)) + 2.0 * W(0, 2) - W(0, 3);
  const double th0 = xb(4) - Ts * xb(5);
  const double d0 = W(1, 2) - 2.0 * W(1, 1) + W(1, 0) + Ts * Ts * g;
  W(0, 0) = d0 * std::tan(th0) + 2.0 * W(0, 1) - W(0, 2);

  ShiftWindow win(2, 0, 3);
  for (int t = 0; t <= 3; ++t) win.set(t, W.col(t));

  // The tan-based inversion silently accepts a pitch off by pi or a state the
  // window cannot produce; mapping forward arbitrates.
  ClosedFormParam cf = vtol_closed_form_param(p, Scheme::implicit_euler, Ts);
  Vec back = cf.state(win, 3);
  if (!all_finite(back) || (back - xb).norm() > 1e-10)
    throw NumericError("vtol_psi_hat: no output window maps to the given (state, memory) pair");
  return win;
}

}  // namespace flatsim
