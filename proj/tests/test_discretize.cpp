#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "flatsim/discretize.hpp"
#include "oracles.hpp"

using namespace flatsim;

namespace {

ContinuousSystem linear2(const Mat& A, const Mat& B) {
  return ContinuousSystem(2, 1, [A, B](const Vec& x, const Vec& u) { return Vec(A * x + B * u); },
                          std::nullopt,
                          [A](const Vec&, const Vec&) { return A; });
}

}  // namespace

TEST_CASE("implicit step solves the linear resolvent exactly") {
  Mat A(2, 2), B(2, 1);
  A << -1.0, 2.0, 0.5, -3.0;
  B << 0.0, 1.0;
  ContinuousSystem sys = linear2(A, B);

  ImplicitStepSettings st;
  st.Ts = 0.1;
  Vec x = (Vec(2) << 1.0, -0.5).finished();
  Vec u = Vec::Constant(1, 0.7);

  NewtonReport rep;
  Vec xn = implicit_step(sys, x, u, st, &rep);
  Vec want = (Mat::Identity(2, 2) - st.Ts * A).lu().solve(x + st.Ts * B * u);
  CHECK((xn - want).norm() < 1e-11);
  CHECK(rep.converged);
  CHECK(rep.final_residual < st.newton_tol);
}

TEST_CASE("implicit step stays stable on the stiff decay the explicit step loses") {
  ContinuousSystem sys(1, 0, [](const Vec& x, const Vec&) { return Vec(-1000.0 * x); });
  double Ts = 0.1;
  Vec x0 = Vec::Constant(1, 1.0);

  ImplicitStepSettings st;
  st.Ts = Ts;
  Vec xi = implicit_step(sys, x0, Vec(0), st);
  CHECK(std::abs(xi(0)) == doctest::Approx(1.0 / 101.0));

  Vec xe = explicit_step(sys, x0, Vec(0), Ts);
  CHECK(std::abs(xe(0)) == doctest::Approx(99.0));
}

TEST_CASE("implicit step reports failure when the stage equation has no solution") {
  // xn = x + Ts (xn^2 + 1) has negative discriminant for x large enough.
  ContinuousSystem sys(1, 0,
                       [](const Vec& x, const Vec&) { return Vec(x.array().square() + 1.0); });
  ImplicitStepSettings st;
  st.Ts = 0.1;
  CHECK_THROWS_AS(implicit_step(sys, Vec::Constant(1, 10.0), Vec(0), st), StepFailure);

  try {
    implicit_step(sys, Vec::Constant(1, 10.0), Vec(0), st);
  } catch (const StepFailure& e) {
    CHECK_FALSE(e.report.converged);
    CHECK(e.report.iterations > 0);
  }
}

TEST_CASE("settings validation rejects nonsense") {
  ImplicitStepSettings st;
  st.Ts = 0.0;
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
  st.Ts = 0.1;
  st.newton_tol = -1.0;
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
  st.newton_tol = 1e-12;
  st.max_iters = 0;
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
  st.max_iters = 50;
  st.damping = 1.5;
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
}

TEST_CASE("rk4 step reproduces the quartic taylor polynomial on a linear system") {
  double lam = -0.8, h = 0.05;
  ContinuousSystem sys(1, 0, [lam](const Vec& x, const Vec&) { return Vec(lam * x); });
  Vec x0 = Vec::Constant(1, 2.0);
  Vec x1 = rk4_step(sys, x0, Vec(0), h);
  double z = lam * h;
  double want = 2.0 * (1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0);
  CHECK(x1(0) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("rk4 integrate enforces the grid and flags blow-ups") {
  ContinuousSystem dec(1, 0, [](const Vec& x, const Vec&) { return Vec(-x); });
  std::vector<Vec> traj;
  Vec xf = rk4_integrate(dec, Vec::Constant(1, 1.0), Vec(0), 0.01, 0.5, &traj);
  CHECK(traj.size() == 50);
  CHECK(xf(0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));

  CHECK_THROWS_AS(rk4_integrate(dec, Vec::Constant(1, 1.0), Vec(0), 0.01, 0.505),
                  std::invalid_argument);
  CHECK_THROWS_AS(rk4_integrate(dec, Vec::Constant(1, 1.0), Vec(0), -0.01, 0.5),
                  std::invalid_argument);

  // Finite-time escape of x' = x^2 from x = 1 at t = 1.
  ContinuousSystem quad(1, 0, [](const Vec& x, const Vec&) { return Vec(x.array().square()); });
  CHECK_THROWS_AS(rk4_integrate(quad, Vec::Constant(1, 1.0), Vec(0), 1e-3, 1.2), NumericError);
}

TEST_CASE("observed order recovers one for euler and four for rk4") {
  ContinuousSystem sys(2, 0, [](const Vec& x, const Vec&) {
    return Vec((Vec(2) << x(1), -std::sin(x(0))).finished());
  });
  Vec x0 = (Vec(2) << 0.9, 0.0).finished();
  double T = 1.0;
  Vec ref = rk4_integrate(sys, x0, Vec(0), 1e-4, T);

  auto euler_at = [&](double h) {
    Vec x = x0;
    int steps = static_cast<int>(std::lround(T / h));
    for (int i = 0; i < steps; ++i) x = explicit_step(sys, x, Vec(0), h);
    return x;
  };
  auto rk4_at = [&](double h) { return rk4_integrate(sys, x0, Vec(0), h, T); };

  std::vector<double> hs = {0.05, 0.025, 0.0125, 0.00625};
  double p_euler = observed_order(euler_at, ref, hs);
  CHECK(p_euler == doctest::Approx(1.0).epsilon(0.15));
  double p_rk4 = observed_order(rk4_at, ref, {0.1, 0.05, 0.025});
  CHECK(p_rk4 == doctest::Approx(4.0).epsilon(0.15));

  CHECK_THROWS_AS(observed_order(euler_at, ref, {0.1, 0.05}), std::invalid_argument);
  CHECK_THROWS_AS(observed_order(euler_at, ref, {0.1, 0.03, 0.02}), std::invalid_argument);
}

TEST_CASE("newton solve accepts an analytic jacobian and converges from afar") {
  auto residual = [](const Vec& w) {
    Vec r(2);
    r << w(0) * w(0) + w(1) * w(1) - 4.0, w(0) - w(1);
    return r;
  };
  auto jac = [](const Vec& w) {
    Mat J(2, 2);
    J << 2.0 * w(0), 2.0 * w(1), 1.0, -1.0;
    return J;
  };
  ImplicitStepSettings st;
  NewtonReport rep;
  Vec sol = detail::newton_solve(residual, (Vec(2) << 3.0, 0.5).finished(), st, &rep, jac);
  CHECK(rep.converged);
  CHECK(std::abs(sol(0) - std::sqrt(2.0)) < 1e-10);
  CHECK(std::abs(sol(1) - std::sqrt(2.0)) < 1e-10);
}
