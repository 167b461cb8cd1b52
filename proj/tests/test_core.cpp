#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "flatsim/core.hpp"
#include "oracles.hpp"

using namespace flatsim;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

}  // namespace

TEST_CASE("shift window stores and retrieves samples by shift") {
  ShiftWindow w(2, -3, 1);
  CHECK(w.dim() == 2);
  CHECK(w.lo() == -3);
  CHECK(w.hi() == 1);
  CHECK(w.component_dims() == std::vector<int>{2});
  for (int s = -3; s <= 1; ++s) CHECK(w.at(s).norm() == 0.0);  // zero-initialized

  w.set(-2, v2(1.0, -4.0));
  CHECK(w.at(-2)(0) == 1.0);
  CHECK(w.at(-2)(1) == -4.0);

  CHECK_THROWS_AS(w.at(2), std::out_of_range);
  CHECK_THROWS_AS(w.at(-4), std::out_of_range);
  CHECK_THROWS_AS(w.set(2, v2(0, 0)), std::out_of_range);
  CHECK_THROWS_AS(w.set(0, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("shift window construction rejects bad arguments") {
  CHECK_THROWS_AS(ShiftWindow(0, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(ShiftWindow(2, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(ShiftWindow(3, 0, 1, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(ShiftWindow(3, 0, 1, {1, 0, 2}), std::invalid_argument);
  ShiftWindow w(3, 0, 1, {1, 2});
  CHECK(w.component_dims() == std::vector<int>{1, 2});
}

TEST_CASE("shifted view re-indexes without copying semantics surprises") {
  ShiftWindow w(1, 0, 4);
  for (int s = 0; s <= 4; ++s) w.set(s, Vec::Constant(1, 10.0 * s));

  ShiftWindow v = w.shifted(2);
  CHECK(v.lo() == -2);
  CHECK(v.hi() == 2);
  for (int s = -2; s <= 2; ++s) CHECK(v.at(s)(0) == doctest::Approx(w.at(s + 2)(0)));

  ShiftWindow back = v.shifted(-2);
  CHECK(back.lo() == 0);
  CHECK(back.at(3)(0) == 30.0);

  CHECK(w.covers(0, 4));
  CHECK(w.covers(1, 3));
  CHECK_FALSE(w.covers(-1, 4));
  CHECK_FALSE(w.covers(0, 5));
}

TEST_CASE("finite-difference jacobian matches a hand-written derivative") {
  auto fn = [](const Vec& p) {
    Vec out(2);
    out << std::sin(p(0)) * p(1), p(0) * p(0) + std::exp(p(1));
    return out;
  };
  Vec p = v2(0.7, -0.3);
  Mat J = jacobian_fd(fn, p);
  Mat Jref(2, 2);
  Jref << std::cos(p(0)) * p(1), std::sin(p(0)), 2.0 * p(0), std::exp(p(1));
  CHECK((J - Jref).norm() < 1e-8);

  CHECK_THROWS_AS(jacobian_fd(fn, p, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(jacobian_fd(fn, p, 0.0), std::invalid_argument);

  auto bad = [](const Vec& p) { return Vec::Constant(1, std::sqrt(p(0))); };
  CHECK_THROWS_AS(jacobian_fd(bad, Vec::Zero(1)), NumericError);
}

TEST_CASE("continuous system validates its declared equilibrium") {
  auto f = [](const Vec& x, const Vec& u) { return Vec((Vec(1) << -x(0) + u(0)).finished()); };
  ContinuousSystem ok(1, 1, f, {{Vec::Constant(1, 2.0), Vec::Constant(1, 2.0)}});
  CHECK(eval_dynamics(ok, Vec::Constant(1, 2.0), Vec::Constant(1, 2.0)).norm() == 0.0);

  CHECK_THROWS_AS(ContinuousSystem(1, 1, f, {{Vec::Constant(1, 1.0), Vec::Constant(1, 2.0)}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ContinuousSystem(1, 1, f, {{Vec::Zero(2), Vec::Zero(1)}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ContinuousSystem(0, 1, f), std::invalid_argument);
  CHECK_THROWS_AS(ContinuousSystem(1, 1, nullptr), std::invalid_argument);

  CHECK_THROWS_AS(eval_dynamics(ok, Vec::Zero(2), Vec::Zero(1)), std::invalid_argument);
  auto nan = [](const Vec&, const Vec&) { return Vec::Constant(1, std::nan("")); };
  ContinuousSystem bad(1, 1, nan);
  CHECK_THROWS_AS(eval_dynamics(bad, Vec::Zero(1), Vec::Zero(1)), NumericError);
}

TEST_CASE("state-only transform is the pushforward by the jacobian") {
  // Nonlinear scalar-ish example: xb = (x0 + x1^2, x1), dynamics a rotation.
  auto f = [](const Vec& x, const Vec& u) { return Vec(v2(-x(1), x(0) + u(0))); };
  ContinuousSystem sys(2, 1, f);

  CoordinateChange ch;
  ch.n = 2;
  ch.m = 1;
  ch.state_fwd = [](const Vec& x) { return Vec(v2(x(0) + x(1) * x(1), x(1))); };
  ch.state_inv = [](const Vec& xb) { return Vec(v2(xb(0) - xb(1) * xb(1), xb(1))); };

  ContinuousSystem tr = transform_system(sys, ch, TransformMode::state_only);
  Vec x = v2(0.4, -1.2), u = Vec::Constant(1, 0.3);
  Vec xb = ch.state_fwd(x);

  Mat J = oracle::num_jac([&](const Vec& p) { return ch.state_fwd(p); }, x);
  Vec want = J * f(x, u);
  Vec got = eval_dynamics(tr, xb, u);
  CHECK((got - want).norm() < 1e-7);

  CHECK_THROWS_AS(transform_system(sys, ch, TransformMode::state_and_input),
                  std::invalid_argument);
  CoordinateChange wrong = ch;
  wrong.n = 3;
  CHECK_THROWS_AS(transform_system(sys, wrong, TransformMode::state_only), std::invalid_argument);
}

TEST_CASE("transform maps an equilibrium along when it survives") {
  auto f = [](const Vec& x, const Vec& u) { return Vec(v2(x(1), -x(0) + u(0))); };
  ContinuousSystem sys(2, 1, f, {{Vec::Zero(2), Vec::Zero(1)}});

  CoordinateChange ch;
  ch.n = 2;
  ch.m = 1;
  ch.state_fwd = [](const Vec& x) { return Vec(2.0 * x); };
  ch.state_inv = [](const Vec& xb) { return Vec(0.5 * xb); };

  ContinuousSystem tr = transform_system(sys, ch, TransformMode::state_only);
  REQUIRE(tr.equilibrium.has_value());
  CHECK(tr.equilibrium->first.norm() == 0.0);
}
