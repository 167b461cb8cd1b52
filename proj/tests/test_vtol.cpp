#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "flatsim/vtol.hpp"
#include "oracles.hpp"

using namespace flatsim;

namespace {

Vec rand_vec(std::mt19937_64& rng, int n, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

oracle::VtolP mirror(const VtolParams& p) {
  return oracle::VtolP{p.m, p.J, p.l, p.h, p.alpha, p.g};
}

// Smooth output window in original shift indexing, hover offset included.
ShiftWindow smooth_window(int lo, int hi, double Ts) {
  VtolParams p;
  ShiftWindow w(2, lo, hi);
  for (int s = lo; s <= hi; ++s) {
    double t = s * Ts;
    Vec y(2);
    y << 0.8 * std::sin(0.9 * t) + 0.5 * t * t, p.epsilon() + 0.3 * std::cos(0.7 * t) + 0.1 * t;
    w.set(s, y);
  }
  return w;
}

}  // namespace

TEST_CASE("derived parameters carry their frozen values") {
  VtolParams p;
  CHECK(p.kappa() == doctest::Approx(2.0584330815818817).epsilon(1e-14));
  CHECK(p.epsilon() == doctest::Approx(0.1435656127495948).epsilon(1e-14));
  CHECK(p.hover_thrust() == doctest::Approx(5.13431660554431).epsilon(1e-14));

  VtolParams bad = p;
  bad.m = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.h = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.alpha = 2.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("aircraft dynamics match an independent force-balance transcription") {
  VtolParams p;
  p.m = 1.3;
  p.J = 0.17;
  p.l = 0.25;
  p.h = 0.04;
  p.alpha = 0.35;
  ContinuousSystem sys = vtol_system(p);
  oracle::VtolP q = mirror(p);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    Vec x = rand_vec(rng, 6, 2.0);
    Vec u = rand_vec(rng, 2, 6.0);
    Vec got = eval_dynamics(sys, x, u);
    Vec want = oracle::vtol_f(q, x, u);
    CHECK((got - want).norm() < 1e-13);
  }
}

TEST_CASE("aircraft equilibrium is hover at the origin") {
  VtolParams p;
  ContinuousSystem sys = vtol_system(p);
  REQUIRE(sys.equilibrium.has_value());
  CHECK(sys.equilibrium->first.norm() == 0.0);
  CHECK(sys.equilibrium->second(0) == doctest::Approx(p.hover_thrust()));
  CHECK(sys.equilibrium->second(1) == doctest::Approx(p.hover_thrust()));
}

TEST_CASE("analytic jacobians agree with finite differences") {
  VtolParams p;
  ContinuousSystem sys = vtol_system(p);
  ContinuousSystem trs = vtol_transformed_system(p);
  REQUIRE(static_cast<bool>(sys.jac_x));
  REQUIRE(static_cast<bool>(trs.jac_x));

  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    Vec x = rand_vec(rng, 6, 1.5);
    Vec u = rand_vec(rng, 2, 5.0);
    Mat J = sys.jac_x(x, u);
    Mat Jn = oracle::num_jac([&](const Vec& xx) { return sys.f(xx, u); }, x);
    CHECK((J - Jn).norm() < 1e-6);

    Mat Jt = trs.jac_x(x, u);
    Mat Jtn = oracle::num_jac([&](const Vec& xx) { return trs.f(xx, u); }, x);
    CHECK((Jt - Jtn).norm() < 1e-6);
  }
}

TEST_CASE("state transform round-trips and maps the origin to the hover point") {
  VtolParams p;
  CoordinateChange ch = vtol_transforms(p);

  Vec xb0 = ch.state_fwd(Vec::Zero(6));
  Vec want0 = (Vec(6) << 0.0, p.epsilon(), 0.0, 0.0, 0.0, 0.0).finished();
  CHECK((xb0 - want0).norm() < 1e-15);

  std::mt19937_64 rng(23);
  for (int i = 0; i < 40; ++i) {
    Vec x = rand_vec(rng, 6, 2.0);
    Vec xb = ch.state_fwd(x);
    CHECK((ch.state_inv(xb) - x).norm() < 1e-12);
    Mat J = ch.state_jac(x);
    Mat Jn = oracle::num_jac([&](const Vec& xx) { return ch.state_fwd(xx); }, x);
    CHECK((J - Jn).norm() < 1e-6);
  }
}

TEST_CASE("input transform inverts pointwise away from hover and refuses at hover") {
  VtolParams p;
  CoordinateChange ch = vtol_transforms(p);
  REQUIRE(ch.has_input_transform());

  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    Vec x = rand_vec(rng, 6, 1.5);
    if (std::abs(std::sin(x(2))) < 0.05) x(2) = 0.4;  // stay off the singular pitch
    Vec u = rand_vec(rng, 2, 5.0);
    Vec ub = ch.input_fwd(x, u);
    Vec back = ch.input_inv_shifted(ch.state_fwd(x), ub);
    CHECK((back - u).norm() < 1e-10);
  }

  Vec hover = Vec::Zero(6);
  Vec ub = Vec::Zero(2);
  CHECK_THROWS_AS(ch.input_inv_shifted(ch.state_fwd(hover), ub), SingularityError);
  try {
    ch.input_inv_shifted(ch.state_fwd(hover), ub);
  } catch (const SingularityError& e) {
    CHECK(std::string(e.what()).find("determinant") != std::string::npos);
  }
}

TEST_CASE("transformed dynamics are the pushforward and stay smooth at hover") {
  VtolParams p;
  ContinuousSystem sys = vtol_system(p);
  ContinuousSystem trs = vtol_transformed_system(p);
  CoordinateChange ch = vtol_transforms(p);

  std::mt19937_64 rng(31);
  for (int i = 0; i < 30; ++i) {
    Vec x = rand_vec(rng, 6, 2.0);
    Vec u = rand_vec(rng, 2, 6.0);
    Vec want = ch.state_jac(x) * eval_dynamics(sys, x, u);
    Vec got = eval_dynamics(trs, ch.state_fwd(x), u);
    CHECK((got - want).norm() < 1e-11);
  }

  // theta = 0 with unbalanced thrust: no singularity in these coordinates.
  Vec u = (Vec(2) << 6.0, 4.0).finished();
  Vec dx = eval_dynamics(trs, ch.state_fwd(Vec::Zero(6)), u);
  CHECK(all_finite(dx));

  REQUIRE(trs.equilibrium.has_value());
  CHECK((trs.equilibrium->first - (Vec(6) << 0, p.epsilon(), 0, 0, 0, 0).finished()).norm() <
        1e-12);
}

TEST_CASE("triangular assembly reproduces the transformed dynamics in the new input") {
  VtolParams p;
  auto tf = vtol_triangular_form(p);
  CHECK(tf->p() == 4);
  CHECK(tf->n() == 6);
  CHECK(tf->m() == 2);
  CHECK(tf->flat_dim() == 2);

  ContinuousSystem sys = vtol_system(p);
  CoordinateChange ch = vtol_transforms(p);

  std::mt19937_64 rng(13);
  for (int i = 0; i < 30; ++i) {
    Vec x = rand_vec(rng, 6, 1.2);
    if (std::abs(std::sin(x(2))) < 0.05) x(2) = 0.35;
    Vec u = rand_vec(rng, 2, 5.0);
    Vec xb = ch.state_fwd(x);
    Vec ub = ch.input_fwd(x, u);
    Vec want = ch.state_jac(x) * eval_dynamics(sys, x, u);
    Vec got = tf->assembled(xb, ub);
    CHECK((got - want).norm() < 1e-10);
  }
}

TEST_CASE("solvability conditions hold at the reference and degenerate at exact hover") {
  VtolParams p;
  auto tf = vtol_triangular_form(p);

  for (Scheme sc : {Scheme::implicit_euler, Scheme::explicit_euler}) {
    RankReport rep = check_rank_conditions(*tf, tf->x_ref(), tf->u_ref(), sc);
    CHECK(rep.all_pass);
    REQUIRE(rep.blocks.size() == 4);
    for (const auto& b : rep.blocks) CHECK(b.pass);
  }

  // Hover: the pitch block's equations lose rank in the thrust direction.
  Vec xh = (Vec(6) << 0.0, p.epsilon(), 0.0, 0.0, 0.0, 0.0).finished();
  Vec uh = Vec::Zero(2);
  RankReport rep = check_rank_conditions(*tf, xh, uh, Scheme::implicit_euler);
  CHECK_FALSE(rep.all_pass);
}

TEST_CASE("closed-form parameterization returns hover thrust on a constant window") {
  VtolParams p;
  double Ts = 0.1;
  for (Scheme sc : {Scheme::implicit_euler, Scheme::explicit_euler}) {
    ClosedFormParam cf = vtol_closed_form_param(p, sc, Ts);
    REQUIRE(static_cast<bool>(cf.input));
    ShiftWindow w(2, -4, 4);
    Vec y = (Vec(2) << 1.7, -0.4).finished();
    for (int s = -4; s <= 4; ++s) w.set(s, y);
    Vec u = cf.input(w, 0);
    CHECK(u(0) == doctest::Approx(p.hover_thrust()).epsilon(1e-12));
    CHECK(u(1) == doctest::Approx(p.hover_thrust()).epsilon(1e-12));
  }
}

TEST_CASE("free-fall windows are rejected as singular") {
  VtolParams p;
  double Ts = 0.1;
  ClosedFormParam cf = vtol_closed_form_param(p, Scheme::implicit_euler, Ts);
  ShiftWindow w(2, -4, 4);
  for (int s = -4; s <= 4; ++s) {
    double t = s * Ts;
    w.set(s, (Vec(2) << 0.0, -0.5 * p.g * t * t).finished());
  }
  CHECK_THROWS_AS(cf.state(w, 0), SingularityError);
}

TEST_CASE("window reconstruction inverts the state map") {
  VtolParams p;
  double Ts = 0.1;
  ClosedFormParam cf = vtol_closed_form_param(p, Scheme::implicit_euler, Ts);

  ShiftWindow w = smooth_window(0, 3, Ts);
  Vec xb = cf.state(w, 3);
  Vec z = (Vec(2) << w.at(0)(1), w.at(1)(1)).finished();

  ShiftWindow rec = vtol_psi_hat(p, Ts, xb, z);
  CHECK(rec.lo() == 0);
  CHECK(rec.hi() == 3);
  for (int s = 0; s <= 3; ++s) CHECK((rec.at(s) - w.at(s)).norm() < 1e-9);

  // A memory inconsistent with the state implies a free-falling window.
  Vec zbad = z;
  zbad(1) -= 50.0;
  CHECK_THROWS_AS(vtol_psi_hat(p, Ts, xb, zbad), NumericError);
  CHECK_THROWS_AS(vtol_psi_hat(p, Ts, Vec::Zero(5), z), std::invalid_argument);
}
