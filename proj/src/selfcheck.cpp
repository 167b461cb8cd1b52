#include "flatsim/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "flatsim/discretize.hpp"
#include "flatsim/trajectory.hpp"

namespace flatsim {

std::vector<DiscreteLoopStep> run_discrete_loop(
    const FlatnessController& ctrl, const ContinuousSystem& transformed, Scheme scheme, double Ts,
    const Vec& xb0, int steps, const std::function<ShiftWindow(int)>& ref_at,
    const std::function<Vec(int, const ShiftWindow&)>& override_v) {
  ImplicitStepSettings ss;
  ss.Ts = Ts;
  auto st = ctrl.init_state(ref_at(0));
  Vec xb = xb0;
  std::vector<DiscreteLoopStep> out;
  out.reserve(steps);
  const int R = ctrl.depth();
  for (int k = 0; k < steps; ++k) {
    const ShiftWindow ref = ref_at(k);
    ShiftWindow west = ctrl.invert_psi(xb, st.z, &st.warm);
    Vec v = override_v ? override_v(k, west) : ctrl.stabilizing_v(west, ref);
    ShiftWindow window(ctrl.flat_dim(), 0, R);
    for (int i = 0; i < R; ++i) window.set(i, west.at(i));
    window.set(R, v);
    Vec u = ctrl.dynamic_feedback_step(window, st);
    out.push_back(DiscreteLoopStep{xb, u, v, window, west.at(0)});
    xb = scheme == Scheme::implicit_euler ? implicit_step(transformed, xb, u, ss)
                                          : explicit_step(transformed, xb, u, Ts);
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Horizontal acceleration stays in [2.2, 2.8], so every shift is regular for
// the triangular stage equations (a sin term alone would cross hover).
ShiftWindow smooth_window(int lo, int hi, double Ts) {
  ShiftWindow w(2, lo, hi);
  for (int t = lo; t <= hi; ++t) {
    const double s = t * Ts;
    Vec y(2);
    y << 1.3 * std::sin(0.5 * s) + 0.4 * s + 1.25 * s * s,
        0.9 * std::cos(0.4 * s) + 0.2 * s;
    w.set(t, y);
  }
  return w;
}

}  // namespace

std::vector<CheckResult> run_identity_suites() {
  std::vector<CheckResult> out;
  auto record = [&](const std::string& name, std::function<std::pair<bool, std::string>()> fn) {
    try {
      auto [pass, detail] = fn();
      out.push_back({name, pass, detail});
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };
  const VtolParams p;
  const double Ts = 0.1;
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto rand_vec = [&](int n, double scale) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * unit(rng);
    return v;
  };

  record("coordinate change inverts", [&]() -> std::pair<bool, std::string> {
    const CoordinateChange ch = vtol_transforms(p);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Vec x = rand_vec(6, 1.0);
      worst = std::max(worst, (ch.state_inv(ch.state_fwd(x)) - x).norm());
    }
    return {worst <= 1e-12, "max mismatch " + fmt(worst)};
  });

  record("input change inverts away from hover", [&]() -> std::pair<bool, std::string> {
    const CoordinateChange ch = vtol_transforms(p);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      Vec x = rand_vec(6, 1.0);
      x(2) = 0.2 + 0.8 * std::abs(x(2));  // pitch away from the singular value
      const Vec u = Vec::Constant(2, p.hover_thrust()) + rand_vec(2, 0.5);
      worst = std::max(worst, (ch.input_inv_shifted(ch.state_fwd(x), ch.input_fwd(x, u)) - u).norm());
    }
    return {worst <= 1e-10, "max mismatch " + fmt(worst)};
  });

  record("transformed dynamics match the pushforward", [&]() -> std::pair<bool, std::string> {
    const ContinuousSystem sys = vtol_system(p);
    const ContinuousSystem tr = vtol_transformed_system(p);
    const CoordinateChange ch = vtol_transforms(p);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Vec x = rand_vec(6, 1.0);
      const Vec u = Vec::Constant(2, p.hover_thrust()) + rand_vec(2, 0.5);
      const Vec lhs = tr.f(ch.state_fwd(x), u);
      const Vec rhs = ch.state_jac(x) * sys.f(x, u);
      worst = std::max(worst, (lhs - rhs).norm());
    }
    return {worst <= 1e-10, "max mismatch " + fmt(worst)};
  });

  record("triangular assembly matches the transformed dynamics",
         [&]() -> std::pair<bool, std::string> {
           auto tf = vtol_triangular_form(p);
           const ContinuousSystem tr = vtol_transformed_system(p);
           const CoordinateChange ch = vtol_transforms(p);
           double worst = 0.0;
           for (int i = 0; i < 50; ++i) {
             Vec xb = rand_vec(6, 1.0);
             xb(4) = 0.2 + 0.8 * std::abs(xb(4));
             const Vec u = Vec::Constant(2, p.hover_thrust()) + rand_vec(2, 0.5);
             const Vec ub = ch.input_fwd(ch.state_inv(xb), u);
             worst = std::max(worst, (tf->assembled(xb, ub) - tr.f(xb, u)).norm());
           }
           return {worst <= 1e-9, "max mismatch " + fmt(worst)};
         });

  record("implicit map consumes shifts [-3, 1]", [&]() -> std::pair<bool, std::string> {
    auto dts = std::make_shared<const DiscreteTriangularSystem>(vtol_triangular_form(p),
                                                                Scheme::implicit_euler, Ts);
    const ParameterizingMap map = build_parameterizer(dts);
    const bool ok = map.back_shifts().minCoeff() == 3 && map.back_shifts().maxCoeff() == 3 &&
                    map.fwd_shifts().minCoeff() == 1 && map.fwd_shifts().maxCoeff() == 1;
    return {ok, "back " + std::to_string(map.max_back()) + ", forward " +
                    std::to_string(map.max_fwd())};
  });

  record("explicit map consumes shifts [0, 4]", [&]() -> std::pair<bool, std::string> {
    auto dts = std::make_shared<const DiscreteTriangularSystem>(vtol_triangular_form(p),
                                                                Scheme::explicit_euler, Ts);
    const ParameterizingMap map = build_parameterizer(dts);
    const bool ok = map.back_shifts().maxCoeff() == 0 && map.fwd_shifts().minCoeff() == 4 &&
                    map.fwd_shifts().maxCoeff() == 4;
    return {ok, "back " + std::to_string(map.max_back()) + ", forward " +
                    std::to_string(map.max_fwd())};
  });

  for (const Scheme scheme : {Scheme::implicit_euler, Scheme::explicit_euler}) {
    const std::string tag = scheme_name(scheme);
    record(tag + " parameterization replays the discrete system",
           [&, scheme]() -> std::pair<bool, std::string> {
             auto dts = std::make_shared<const DiscreteTriangularSystem>(vtol_triangular_form(p),
                                                                         scheme, Ts);
             const ParameterizingMap map =
                 build_parameterizer(dts, vtol_closed_form_param(p, scheme, Ts));
             const int steps = 10;
             const ShiftWindow seq = smooth_window(-map.max_back(), steps + map.max_fwd(), Ts);
             const double worst = roundtrip_validate(map, seq, steps);
             return {worst <= 1e-8, "max replay mismatch " + fmt(worst)};
           });

    record(tag + " closed form matches the generic solves",
           [&, scheme]() -> std::pair<bool, std::string> {
             auto dts = std::make_shared<const DiscreteTriangularSystem>(vtol_triangular_form(p),
                                                                         scheme, Ts);
             const ParameterizingMap map =
                 build_parameterizer(dts, vtol_closed_form_param(p, scheme, Ts));
             const ShiftWindow seq = smooth_window(-map.max_back() - 1, map.max_fwd() + 3, Ts);
             double worst = 0.0;
             for (int b = 0; b < 3; ++b) {
               const auto a = map.evaluate(seq, b);
               const auto g = map.evaluate_generic(seq, b);
               worst = std::max(worst, (a.x - g.x).norm());
               worst = std::max(worst, (a.u - g.u).norm());
             }
             return {worst <= 1e-8, "max mismatch " + fmt(worst)};
           });
  }

  record("solvability conditions hold at the reference", [&]() -> std::pair<bool, std::string> {
    auto tf = vtol_triangular_form(p);
    const RankReport rep =
        check_rank_conditions(*tf, tf->x_ref(), tf->u_ref(), Scheme::implicit_euler);
    double ratio = 1.0;
    for (const auto& b : rep.blocks)
      if (b.sigma_max > 0.0) ratio = std::min(ratio, b.sigma_min / b.sigma_max);
    return {rep.all_pass, "worst singular value ratio " + fmt(ratio)};
  });

  record("window reconstruction inverts the state map", [&]() -> std::pair<bool, std::string> {
    const VtolStack s = make_vtol_stack(p, Scheme::implicit_euler, Ts, Vec::Constant(1, 0.6));
    const ShiftWindow w = smooth_window(0, 4, Ts);
    const Vec xb = s.anchored.evaluate_state(w, 0);
    Vec z(2);
    z << w.at(0)(1), w.at(1)(1);
    const ShiftWindow back = vtol_psi_hat(p, Ts, xb, z);
    double worst = 0.0;
    for (int t = 0; t <= 3; ++t) worst = std::max(worst, (back.at(t) - w.at(t)).norm());
    return {worst <= 1e-9, "max mismatch " + fmt(worst)};
  });

  record("pole gains expand the characteristic polynomial",
         [&]() -> std::pair<bool, std::string> {
           const Vec a = pole_gains((Vec(2) << 0.5, 0.5).finished());
           const double err = std::abs(a(0) - 0.25) + std::abs(a(1) + 1.0);
           return {err <= 1e-14, "coefficient error " + fmt(err)};
         });

  record("smoothstep meets its endpoint conditions", [&]() -> std::pair<bool, std::string> {
    double worst = 0.0;
    for (int s = 1; s <= 6; ++s) {
      const Vec c = smoothstep_coeffs(s);
      worst = std::max(worst, std::abs(polyval(c, 0.0) - 0.0));
      worst = std::max(worst, std::abs(polyval(c, 1.0) - 1.0));
      for (int d = 1; d <= s; ++d) {
        worst = std::max(worst, std::abs(polyval(c, 0.0, d)));
        worst = std::max(worst, std::abs(polyval(c, 1.0, d)));
      }
    }
    return {worst <= 1e-9, "max defect " + fmt(worst)};
  });

  return out;
}

}  // namespace flatsim
