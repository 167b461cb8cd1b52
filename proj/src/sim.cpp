#include "flatsim/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "flatsim/discretize.hpp"
#include "json.hpp"

namespace flatsim {

void SimConfig::validate() const {
  if (!(Ts > 0.0) || !(Tn > 0.0)) throw std::invalid_argument("config: Ts and Tn must be positive");
  if (Tn > Ts) throw std::invalid_argument("config: Tn must not exceed Ts");
  if (!(horizon > 0.0)) throw std::invalid_argument("config: horizon must be positive");
  if (!(duration > 0.0)) throw std::invalid_argument("config: maneuver duration must be positive");
  if (start_time < 0.0) throw std::invalid_argument("config: maneuver start_time must be nonnegative");
  if (smoothness < 1 || smoothness > 9)
    throw std::invalid_argument("config: smoothness must lie in [1, 9]");
  if (start.size() != 2 || target.size() != 2)
    throw std::invalid_argument("config: start and target must have two entries");
  if (perturbation.size() != 6)
    throw std::invalid_argument("config: perturbation must have six entries");
  if (poles.empty()) throw std::invalid_argument("config: poles must not be empty");
  if (plant != "continuous" && plant != "discrete")
    throw std::invalid_argument("config: plant must be \"continuous\" or \"discrete\"");
  if (sweep_ts.empty()) throw std::invalid_argument("config: sweep_Ts must not be empty");
  for (double s : sweep_ts)
    if (!(s > 0.0)) throw std::invalid_argument("config: sweep_Ts entries must be positive");
  vtol.validate();
}

namespace {

using nlohmann::json;

double as_double(const json& j, const std::string& key) {
  if (!j.is_number()) throw std::invalid_argument("config: \"" + key + "\" must be a number");
  return j.get<double>();
}

Vec as_vec(const json& j, const std::string& key, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw std::invalid_argument("config: \"" + key + "\" must be an array of " +
                                std::to_string(n) + " numbers");
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = as_double(j[i], key);
  return v;
}

void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& where) {
  for (const auto& item : j.items())
    if (!keys.count(item.key())) {
      std::string valid;
      for (const auto& k : keys) valid += (valid.empty() ? "" : ", ") + k;
      throw std::invalid_argument("config: unknown key \"" + item.key() + "\" in " + where +
                                  "; valid keys: " + valid);
    }
}

}  // namespace

SimConfig parse_sim_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  reject_unknown(j, {"scheme", "Ts", "Tn", "horizon", "maneuver", "poles", "perturbation",
                     "vtol", "plant", "sweep_Ts"},
                 "the top level");
  SimConfig c;
  if (j.contains("scheme")) {
    const std::string s = j["scheme"].is_string() ? j["scheme"].get<std::string>() : "";
    if (s == "implicit") c.scheme = Scheme::implicit_euler;
    else if (s == "explicit") c.scheme = Scheme::explicit_euler;
    else throw std::invalid_argument("config: scheme must be \"implicit\" or \"explicit\"");
  }
  if (j.contains("Ts")) c.Ts = as_double(j["Ts"], "Ts");
  if (j.contains("Tn")) c.Tn = as_double(j["Tn"], "Tn");
  if (j.contains("horizon")) c.horizon = as_double(j["horizon"], "horizon");
  if (j.contains("maneuver")) {
    const json& m = j["maneuver"];
    if (!m.is_object()) throw std::invalid_argument("config: maneuver must be an object");
    reject_unknown(m, {"start", "target", "duration", "start_time", "smoothness"}, "maneuver");
    if (m.contains("start")) c.start = as_vec(m["start"], "maneuver.start", 2);
    if (m.contains("target")) c.target = as_vec(m["target"], "maneuver.target", 2);
    if (m.contains("duration")) c.duration = as_double(m["duration"], "maneuver.duration");
    if (m.contains("start_time")) c.start_time = as_double(m["start_time"], "maneuver.start_time");
    if (m.contains("smoothness")) {
      if (!m["smoothness"].is_number_integer())
        throw std::invalid_argument("config: maneuver.smoothness must be an integer");
      c.smoothness = m["smoothness"].get<int>();
    }
  }
  if (j.contains("poles")) {
    const json& p = j["poles"];
    c.poles.clear();
    if (p.is_number()) c.poles.push_back(p.get<double>());
    else if (p.is_array() && !p.empty()) {
      for (const auto& e : p) c.poles.push_back(as_double(e, "poles"));
    } else throw std::invalid_argument("config: poles must be a number or a number array");
  }
  if (j.contains("perturbation")) c.perturbation = as_vec(j["perturbation"], "perturbation", 6);
  if (j.contains("vtol")) {
    const json& v = j["vtol"];
    if (!v.is_object()) throw std::invalid_argument("config: vtol must be an object");
    reject_unknown(v, {"m", "J", "l", "h", "alpha", "g"}, "vtol");
    if (v.contains("m")) c.vtol.m = as_double(v["m"], "vtol.m");
    if (v.contains("J")) c.vtol.J = as_double(v["J"], "vtol.J");
    if (v.contains("l")) c.vtol.l = as_double(v["l"], "vtol.l");
    if (v.contains("h")) c.vtol.h = as_double(v["h"], "vtol.h");
    if (v.contains("alpha")) c.vtol.alpha = as_double(v["alpha"], "vtol.alpha");
    if (v.contains("g")) c.vtol.g = as_double(v["g"], "vtol.g");
  }
  if (j.contains("plant")) {
    if (!j["plant"].is_string())
      throw std::invalid_argument("config: plant must be a string");
    c.plant = j["plant"].get<std::string>();
  }
  if (j.contains("sweep_Ts")) {
    const json& s = j["sweep_Ts"];
    if (!s.is_array() || s.empty())
      throw std::invalid_argument("config: sweep_Ts must be a nonempty number array");
    c.sweep_ts.clear();
    for (const auto& e : s) c.sweep_ts.push_back(as_double(e, "sweep_Ts"));
  }
  c.validate();
  return c;
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_sim_config(text);
}

VtolStack make_vtol_stack(const VtolParams& p, Scheme scheme, double Ts, const Vec& poles,
                          bool closed_forms) {
  auto form = vtol_triangular_form(p);
  auto dts = std::make_shared<const DiscreteTriangularSystem>(form, scheme, Ts);
  std::optional<ClosedFormParam> cf;
  if (closed_forms) cf = vtol_closed_form_param(p, scheme, Ts);
  ParameterizingMap map = build_parameterizer(dts, cf);
  ParameterizingMap anchored = map.max_back() > 0 ? redefine_shift_origin(map) : map;
  const int R = anchored.window_depths().maxCoeff();
  Vec pv;
  if (poles.size() == 1) pv = Vec::Constant(R, poles(0));
  else if (poles.size() == R) pv = poles;
  else
    throw std::invalid_argument("make_vtol_stack: need one pole or one per window shift (" +
                                std::to_string(R) + ")");
  const Vec a = pole_gains(pv);
  ControllerConfig cc;
  cc.gains = {a, a};
  // The memory picks vertical output samples; for the explicit scheme the
  // early shifts duplicate rows of the state map, the later ones do not.
  if (scheme == Scheme::implicit_euler) cc.z_select = {{1, 0}, {1, 1}};
  else cc.z_select = {{1, 2}, {1, 3}};
  if (closed_forms && scheme == Scheme::implicit_euler)
    cc.psi_hat = [p, Ts](const Vec& xb, const Vec& z) { return vtol_psi_hat(p, Ts, xb, z); };
  FlatnessController ctrl(anchored, vtol_transforms(p), cc);
  return VtolStack{p,
                   vtol_system(p),
                   vtol_transformed_system(p),
                   vtol_transforms(p),
                   dts,
                   std::move(map),
                   std::move(anchored),
                   std::move(ctrl)};
}

ReferenceTrajectory maneuver_reference(const SimConfig& cfg) {
  const double eps = cfg.vtol.epsilon();
  Vec from = cfg.start, to = cfg.target;
  from(1) += eps;
  to(1) += eps;
  return rest_to_rest(from, to, cfg.start_time, cfg.duration, cfg.smoothness);
}

SimResult run_closed_loop(const SimConfig& cfg) {
  cfg.validate();
  const Vec pv = Eigen::Map<const Vec>(cfg.poles.data(), static_cast<int>(cfg.poles.size()));
  VtolStack s = make_vtol_stack(cfg.vtol, cfg.scheme, cfg.Ts, pv, true);
  const ReferenceTrajectory traj = maneuver_reference(cfg);
  const int R = s.ctrl.depth();
  const int N = static_cast<int>(std::lround(cfg.horizon / cfg.Ts));
  ImplicitStepSettings ss;
  ss.Ts = cfg.Ts;

  Vec x = Vec::Zero(6);
  x(0) = cfg.start(0);
  x(1) = cfg.start(1);
  x += cfg.perturbation;
  // The window anchors the state lag samples into the window, so the
  // controller's reference is delayed by lag to align the plant position with
  // the reference at the same wall-clock time (lag is 0 for the explicit
  // scheme). The recorded y_ref stays the same-time sample for the metrics.
  const int lag = s.map.max_back();
  auto st = s.ctrl.init_state(sample_reference(traj, -lag, cfg.Ts, R));
  const Vec nan2 = Vec::Constant(2, std::numeric_limits<double>::quiet_NaN());

  SimResult out;
  out.records.reserve(N + 1);
  bool faulted = false;
  for (int k = 0; k < N; ++k) {
    const ShiftWindow ref = sample_reference(traj, k - lag, cfg.Ts, R);
    SimRecord rec;
    rec.t = k * cfg.Ts;
    rec.x = x;
    rec.y_ref = traj.value(k * cfg.Ts);
    if (!faulted) {
      try {
        auto step = s.ctrl.control_step(x, ref, st);
        rec.u = step.u;
        rec.y_est = step.y_est;
        rec.v = step.v;
      } catch (const ControllerFault& e) {
        faulted = true;
        out.fault = true;
        out.fault_stage = e.stage();
        out.fault_step = k;
      }
    }
    if (faulted) {
      rec.u = st.last_u;
      rec.y_est = nan2;
      rec.v = nan2;
      rec.fault = true;
    }
    out.records.push_back(rec);
    try {
      if (cfg.plant == "continuous") {
        x = rk4_integrate(s.sys, x, rec.u, cfg.Tn, cfg.Ts);
      } else {
        Vec xb = s.change.state_fwd(x);
        xb = cfg.scheme == Scheme::implicit_euler ? implicit_step(s.transformed, xb, rec.u, ss)
                                                  : explicit_step(s.transformed, xb, rec.u, cfg.Ts);
        x = s.change.state_inv(xb);
      }
    } catch (const std::exception&) {
      // Plant integration diverged; keep what was recorded so far.
      if (!out.fault) {
        out.fault = true;
        out.fault_stage = "plant";
        out.fault_step = k;
      }
      return out;
    }
  }
  SimRecord last;
  last.t = N * cfg.Ts;
  last.x = x;
  last.y_ref = traj.value(N * cfg.Ts);
  last.u = out.records.empty() ? Vec() : out.records.back().u;
  last.y_est = nan2;
  last.v = nan2;
  last.fault = faulted;
  out.records.push_back(std::move(last));
  return out;
}

RunMetrics run_metrics(const SimResult& result, const SimConfig& cfg) {
  RunMetrics m;
  m.fault = result.fault;
  m.band = 0.02 * std::max((cfg.target - cfg.start).norm(), 1.0);
  if (result.records.empty()) return m;
  const double eps = cfg.vtol.epsilon();
  std::vector<double> err;
  err.reserve(result.records.size());
  for (const auto& rec : result.records)
    err.push_back(std::hypot(rec.x(0) - rec.y_ref(0), rec.x(1) - (rec.y_ref(1) - eps)));
  m.max_position_error = *std::max_element(err.begin(), err.end());
  m.end_position_error = err.back();
  size_t idx = err.size();
  while (idx > 0 && err[idx - 1] <= m.band) --idx;
  m.settle_time = idx < err.size() ? result.records[idx].t : -1.0;
  return m;
}

CompareResult compare_schemes(const SimConfig& cfg) {
  CompareResult r{};
  SimConfig ci = cfg;
  ci.scheme = Scheme::implicit_euler;
  r.implicit_run = run_closed_loop(ci);
  r.implicit_metrics = run_metrics(r.implicit_run, ci);
  SimConfig ce = cfg;
  ce.scheme = Scheme::explicit_euler;
  r.explicit_run = run_closed_loop(ce);
  r.explicit_metrics = run_metrics(r.explicit_run, ce);
  return r;
}

void export_csv(const std::string& path, const SimResult& result, const SimConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("export_csv: cannot open " + path);
  f << "t (s),qx (m),qz (m),theta (rad),vx (m/s),vz (m/s),omega (rad/s),F1 (N),F2 (N),"
       "yref1 (m),yref2 (m),yest1 (m),yest2 (m),v1 (m),v2 (m),fault (bool)\n";
  char buf[40];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.17g%c", v, sep);
    f << buf;
  };
  for (const auto& rec : result.records) {
    put(rec.t, ',');
    for (int i = 0; i < 6; ++i) put(rec.x(i), ',');
    for (int i = 0; i < 2; ++i) put(rec.u.size() == 2 ? rec.u(i) : 0.0, ',');
    for (int i = 0; i < 2; ++i) put(rec.y_ref(i), ',');
    for (int i = 0; i < 2; ++i) put(rec.y_est.size() == 2 ? rec.y_est(i) : 0.0, ',');
    for (int i = 0; i < 2; ++i) put(rec.v.size() == 2 ? rec.v(i) : 0.0, ',');
    f << (rec.fault ? 1 : 0) << "\n";
  }
  if (!f) throw std::runtime_error("export_csv: write to " + path + " failed");

  const RunMetrics m = run_metrics(result, cfg);
  nlohmann::json meta;
  meta["scheme"] = scheme_name(cfg.scheme);
  meta["Ts"] = cfg.Ts;
  meta["Tn"] = cfg.Tn;
  meta["horizon"] = cfg.horizon;
  meta["plant"] = cfg.plant;
  meta["maneuver"] = {{"start", {cfg.start(0), cfg.start(1)}},
                      {"target", {cfg.target(0), cfg.target(1)}},
                      {"duration", cfg.duration},
                      {"start_time", cfg.start_time},
                      {"smoothness", cfg.smoothness}};
  meta["poles"] = cfg.poles;
  meta["perturbation"] = std::vector<double>(cfg.perturbation.data(), cfg.perturbation.data() + 6);
  meta["vtol"] = {{"m", cfg.vtol.m}, {"J", cfg.vtol.J}, {"l", cfg.vtol.l},
                  {"h", cfg.vtol.h}, {"alpha", cfg.vtol.alpha}, {"g", cfg.vtol.g}};
  meta["rows"] = result.records.size();
  meta["fault"] = {{"occurred", result.fault},
                   {"stage", result.fault_stage},
                   {"step", result.fault_step}};
  meta["metrics"] = {{"max_position_error", m.max_position_error},
                     {"end_position_error", m.end_position_error},
                     {"settle_time", m.settle_time},
                     {"band", m.band}};
  std::ofstream mf(path + ".meta.json");
  if (!mf) throw std::runtime_error("export_csv: cannot open " + path + ".meta.json");
  mf << meta.dump(2) << "\n";
}

}  // namespace flatsim
