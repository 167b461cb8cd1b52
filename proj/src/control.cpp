#include "flatsim/control.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flatsim/discretize.hpp"

namespace flatsim {

Vec pole_gains(const std::vector<std::complex<double>>& poles) {
  if (poles.empty()) throw std::invalid_argument("pole_gains: no poles given");
  for (const auto& p : poles)
    if (!(std::abs(p) < 1.0))
      throw std::invalid_argument("pole_gains: pole with modulus " + std::to_string(std::abs(p)) +
                                  " is not strictly inside the unit circle");
  std::vector<std::complex<double>> c{1.0};  // monic product, low order last
  for (const auto& p : poles) {
    std::vector<std::complex<double>> nxt(c.size() + 1, 0.0);
    for (size_t i = 0; i < c.size(); ++i) {
      nxt[i] += c[i];
      nxt[i + 1] -= c[i] * p;
    }
    c = std::move(nxt);
  }
  Vec a(static_cast<int>(poles.size()));
  for (int i = 0; i < a.size(); ++i) {
    const auto& ci = c[c.size() - 1 - i];  // coefficient of z^i
    if (std::abs(ci.imag()) > 1e-12 * std::max(1.0, std::abs(ci)))
      throw std::invalid_argument("pole_gains: poles are not closed under conjugation");
    a(i) = ci.real();
  }
  return a;
}

Vec pole_gains(const Vec& real_poles) {
  std::vector<std::complex<double>> p(real_poles.size());
  for (int i = 0; i < real_poles.size(); ++i) p[i] = real_poles(i);
  return pole_gains(p);
}

ControllerFault::ControllerFault(std::string stage, const std::string& message)
    : std::runtime_error("controller " + stage + ": " + message), stage_(std::move(stage)) {}

double extend_to_diffeo(const ParameterizingMap& map, const ZSelect& z, const ShiftWindow& at) {
  const TriangularForm& tf = map.system().form();
  if (map.max_back() != 0)
    throw std::invalid_argument("extend_to_diffeo: map still consumes backward shifts");
  const int m = tf.flat_dim();
  const Eigen::VectorXi depths = map.window_depths();
  int total = 0;
  for (int j = 0; j < m; ++j) total += depths(j);
  if (tf.n() + static_cast<int>(z.size()) != total)
    throw std::invalid_argument("extend_to_diffeo: " + std::to_string(z.size()) +
                                " entries do not make the extension square (need " +
                                std::to_string(total - tf.n()) + ")");
  std::set<std::pair<int, int>> seen;
  for (const auto& e : z) {
    if (e.component < 0 || e.component >= m || e.shift < 0 || e.shift >= depths(e.component))
      throw std::invalid_argument("extend_to_diffeo: entry (" + std::to_string(e.component) +
                                  ", " + std::to_string(e.shift) + ") outside the window");
    if (!seen.emplace(e.component, e.shift).second)
      throw std::invalid_argument("extend_to_diffeo: duplicate entry (component " +
                                  std::to_string(e.component) + ", shift " +
                                  std::to_string(e.shift) + ")");
  }
  const int maxdepth = depths.maxCoeff();
  if (!at.covers(0, maxdepth - 1))
    throw std::invalid_argument("extend_to_diffeo: probe window must cover the map depth");

  // Free window coordinates, sample-major.
  std::vector<std::pair<int, int>> coords;  // (shift, component)
  for (int i = 0; i < maxdepth; ++i)
    for (int j = 0; j < m; ++j)
      if (i < depths(j)) coords.emplace_back(i, j);
  auto full = [&](const ShiftWindow& w) -> Vec {
    Vec r(total);
    r.head(tf.n()) = map.evaluate_state(w, 0);
    for (size_t i = 0; i < z.size(); ++i)
      r(tf.n() + static_cast<int>(i)) = w.at(z[i].shift)(z[i].component);
    return r;
  };
  Mat J(total, total);
  for (size_t c = 0; c < coords.size(); ++c) {
    const auto [shift, comp] = coords[c];
    const double h = 1e-6 * std::max(1.0, std::abs(at.at(shift)(comp)));
    ShiftWindow wp = at, wm = at;
    Vec sp = at.at(shift), sm = at.at(shift);
    sp(comp) += h;
    sm(comp) -= h;
    wp.set(shift, sp);
    wm.set(shift, sm);
    J.col(static_cast<int>(c)) = (full(wp) - full(wm)) / (2.0 * h);
  }
  Eigen::JacobiSVD<Mat> svd(J);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (!(smax > 0.0) || smin < 1e-8 * smax)
    throw std::invalid_argument(
        "extend_to_diffeo: selected entries do not extend the state map to a diffeomorphism "
        "(singular value ratio " +
        std::to_string(smax > 0.0 ? smin / smax : 0.0) + ")");
  return smin / smax;
}

FlatnessController::FlatnessController(ParameterizingMap map, CoordinateChange change,
                                       ControllerConfig cfg)
    : map_(std::move(map)), change_(std::move(change)), cfg_(std::move(cfg)) {
  const TriangularForm& tf = map_.system().form();
  m_ = tf.flat_dim();
  if (map_.max_back() != 0)
    throw std::invalid_argument(
        "FlatnessController: map consumes backward shifts, re-anchor it first");
  const Eigen::VectorXi depths = map_.window_depths();
  R_ = depths.size() ? depths(0) : 0;
  for (int j = 0; j < depths.size(); ++j)
    if (depths(j) != R_)
      throw std::invalid_argument("FlatnessController: window depth differs across components");
  if (R_ < 1) throw std::invalid_argument("FlatnessController: empty window");
  const int r2s = map_.state_fwd_shifts().size() ? map_.state_fwd_shifts().maxCoeff() : 0;
  if (r2s > R_ - 1)
    throw std::invalid_argument("FlatnessController: state map exceeds the window estimate");
  if (tf.n() + static_cast<int>(cfg_.z_select.size()) != m_ * R_)
    throw std::invalid_argument("FlatnessController: memory size must be " +
                                std::to_string(m_ * R_ - tf.n()));
  std::set<std::pair<int, int>> seen;
  for (const auto& e : cfg_.z_select) {
    if (e.component < 0 || e.component >= m_ || e.shift < 0 || e.shift >= R_)
      throw std::invalid_argument("FlatnessController: memory entry outside the window");
    if (!seen.emplace(e.component, e.shift).second)
      throw std::invalid_argument("FlatnessController: duplicate memory entry");
  }
  if (static_cast<int>(cfg_.gains.size()) != m_)
    throw std::invalid_argument("FlatnessController: need one gain vector per component");
  for (const auto& gj : cfg_.gains) {
    if (gj.size() != R_)
      throw std::invalid_argument("FlatnessController: gain vector length must equal the depth");
    if (!all_finite(gj)) throw std::invalid_argument("FlatnessController: non-finite gains");
  }
  if (change_.n != tf.n() || change_.m != tf.m() || !change_.has_input_transform())
    throw std::invalid_argument(
        "FlatnessController: coordinate change does not match the system");
  if (!(cfg_.newton_tol > 0.0) || cfg_.max_iters < 1)
    throw std::invalid_argument("FlatnessController: bad solver settings");
}

ShiftWindow FlatnessController::invert_psi(const Vec& xb, const Vec& z,
                                           const ShiftWindow* warm) const {
  const TriangularForm& tf = map_.system().form();
  if (xb.size() != tf.n() || z.size() != static_cast<int>(cfg_.z_select.size()))
    throw std::invalid_argument("invert_psi: dimension mismatch");
  if (cfg_.psi_hat) {
    ShiftWindow w(m_, 0, 0);
    try {
      w = cfg_.psi_hat(xb, z);
    } catch (const std::exception& e) {
      throw ControllerFault("invert", e.what());
    }
    if (w.dim() != m_ || !w.covers(0, R_ - 1))
      throw ControllerFault("invert", "closed-form window has the wrong extent");
    return w;
  }
  auto unpack = [&](const Vec& q) {
    ShiftWindow w(m_, 0, R_ - 1);
    for (int i = 0; i < R_; ++i) w.set(i, q.segment(i * m_, m_));
    return w;
  };
  auto residual = [&](const Vec& q) -> Vec {
    ShiftWindow w = unpack(q);
    Vec r(m_ * R_);
    r.head(tf.n()) = map_.evaluate_state(w, 0) - xb;
    for (size_t i = 0; i < cfg_.z_select.size(); ++i)
      r(tf.n() + static_cast<int>(i)) =
          w.at(cfg_.z_select[i].shift)(cfg_.z_select[i].component) - z(i);
    return r;
  };
  Vec q0(m_ * R_);
  if (warm && warm->dim() == m_ && warm->covers(0, R_ - 1)) {
    for (int i = 0; i < R_; ++i) q0.segment(i * m_, m_) = warm->at(i);
  } else {
    // Constant window at the measured flat output.
    Vec y0(m_);
    for (int level = tf.p(); level >= 1; --level) {
      const auto& b = tf.block_at_level(level);
      if (b.y_dim > 0)
        y0.segment(tf.flat_offset(level), b.y_dim) = xb.segment(tf.state_offset(level), b.y_dim);
    }
    for (int i = 0; i < R_; ++i) q0.segment(i * m_, m_) = y0;
  }
  ImplicitStepSettings st;
  st.Ts = 1.0;
  st.newton_tol = cfg_.newton_tol;
  st.max_iters = cfg_.max_iters;
  Vec q;
  try {
    q = detail::newton_solve(residual, q0, st);
  } catch (const std::exception& e) {
    throw ControllerFault("invert", e.what());
  }
  return unpack(q);
}

Vec FlatnessController::stabilizing_v(const ShiftWindow& est, const ShiftWindow& ref) const {
  if (!est.covers(0, R_ - 1) || !ref.covers(0, R_))
    throw std::invalid_argument("stabilizing_v: window too small");
  Vec v(m_);
  for (int j = 0; j < m_; ++j) {
    double acc = ref.at(R_)(j);
    for (int i = 0; i < R_; ++i) acc -= cfg_.gains[j](i) * (est.at(i)(j) - ref.at(i)(j));
    v(j) = acc;
  }
  return v;
}

Vec FlatnessController::dynamic_feedback_step(const ShiftWindow& window, State& st) const {
  if (window.dim() != m_ || !window.covers(0, R_))
    throw std::invalid_argument("dynamic_feedback_step: window must cover shifts [0, R]");
  Vec u;
  try {
    u = map_.recover_input(window, change_, 0);
  } catch (const std::exception& e) {
    throw ControllerFault("input", e.what());
  }
  Vec znew(static_cast<int>(cfg_.z_select.size()));
  for (size_t i = 0; i < cfg_.z_select.size(); ++i)
    znew(static_cast<int>(i)) = window.at(cfg_.z_select[i].shift + 1)(cfg_.z_select[i].component);
  ShiftWindow warm(m_, 0, R_ - 1);
  for (int i = 0; i < R_; ++i) warm.set(i, window.at(i + 1));
  st.z = std::move(znew);
  st.warm = std::move(warm);
  st.last_u = u;
  return u;
}

FlatnessController::State FlatnessController::init_state(const ShiftWindow& ref) const {
  if (ref.dim() != m_ || !ref.covers(0, R_))
    throw std::invalid_argument("init_state: reference must cover shifts [0, R]");
  State st{Vec(static_cast<int>(cfg_.z_select.size())), ShiftWindow(m_, 0, R_ - 1), Vec()};
  for (size_t i = 0; i < cfg_.z_select.size(); ++i)
    st.z(static_cast<int>(i)) = ref.at(cfg_.z_select[i].shift)(cfg_.z_select[i].component);
  for (int i = 0; i < R_; ++i) st.warm.set(i, ref.at(i));
  try {
    st.last_u = map_.recover_input(ref, change_, 0);
  } catch (const std::exception& e) {
    throw ControllerFault("input", e.what());
  }
  return st;
}

FlatnessController::StepResult FlatnessController::control_step(const Vec& x,
                                                                const ShiftWindow& ref,
                                                                State& st) const {
  Vec xb;
  try {
    xb = change_.state_fwd(x);
  } catch (const std::exception& e) {
    throw ControllerFault("transform", e.what());
  }
  return control_step_transformed(xb, ref, st);
}

FlatnessController::StepResult FlatnessController::control_step_transformed(
    const Vec& xb, const ShiftWindow& ref, State& st) const {
  if (ref.dim() != m_ || !ref.covers(0, R_))
    throw std::invalid_argument("control_step_transformed: reference must cover [0, R]");
  ShiftWindow west = invert_psi(xb, st.z, &st.warm);
  Vec v = stabilizing_v(west, ref);
  ShiftWindow window(m_, 0, R_);
  for (int i = 0; i < R_; ++i) window.set(i, west.at(i));
  window.set(R_, v);
  Vec u = dynamic_feedback_step(window, st);
  return StepResult{std::move(u), std::move(v), std::move(window), west.at(0)};
}

}  // namespace flatsim
