#include "flatsim/parameterize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace flatsim {

DiscreteTriangularSystem::DiscreteTriangularSystem(std::shared_ptr<const TriangularForm> tf,
                                                   Scheme scheme, double Ts,
                                                   ImplicitStepSettings solver)
    : tf_(std::move(tf)), scheme_(scheme), settings_(solver) {
  if (!tf_) throw std::invalid_argument("DiscreteTriangularSystem: null triangular form");
  settings_.Ts = Ts;
  settings_.validate();
  RankReport rep = check_rank_conditions(*tf_, tf_->x_ref(), tf_->u_ref(), scheme_);
  if (!rep.all_pass) {
    for (const auto& b : rep.blocks)
      if (!b.pass)
        throw std::invalid_argument(
            "DiscreteTriangularSystem: solvability condition of block " + std::to_string(b.level) +
            " fails at the reference point (sigma_min " + std::to_string(b.sigma_min) + ")");
  }
}

Vec DiscreteTriangularSystem::step(const Vec& x, const Vec& u, const Vec* guess) const {
  if (x.size() != tf_->n() || u.size() != tf_->m())
    throw std::invalid_argument("DiscreteTriangularSystem::step: dimension mismatch");
  const double Ts = settings_.Ts;
  if (scheme_ == Scheme::explicit_euler) return x + Ts * tf_->assembled(x, u);
  auto residual = [&](const Vec& xn) -> Vec { return xn - x - Ts * tf_->assembled(xn, u); };
  Vec w0 = guess ? *guess : Vec(x + Ts * tf_->assembled(x, u));
  return detail::newton_solve(residual, w0, settings_);
}

namespace {

// Lazy, memoized block-solve engine for one evaluate() call. Quantities are
// indexed by (level, shift) relative to the evaluation base; window reads go
// through flat(), which applies the per-component origin offset.
struct EvalContext {
  const TriangularForm& tf;
  Scheme scheme;
  const ImplicitStepSettings& settings;
  const ShiftWindow& w;
  int base;
  const Eigen::VectorXi& origin;

  // (equation level, stage base) -> (xhat_{level-1} at its shift, u slice of the level)
  std::map<std::pair<int, int>, std::pair<Vec, Vec>> stage_cache;
  // level -> most recent stage solution, used to chain Newton seeds
  std::map<int, Vec> last_solution;

  Vec flat(int t) const {
    Vec y(tf.flat_dim());
    for (int j = 0; j < y.size(); ++j) y(j) = w.at(base + t + origin(j))(j);
    return y;
  }
};

Vec state_block(EvalContext& c, int level, int t);

const std::pair<Vec, Vec>& stage(EvalContext& c, int level, int sb) {
  const auto key = std::make_pair(level, sb);
  if (auto it = c.stage_cache.find(key); it != c.stage_cache.end()) return it->second;

  const auto& eq = c.tf.block_at_level(level);
  const int h = (level >= 2) ? c.tf.block_at_level(level - 1).xhat_dim : 0;
  const int cu = eq.u_dim;
  const double Ts = c.settings.Ts;
  const int argshift = (c.scheme == Scheme::implicit_euler) ? sb + 1 : sb;

  // Resolve everything the residual reads before entering Newton, so the
  // callback itself never mutates the caches.
  Vec xk_b = state_block(c, level, sb);
  Vec xk_b1 = state_block(c, level, sb + 1);
  std::map<int, Vec> dep_states;
  for (int j : eq.state_deps)
    if (j >= level) dep_states.emplace(j, state_block(c, j, argshift));
  Vec y_lower;
  const bool reads_lower =
      std::find(eq.state_deps.begin(), eq.state_deps.end(), level - 1) != eq.state_deps.end();
  if (level >= 2 && reads_lower && c.tf.block_at_level(level - 1).y_dim > 0) {
    const auto& lower = c.tf.block_at_level(level - 1);
    y_lower = c.flat(argshift).segment(c.tf.flat_offset(level - 1), lower.y_dim);
  }
  std::map<int, Vec> dep_inputs;  // input index j -> u_j at the stage base
  for (int j : eq.input_deps)
    if (j != level - 1) {
      const int owner = j + 1;
      dep_inputs.emplace(j, stage(c, owner, sb).second);
    }

  auto residual = [&](const Vec& wv) -> Vec {
    Vec x = c.tf.x_ref();
    Vec u = c.tf.u_ref();
    for (const auto& [j, v] : dep_states) x.segment(c.tf.state_offset(j), v.size()) = v;
    if (level >= 2) {
      if (y_lower.size() > 0)
        x.segment(c.tf.state_offset(level - 1), y_lower.size()) = y_lower;
      if (h > 0) x.segment(c.tf.xhat_offset(level - 1), h) = wv.head(h);
    }
    for (const auto& [j, v] : dep_inputs)
      u.segment(c.tf.input_offset_of_level(j + 1), v.size()) = v;
    if (cu > 0) u.segment(c.tf.input_offset_of_level(level), cu) = wv.tail(cu);
    return xk_b + Ts * c.tf.f_block(level, x, u) - xk_b1;
  };

  Vec w0(h + cu);
  if (eq.stage_seed) {
    StageContext sc;
    sc.Ts = Ts;
    sc.scheme = c.scheme;
    sc.base = sb;
    sc.state = [&c, level](int lvl, int t) {
      if (lvl < level)
        throw std::invalid_argument("stage seed may only query levels at or above its equations");
      return state_block(c, lvl, t);
    };
    sc.flat = [&c](int t) { return c.flat(t); };
    w0 = eq.stage_seed(sc);
    if (w0.size() != h + cu)
      throw std::invalid_argument("stage seed for block " + std::to_string(level) +
                                  " returned wrong dimension");
  } else if (auto it = c.last_solution.find(level); it != c.last_solution.end()) {
    w0 = it->second;
  } else {
    if (h > 0) w0.head(h) = c.tf.x_ref().segment(c.tf.xhat_offset(level - 1), h);
    if (cu > 0) w0.tail(cu) = c.tf.u_ref().segment(c.tf.input_offset_of_level(level), cu);
  }

  Vec sol;
  try {
    sol = detail::newton_solve(residual, w0, c.settings);
  } catch (const StepFailure& e) {
    throw SingularityError("parameterizer: solve of block " + std::to_string(level) +
                           " equations failed at shift " + std::to_string(c.base + sb) + ": " +
                           e.what());
  } catch (const NumericError& e) {
    throw SingularityError("parameterizer: block " + std::to_string(level) +
                           " equations not evaluable at shift " + std::to_string(c.base + sb) +
                           ": " + e.what());
  }
  // Newton can converge on a degenerate branch where the window pins no
  // unique stage solution (free fall does this to the pitch block); reject
  // solutions whose stage Jacobian collapses.
  if (sol.size() > 0) {
    Mat J;
    try {
      J = jacobian_fd(residual, sol);
    } catch (const NumericError& e) {
      throw SingularityError("parameterizer: block " + std::to_string(level) +
                             " equations not evaluable at shift " + std::to_string(c.base + sb) +
                             ": " + e.what());
    }
    const Eigen::JacobiSVD<Mat> svd(J);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(sv.size() - 1) < 1e-10 * sv(0))
      throw SingularityError("parameterizer: block " + std::to_string(level) +
                             " stage equations are singular at shift " +
                             std::to_string(c.base + sb));
  }
  c.last_solution[level] = sol;
  auto entry = std::make_pair(Vec(sol.head(h)), Vec(sol.tail(cu)));
  return c.stage_cache.emplace(key, std::move(entry)).first->second;
}

Vec xhat(EvalContext& c, int level, int t) {
  const auto& b = c.tf.block_at_level(level);
  if (b.xhat_dim == 0) return Vec(0);
  const int sb = (c.scheme == Scheme::implicit_euler) ? t - 1 : t;
  return stage(c, level + 1, sb).first;
}

Vec ublock(EvalContext& c, int level, int t) {
  if (c.tf.block_at_level(level).u_dim == 0) return Vec(0);
  return stage(c, level, t).second;
}

Vec state_block(EvalContext& c, int level, int t) {
  const auto& b = c.tf.block_at_level(level);
  Vec s(b.state_dim());
  if (b.y_dim > 0) s.head(b.y_dim) = c.flat(t).segment(c.tf.flat_offset(level), b.y_dim);
  if (b.xhat_dim > 0) s.tail(b.xhat_dim) = xhat(c, level, t);
  return s;
}

// Per-component shift interval, with an empty state for untouched components.
struct Supp {
  Eigen::VectorXi lo, hi;
  static Supp empty(int m) {
    Supp s;
    s.lo = Eigen::VectorXi::Constant(m, std::numeric_limits<int>::max() / 4);
    s.hi = Eigen::VectorXi::Constant(m, std::numeric_limits<int>::min() / 4);
    return s;
  }
  void merge(const Supp& o, int offset = 0) {
    for (int j = 0; j < lo.size(); ++j) {
      if (o.lo(j) > o.hi(j)) continue;
      lo(j) = std::min(lo(j), o.lo(j) + offset);
      hi(j) = std::max(hi(j), o.hi(j) + offset);
    }
  }
  void cover(int comp, int shift) {
    lo(comp) = std::min(lo(comp), shift);
    hi(comp) = std::max(hi(comp), shift);
  }
};

}  // namespace

ParameterizingMap build_parameterizer(std::shared_ptr<const DiscreteTriangularSystem> dts,
                                      std::optional<ClosedFormParam> closed) {
  if (!dts) throw std::invalid_argument("build_parameterizer: null system");
  const TriangularForm& tf = dts->form();
  const int m = tf.flat_dim();
  const int p = tf.p();
  const bool implicit = dts->scheme() == Scheme::implicit_euler;

  // Shift supports follow the block recursion: solving block k's equations at
  // base 0 touches x_k at shifts {0, 1}, the declared dependencies at the
  // scheme's argument shift, and yields xhat_{k-1} one shift ahead (implicit)
  // plus u_{k-1} at the base.
  std::map<int, Supp> supp_y, supp_xhat, supp_u;  // keyed by level
  for (int level = p; level >= 1; --level) {
    const auto& b = tf.block_at_level(level);
    Supp sy = Supp::empty(m);
    for (int j = 0; j < b.y_dim; ++j) sy.cover(tf.flat_offset(level) + j, 0);
    supp_y[level] = sy;
  }
  auto supp_state = [&](int level) {
    Supp s = supp_y[level];
    if (tf.block_at_level(level).xhat_dim > 0) s.merge(supp_xhat[level]);
    return s;
  };
  supp_xhat[p] = Supp::empty(m);
  const int arg = implicit ? 1 : 0;
  for (int level = p; level >= 1; --level) {
    const auto& eq = tf.block_at_level(level);
    Supp E = Supp::empty(m);
    Supp sk = supp_state(level);
    E.merge(sk, 0);
    E.merge(sk, 1);
    for (int j : eq.state_deps) {
      if (j >= level)
        E.merge(supp_state(j), arg);
      else
        E.merge(supp_y[j], arg);  // the xhat part is the stage unknown
    }
    for (int j : eq.input_deps)
      if (j != level - 1) E.merge(supp_u[j + 1], 0);
    if (level >= 2 && tf.block_at_level(level - 1).xhat_dim > 0) {
      Supp sx = E;
      if (implicit) {
        Supp shifted = Supp::empty(m);
        shifted.merge(E, -1);
        sx = shifted;
      }
      supp_xhat[level - 1] = sx;
    } else if (level >= 2) {
      supp_xhat[level - 1] = Supp::empty(m);
    }
    supp_u[level] = eq.u_dim > 0 ? E : Supp::empty(m);
  }

  Supp full = Supp::empty(m);
  Supp states = Supp::empty(m);
  for (int level = p; level >= 1; --level) {
    states.merge(supp_y[level]);
    states.merge(supp_xhat[level]);
    full.merge(supp_u[level]);
  }
  full.merge(states);

  ParameterizingMap map;
  map.dts_ = std::move(dts);
  map.closed_ = std::move(closed);
  map.origin_ = Eigen::VectorXi::Zero(m);
  map.r1_.resize(m);
  map.r2_.resize(m);
  map.r2_state_.resize(m);
  for (int j = 0; j < m; ++j) {
    map.r1_(j) = full.lo(j) > full.hi(j) ? 0 : std::max(0, -full.lo(j));
    map.r2_(j) = full.lo(j) > full.hi(j) ? 0 : std::max(0, full.hi(j));
    map.r2_state_(j) = states.lo(j) > states.hi(j) ? 0 : std::max(0, states.hi(j));
  }
  if (!implicit && map.r1_.maxCoeff() != 0)
    throw std::logic_error("build_parameterizer: explicit scheme produced backward shifts");
  return map;
}

ParameterizingMap::Result ParameterizingMap::evaluate_impl(const ShiftWindow& w, int base,
                                                           bool allow_closed) const {
  if (w.dim() != dts_->form().flat_dim())
    throw std::invalid_argument("ParameterizingMap: window dimension mismatch");
  if (!w.covers(base - max_back(), base + max_fwd()))
    throw std::invalid_argument("ParameterizingMap: window must cover shifts [" +
                                std::to_string(base - max_back()) + ", " +
                                std::to_string(base + max_fwd()) + "]");
  if (allow_closed && closed_ && closed_->eval) {
    // Closed forms are written against the original shift indexing; a uniform
    // origin lets them see the window through a plain re-anchored view.
    if (origin_.size() == 0 || origin_.maxCoeff() == origin_.minCoeff()) {
      const int g = origin_.size() ? origin_(0) : 0;
      auto [x, u] = closed_->eval(w.shifted(g), base);
      return Result{std::move(x), std::move(u)};
    }
  }
  EvalContext c{dts_->form(), dts_->scheme(), dts_->solver(), w, base, origin_, {}, {}};
  const TriangularForm& tf = c.tf;
  Vec x(tf.n());
  for (int level = tf.p(); level >= 1; --level)
    x.segment(tf.state_offset(level), tf.block_at_level(level).state_dim()) =
        state_block(c, level, 0);
  Vec u(tf.m());
  for (int level = tf.p(); level >= 1; --level) {
    const int cu = tf.block_at_level(level).u_dim;
    if (cu > 0) u.segment(tf.input_offset_of_level(level), cu) = ublock(c, level, 0);
  }
  if (!all_finite(x) || !all_finite(u))
    throw NumericError("ParameterizingMap: non-finite evaluation result");
  return Result{std::move(x), std::move(u)};
}

ParameterizingMap::Result ParameterizingMap::evaluate(const ShiftWindow& w, int base) const {
  return evaluate_impl(w, base, true);
}

ParameterizingMap::Result ParameterizingMap::evaluate_generic(const ShiftWindow& w,
                                                              int base) const {
  return evaluate_impl(w, base, false);
}

Vec ParameterizingMap::evaluate_state(const ShiftWindow& w, int base) const {
  const TriangularForm& tf = dts_->form();
  if (w.dim() != tf.flat_dim())
    throw std::invalid_argument("ParameterizingMap: window dimension mismatch");
  const int fwd = r2_state_.size() ? r2_state_.maxCoeff() : 0;
  if (!w.covers(base - max_back(), base + fwd))
    throw std::invalid_argument("ParameterizingMap: state evaluation needs shifts [" +
                                std::to_string(base - max_back()) + ", " +
                                std::to_string(base + fwd) + "]");
  if (closed_ && closed_->state &&
      (origin_.size() == 0 || origin_.maxCoeff() == origin_.minCoeff())) {
    const int g = origin_.size() ? origin_(0) : 0;
    return closed_->state(w.shifted(g), base);
  }
  EvalContext c{tf, dts_->scheme(), dts_->solver(), w, base, origin_, {}, {}};
  Vec x(tf.n());
  for (int level = tf.p(); level >= 1; --level)
    x.segment(tf.state_offset(level), tf.block_at_level(level).state_dim()) =
        state_block(c, level, 0);
  if (!all_finite(x)) throw NumericError("ParameterizingMap: non-finite state evaluation");
  return x;
}

Vec ParameterizingMap::recover_input(const ShiftWindow& w, const CoordinateChange& change,
                                     int base) const {
  if (closed_ && closed_->input &&
      (origin_.size() == 0 || origin_.maxCoeff() == origin_.minCoeff())) {
    const int g = origin_.size() ? origin_(0) : 0;
    if (!w.covers(base - max_back(), base + max_fwd()))
      throw std::invalid_argument("ParameterizingMap: window too small for input recovery");
    return closed_->input(w.shifted(g), base);
  }
  if (!change.has_input_transform())
    throw std::invalid_argument("recover_input: coordinate change has no input transformation");
  Result here = evaluate(w, base);
  const bool implicit = dts_->scheme() == Scheme::implicit_euler;
  Vec x_arg = implicit ? evaluate_state(w, base + 1) : here.x;
  return change.input_inv_shifted(x_arg, here.u);
}

Vec recover_original_input(const ParameterizingMap& map, const ShiftWindow& w,
                           const CoordinateChange& change) {
  return map.recover_input(w, change, 0);
}

double roundtrip_validate(const ParameterizingMap& map, const ShiftWindow& sequence, int steps) {
  if (steps < 1) throw std::invalid_argument("roundtrip_validate: need at least one step");
  const auto& dts = map.system();
  double worst = 0.0;
  ParameterizingMap::Result cur = map.evaluate(sequence, 0);
  for (int k = 0; k < steps; ++k) {
    ParameterizingMap::Result nxt = map.evaluate(sequence, k + 1);
    Vec stepped = dts.step(cur.x, cur.u);
    worst = std::max(worst, (stepped - nxt.x).norm());
    cur = std::move(nxt);
  }
  return worst;
}

ParameterizingMap redefine_shift_origin(const ParameterizingMap& map) {
  if (map.r1_.size() == 0 || map.r1_.maxCoeff() == 0)
    throw std::invalid_argument(
        "redefine_shift_origin: map already consumes no backward shifts (R1 = 0)");
  ParameterizingMap out = map;
  out.origin_ = map.origin_ + map.r1_;
  out.r2_ = map.r1_ + map.r2_;
  out.r2_state_ = map.r1_ + map.r2_state_;
  out.r1_.setZero();
  return out;
}

}  // namespace flatsim
