#include "flatsim/triangular.hpp"

#include <algorithm>
#include <random>

namespace flatsim {

TriangularForm::TriangularForm(std::vector<TriangularBlock> blocks, Vec x_ref, Vec u_ref)
    : blocks_(std::move(blocks)), x_ref_(std::move(x_ref)), u_ref_(std::move(u_ref)) {
  if (blocks_.empty()) throw std::invalid_argument("TriangularForm: no blocks");
  const int p = static_cast<int>(blocks_.size());

  state_off_.resize(blocks_.size());
  input_off_.resize(blocks_.size());
  flat_off_.resize(blocks_.size());
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    if (b.y_dim < 0 || b.xhat_dim < 0 || b.u_dim < 0)
      throw std::invalid_argument("TriangularForm: negative block dimension");
    if (b.state_dim() == 0) throw std::invalid_argument("TriangularForm: block without state");
    if (!b.f) throw std::invalid_argument("TriangularForm: block dynamics missing");
    state_off_[i] = n_;
    input_off_[i] = m_;
    flat_off_[i] = flat_dim_;
    n_ += b.state_dim();
    m_ += b.u_dim;
    flat_dim_ += b.y_dim;
  }
  if (blocks_.front().xhat_dim != 0)
    throw std::invalid_argument("TriangularForm: top block must consist of flat outputs only");
  if (flat_dim_ != m_)
    throw std::invalid_argument("TriangularForm: flat output dimension must equal input count");

  // Square solvability: block k's equations are solved for (xhat_{k-1}, u_{k-1}),
  // where u_{k-1} is block k's own input slice; the bottom block's for u_0 alone.
  for (int level = p; level >= 2; --level) {
    const auto& eq = block_at_level(level);
    const auto& lower = block_at_level(level - 1);
    if (eq.state_dim() != lower.xhat_dim + eq.u_dim)
      throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                  " equations are not square against level " +
                                  std::to_string(level - 1) + " unknowns");
  }
  if (block_at_level(1).state_dim() != block_at_level(1).u_dim)
    throw std::invalid_argument("TriangularForm: bottom block equations are not square in u_0");

  if (x_ref_.size() != n_ || u_ref_.size() != m_)
    throw std::invalid_argument("TriangularForm: reference point dimension mismatch");

  validate_dependencies();
  for (int level = p; level >= 1; --level) {
    Vec v = f_block(level, x_ref_, u_ref_);
    if (!all_finite(v))
      throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                  " dynamics not finite at the reference point");
  }
  probe_excluded_partials();
}

int TriangularForm::idx(int level) const {
  if (level < 1 || level > p()) throw std::out_of_range("TriangularForm: bad block level");
  return p() - level;
}

std::vector<int> TriangularForm::flat_component_dims() const {
  std::vector<int> dims;
  for (const auto& b : blocks_)
    if (b.y_dim > 0) dims.push_back(b.y_dim);
  return dims;
}

Vec TriangularForm::f_block(int level, const Vec& x, const Vec& u) const {
  const auto& b = blocks_[idx(level)];
  Vec v = b.f(x, u);
  if (v.size() != b.state_dim())
    throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                " dynamics returned wrong dimension");
  return v;
}

Vec TriangularForm::assembled(const Vec& x, const Vec& u) const {
  if (x.size() != n_ || u.size() != m_)
    throw std::invalid_argument("TriangularForm::assembled: dimension mismatch");
  Vec dx(n_);
  for (int level = p(); level >= 1; --level)
    dx.segment(state_offset(level), block_at_level(level).state_dim()) = f_block(level, x, u);
  return dx;
}

DynamicsFn TriangularForm::assembled_fn() const {
  return [this](const Vec& x, const Vec& u) { return assembled(x, u); };
}

void TriangularForm::validate_dependencies() const {
  const int pp = p();
  for (int level = pp; level >= 1; --level) {
    const auto& b = block_at_level(level);
    const int lowest_state = std::max(level - 1, 1);
    for (int d : b.state_deps)
      if (d < lowest_state || d > pp)
        throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                    " declares state dependency on level " + std::to_string(d) +
                                    " outside the triangular pattern");
    for (int j : b.input_deps) {
      if (j < level - 1 || j > pp - 1)
        throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                    " declares input dependency on u_" + std::to_string(j) +
                                    " outside the triangular pattern");
      if (block_at_level(j + 1).u_dim == 0)
        throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                    " declares dependency on empty input slice u_" +
                                    std::to_string(j));
    }
  }
}

void TriangularForm::probe_excluded_partials() const {
  // Partials with respect to every slice outside a block's declared dependency
  // set must vanish. Probed at deterministic points near the reference.
  std::mt19937_64 rng(0x5eedu);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  const int pp = p();
  for (int probe = 0; probe < 3; ++probe) {
    Vec x = x_ref_;
    Vec u = u_ref_;
    for (int i = 0; i < x.size(); ++i) x(i) += dist(rng);
    for (int i = 0; i < u.size(); ++i) u(i) += dist(rng);
    for (int level = pp; level >= 1; --level) {
      const auto& b = block_at_level(level);
      auto declared_state = [&](int d) {
        return std::find(b.state_deps.begin(), b.state_deps.end(), d) != b.state_deps.end();
      };
      auto declared_input = [&](int j) {
        return std::find(b.input_deps.begin(), b.input_deps.end(), j) != b.input_deps.end();
      };
      for (int d = pp; d >= 1; --d) {
        if (declared_state(d)) continue;
        const int off = state_offset(d);
        const int len = block_at_level(d).state_dim();
        Mat J = jacobian_fd(
            [&](const Vec& slice) {
              Vec xm = x;
              xm.segment(off, len) = slice;
              return f_block(level, xm, u);
            },
            x.segment(off, len));
        if (J.cwiseAbs().maxCoeff() > 1e-8)
          throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                      " reads undeclared state level " + std::to_string(d));
      }
      for (int j = pp - 1; j >= 0; --j) {
        const int len = block_at_level(j + 1).u_dim;
        if (len == 0 || declared_input(j)) continue;
        const int off = input_offset_of_level(j + 1);
        Mat J = jacobian_fd(
            [&](const Vec& slice) {
              Vec um = u;
              um.segment(off, len) = slice;
              return f_block(level, x, um);
            },
            u.segment(off, len));
        if (J.cwiseAbs().maxCoeff() > 1e-8)
          throw std::invalid_argument("TriangularForm: block " + std::to_string(level) +
                                      " reads undeclared input slice u_" + std::to_string(j));
      }
    }
  }
}

RankReport check_rank_conditions(const TriangularForm& tf, const Vec& x, const Vec& u,
                                 Scheme scheme, double tol) {
  if (x.size() != tf.n() || u.size() != tf.m())
    throw std::invalid_argument("check_rank_conditions: point dimension mismatch");
  RankReport report;
  report.all_pass = true;
  // Implicit stepping differentiates the residual x_next - x - Ts f(x_next, u)
  // with respect to the forward-shifted xhat arguments; at a point check this
  // is -Ts df, so the singular-value ratio is scheme-independent but the sign
  // convention is kept for clarity. Ts is taken as 1.
  const double sign = (scheme == Scheme::implicit_euler) ? -1.0 : 1.0;

  auto probe = [&](int eq_level, int xh_off, int xh_len, int u_off, int u_len) {
    BlockRankInfo info;
    info.level = eq_level;
    info.rows = tf.block_at_level(eq_level).state_dim();
    info.cols = xh_len + u_len;
    Vec w0(info.cols);
    if (xh_len > 0) w0.head(xh_len) = x.segment(xh_off, xh_len);
    if (u_len > 0) w0.tail(u_len) = u.segment(u_off, u_len);
    Mat J;
    try {
      J = jacobian_fd(
          [&](const Vec& w) {
            Vec xm = x;
            Vec um = u;
            if (xh_len > 0) xm.segment(xh_off, xh_len) = w.head(xh_len);
            if (u_len > 0) um.segment(u_off, u_len) = w.tail(u_len);
            return Vec(sign * tf.f_block(eq_level, xm, um));
          },
          w0);
    } catch (const NumericError&) {
      // Dynamics not evaluable around this point: report as failing, not throwing.
      info.sigma_min = 0.0;
      info.sigma_max = 0.0;
      info.pass = false;
      report.blocks.push_back(info);
      report.all_pass = false;
      return;
    }
    Eigen::JacobiSVD<Mat> svd(J);
    info.sigma_max = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    info.sigma_min =
        svd.singularValues().size() ? svd.singularValues()(svd.singularValues().size() - 1) : 0.0;
    info.pass = info.sigma_max > 0.0 && info.sigma_min >= tol * info.sigma_max;
    report.blocks.push_back(info);
    report.all_pass = report.all_pass && info.pass;
  };

  for (int level = tf.p(); level >= 2; --level) {
    const auto& lower = tf.block_at_level(level - 1);
    probe(level, tf.xhat_offset(level - 1), lower.xhat_dim, tf.input_offset_of_level(level),
          tf.block_at_level(level).u_dim);
  }
  probe(1, 0, 0, tf.input_offset_of_level(1), tf.block_at_level(1).u_dim);
  return report;
}

}  // namespace flatsim
