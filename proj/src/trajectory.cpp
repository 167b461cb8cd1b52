#include "flatsim/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace flatsim {

namespace {
double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}
}  // namespace

Vec smoothstep_coeffs(int s) {
  if (s < 0) throw std::invalid_argument("smoothstep_coeffs: smoothness must be nonnegative");
  Vec c = Vec::Zero(2 * s + 2);
  double sign = 1.0;
  for (int k = 0; k <= s; ++k) {
    c(s + 1 + k) = sign * binom(s + k, k) * binom(2 * s + 1, s - k);
    sign = -sign;
  }
  return c;
}

double polyval(const Vec& coeffs, double x, int deriv) {
  if (deriv < 0) throw std::invalid_argument("polyval: derivative order must be nonnegative");
  if (deriv >= coeffs.size()) return 0.0;
  double acc = 0.0;
  for (int i = static_cast<int>(coeffs.size()) - 1; i >= deriv; --i) {
    double fall = 1.0;
    for (int j = 0; j < deriv; ++j) fall *= i - j;
    acc = acc * x + coeffs(i) * fall;
  }
  return acc;
}

ReferenceTrajectory::ReferenceTrajectory(std::vector<std::vector<Piece>> pieces, int smoothness,
                                         std::optional<double> domain_end)
    : pieces_(std::move(pieces)), smoothness_(smoothness), domain_end_(domain_end) {
  if (pieces_.empty()) throw std::invalid_argument("ReferenceTrajectory: no components");
  if (smoothness_ < 0)
    throw std::invalid_argument("ReferenceTrajectory: smoothness must be nonnegative");
  const double tol = 1e-10;
  for (size_t j = 0; j < pieces_.size(); ++j) {
    auto& comp = pieces_[j];
    std::sort(comp.begin(), comp.end(),
              [](const Piece& a, const Piece& b) { return a.t0 < b.t0; });
    const std::string where = "ReferenceTrajectory component " + std::to_string(j);
    for (size_t i = 0; i < comp.size(); ++i) {
      if (!(comp[i].t1 > comp[i].t0))
        throw std::invalid_argument(where + ": piece with empty time span");
      if (comp[i].coeffs.size() == 0)
        throw std::invalid_argument(where + ": piece without coefficients");
      if (i + 1 < comp.size() && comp[i].t1 > comp[i + 1].t0 + tol)
        throw std::invalid_argument(where + ": overlapping pieces");
    }
    // Joins must be C^s. A piece bordering a constant stretch (the outer
    // extensions or a gap) needs vanishing derivatives there.
    auto scale = [&](double v) { return std::max(1.0, std::abs(v)); };
    for (size_t i = 0; i < comp.size(); ++i) {
      const Piece& pc = comp[i];
      const bool gap_before = (i == 0) || comp[i - 1].t1 < pc.t0 - tol;
      const bool gap_after = (i + 1 == comp.size()) || pc.t1 < comp[i + 1].t0 - tol;
      if (gap_before) {
        if (i > 0) {
          const Piece& prev = comp[i - 1];
          const double held = polyval(prev.coeffs, prev.t1 - prev.t0, 0);
          if (std::abs(polyval(pc.coeffs, 0.0, 0) - held) > tol * scale(held))
            throw std::invalid_argument(where + ": value jump across constant stretch at t = " +
                                        std::to_string(pc.t0));
        }
        for (int d = 1; d <= smoothness_; ++d)
          if (std::abs(polyval(pc.coeffs, 0.0, d)) >
              tol * scale(polyval(pc.coeffs, 0.0, 0)))
            throw std::invalid_argument(where + ": derivative " + std::to_string(d) +
                                        " does not vanish at t = " + std::to_string(pc.t0));
      } else {
        const Piece& prev = comp[i - 1];
        for (int d = 0; d <= smoothness_; ++d) {
          const double a = polyval(prev.coeffs, prev.t1 - prev.t0, d);
          const double b = polyval(pc.coeffs, 0.0, d);
          if (std::abs(a - b) > tol * scale(a))
            throw std::invalid_argument(where + ": join at t = " + std::to_string(pc.t0) +
                                        " is not C^" + std::to_string(smoothness_));
        }
      }
      if (gap_after) {
        const double span = pc.t1 - pc.t0;
        for (int d = 1; d <= smoothness_; ++d)
          if (std::abs(polyval(pc.coeffs, span, d)) >
              tol * scale(polyval(pc.coeffs, span, 0)))
            throw std::invalid_argument(where + ": derivative " + std::to_string(d) +
                                        " does not vanish at t = " + std::to_string(pc.t1));
      }
    }
  }
}

double ReferenceTrajectory::value(int component, double t, int deriv) const {
  if (component < 0 || component >= dim())
    throw std::invalid_argument("ReferenceTrajectory: component out of range");
  if (domain_end_ && t > *domain_end_ + 1e-12)
    throw std::out_of_range("ReferenceTrajectory: sample at t = " + std::to_string(t) +
                            " beyond the domain end " + std::to_string(*domain_end_));
  const auto& comp = pieces_[component];
  if (comp.empty()) return 0.0;
  // Containing piece, else the closest earlier one held at its end value.
  const Piece* pc = &comp.front();
  for (const auto& cand : comp) {
    if (cand.t0 <= t) pc = &cand;
    else break;
  }
  const double local = std::clamp(t, pc->t0, pc->t1) - pc->t0;
  if ((t < pc->t0 || t > pc->t1) && deriv > 0) return 0.0;
  return polyval(pc->coeffs, local, deriv);
}

Vec ReferenceTrajectory::value(double t) const {
  Vec v(dim());
  for (int j = 0; j < dim(); ++j) v(j) = value(j, t, 0);
  return v;
}

ReferenceTrajectory rest_to_rest(const Vec& from, const Vec& to, double t0, double duration,
                                 int s, std::optional<double> domain_end) {
  if (from.size() != to.size()) throw std::invalid_argument("rest_to_rest: dimension mismatch");
  if (from.size() == 0) throw std::invalid_argument("rest_to_rest: empty endpoints");
  if (!(duration > 0.0)) throw std::invalid_argument("rest_to_rest: duration must be positive");
  const Vec step = smoothstep_coeffs(s);
  std::vector<std::vector<ReferenceTrajectory::Piece>> pieces(from.size());
  for (int j = 0; j < from.size(); ++j) {
    Vec c = Vec::Zero(step.size());
    // from + (to - from) S((t - t0)/duration), expanded in powers of (t - t0)
    for (int i = 0; i < step.size(); ++i)
      c(i) = (to(j) - from(j)) * step(i) / std::pow(duration, i);
    c(0) += from(j);
    pieces[j].push_back({t0, t0 + duration, std::move(c)});
  }
  return ReferenceTrajectory(std::move(pieces), s, domain_end);
}

ShiftWindow sample_reference(const ReferenceTrajectory& traj, int k, double Ts, int max_fwd) {
  if (!(Ts > 0.0)) throw std::invalid_argument("sample_reference: Ts must be positive");
  if (max_fwd < 0) throw std::invalid_argument("sample_reference: max_fwd must be nonnegative");
  ShiftWindow w(traj.dim(), 0, max_fwd);
  for (int i = 0; i <= max_fwd; ++i) w.set(i, traj.value((k + i) * Ts));
  return w;
}

}  // namespace flatsim
