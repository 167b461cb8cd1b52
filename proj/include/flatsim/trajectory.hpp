#pragma once

#include <optional>
#include <vector>

#include "flatsim/core.hpp"

namespace flatsim {

/// Power-basis coefficients (low order first) of the degree 2s+1 polynomial
/// mapping [0, 1] to [0, 1] with derivatives up to order s vanishing at both
/// ends.
Vec smoothstep_coeffs(int s);

/// Evaluates the given derivative of a power-basis polynomial.
double polyval(const Vec& coeffs, double x, int deriv = 0);

/// Per-component piecewise polynomial reference, held constant outside and
/// between its pieces. Construction rejects trajectories that are not C^s
/// across every join, including the constant extensions (tolerance 1e-10
/// relative to the local value scale). An optional domain end makes sampling
/// beyond it an error instead of extending.
class ReferenceTrajectory {
 public:
  struct Piece {
    double t0, t1;
    Vec coeffs;  // polynomial in (t - t0) on [t0, t1]
  };

  ReferenceTrajectory(std::vector<std::vector<Piece>> pieces, int smoothness,
                      std::optional<double> domain_end = std::nullopt);

  int dim() const { return static_cast<int>(pieces_.size()); }
  int smoothness() const { return smoothness_; }
  std::optional<double> domain_end() const { return domain_end_; }

  double value(int component, double t, int deriv = 0) const;
  Vec value(double t) const;

 private:
  std::vector<std::vector<Piece>> pieces_;
  int smoothness_;
  std::optional<double> domain_end_;
};

/// Reference moving every component from `from` to `to` over
/// [t0, t0 + duration] along the smoothness-s step, at rest outside.
ReferenceTrajectory rest_to_rest(const Vec& from, const Vec& to, double t0, double duration,
                                 int s, std::optional<double> domain_end = std::nullopt);

/// Window of reference samples w(i) = y_d((k + i) Ts) for i = 0..max_fwd.
ShiftWindow sample_reference(const ReferenceTrajectory& traj, int k, double Ts, int max_fwd);

}  // namespace flatsim
