#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "flatsim/core.hpp"
#include "flatsim/types.hpp"

namespace flatsim {

/// Resolved quantities a stage-seed callback may query while the block solves
/// run top to bottom. state(level, shift) returns the full block state x_k,
/// which is defined only for levels at or above the equation block.
struct StageContext {
  double Ts = 0.0;
  Scheme scheme = Scheme::implicit_euler;
  int base = 0;  // shift at which the stage equation is anchored
  std::function<Vec(int level, int shift)> state;
  std::function<Vec(int shift)> flat;  // stacked flat-output sample
};

/// Initial guess for the unknowns (xhat_{k-1} then u_{k-1}) of the stage that
/// solves block k's equations. Optional; the default seed is the previously
/// solved neighbouring shift, falling back to the reference point.
using StageSeedFn = std::function<Vec(const StageContext&)>;

/// One block of a flat triangular form. Levels run p..1 from the top. Block k
/// owns the state x_k = (y_k, xhat_k) and the input slice u_{k-1}; its
/// dynamics may read state blocks p..k-1 and input slices with index >= k-1.
/// Dynamics callables take the full stacked state and input vectors; the
/// declared dependency lists say which slices are actually read and are
/// verified by finite-difference probing at construction.
struct TriangularBlock {
  int y_dim = 0;
  int xhat_dim = 0;
  int u_dim = 0;  // dimension of u_{k-1}
  DynamicsFn f;
  std::vector<int> state_deps;  // levels whose state block f reads
  std::vector<int> input_deps;  // input-slice indices (j of u_j) f reads
  StageSeedFn stage_seed;

  int state_dim() const { return y_dim + xhat_dim; }
};

/// Structurally flat triangular form with a reference point used for rank
/// checks, dependency probing and default solver seeds. The reference point
/// need not be an equilibrium; for forms with removable singularities it must
/// simply be a regular point of every block.
class TriangularForm {
 public:
  /// blocks are listed top-down (index 0 is level p).
  TriangularForm(std::vector<TriangularBlock> blocks, Vec x_ref, Vec u_ref);

  int p() const { return static_cast<int>(blocks_.size()); }
  int n() const { return n_; }
  int m() const { return m_; }
  int flat_dim() const { return flat_dim_; }

  const TriangularBlock& block_at_level(int level) const { return blocks_[idx(level)]; }
  const Vec& x_ref() const { return x_ref_; }
  const Vec& u_ref() const { return u_ref_; }

  // Stacked-vector layout. States concatenate (y_k, xhat_k) top-down; inputs
  // concatenate u_{p-1}..u_0.
  int state_offset(int level) const { return state_off_[idx(level)]; }
  int xhat_offset(int level) const { return state_off_[idx(level)] + blocks_[idx(level)].y_dim; }
  int input_offset_of_level(int level) const { return input_off_[idx(level)]; }
  /// Offset of flat components contributed by level within the stacked flat output.
  int flat_offset(int level) const { return flat_off_[idx(level)]; }
  /// Per-block flat dimensions (only blocks with y_dim > 0), top-down.
  std::vector<int> flat_component_dims() const;

  Vec f_block(int level, const Vec& x, const Vec& u) const;
  /// Full dx/dt assembled from the blocks.
  Vec assembled(const Vec& x, const Vec& u) const;
  DynamicsFn assembled_fn() const;

 private:
  int idx(int level) const;
  void validate_dependencies() const;
  void probe_excluded_partials() const;

  std::vector<TriangularBlock> blocks_;
  Vec x_ref_, u_ref_;
  int n_ = 0, m_ = 0, flat_dim_ = 0;
  std::vector<int> state_off_, input_off_, flat_off_;
};

struct BlockRankInfo {
  int level = 0;  // equation block whose solvability is probed
  int rows = 0;
  int cols = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  bool pass = false;  // sigma_min >= tol * sigma_max with sigma_max > 0
};

struct RankReport {
  std::vector<BlockRankInfo> blocks;
  bool all_pass = false;
};

/// Checks the block solvability conditions at a point. For the implicit scheme
/// the Jacobian is taken from the step residual with respect to the
/// forward-shifted xhat arguments (and the inputs); for the explicit scheme
/// with respect to the non-shifted ones. Pass/fail uses the scale-invariant
/// ratio sigma_min / sigma_max against tol, so rescaling a block's dynamics
/// does not change the verdict. Degenerate (all-zero) Jacobians fail; this
/// never throws for rank reasons.
RankReport check_rank_conditions(const TriangularForm& tf, const Vec& x, const Vec& u,
                                 Scheme scheme, double tol = 1e-8);

}  // namespace flatsim
