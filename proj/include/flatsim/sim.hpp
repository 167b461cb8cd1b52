#pragma once

#include <memory>
#include <string>
#include <vector>

#include "flatsim/control.hpp"
#include "flatsim/core.hpp"
#include "flatsim/trajectory.hpp"
#include "flatsim/vtol.hpp"

namespace flatsim {

/// Closed-loop study setup. The maneuver start and target are center-of-mass
/// positions; the flat-output reference adds the hover offset. plant selects
/// the simulated dynamics: "continuous" integrates the aircraft between
/// samples, "discrete" steps the Euler-discretized transformed model the
/// controller is exact for.
struct SimConfig {
  Scheme scheme = Scheme::implicit_euler;
  double Ts = 0.1;
  double Tn = 1e-4;
  double horizon = 10.0;
  double start_time = 0.0;
  double duration = 5.0;
  int smoothness = 5;
  Vec start = (Vec(2) << 0.0, 0.0).finished();
  Vec target = (Vec(2) << 5.0, 2.0).finished();
  std::vector<double> poles = {0.6};  // one entry replicates across the depth
  Vec perturbation = (Vec(6) << 0.2, 0.0, 0.1, 0.0, 0.0, 0.0).finished();
  VtolParams vtol;
  std::string plant = "continuous";
  std::vector<double> sweep_ts = {0.2, 0.1, 0.05, 0.025};

  void validate() const;
};

/// Parses the JSON text form of SimConfig. Unknown or ill-typed keys are
/// errors naming the key and the accepted set.
SimConfig parse_sim_config(const std::string& json_text);
SimConfig load_sim_config(const std::string& path);

struct SimRecord {
  double t = 0.0;
  Vec x;      // plant state, original coordinates
  Vec u;      // applied input
  Vec y_ref;  // reference output sample
  Vec y_est;  // controller's output estimate (NaN once faulted)
  Vec v;      // appended window sample (NaN once faulted)
  bool fault = false;
};

struct SimResult {
  std::vector<SimRecord> records;
  bool fault = false;
  std::string fault_stage;
  int fault_step = -1;
};

struct RunMetrics {
  double max_position_error = 0.0;  // center of mass against its reference
  double end_position_error = 0.0;
  double settle_time = -1.0;  // first time the error stays inside the band, -1 if never
  double band = 0.0;          // 2 percent of the maneuver length, at least 0.02
  bool fault = false;
};

/// Everything the closed loop is wired from, for one scheme and step size.
struct VtolStack {
  VtolParams params;
  ContinuousSystem sys;
  ContinuousSystem transformed;
  CoordinateChange change;
  std::shared_ptr<const DiscreteTriangularSystem> dts;
  ParameterizingMap map;       // original anchoring
  ParameterizingMap anchored;  // consumes no backward shifts
  FlatnessController ctrl;
};

/// Builds the full VTOL control stack. poles holds one pole per window shift
/// or a single pole replicated; closed_forms toggles the closed-form
/// parameterization and window reconstruction against the generic solvers.
VtolStack make_vtol_stack(const VtolParams& p, Scheme scheme, double Ts, const Vec& poles,
                          bool closed_forms = true);

/// Reference for the configured maneuver as a flat-output trajectory.
ReferenceTrajectory maneuver_reference(const SimConfig& cfg);

/// Runs the closed loop. On a controller fault the last input is held for the
/// remainder and the fault is latched into the records.
SimResult run_closed_loop(const SimConfig& cfg);

RunMetrics run_metrics(const SimResult& result, const SimConfig& cfg);

struct CompareResult {
  SimResult implicit_run, explicit_run;
  RunMetrics implicit_metrics, explicit_metrics;
};

/// Runs the same configuration under both schemes.
CompareResult compare_schemes(const SimConfig& cfg);

/// Writes the records as CSV (full precision, units in the header) and a
/// .meta.json sidecar describing the run.
void export_csv(const std::string& path, const SimResult& result, const SimConfig& cfg);

}  // namespace flatsim
