#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "flatsim/sim.hpp"
#include "json.hpp"

using namespace flatsim;

namespace {

SimConfig quick_discrete() {
  SimConfig cfg;
  cfg.plant = "discrete";
  cfg.horizon = 4.0;
  cfg.duration = 2.0;
  cfg.target = (Vec(2) << 1.5, 0.8).finished();
  return cfg;
}

}  // namespace

TEST_CASE("config parsing fills defaults and honors every key") {
  SimConfig d = parse_sim_config("{}");
  CHECK(d.scheme == Scheme::implicit_euler);
  CHECK(d.Ts == 0.1);
  CHECK(d.Tn == 1e-4);
  CHECK(d.horizon == 10.0);
  CHECK(d.poles == std::vector<double>{0.6});
  CHECK(d.plant == "continuous");
  CHECK(d.start.norm() == 0.0);
  CHECK(d.target(0) == 5.0);

  const char* text = R"({
    "scheme": "explicit",
    "Ts": 0.05,
    "Tn": 0.001,
    "horizon": 6.0,
    "maneuver": {"start": [1, 2], "target": [3, -1], "duration": 2.5,
                 "start_time": 0.5, "smoothness": 4},
    "poles": [0.5, 0.5, 0.4, 0.3],
    "perturbation": [0, 0, 0.05, 0, 0, 0],
    "vtol": {"m": 1.1, "J": 0.12, "l": 0.21, "h": 0.04, "alpha": 0.28, "g": 9.81},
    "plant": "discrete",
    "sweep_Ts": [0.2, 0.1]
  })";
  SimConfig c = parse_sim_config(text);
  CHECK(c.scheme == Scheme::explicit_euler);
  CHECK(c.Ts == 0.05);
  CHECK(c.start(1) == 2.0);
  CHECK(c.target(1) == -1.0);
  CHECK(c.duration == 2.5);
  CHECK(c.start_time == 0.5);
  CHECK(c.smoothness == 4);
  CHECK(c.poles.size() == 4);
  CHECK(c.perturbation(2) == 0.05);
  CHECK(c.vtol.m == 1.1);
  CHECK(c.plant == "discrete");
  CHECK(c.sweep_ts == std::vector<double>{0.2, 0.1});

  SimConfig one = parse_sim_config(R"({"poles": 0.7})");
  CHECK(one.poles == std::vector<double>{0.7});
}

TEST_CASE("config parsing rejects unknown keys, bad types and bad values") {
  CHECK_THROWS_AS(parse_sim_config("not json"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config("[1, 2]"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"T_s": 0.1})"), std::invalid_argument);
  try {
    parse_sim_config(R"({"T_s": 0.1})");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("T_s") != std::string::npos);
    CHECK(msg.find("valid keys") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_sim_config(R"({"Ts": "fast"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"scheme": "midpoint"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"maneuver": {"stop": [0, 0]}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"maneuver": {"start": [0]}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"maneuver": {"smoothness": 2.5}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"poles": []})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"vtol": {"mass": 2}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"plant": "hybrid"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"Ts": 0.001, "Tn": 0.01})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sim_config(R"({"maneuver": {"smoothness": 12}})"),
                  std::invalid_argument);
}

TEST_CASE("config loading reports a missing file") {
  CHECK_THROWS_AS(load_sim_config("/nonexistent/config.json"), std::runtime_error);
}

TEST_CASE("maneuver reference tracks the output point above the center of mass") {
  SimConfig cfg = quick_discrete();
  ReferenceTrajectory traj = maneuver_reference(cfg);
  double eps = cfg.vtol.epsilon();
  Vec at_start = traj.value(cfg.start_time);
  CHECK(at_start(0) == doctest::Approx(cfg.start(0)));
  CHECK(at_start(1) == doctest::Approx(cfg.start(1) + eps));
  Vec at_end = traj.value(cfg.start_time + cfg.duration + 1.0);
  CHECK(at_end(0) == doctest::Approx(cfg.target(0)).epsilon(1e-9));
  CHECK(at_end(1) == doctest::Approx(cfg.target(1) + eps).epsilon(1e-9));
}

TEST_CASE("controller stack wiring validates the pole count") {
  VtolParams p;
  CHECK_THROWS_AS(make_vtol_stack(p, Scheme::implicit_euler, 0.1, Vec::Constant(2, 0.5)),
                  std::invalid_argument);
  VtolStack s = make_vtol_stack(p, Scheme::implicit_euler, 0.1, Vec::Constant(1, 0.5));
  CHECK(s.ctrl.depth() == 4);
  CHECK(s.anchored.max_back() == 0);
  CHECK(s.map.max_back() == 3);
}

TEST_CASE("closed loop on the discrete plant settles without faults") {
  for (Scheme sc : {Scheme::implicit_euler, Scheme::explicit_euler}) {
    SimConfig cfg = quick_discrete();
    cfg.scheme = sc;
    SimResult res = run_closed_loop(cfg);
    CHECK_FALSE(res.fault);
    CHECK(res.records.size() == 41);
    RunMetrics m = run_metrics(res, cfg);
    CHECK(m.band == doctest::Approx(0.02 * std::max((cfg.target - cfg.start).norm(), 1.0)));
    CHECK(m.end_position_error < 0.02);
    CHECK(m.settle_time >= 0.0);
    CHECK(m.settle_time < cfg.horizon);
    CHECK(m.max_position_error < 2.0);
  }
}

TEST_CASE("closed loop on the continuous plant stays near the reference") {
  SimConfig cfg = quick_discrete();
  cfg.plant = "continuous";
  cfg.Tn = 1e-3;
  cfg.horizon = 6.0;
  cfg.duration = 4.0;  // the 2 s maneuver outruns the Ts = 0.1 sampled loop
  SimResult res = run_closed_loop(cfg);
  CHECK_FALSE(res.fault);
  RunMetrics m = run_metrics(res, cfg);
  CHECK(m.end_position_error < 0.05);
  CHECK(m.max_position_error < 2.0);
}

TEST_CASE("controller faults latch and the last input is held") {
  SimConfig cfg = quick_discrete();
  cfg.perturbation = (Vec(6) << 0.0, 0.0, 2.0, 0.0, 0.0, 0.0).finished();  // pitch off the branch
  SimResult res = run_closed_loop(cfg);
  CHECK(res.fault);
  CHECK(res.fault_stage == "invert");
  CHECK(res.fault_step == 0);
  CHECK(res.records.size() == 41);  // plant kept integrating on the held input
  for (const auto& rec : res.records) {
    CHECK(rec.fault);
    CHECK(rec.u.size() == 2);
  }
  CHECK((res.records[5].u - res.records[0].u).norm() == 0.0);
  CHECK(std::isnan(res.records[0].y_est(0)));
  RunMetrics m = run_metrics(res, cfg);
  CHECK(m.fault);
}

TEST_CASE("metrics find the first time the error stays inside the band") {
  SimConfig cfg;
  cfg.start = Vec::Zero(2);
  cfg.target = (Vec(2) << 5.0, 2.0).finished();
  double eps = cfg.vtol.epsilon();

  SimResult res;
  auto rec_at = [&](double t, double err) {
    SimRecord r;
    r.t = t;
    r.x = Vec::Zero(6);
    r.x(0) = err;  // horizontal offset only
    r.y_ref = (Vec(2) << 0.0, eps).finished();
    return r;
  };
  res.records = {rec_at(0.0, 1.0), rec_at(1.0, 0.05), rec_at(2.0, 0.2), rec_at(3.0, 0.01),
                 rec_at(4.0, 0.02)};
  RunMetrics m = run_metrics(res, cfg);
  CHECK(m.band == doctest::Approx(0.02 * std::sqrt(29.0)));
  CHECK(m.settle_time == 3.0);
  CHECK(m.max_position_error == doctest::Approx(1.0));
  CHECK(m.end_position_error == doctest::Approx(0.02));

  res.records.push_back(rec_at(5.0, 0.5));
  m = run_metrics(res, cfg);
  CHECK(m.settle_time == -1.0);
}

TEST_CASE("csv export writes the labeled table and a machine-readable sidecar") {
  SimConfig cfg = quick_discrete();
  SimResult res = run_closed_loop(cfg);
  std::string path = "test_export_out.csv";
  export_csv(path, res, cfg);

  std::ifstream f(path);
  REQUIRE(static_cast<bool>(f));
  std::string header;
  std::getline(f, header);
  CHECK(header ==
        "t (s),qx (m),qz (m),theta (rad),vx (m/s),vz (m/s),omega (rad/s),F1 (N),F2 (N),"
        "yref1 (m),yref2 (m),yest1 (m),yest2 (m),v1 (m),v2 (m),fault (bool)");
  int rows = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(res.records.size()));

  std::ifstream mf(path + ".meta.json");
  REQUIRE(static_cast<bool>(mf));
  nlohmann::json meta = nlohmann::json::parse(mf);
  CHECK(meta["scheme"] == "implicit");
  CHECK(meta["Ts"] == cfg.Ts);
  CHECK(meta["plant"] == "discrete");
  CHECK(meta["rows"] == res.records.size());
  CHECK(meta["fault"]["occurred"] == false);
  CHECK(meta["metrics"].contains("settle_time"));
  CHECK(meta["maneuver"]["target"][0] == 1.5);

  std::remove(path.c_str());
  std::remove((path + ".meta.json").c_str());
}

TEST_CASE("scheme comparison runs both discretizations on one configuration") {
  SimConfig cfg = quick_discrete();
  CompareResult cr = compare_schemes(cfg);
  CHECK_FALSE(cr.implicit_metrics.fault);
  CHECK_FALSE(cr.explicit_metrics.fault);
  CHECK(cr.implicit_metrics.settle_time >= 0.0);
  CHECK(cr.explicit_metrics.settle_time >= 0.0);
  CHECK(cr.implicit_run.records.size() == cr.explicit_run.records.size());
}
