#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "flatsim/selfcheck.hpp"
#include "flatsim/sim.hpp"

namespace {

using namespace flatsim;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

void print_metrics(const SimResult& r, const RunMetrics& m) {
  if (r.fault)
    std::cout << "fault: " << r.fault_stage << " at step " << r.fault_step << "\n";
  else
    std::cout << "fault: none\n";
  std::cout << "max position error: " << num(m.max_position_error) << " m\n"
            << "end position error: " << num(m.end_position_error) << " m\n";
  if (m.settle_time >= 0.0)
    std::cout << "settle time: " << num(m.settle_time) << " s (band " << num(m.band) << " m)\n";
  else
    std::cout << "settle time: never (band " << num(m.band) << " m)\n";
}

int cmd_simulate(const SimConfig& cfg, const std::string& out) {
  const SimResult r = run_closed_loop(cfg);
  const RunMetrics m = run_metrics(r, cfg);
  std::cout << "scheme: " << scheme_name(cfg.scheme) << "\n"
            << "samples: " << r.records.size() << " (Ts = " << num(cfg.Ts) << " s, plant "
            << cfg.plant << ")\n";
  print_metrics(r, m);
  if (!out.empty()) {
    export_csv(out, r, cfg);
    std::cout << "wrote " << out << " and " << out << ".meta.json\n";
  }
  return r.fault ? 1 : 0;
}

std::string with_scheme_suffix(const std::string& path, const std::string& tag) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + "_" + tag;
  return path.substr(0, dot) + "_" + tag + path.substr(dot);
}

int cmd_compare(const SimConfig& cfg, const std::string& out) {
  const CompareResult r = compare_schemes(cfg);
  auto row = [](const std::string& label, const std::string& a, const std::string& b) {
    std::printf("%-28s %14s %14s\n", label.c_str(), a.c_str(), b.c_str());
  };
  row("metric", "implicit", "explicit");
  row("max position error (m)", num(r.implicit_metrics.max_position_error),
      num(r.explicit_metrics.max_position_error));
  row("end position error (m)", num(r.implicit_metrics.end_position_error),
      num(r.explicit_metrics.end_position_error));
  row("settle time (s)",
      r.implicit_metrics.settle_time >= 0.0 ? num(r.implicit_metrics.settle_time) : "never",
      r.explicit_metrics.settle_time >= 0.0 ? num(r.explicit_metrics.settle_time) : "never");
  row("fault", r.implicit_run.fault ? r.implicit_run.fault_stage : "none",
      r.explicit_run.fault ? r.explicit_run.fault_stage : "none");
  if (!out.empty()) {
    SimConfig ci = cfg;
    ci.scheme = Scheme::implicit_euler;
    SimConfig ce = cfg;
    ce.scheme = Scheme::explicit_euler;
    const std::string pi = with_scheme_suffix(out, "implicit");
    const std::string pe = with_scheme_suffix(out, "explicit");
    export_csv(pi, r.implicit_run, ci);
    export_csv(pe, r.explicit_run, ce);
    std::cout << "wrote " << pi << " and " << pe << " (with .meta.json sidecars)\n";
  }
  return (r.implicit_run.fault || r.explicit_run.fault) ? 1 : 0;
}

int cmd_validate(const std::string& config_path) {
  if (!config_path.empty()) {
    load_sim_config(config_path);
    std::cout << "[PASS] configuration " << config_path << " parses\n";
  }
  const auto results = run_identity_suites();
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
    std::cout << "\n";
    all = all && r.pass;
  }
  std::cout << (all ? "all checks passed\n" : "checks failed\n");
  return all ? 0 : 1;
}

int cmd_sweep(const SimConfig& cfg, const std::string& out) {
  struct Row {
    std::string scheme;
    double Ts;
    RunMetrics m;
  };
  std::vector<Row> rows;
  for (const Scheme scheme : {Scheme::implicit_euler, Scheme::explicit_euler})
    for (const double ts : cfg.sweep_ts) {
      SimConfig c = cfg;
      c.scheme = scheme;
      c.Ts = ts;
      const SimResult r = run_closed_loop(c);
      rows.push_back({scheme_name(scheme), ts, run_metrics(r, c)});
    }
  std::printf("%-10s %8s %22s %22s %14s %6s\n", "scheme", "Ts (s)", "max pos error (m)",
              "end pos error (m)", "settle (s)", "fault");
  for (const auto& r : rows)
    std::printf("%-10s %8s %22s %22s %14s %6s\n", r.scheme.c_str(), num(r.Ts).c_str(),
                num(r.m.max_position_error).c_str(), num(r.m.end_position_error).c_str(),
                r.m.settle_time >= 0.0 ? num(r.m.settle_time).c_str() : "never",
                r.m.fault ? "yes" : "no");
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("sweep: cannot open " + out);
    f << "scheme,Ts (s),max position error (m),end position error (m),settle time (s),fault "
         "(bool)\n";
    char buf[128];
    for (const auto& r : rows) {
      f << r.scheme << ",";
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,", r.Ts, r.m.max_position_error,
                    r.m.end_position_error, r.m.settle_time);
      f << buf << (r.m.fault ? 1 : 0) << "\n";
    }
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flat-system discretization and tracking control studies"};
  app.require_subcommand(1);
  std::string config_path, out_path, scheme_str;
  double ts_override = 0.0;

  CLI::App* subs[4];
  subs[0] = app.add_subcommand("simulate", "run the closed loop under one scheme");
  subs[1] = app.add_subcommand("compare", "run the closed loop under both schemes");
  subs[2] = app.add_subcommand("validate", "run the pipeline identity checks");
  subs[3] = app.add_subcommand("sweep", "run the closed loop across step sizes");
  std::vector<CLI::Option*> ts_opts, scheme_opts;
  for (auto* sub : subs) {
    sub->add_option("--config", config_path, "JSON configuration file");
    ts_opts.push_back(sub->add_option("--ts", ts_override, "sampling period override in seconds"));
    scheme_opts.push_back(sub->add_option("--scheme", scheme_str, "integration scheme")
                              ->check(CLI::IsMember({"implicit", "explicit"})));
    sub->add_option("--out", out_path, "output path");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    SimConfig cfg;
    if (!config_path.empty()) cfg = load_sim_config(config_path);
    bool ts_given = false, scheme_given = false;
    for (auto* o : ts_opts) ts_given = ts_given || o->count() > 0;
    for (auto* o : scheme_opts) scheme_given = scheme_given || o->count() > 0;
    if (ts_given) cfg.Ts = ts_override;
    if (scheme_given)
      cfg.scheme = scheme_str == "implicit" ? Scheme::implicit_euler : Scheme::explicit_euler;
    cfg.validate();

    if (subs[0]->parsed()) return cmd_simulate(cfg, out_path);
    if (subs[1]->parsed()) return cmd_compare(cfg, out_path);
    if (subs[2]->parsed()) return cmd_validate(config_path);
    return cmd_sweep(cfg, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
