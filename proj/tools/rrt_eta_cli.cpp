#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "rrt_eta/bench.hpp"
#include "rrt_eta/scenario.hpp"

namespace fs = std::filesystem;
using namespace rrt_eta;

namespace {

constexpr int kExitSolved = 0;
constexpr int kExitError = 1;
constexpr int kExitExhausted = 2;

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(spec.substr(0, dots));
    const std::uint64_t hi = std::stoull(spec.substr(dots + 2));
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
  return seeds;
}

std::vector<Heuristic> parse_heuristics(const std::string& spec) {
  std::vector<Heuristic> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto h = parse_heuristic(tok);
    if (!h) throw std::runtime_error("unknown heuristic '" + tok + "'");
    out.push_back(*h);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string metrics_extension(MetricsFormat fmt) {
  return fmt == MetricsFormat::csv ? "csv" : "json";
}

void dump_monitor_trace(const Scenario& scenario, const std::vector<Vec>& states,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  MonitorState st = monitor_init(scenario.formula, 0);
  for (std::size_t t = 0; t < states.size(); ++t) {
    monitor_step(st, scenario.formula, states[t], static_cast<int>(t));
    st.for_each_instance([&](int node_id, int t_s, double lo, double hi, int n) {
      nlohmann::json line{{"t", t},     {"node_id", node_id}, {"t_s", t_s},
                          {"lo", lo},   {"hi", hi},           {"N", n}};
      out << line.dump() << '\n';
    });
  }
}

void print_run_summary(const RunRecord& rec) {
  std::cout << rec.run_id << ": "
            << (rec.status == PlanStatus::solved ? "solved" : "exhausted");
  if (rec.status == PlanStatus::solved)
    std::cout << "  eta=" << rec.final_eta
              << "  first_solution_iter=" << rec.first_solution_iter;
  std::cout << "  tree_size=" << rec.tree_size;
  if (!rec.rows.empty())
    std::cout << "  wall_ms=" << rec.rows.back().wall_ms;
  std::cout << '\n';
}

int cmd_plan(const std::string& scenario_path, const std::string& heuristic_opt,
             int seed_opt, int iters_opt, const std::string& out_dir,
             const std::string& metrics_fmt, bool monitor_debug) {
  Scenario scenario = load_scenario(scenario_path);
  Heuristic heuristic = scenario.planner.heuristic;
  if (!heuristic_opt.empty()) {
    const auto h = parse_heuristic(heuristic_opt);
    if (!h) throw std::runtime_error("unknown heuristic '" + heuristic_opt + "'");
    heuristic = *h;
  }
  const std::uint64_t seed =
      seed_opt >= 0 ? static_cast<std::uint64_t>(seed_opt)
                    : (scenario.seeds.empty() ? 0 : scenario.seeds.front());
  if (iters_opt > 0) scenario.planner.max_iters = iters_opt;

  const auto fmt = parse_metrics_format(metrics_fmt);
  if (!fmt) throw std::runtime_error("metrics format must be csv or json");

  const RunRecord rec = run_single(scenario, heuristic, seed);
  fs::create_directories(out_dir);
  const std::string base =
      (fs::path(out_dir) / (scenario.name + "_" + rec.run_id)).string();
  export_metrics({rec}, base + ".metrics." + metrics_extension(*fmt), *fmt);
  std::cout << "metrics: " << base + ".metrics." + metrics_extension(*fmt) << '\n';
  if (rec.status == PlanStatus::solved) {
    export_trajectory(rec.trajectory, base + ".states.csv");
    std::cout << "states:  " << base + ".states.csv" << '\n';
    if (monitor_debug) {
      dump_monitor_trace(scenario, rec.trajectory, base + ".monitor.jsonl");
      std::cout << "monitor: " << base + ".monitor.jsonl" << '\n';
    }
  }
  print_run_summary(rec);
  return rec.status == PlanStatus::solved ? kExitSolved : kExitExhausted;
}

int cmd_verify(const std::string& states_path, const std::string& scenario_path) {
  const Scenario scenario = load_scenario(scenario_path);
  const std::vector<Vec> states = import_trajectory(states_path);
  const VerifyReport report = verify_trajectory(states, scenario);

  std::cout << "trajectory: " << states.size() << " states, horizon "
            << scenario.formula.horizon() << '\n';
  std::cout << "agm_robustness    = " << report.agm << '\n';
  std::cout << "minmax_robustness = " << report.minmax << '\n';
  for (const auto& clause : report.clauses)
    std::cout << "  clause " << clause.text << ": agm=" << clause.agm
              << " minmax=" << clause.minmax << '\n';
  std::cout << (report.satisfied ? "SATISFIED" : "NOT SATISFIED")
            << (report.sign_agreement ? "" : "  (semantics disagree on the sign!)")
            << '\n';
  return report.satisfied ? kExitSolved : kExitExhausted;
}

int cmd_bench(const std::string& scenario_path, const std::string& seeds_spec,
              const std::string& heuristics_spec, int iters_opt,
              const std::string& out_dir, const std::string& metrics_fmt,
              int jobs) {
  Scenario scenario = load_scenario(scenario_path);
  if (iters_opt > 0) scenario.planner.max_iters = iters_opt;
  const std::vector<std::uint64_t> seeds =
      seeds_spec.empty() ? scenario.seeds : parse_seeds(seeds_spec);
  const std::vector<Heuristic> heuristics =
      heuristics_spec.empty()
          ? std::vector<Heuristic>{scenario.planner.heuristic}
          : parse_heuristics(heuristics_spec);
  const auto fmt = parse_metrics_format(metrics_fmt);
  if (!fmt) throw std::runtime_error("metrics format must be csv or json");

  const auto records = run_batch(scenario, heuristics, seeds, jobs);
  fs::create_directories(out_dir);
  const std::string metrics_path =
      (fs::path(out_dir) / (scenario.name + "_bench.metrics." +
                            metrics_extension(*fmt)))
          .string();
  export_metrics(records, metrics_path, *fmt);
  std::cout << "metrics: " << metrics_path << '\n';

  bool any_solved = false;
  for (const RunRecord& rec : records) {
    if (rec.status == PlanStatus::solved) {
      any_solved = true;
      const std::string traj_path =
          (fs::path(out_dir) / (scenario.name + "_" + rec.run_id + ".states.csv"))
              .string();
      export_trajectory(rec.trajectory, traj_path);
    }
    print_run_summary(rec);
  }

  for (Heuristic h : heuristics) {
    std::vector<double> finals, iters_to_solve;
    int solved = 0, total = 0;
    for (const RunRecord& rec : records) {
      if (rec.heuristic != h) continue;
      ++total;
      finals.push_back(rec.rows.empty() ? -1.0 : rec.rows.back().best_lo);
      if (rec.status == PlanStatus::solved) {
        ++solved;
        iters_to_solve.push_back(rec.first_solution_iter);
      }
    }
    std::cout << heuristic_name(h) << ": solved " << solved << "/" << total
              << "  median_final_lo=" << median(finals)
              << "  median_iters_to_solution=" << median(iters_to_solve) << '\n';
  }
  return any_solved ? kExitSolved : kExitExhausted;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STL motion planning with AGM robustness intervals"};
  app.require_subcommand(1);

  std::string scenario_path, states_path;
  std::string heuristic, seeds_spec, heuristics_spec;
  std::string out_dir = ".";
  std::string metrics_fmt = "csv";
  int seed = -1, iters = 0, jobs = 0;
  bool monitor_debug = false;

  auto* plan = app.add_subcommand("plan", "Plan a single scenario run");
  plan->add_option("scenario", scenario_path, "scenario JSON file")->required();
  plan->add_option("--heuristic", heuristic, "minmax|agm_stochastic|agm_fpl");
  plan->add_option("--seed", seed, "RNG seed (default: first scenario seed)");
  plan->add_option("--iters", iters, "override the iteration budget");
  plan->add_option("--out", out_dir, "output directory");
  plan->add_option("--metrics", metrics_fmt, "csv|json");
  plan->add_flag("--monitor-debug", monitor_debug,
                 "dump per-step monitor intervals for the solution");

  auto* verify = app.add_subcommand("verify", "Re-check a trajectory offline");
  verify->add_option("states", states_path, "states CSV file")->required();
  verify->add_option("scenario", scenario_path, "scenario JSON file")->required();

  auto* bench = app.add_subcommand("bench", "Seeded batch across heuristics");
  bench->add_option("scenario", scenario_path, "scenario JSON file")->required();
  bench->add_option("--seeds", seeds_spec, "e.g. 0..9 or 0,3,7");
  bench->add_option("--heuristics", heuristics_spec,
                    "comma list of minmax,agm_stochastic,agm_fpl");
  bench->add_option("--iters", iters, "override the iteration budget");
  bench->add_option("--out", out_dir, "output directory");
  bench->add_option("--metrics", metrics_fmt, "csv|json");
  bench->add_option("--jobs", jobs, "parallel runs (default: hardware)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed())
      return cmd_plan(scenario_path, heuristic, seed, iters, out_dir, metrics_fmt,
                      monitor_debug);
    if (verify->parsed()) return cmd_verify(states_path, scenario_path);
    if (bench->parsed())
      return cmd_bench(scenario_path, seeds_spec, heuristics_spec, iters, out_dir,
                       metrics_fmt, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
