#pragma once

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rrt_eta/scenario.hpp"

namespace rrt_eta {

// The shared predicate normalization already maps both semantics into
// [-1, 1], so reported min-max values need no further rescaling.
inline constexpr double kMinmaxNormalizationDivisor = 1.0;

struct RunRecord {
  std::string run_id;
  Heuristic heuristic = Heuristic::agm_fpl;
  std::uint64_t seed = 0;
  PlanStatus status = PlanStatus::exhausted;
  double final_eta = -1.0;
  int first_solution_iter = -1;
  int tree_size = 0;
  std::vector<IterationRecord> rows;
  std::vector<Vec> trajectory;  // best solution states, empty if unsolved
  std::vector<Vec> controls;
};

inline RunRecord run_single(const Scenario& scenario, Heuristic heuristic,
                            std::uint64_t seed) {
  PlannerConfig cfg = scenario.planner;
  cfg.heuristic = heuristic;
  cfg.rng_seed = seed;
  Planner planner(scenario.formula, *scenario.system, cfg);
  const PlanResult result = planner.plan(scenario.q_init);

  RunRecord rec;
  rec.run_id = std::string(heuristic_name(heuristic)) + "_seed" + std::to_string(seed);
  rec.heuristic = heuristic;
  rec.seed = seed;
  rec.status = result.status;
  rec.final_eta = result.best_eta;
  rec.first_solution_iter = result.first_solution_iter;
  rec.tree_size = result.tree_size;
  rec.rows = result.metrics;
  rec.trajectory = result.best_states;
  rec.controls = result.best_controls;
  return rec;
}

/// Runs plan() for every (heuristic, seed) pair. Runs are independent and
/// execute on a small worker pool; results keep the request order.
inline std::vector<RunRecord> run_batch(const Scenario& scenario,
                                        const std::vector<Heuristic>& heuristics,
                                        const std::vector<std::uint64_t>& seeds,
                                        int jobs = 0) {
  struct Task {
    Heuristic heuristic;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (Heuristic h : heuristics)
    for (std::uint64_t s : seeds) tasks.push_back({h, s});

  std::vector<RunRecord> records(tasks.size());
  if (jobs <= 0)
    jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min<int>(jobs, static_cast<int>(tasks.size()));

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        try {
          records[i] = run_single(scenario, tasks[i].heuristic, tasks[i].seed);
        } catch (...) {
          // Record the failure but keep the batch going.
          errors[static_cast<std::size_t>(w)] = std::current_exception();
          records[i].run_id =
              std::string(heuristic_name(tasks[i].heuristic)) + "_seed" +
              std::to_string(tasks[i].seed) + "_failed";
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  return records;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

enum class MetricsFormat { csv, json };

inline std::optional<MetricsFormat> parse_metrics_format(const std::string& s) {
  if (s == "csv") return MetricsFormat::csv;
  if (s == "json") return MetricsFormat::json;
  return std::nullopt;
}

/// One exported metrics row; the flat shape shared by CSV and JSON output.
struct MetricsRow {
  std::string run_id;
  std::string heuristic;
  std::uint64_t seed = 0;
  int iter = 0;
  double wall_ms = 0.0;
  double best_lo = 0.0;
  double best_hi = 0.0;
  double gap = 0.0;
  int tree_size = 0;
  bool solved = false;
};

inline std::vector<MetricsRow> metrics_rows(const std::vector<RunRecord>& records) {
  std::vector<MetricsRow> rows;
  for (const RunRecord& rec : records) {
    for (const IterationRecord& r : rec.rows) {
      MetricsRow row;
      row.run_id = rec.run_id;
      row.heuristic = heuristic_name(rec.heuristic);
      row.seed = rec.seed;
      row.iter = r.iter;
      row.wall_ms = r.wall_ms;
      row.best_lo = r.best_lo;
      row.best_hi = r.best_hi;
      row.gap = r.gap;
      row.tree_size = r.tree_size;
      row.solved = r.solved;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void export_metrics(const std::vector<RunRecord>& records,
                           const std::string& path, MetricsFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_metrics: cannot write " + path);
  const auto rows = metrics_rows(records);
  if (format == MetricsFormat::csv) {
    out << "# normalization_divisor=" << detail::fmt_double(kMinmaxNormalizationDivisor)
        << "\n";
    out << "run_id,heuristic,seed,iter,wall_ms,best_lo,best_hi,gap,tree_size,solved\n";
    for (const MetricsRow& r : rows) {
      out << r.run_id << ',' << r.heuristic << ',' << r.seed << ',' << r.iter
          << ',' << detail::fmt_double(r.wall_ms) << ','
          << detail::fmt_double(r.best_lo) << ',' << detail::fmt_double(r.best_hi)
          << ',' << detail::fmt_double(r.gap) << ',' << r.tree_size << ','
          << (r.solved ? 1 : 0) << '\n';
    }
  } else {
    nlohmann::json j;
    j["normalization_divisor"] = kMinmaxNormalizationDivisor;
    j["rows"] = nlohmann::json::array();
    for (const MetricsRow& r : rows) {
      j["rows"].push_back({{"run_id", r.run_id},
                           {"heuristic", r.heuristic},
                           {"seed", r.seed},
                           {"iter", r.iter},
                           {"wall_ms", r.wall_ms},
                           {"best_lo", r.best_lo},
                           {"best_hi", r.best_hi},
                           {"gap", r.gap},
                           {"tree_size", r.tree_size},
                           {"solved", r.solved}});
    }
    out << j.dump(2) << '\n';
  }
}

inline std::vector<MetricsRow> import_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_metrics: cannot open " + path);
  std::string first;
  std::getline(in, first);
  in.seekg(0);

  std::vector<MetricsRow> rows;
  if (!first.empty() && (first[0] == '{' || first[0] == '[')) {
    nlohmann::json j;
    in >> j;
    for (const auto& r : j.at("rows")) {
      MetricsRow row;
      row.run_id = r.at("run_id").get<std::string>();
      row.heuristic = r.at("heuristic").get<std::string>();
      row.seed = r.at("seed").get<std::uint64_t>();
      row.iter = r.at("iter").get<int>();
      row.wall_ms = r.at("wall_ms").get<double>();
      row.best_lo = r.at("best_lo").get<double>();
      row.best_hi = r.at("best_hi").get<double>();
      row.gap = r.at("gap").get<double>();
      row.tree_size = r.at("tree_size").get<int>();
      row.solved = r.at("solved").get<bool>();
      rows.push_back(std::move(row));
    }
    return rows;
  }

  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column order is fixed
      continue;
    }
    std::stringstream ss(line);
    std::string tok;
    MetricsRow row;
    std::getline(ss, row.run_id, ',');
    std::getline(ss, row.heuristic, ',');
    std::getline(ss, tok, ',');
    row.seed = std::stoull(tok);
    std::getline(ss, tok, ',');
    row.iter = std::stoi(tok);
    std::getline(ss, tok, ',');
    row.wall_ms = std::stod(tok);
    std::getline(ss, tok, ',');
    row.best_lo = std::stod(tok);
    std::getline(ss, tok, ',');
    row.best_hi = std::stod(tok);
    std::getline(ss, tok, ',');
    row.gap = std::stod(tok);
    std::getline(ss, tok, ',');
    row.tree_size = std::stoi(tok);
    std::getline(ss, tok, ',');
    row.solved = tok == "1" || tok == "true";
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void export_trajectory(const std::vector<Vec>& states,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_trajectory: cannot write " + path);
  if (states.empty()) {
    out << "t\n";
    return;
  }
  out << "t";
  for (Eigen::Index i = 0; i < states[0].size(); ++i) out << ",x" << i;
  out << '\n';
  for (std::size_t t = 0; t < states.size(); ++t) {
    out << t;
    for (Eigen::Index i = 0; i < states[t].size(); ++i)
      out << ',' << detail::fmt_double(states[t][i]);
    out << '\n';
  }
}

inline std::vector<Vec> import_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_trajectory: cannot open " + path);
  std::string line;
  std::vector<Vec> states;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    bool first = true;
    while (std::getline(ss, tok, ',')) {
      if (first) {
        first = false;  // step index column
        continue;
      }
      vals.push_back(std::stod(tok));
    }
    Vec s(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i)
      s[static_cast<Eigen::Index>(i)] = vals[i];
    states.push_back(std::move(s));
  }
  return states;
}

struct ClauseReport {
  std::string text;
  double agm = 0.0;
  double minmax = 0.0;
};

struct VerifyReport {
  double agm = 0.0;
  double minmax = 0.0;
  bool satisfied = false;       // AGM sign
  bool sign_agreement = true;   // AGM vs min-max, when min-max is nonzero
  std::vector<ClauseReport> clauses;
};

/// Recomputes both robustness semantics of a trajectory offline, including
/// per-clause values for the top-level conjuncts/disjuncts.
inline VerifyReport verify_trajectory(const std::vector<Vec>& states,
                                      const Scenario& scenario) {
  const Formula& f = scenario.formula;
  if (static_cast<int>(states.size()) <= f.horizon())
    throw incomplete_trace("trajectory shorter than the formula horizon");
  Trace tr{states, 0};

  VerifyReport report;
  report.agm = agm_robustness(tr, f);
  report.minmax = minmax_robustness(tr, f);
  report.satisfied = report.agm > 0.0;
  if (std::abs(report.minmax) > 1e-12)
    report.sign_agreement = report.agm * report.minmax > 0.0;

  const auto& root = f.node(f.root());
  if (is_boolean(root.kind)) {
    for (int c : root.children) {
      ClauseReport clause;
      clause.agm = agm_robustness_node(tr, f, c);
      clause.minmax = minmax_robustness_node(tr, f, c);
      clause.text = f.to_string(c);
      report.clauses.push_back(std::move(clause));
    }
  }
  return report;
}

}  // namespace rrt_eta
