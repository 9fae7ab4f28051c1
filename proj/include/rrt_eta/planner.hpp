#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rrt_eta/arm.hpp"
#include "rrt_eta/dias.hpp"
#include "rrt_eta/monitor.hpp"
#include "rrt_eta/robustness.hpp"
#include "rrt_eta/system.hpp"

namespace rrt_eta {

/// Which robustness notion drives node admission, rewiring, and guidance.
enum class Heuristic { agm_stochastic, agm_fpl, minmax };

inline const char* heuristic_name(Heuristic h) {
  switch (h) {
    case Heuristic::agm_stochastic: return "agm_stochastic";
    case Heuristic::agm_fpl: return "agm_fpl";
    case Heuristic::minmax: return "minmax";
  }
  return "?";
}

inline std::optional<Heuristic> parse_heuristic(const std::string& name) {
  if (name == "agm_stochastic") return Heuristic::agm_stochastic;
  if (name == "agm_fpl") return Heuristic::agm_fpl;
  if (name == "minmax") return Heuristic::minmax;
  return std::nullopt;
}

struct PlannerConfig {
  int max_iters = 2000;
  int k_near = 15;
  double p_bias = 0.5;  // probability of sampling inside an active region
  Heuristic heuristic = Heuristic::agm_fpl;
  CompositionConfig composition;
  SteeringBudget steering;
  std::uint64_t rng_seed = 0;
};

struct TreeNode {
  int id = -1;
  Vec q;
  int t = 0;
  int parent = -1;
  std::vector<int> children;
  MonitorState monitor;  // populated for the AGM heuristics
  Interval interval;     // current robustness interval of the partial path
  Segment traj_from_parent;
};

struct IterationRecord {
  int iter = 0;
  double wall_ms = 0.0;
  double best_lo = -1.0;
  double best_hi = 1.0;
  double gap = 2.0;
  int tree_size = 0;
  bool solved = false;
};

enum class PlanStatus { solved, exhausted };

struct PlanResult {
  PlanStatus status = PlanStatus::exhausted;
  std::vector<Vec> best_controls;
  std::vector<Vec> best_states;  // includes the initial state
  double best_eta = -1.0;
  int first_solution_iter = -1;
  int tree_size = 0;
  std::vector<IterationRecord> metrics;
};

/// Steering cost: weighted pull toward the guidance displacement against pull
/// toward the random sample.
inline double steering_cost(const Vec& q_s, const Vec& v_q, const Vec& d_chi,
                            const Vec& q_r, int dt_steps, double lambda) {
  const Vec guided = v_q + d_chi * static_cast<double>(dt_steps);
  return lambda * (q_s - guided).squaredNorm() +
         (1.0 - lambda) * (q_s - q_r).squaredNorm();
}

/// Robustness-interval-guided kinodynamic tree search. Grows a time-indexed
/// tree from the initial state; nodes are admitted while satisfaction remains
/// possible (upper bound >= 0) and rewired toward higher lower bounds.
class Planner {
 public:
  Planner(const Formula& phi, const SystemModel& system, PlannerConfig cfg)
      : phi_(phi),
        system_(system),
        cfg_(std::move(cfg)),
        arm_(dynamic_cast<const PlanarArm*>(&system)),
        rng_(cfg_.rng_seed) {
    if (cfg_.max_iters < 1 || cfg_.k_near < 1)
      throw std::invalid_argument("PlannerConfig: max_iters and k_near must be >= 1");
  }

  const std::vector<TreeNode>& tree() const { return nodes_; }
  const Formula& formula() const { return phi_; }
  IkCache& ik_cache() { return ik_cache_; }

  /// States along the root-to-node path, including the root state.
  std::vector<Vec> states_to(int node_id) const {
    std::vector<int> chain;
    for (int id = node_id; id >= 0; id = nodes_[static_cast<std::size_t>(id)].parent)
      chain.push_back(id);
    std::vector<Vec> states;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const TreeNode& n = nodes_[static_cast<std::size_t>(*it)];
      if (n.parent < 0) {
        states.push_back(n.q);
      } else {
        for (const Vec& s : n.traj_from_parent.states) states.push_back(s);
      }
    }
    return states;
  }

  std::vector<Vec> controls_to(int node_id) const {
    std::vector<int> chain;
    for (int id = node_id; id >= 0; id = nodes_[static_cast<std::size_t>(id)].parent)
      chain.push_back(id);
    std::vector<Vec> controls;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const TreeNode& n = nodes_[static_cast<std::size_t>(*it)];
      for (const Vec& u : n.traj_from_parent.controls) controls.push_back(u);
    }
    return controls;
  }

  // --- planning primitives, exposed for direct testing --------------------

  std::pair<int, Vec> sample() {
    const int t_r = uniform_int(rng_, 1, std::max(1, phi_.horizon()));
    if (uniform(rng_, 0.0, 1.0) < cfg_.p_bias) {
      if (arm_) {
        if (auto s = adaptive_sample(phi_, t_r, *arm_, ik_cache_, rng_))
          return {t_r, *s};
      } else {
        std::vector<const Predicate*> hinted;
        for (const auto& ap : phi_.active_predicates(t_r)) {
          const Predicate& p = phi_.predicates()[ap.pred];
          if (p.region_hint()) hinted.push_back(&p);
        }
        if (!hinted.empty()) {
          Vec q = system_.state_bounds().sample(rng_);
          const std::size_t pick = static_cast<std::size_t>(
              uniform_int(rng_, 0, static_cast<int>(hinted.size()) - 1));
          hinted[pick]->region_hint()->sample_into(q, rng_);
          return {t_r, q};
        }
      }
    }
    return {t_r, uniform_state()};
  }

  /// k nearest nodes among those strictly earlier than t_r.
  std::vector<int> near(const Vec& q_r, int t_r) const {
    return nearest(q_r, [&](const TreeNode& n) { return n.t < t_r; });
  }

  PlanResult plan(const Vec& q_init) {
    if (!system_.state_bounds().contains(q_init, 1e-9))
      throw std::invalid_argument("plan: initial state outside bounds");
    const auto t_begin = std::chrono::steady_clock::now();
    reset(q_init);
    check_solution(0, 0);

    for (int iter = 1; iter <= cfg_.max_iters; ++iter) {
      iterate(iter);
      IterationRecord rec;
      rec.iter = iter;
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t_begin)
                        .count();
      const TreeNode& best = best_node();
      rec.best_lo = best.interval.lo;
      rec.best_hi = best.interval.hi;
      rec.gap = best.interval.hi - best.interval.lo;
      rec.tree_size = static_cast<int>(nodes_.size());
      rec.solved = best_solution_.has_value();
      metrics_.push_back(rec);
    }

    PlanResult result;
    result.metrics = metrics_;
    result.tree_size = static_cast<int>(nodes_.size());
    if (best_solution_) {
      result.status = PlanStatus::solved;
      result.best_controls = best_solution_->controls;
      result.best_states = best_solution_->states;
      result.best_eta = best_solution_->eta;
      result.first_solution_iter = first_solution_iter_;
    }
    return result;
  }

  /// Best stored solution in the current tree: the argmax lower bound among
  /// nodes whose evaluation has collapsed to a satisfied singleton.
  std::optional<std::tuple<std::vector<Vec>, std::vector<Vec>, double>>
  extract_solution() const {
    int best = -1;
    for (const TreeNode& n : nodes_) {
      if (n.t < phi_.horizon()) continue;
      if (!n.interval.is_singleton() || !(n.interval.lo > 0.0)) continue;
      if (best < 0 || n.interval.lo > nodes_[static_cast<std::size_t>(best)].interval.lo)
        best = n.id;
    }
    if (best < 0) return std::nullopt;
    return std::tuple{controls_to(best), states_to(best),
                      nodes_[static_cast<std::size_t>(best)].interval.lo};
  }

  struct Extension {
    Interval interval;
    MonitorState monitor;
  };

  struct ControlChoice {
    Vec u;
    std::vector<Vec> states;
    double cost = std::numeric_limits<double>::infinity();
  };

  /// Seeds the tree with the initial state; exposed so the per-operation
  /// entry points below can be exercised directly.
  void reset(const Vec& q_init) {
    nodes_.clear();
    metrics_.clear();
    best_solution_.reset();
    first_solution_iter_ = -1;
    rng_.seed(cfg_.rng_seed);

    TreeNode root;
    root.id = 0;
    root.q = q_init;
    root.t = 0;
    if (uses_monitor()) {
      root.monitor = monitor_init(phi_, 0);
      root.interval = monitor_step(root.monitor, phi_, q_init, 0);
    } else {
      root.interval = minmax_prefix_interval({q_init}, 0, phi_);
    }
    nodes_.push_back(std::move(root));
  }

 private:
  struct Solution {
    std::vector<Vec> controls;
    std::vector<Vec> states;
    double eta = -1.0;
  };

  bool uses_monitor() const { return cfg_.heuristic != Heuristic::minmax; }

  CompositionConfig composition() const {
    CompositionConfig c = cfg_.composition;
    c.mode = cfg_.heuristic == Heuristic::agm_stochastic
                 ? CompositionMode::stochastic
                 : CompositionMode::fpl;
    return c;
  }

  Vec uniform_state() {
    if (arm_) return arm_->augmented_state(arm_->joint_limits().sample(rng_));
    return system_.state_bounds().sample(rng_);
  }

  template <typename Filter>
  std::vector<int> nearest(const Vec& q, Filter&& keep) const {
    std::vector<std::pair<double, int>> scored;
    for (const TreeNode& n : nodes_)
      if (keep(n)) scored.emplace_back(system_.distance(n.q, q), n.id);
    const std::size_t k =
        std::min<std::size_t>(scored.size(), static_cast<std::size_t>(cfg_.k_near));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(k),
                      scored.end());
    std::vector<int> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
    return out;
  }

  NodeIntervalFn node_intervals(const TreeNode& v) const {
    if (uses_monitor())
      return [&v](int id) { return v.monitor.node_interval(id); };
    // Batch-evaluated min-max intervals over the node's prefix.
    auto prefix = std::make_shared<std::vector<Vec>>(states_to(v.id));
    const Formula* phi = &phi_;
    return [prefix, phi](int id) {
      return minmax_prefix_interval(*prefix, 0, *phi, id, 0);
    };
  }

 public:
  /// Replays a candidate segment on top of a parent node and returns the
  /// resulting robustness interval (plus monitor state for AGM heuristics).
  Extension evaluate_extension(const TreeNode& parent, const Segment& seg) const {
    Extension ext;
    if (uses_monitor()) {
      ext.monitor = monitor_clone(parent.monitor);
      Interval it = parent.interval;
      for (int i = 0; i < seg.length(); ++i)
        it = monitor_step(ext.monitor, phi_,
                          seg.states[static_cast<std::size_t>(i)],
                          parent.t + i + 1);
      ext.interval = it;
    } else {
      std::vector<Vec> prefix = states_to(parent.id);
      prefix.insert(prefix.end(), seg.states.begin(), seg.states.end());
      ext.interval = minmax_prefix_interval(prefix, 0, phi_);
    }
    return ext;
  }

  /// Random-shot control optimization with coordinate-descent refinement.
  /// The guidance direction is recomputed per candidate control because the
  /// gate depends on the control.
  std::optional<ControlChoice> optimize_control(const TreeNode& v, const Vec& q_r,
                                                int dt_r, double lambda) {
    const auto intervals = node_intervals(v);
    const CompositionConfig ccfg = composition();
    ControlChoice best;

    auto consider = [&](const Vec& u) {
      auto states = rollout(system_, v.q, u, dt_r);
      if (!states) return;
      const Vec d = dias(v.q, u, phi_, phi_.root(), intervals, ccfg, system_, rng_);
      const double cost = steering_cost(states->back(), v.q, d, q_r, dt_r, lambda);
      if (cost < best.cost) best = ControlChoice{u, std::move(*states), cost};
    };

    for (int k = 0; k < cfg_.steering.shots; ++k)
      consider(system_.control_bounds().sample(rng_));
    if (!std::isfinite(best.cost)) return std::nullopt;

    const AxisBox& ub = system_.control_bounds();
    for (int pass = 0; pass < cfg_.steering.refine_iters; ++pass) {
      const double frac = 0.25 / static_cast<double>(1 << pass);
      for (int j = 0; j < system_.control_dim(); ++j) {
        const double delta = frac * (ub.hi[j] - ub.lo[j]);
        for (double sign : {1.0, -1.0}) {
          Vec u = best.u;
          u[j] = std::clamp(u[j] + sign * delta, ub.lo[j], ub.hi[j]);
          consider(u);
        }
      }
    }
    return best;
  }

  /// Node admission: extend `parent` with `seg` and keep the node while the
  /// upper robustness bound remains nonnegative.
  int try_admit(int parent_id, const Segment& seg) {
    const TreeNode& parent = nodes_[static_cast<std::size_t>(parent_id)];
    Extension ext = evaluate_extension(parent, seg);
    if (ext.interval.hi < 0.0) return -1;

    TreeNode node;
    node.id = static_cast<int>(nodes_.size());
    node.q = seg.states.back();
    node.t = parent.t + seg.length();
    node.parent = parent_id;
    node.monitor = std::move(ext.monitor);
    node.interval = ext.interval;
    node.traj_from_parent = seg;
    nodes_.push_back(std::move(node));
    nodes_[static_cast<std::size_t>(parent_id)].children.push_back(
        nodes_.back().id);
    return nodes_.back().id;
  }

  /// Rewiring: reparent v2 under v1 when the replayed interval keeps
  /// satisfaction possible and does not lower v2's bound; descendant
  /// intervals are recomputed, and the rewire is abandoned if any descendant
  /// would become hopeless.
  bool try_rewire(int v1_id, int v2_id, const Segment& seg, int iter) {
    TreeNode& v1 = nodes_[static_cast<std::size_t>(v1_id)];
    TreeNode& v2 = nodes_[static_cast<std::size_t>(v2_id)];
    if (v2.parent < 0 || v1.t + seg.length() != v2.t) return false;

    Extension ext = evaluate_extension(v1, seg);
    if (ext.interval.hi < 0.0) return false;
    if (ext.interval.lo < v2.interval.lo - 1e-12) return false;

    // Stage the descendant updates; commit only if all stay admissible.
    std::vector<Vec> prefix;
    if (!uses_monitor()) {
      prefix = states_to(v1_id);
      prefix.insert(prefix.end(), seg.states.begin(), seg.states.end());
    }
    std::map<int, Extension> staged;
    staged.emplace(v2_id, std::move(ext));
    if (!stage_descendants(v2_id, staged.at(v2_id), prefix, staged)) return false;

    const int old_parent = v2.parent;
    auto& siblings = nodes_[static_cast<std::size_t>(old_parent)].children;
    siblings.erase(std::find(siblings.begin(), siblings.end(), v2_id));
    v2.parent = v1_id;
    v2.traj_from_parent = seg;
    v1.children.push_back(v2_id);
    for (auto& [id, e] : staged) {
      TreeNode& n = nodes_[static_cast<std::size_t>(id)];
      n.monitor = std::move(e.monitor);
      n.interval = e.interval;
      check_solution(id, iter);
    }
    return true;
  }

 private:
  // `prefix` is the root-to-node state sequence under the staged topology;
  // only the min-max backend reads it.
  bool stage_descendants(int node_id, const Extension& parent_ext,
                         const std::vector<Vec>& prefix,
                         std::map<int, Extension>& staged) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(node_id)];
    for (int child_id : node.children) {
      const TreeNode& child = nodes_[static_cast<std::size_t>(child_id)];
      Extension ext;
      std::vector<Vec> child_prefix;
      if (uses_monitor()) {
        ext.monitor = monitor_clone(parent_ext.monitor);
        Interval it = parent_ext.interval;
        for (int i = 0; i < child.traj_from_parent.length(); ++i)
          it = monitor_step(ext.monitor, phi_,
                            child.traj_from_parent.states[static_cast<std::size_t>(i)],
                            node.t + i + 1);
        ext.interval = it;
      } else {
        child_prefix = prefix;
        child_prefix.insert(child_prefix.end(),
                            child.traj_from_parent.states.begin(),
                            child.traj_from_parent.states.end());
        ext.interval = minmax_prefix_interval(child_prefix, 0, phi_);
      }
      if (ext.interval.hi < 0.0) return false;
      auto [it2, inserted] = staged.emplace(child_id, std::move(ext));
      if (!stage_descendants(child_id, it2->second, child_prefix, staged))
        return false;
    }
    return true;
  }

  void check_solution(int node_id, int iter) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(node_id)];
    if (n.t < phi_.horizon()) return;
    if (!n.interval.is_singleton() || !(n.interval.lo > 0.0)) return;
    if (first_solution_iter_ < 0) first_solution_iter_ = iter;
    if (!best_solution_ || n.interval.lo > best_solution_->eta) {
      Solution sol;
      sol.controls = controls_to(node_id);
      sol.states = states_to(node_id);
      sol.eta = n.interval.lo;
      best_solution_ = std::move(sol);
    }
  }

  const TreeNode& best_node() const {
    const TreeNode* best = &nodes_[0];
    for (const TreeNode& n : nodes_)
      if (n.interval.lo > best->interval.lo ||
          (n.interval.lo == best->interval.lo && n.interval.hi > best->interval.hi))
        best = &n;
    return *best;
  }

  void iterate(int iter) {
    const auto [t_r, q_r] = sample();
    const std::vector<int> neighbors = near(q_r, t_r);
    const double lambda = uniform(rng_, 0.0, 1.0);

    int best_parent = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    Segment best_seg;
    for (int vid : neighbors) {
      const TreeNode& v = nodes_[static_cast<std::size_t>(vid)];
      const int dt_r = t_r - v.t;
      if (dt_r < 1 || dt_r > cfg_.steering.t_max) continue;
      const auto choice = optimize_control(v, q_r, dt_r, lambda);
      if (!choice) continue;
      if (choice->cost < best_cost) {
        best_cost = choice->cost;
        best_parent = vid;
        best_seg.states = choice->states;
        best_seg.controls.assign(static_cast<std::size_t>(dt_r), choice->u);
      }
    }
    if (best_parent < 0) return;

    const int new_id = try_admit(best_parent, best_seg);
    if (new_id < 0) return;
    check_solution(new_id, iter);

    // Rewiring pass over nearby later nodes.
    const TreeNode& v_new = nodes_[static_cast<std::size_t>(new_id)];
    const Vec q_new = v_new.q;
    const std::vector<int> later = nearest(q_new, [&](const TreeNode& n) {
      return n.t > t_r && n.t - t_r <= cfg_.steering.t_max && n.id != new_id;
    });
    for (int v2 : later) {
      const TreeNode& cand = nodes_[static_cast<std::size_t>(v2)];
      const auto seg =
          steer_exact(system_, q_new, cand.q, cand.t - t_r, cfg_.steering, rng_);
      if (!seg) continue;
      try_rewire(new_id, v2, *seg, iter);
    }
  }

  const Formula& phi_;
  const SystemModel& system_;
  PlannerConfig cfg_;
  const PlanarArm* arm_ = nullptr;
  Rng rng_;
  IkCache ik_cache_;
  std::vector<TreeNode> nodes_;
  std::vector<IterationRecord> metrics_;
  std::optional<Solution> best_solution_;
  int first_solution_iter_ = -1;
};

}  // namespace rrt_eta
