#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rrt_eta/formula.hpp"
#include "rrt_eta/interval.hpp"
#include "rrt_eta/robustness.hpp"

namespace rrt_eta {

/// Folds a new observation into an existing AGM disjunction of N-1 values,
/// returning exactly agm_or(r_1, ..., r_{N-1}, eta_new). Constant time.
inline double mdf_agm_or(double eta, int N, double eta_new) {
  if (N < 1) throw std::invalid_argument("mdf_agm_or: N < 1");
  if (N == 1) return eta_new;
  if (eta < 0.0 && eta_new < 0.0) {
    const double log_term = (static_cast<double>(N - 1) * std::log(std::max(1.0 - eta, 1e-15)) +
                             std::log(std::max(1.0 - eta_new, 1e-15))) /
                            static_cast<double>(N);
    return std::clamp(1.0 - std::exp(log_term), -1.0, 1.0);
  }
  if (eta < 0.0) return std::max(eta_new, 0.0) / static_cast<double>(N);
  // eta >= 0: all prior positive parts sum to (N-1)*eta.
  return std::clamp((static_cast<double>(N - 1) * eta + std::max(eta_new, 0.0)) /
                        static_cast<double>(N),
                    -1.0, 1.0);
}

/// Dual of mdf_agm_or for AGM conjunction.
inline double mdf_agm_and(double eta, int N, double eta_new) {
  if (N < 1) throw std::invalid_argument("mdf_agm_and: N < 1");
  if (N == 1) return eta_new;
  if (eta > 0.0 && eta_new > 0.0) {
    const double log_term = (static_cast<double>(N - 1) * std::log(std::max(1.0 + eta, 1e-15)) +
                             std::log(std::max(1.0 + eta_new, 1e-15))) /
                            static_cast<double>(N);
    return std::clamp(std::exp(log_term) - 1.0, -1.0, 1.0);
  }
  if (eta > 0.0) return std::min(eta_new, 0.0) / static_cast<double>(N);
  return std::clamp((static_cast<double>(N - 1) * eta + std::min(eta_new, 0.0)) /
                        static_cast<double>(N),
                    -1.0, 1.0);
}

inline double mdf_fold(NodeKind kind, double eta, int N, double eta_new) {
  return kind == NodeKind::Globally ? mdf_agm_and(eta, N, eta_new)
                                    : mdf_agm_or(eta, N, eta_new);
}

/// Running aggregate of the window slots of one temporal-operator evaluation.
/// `frozen` is the exact AGM of the `n` slot values absorbed so far.
struct TemporalWindowState {
  std::optional<Interval> interval;  // reported interval; nullopt before window
  double frozen = 0.0;
  int n = 0;
};

/// One observation of the temporal-operator monitor. The child interval is
/// the subformula's interval produced at step t; singleton children are
/// folded permanently, a non-singleton child only widens this step's report.
/// Returns nullopt while the window has not started.
inline std::optional<Interval> irtm_temporal(TemporalWindowState& st,
                                             const Interval& child, int t_s,
                                             int t, int a, int b, int window_N,
                                             NodeKind kind) {
  if (t < t_s + a) return std::nullopt;
  if (st.interval && st.interval->is_singleton()) return st.interval;
  if (t > t_s + b) return st.interval;

  double live_lo = 0.0, live_hi = 0.0;
  bool has_live = false;
  if (child.is_singleton()) {
    st.frozen = mdf_fold(kind, st.frozen, st.n + 1, child.lo);
    st.n += 1;
  } else {
    live_lo = child.lo;
    live_hi = child.hi;
    has_live = true;
  }

  if (st.n == window_N) {
    st.interval = Interval::singleton(st.frozen);
    return st.interval;
  }
  // Extend the frozen aggregate with the live slot and pessimistic /
  // optimistic padding for the slots not yet observed.
  double lo = st.frozen, hi = st.frozen;
  int n_lo = st.n, n_hi = st.n;
  if (has_live) {
    lo = mdf_fold(kind, lo, ++n_lo, live_lo);
    hi = mdf_fold(kind, hi, ++n_hi, live_hi);
  }
  while (n_lo < window_N) lo = mdf_fold(kind, lo, ++n_lo, -1.0);
  while (n_hi < window_N) hi = mdf_fold(kind, hi, ++n_hi, 1.0);
  st.interval = Interval(lo, hi);
  return st.interval;
}

/// Incremental robustness-interval monitor state for one evaluation of a
/// formula starting at step t_start. Each AST node keeps a table of
/// evaluation instances keyed by their start step; temporal windows spawn a
/// child instance per window slot, so nested operators are evaluated exactly.
class MonitorState {
 public:
  struct Instance {
    int t_s = 0;
    double lo = -1.0, hi = 1.0;
    bool started = false;
    bool resolved = false;
    double frozen = 0.0;  // temporal: AGM of resolved slots
    int n_frozen = 0;     // temporal: number of resolved slots folded
    int next_slot = 0;    // temporal: first slot not yet folded
  };

  MonitorState() = default;

  MonitorState(const Formula& f, int t_start)
      : t_start_(t_start),
        steps_seen_(t_start - 1),
        instances_(static_cast<std::size_t>(f.node_count())),
        retain_(static_cast<std::size_t>(f.node_count()), 0) {
    compute_retention(f, f.root(), f.horizon(f.root()));
  }

  int t_start() const { return t_start_; }
  int steps_seen() const { return steps_seen_; }
  /// Observations absorbed so far.
  int observations() const { return steps_seen_ - t_start_ + 1; }

  long long last_step_visits() const { return last_step_visits_; }
  long long total_visits() const { return total_visits_; }

  Interval root_interval() const {
    const Instance* inst = find(0, t_start_);
    if (!inst || !inst->started) return Interval::unknown();
    return Interval(inst->lo, inst->hi);
  }

  /// Interval of the most recently started evaluation of a node; used for
  /// guidance. Falls back to [-1,1] when nothing has been observed yet.
  Interval node_interval(int node_id) const {
    const auto& list = instances_[static_cast<std::size_t>(node_id)];
    for (auto it = list.rbegin(); it != list.rend(); ++it)
      if (it->started) return Interval(it->lo, it->hi);
    return Interval::unknown();
  }

  /// Absorbs the observation at absolute step t. Steps must arrive in order.
  Interval step(const Formula& f, const Vec& s, int t) {
    if (t != steps_seen_ + 1)
      throw std::invalid_argument("monitor_step: expected step " +
                                  std::to_string(steps_seen_ + 1) + ", got " +
                                  std::to_string(t));
    steps_seen_ = t;
    last_step_visits_ = 0;

    const Instance* root = find(0, t_start_);
    if (root && root->resolved) return Interval(root->lo, root->hi);

    if (t == t_start_) ensure_instance(f, f.root(), t_start_);
    spawn_pass(f, f.root(), t);
    update_pass(f, f.root(), s, t);
    prune(t);
    return root_interval();
  }

  template <typename Fn>  // fn(node_id, t_s, lo, hi, n)
  void for_each_instance(Fn&& fn) const {
    for (std::size_t id = 0; id < instances_.size(); ++id)
      for (const auto& inst : instances_[id])
        if (inst.started)
          fn(static_cast<int>(id), inst.t_s, inst.lo, inst.hi, inst.n_frozen);
  }

 private:
  Instance* find(int node_id, int t_s) {
    for (auto& inst : instances_[static_cast<std::size_t>(node_id)])
      if (inst.t_s == t_s) return &inst;
    return nullptr;
  }
  const Instance* find(int node_id, int t_s) const {
    return const_cast<MonitorState*>(this)->find(node_id, t_s);
  }

  void ensure_instance(const Formula& f, int node_id, int t_s) {
    if (find(node_id, t_s)) return;
    Instance inst;
    inst.t_s = t_s;
    instances_[static_cast<std::size_t>(node_id)].push_back(inst);
    const auto& n = f.node(node_id);
    if (is_boolean(n.kind)) {
      for (int c : n.children) ensure_instance(f, c, t_s);
    } else if (is_temporal(n.kind) && n.a == 0) {
      ensure_instance(f, n.children[0], t_s);
    }
  }

  // Opens the window slot at the current step for every live temporal
  // evaluation whose window covers it.
  void spawn_pass(const Formula& f, int node_id, int t) {
    const auto& n = f.node(node_id);
    if (is_temporal(n.kind)) {
      for (auto& inst : instances_[static_cast<std::size_t>(node_id)]) {
        if (inst.resolved) continue;
        if (t >= inst.t_s + n.a && t <= inst.t_s + n.b)
          ensure_instance(f, n.children[0], t);
      }
    }
    for (int c : n.children) spawn_pass(f, c, t);
  }

  void update_pass(const Formula& f, int node_id, const Vec& s, int t) {
    const auto& n = f.node(node_id);
    for (int c : n.children) update_pass(f, c, s, t);
    ++last_step_visits_;
    ++total_visits_;
    for (auto& inst : instances_[static_cast<std::size_t>(node_id)]) {
      if (inst.resolved) continue;
      update_instance(f, node_id, n, inst, s, t);
    }
  }

  void update_instance(const Formula& f, int node_id, const FormulaNode& n,
                       Instance& inst, const Vec& s, int t) {
    switch (n.kind) {
      case NodeKind::True:
        inst.lo = inst.hi = 1.0;
        inst.started = inst.resolved = true;
        return;
      case NodeKind::False:
        inst.lo = inst.hi = -1.0;
        inst.started = inst.resolved = true;
        return;
      case NodeKind::Pred: {
        if (t != inst.t_s) return;  // a predicate only reads its start step
        const double rho = f.predicate_of(node_id).robustness(s);
        inst.lo = inst.hi = rho;
        inst.started = inst.resolved = true;
        return;
      }
      case NodeKind::And:
      case NodeKind::Or: {
        std::vector<double> los, his;
        los.reserve(n.children.size());
        his.reserve(n.children.size());
        bool all_resolved = true;
        for (int c : n.children) {
          const Instance* ci = find(c, inst.t_s);
          if (ci && ci->started) {
            los.push_back(ci->lo);
            his.push_back(ci->hi);
            all_resolved = all_resolved && ci->resolved;
          } else {
            los.push_back(-1.0);
            his.push_back(1.0);
            all_resolved = false;
          }
        }
        if (n.kind == NodeKind::And) {
          inst.lo = agm_and(std::span<const double>(los));
          inst.hi = agm_and(std::span<const double>(his));
        } else {
          inst.lo = agm_or(std::span<const double>(los));
          inst.hi = agm_or(std::span<const double>(his));
        }
        inst.started = true;
        // With every child a singleton, los == his so lo == hi exactly.
        inst.resolved = all_resolved;
        return;
      }
      case NodeKind::Globally:
      case NodeKind::Finally: {
        if (t < inst.t_s + n.a) return;  // window not yet open
        const int W = f.window_count(node_id);
        const int child = n.children[0];
        // Fold window slots whose evaluation has completed.
        while (inst.next_slot < W) {
          const int w = inst.t_s + n.a + inst.next_slot;
          if (w > t) break;
          const Instance* ci = find(child, w);
          if (!ci || !ci->resolved) break;
          inst.frozen = mdf_fold(n.kind, inst.frozen, inst.n_frozen + 1, ci->lo);
          inst.n_frozen += 1;
          inst.next_slot += 1;
        }
        inst.started = true;
        if (inst.n_frozen == W) {
          inst.lo = inst.hi = inst.frozen;
          inst.resolved = true;
          return;
        }
        double lo = inst.frozen, hi = inst.frozen;
        int n_lo = inst.n_frozen, n_hi = inst.n_frozen;
        for (int j = inst.next_slot; j < W; ++j) {
          const int w = inst.t_s + n.a + j;
          if (w > t) break;
          const Instance* ci = find(child, w);
          const double clo = (ci && ci->started) ? ci->lo : -1.0;
          const double chi = (ci && ci->started) ? ci->hi : 1.0;
          lo = mdf_fold(n.kind, lo, ++n_lo, clo);
          hi = mdf_fold(n.kind, hi, ++n_hi, chi);
        }
        while (n_lo < W) lo = mdf_fold(n.kind, lo, ++n_lo, -1.0);
        while (n_hi < W) hi = mdf_fold(n.kind, hi, ++n_hi, 1.0);
        inst.lo = lo;
        inst.hi = hi;
        return;
      }
    }
  }

  // The evaluation at t_s of a node is last read by its consumers
  // retain_[node] steps after t_s; afterwards a resolved instance can go.
  void compute_retention(const Formula& f, int node_id, int keep_span) {
    retain_[static_cast<std::size_t>(node_id)] = keep_span;
    const auto& n = f.node(node_id);
    for (int c : n.children) {
      const int child_span =
          is_boolean(n.kind) ? keep_span : f.horizon(c);  // temporal parent
      compute_retention(f, c, child_span);
    }
  }

  void prune(int t) {
    for (std::size_t id = 1; id < instances_.size(); ++id) {
      auto& list = instances_[id];
      std::size_t kept = 0;
      for (std::size_t i = 0; i < list.size(); ++i) {
        const bool stale = list[i].resolved &&
                           list[i].t_s + retain_[id] < t &&
                           i + 1 < list.size();  // keep the newest instance
        if (!stale) list[kept++] = list[i];
      }
      list.resize(kept);
    }
  }

  int t_start_ = 0;
  int steps_seen_ = -1;
  std::vector<std::vector<Instance>> instances_;
  std::vector<int> retain_;
  long long last_step_visits_ = 0;
  long long total_visits_ = 0;
};

inline MonitorState monitor_init(const Formula& f, int t_start) {
  return MonitorState(f, t_start);
}

inline Interval monitor_step(MonitorState& state, const Formula& f, const Vec& s,
                             int t) {
  return state.step(f, s, t);
}

inline MonitorState monitor_clone(const MonitorState& state) { return state; }

}  // namespace rrt_eta
