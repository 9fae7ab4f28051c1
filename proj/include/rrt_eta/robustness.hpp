#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "rrt_eta/formula.hpp"
#include "rrt_eta/interval.hpp"

namespace rrt_eta {

class incomplete_trace : public std::runtime_error {
 public:
  explicit incomplete_trace(const std::string& msg) : std::runtime_error(msg) {}
};

/// Finite state-signal segment starting at step t0.
struct Trace {
  std::vector<Vec> samples;
  int t0 = 0;

  int length() const { return static_cast<int>(samples.size()); }
  int last_step() const { return t0 + length() - 1; }
  const Vec& at_step(int t) const { return samples.at(t - t0); }
};

namespace detail {

inline void check_values(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("AGM aggregation: empty input");
  for (double v : values)
    if (!(v >= -1.0 - 1e-12 && v <= 1.0 + 1e-12))
      throw std::invalid_argument("AGM aggregation: value outside [-1,1]");
}

// Geometric mean of the factors (1 + sign*r_i), computed as exp-mean-log with
// the factors clamped away from zero so log never sees 0.
inline double geometric_factor_mean(std::span<const double> values, double sign) {
  double acc = 0.0;
  for (double v : values) acc += std::log(std::max(1.0 + sign * v, 1e-15));
  return std::exp(acc / static_cast<double>(values.size()));
}

}  // namespace detail

/// AGM disjunction: geometric when every input is violated, otherwise the
/// arithmetic mean of the satisfied parts.
inline double agm_or(std::span<const double> values) {
  detail::check_values(values);
  bool all_neg = true;
  double pos_sum = 0.0;
  for (double v : values) {
    if (v >= 0.0) all_neg = false;
    if (v > 0.0) pos_sum += v;
  }
  if (all_neg) {
    const double g = detail::geometric_factor_mean(values, -1.0);
    return std::clamp(1.0 - g, -1.0, 1.0);
  }
  return std::clamp(pos_sum / static_cast<double>(values.size()), -1.0, 1.0);
}

/// AGM conjunction, the dual of agm_or.
inline double agm_and(std::span<const double> values) {
  detail::check_values(values);
  bool all_pos = true;
  double neg_sum = 0.0;
  for (double v : values) {
    if (v <= 0.0) all_pos = false;
    if (v < 0.0) neg_sum += v;
  }
  if (all_pos) {
    const double g = detail::geometric_factor_mean(values, 1.0);
    return std::clamp(g - 1.0, -1.0, 1.0);
  }
  return std::clamp(neg_sum / static_cast<double>(values.size()), -1.0, 1.0);
}

inline double agm_or(std::initializer_list<double> values) {
  return agm_or(std::span<const double>(values.begin(), values.size()));
}
inline double agm_and(std::initializer_list<double> values) {
  return agm_and(std::span<const double>(values.begin(), values.size()));
}

inline double predicate_robustness(const Vec& s, const Predicate& mu) {
  return mu.robustness(s);
}

namespace detail {

template <typename AndFn, typename OrFn>
double eval_robustness(const Trace& trace, const Formula& f, int id, int t,
                       AndFn&& fn_and, OrFn&& fn_or) {
  const auto& n = f.node(id);
  switch (n.kind) {
    case NodeKind::True:
      return 1.0;
    case NodeKind::False:
      return -1.0;
    case NodeKind::Pred:
      return f.predicate_of(id).robustness(trace.at_step(t));
    case NodeKind::And:
    case NodeKind::Or: {
      std::vector<double> vals;
      vals.reserve(n.children.size());
      for (int c : n.children)
        vals.push_back(eval_robustness(trace, f, c, t, fn_and, fn_or));
      return n.kind == NodeKind::And ? fn_and(vals) : fn_or(vals);
    }
    case NodeKind::Globally:
    case NodeKind::Finally: {
      std::vector<double> vals;
      vals.reserve(static_cast<std::size_t>(n.b - n.a + 1));
      for (int tau = n.a; tau <= n.b; ++tau)
        vals.push_back(
            eval_robustness(trace, f, n.children[0], t + tau, fn_and, fn_or));
      return n.kind == NodeKind::Globally ? fn_and(vals) : fn_or(vals);
    }
  }
  throw std::logic_error("unreachable");
}

inline void require_complete(const Trace& trace, const Formula& f) {
  if (trace.samples.empty()) throw incomplete_trace("empty trace");
  if (trace.length() <= f.horizon())
    throw incomplete_trace("trace of length " + std::to_string(trace.length()) +
                           " cannot cover horizon " + std::to_string(f.horizon()));
}

}  // namespace detail

/// Exact AGM robustness of a complete trace; positive iff satisfied.
inline double agm_robustness(const Trace& trace, const Formula& f) {
  detail::require_complete(trace, f);
  return detail::eval_robustness(
      trace, f, f.root(), trace.t0,
      [](const std::vector<double>& v) { return agm_and(v); },
      [](const std::vector<double>& v) { return agm_or(v); });
}

/// Traditional min-max robustness with the same predicate normalization, so
/// the two semantics are directly comparable.
inline double minmax_robustness(const Trace& trace, const Formula& f) {
  detail::require_complete(trace, f);
  return detail::eval_robustness(
      trace, f, f.root(), trace.t0,
      [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); },
      [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); });
}

/// Robustness of the subformula rooted at node_id, evaluated from the trace
/// start. The trace must cover the subformula's horizon.
inline double agm_robustness_node(const Trace& trace, const Formula& f,
                                  int node_id) {
  if (trace.length() <= f.horizon(node_id))
    throw incomplete_trace("trace too short for subformula");
  return detail::eval_robustness(
      trace, f, node_id, trace.t0,
      [](const std::vector<double>& v) { return agm_and(v); },
      [](const std::vector<double>& v) { return agm_or(v); });
}

inline double minmax_robustness_node(const Trace& trace, const Formula& f,
                                     int node_id) {
  if (trace.length() <= f.horizon(node_id))
    throw incomplete_trace("trace too short for subformula");
  return detail::eval_robustness(
      trace, f, node_id, trace.t0,
      [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); },
      [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); });
}

/// Min-max robustness interval of a partial trace: unobserved window slots
/// pad the lower bound with -1 and the upper bound with +1. Batch-evaluated;
/// used by the traditional-robustness planning baseline.
inline Interval minmax_prefix_interval(const std::vector<Vec>& prefix, int t0,
                                       const Formula& f, int id, int t_s) {
  const int t_end = t0 + static_cast<int>(prefix.size()) - 1;
  const auto& n = f.node(id);
  switch (n.kind) {
    case NodeKind::True:
      return Interval::singleton(1.0);
    case NodeKind::False:
      return Interval::singleton(-1.0);
    case NodeKind::Pred: {
      if (t_s > t_end) return Interval::unknown();
      return Interval::singleton(f.predicate_of(id).robustness(prefix[t_s - t0]));
    }
    case NodeKind::And:
    case NodeKind::Or: {
      double lo = n.kind == NodeKind::And ? 1.0 : -1.0;
      double hi = lo;
      for (int c : n.children) {
        const Interval ci = minmax_prefix_interval(prefix, t0, f, c, t_s);
        if (n.kind == NodeKind::And) {
          lo = std::min(lo, ci.lo);
          hi = std::min(hi, ci.hi);
        } else {
          lo = std::max(lo, ci.lo);
          hi = std::max(hi, ci.hi);
        }
      }
      return Interval(lo, hi);
    }
    case NodeKind::Globally:
    case NodeKind::Finally: {
      double lo = n.kind == NodeKind::Globally ? 1.0 : -1.0;
      double hi = lo;
      for (int tau = n.a; tau <= n.b; ++tau) {
        const Interval ci =
            minmax_prefix_interval(prefix, t0, f, n.children[0], t_s + tau);
        if (n.kind == NodeKind::Globally) {
          lo = std::min(lo, ci.lo);
          hi = std::min(hi, ci.hi);
        } else {
          lo = std::max(lo, ci.lo);
          hi = std::max(hi, ci.hi);
        }
      }
      return Interval(lo, hi);
    }
  }
  throw std::logic_error("unreachable");
}

inline Interval minmax_prefix_interval(const std::vector<Vec>& prefix, int t0,
                                       const Formula& f) {
  return minmax_prefix_interval(prefix, t0, f, f.root(), t0);
}

}  // namespace rrt_eta
