// Test-only reference implementations, kept deliberately independent of the
// incremental code paths they are used to check.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "rrt_eta/formula.hpp"
#include "rrt_eta/interval.hpp"
#include "rrt_eta/monitor.hpp"
#include "rrt_eta/robustness.hpp"

namespace rrt_eta::testing {

/// From-scratch robustness interval of a prefix: recursive evaluation over
/// the whole observed segment at every call, padding unobserved window slots
/// with -1 (lower track) and +1 (upper track). No incremental state.
inline Interval batch_agm_interval(const Formula& f, int id, int t_s,
                                   const std::vector<Vec>& prefix, int t0,
                                   long long* visits = nullptr) {
  if (visits) ++*visits;
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
      std::vector<double> los, his;
      for (int c : n.children) {
        const Interval ci = batch_agm_interval(f, c, t_s, prefix, t0, visits);
        los.push_back(ci.lo);
        his.push_back(ci.hi);
      }
      if (n.kind == NodeKind::And)
        return Interval(agm_and(std::span<const double>(los)),
                        agm_and(std::span<const double>(his)));
      return Interval(agm_or(std::span<const double>(los)),
                      agm_or(std::span<const double>(his)));
    }
    case NodeKind::Globally:
    case NodeKind::Finally: {
      std::vector<double> los, his;
      for (int tau = n.a; tau <= n.b; ++tau) {
        const int w = t_s + tau;
        if (w > t_end) {
          los.push_back(-1.0);
          his.push_back(1.0);
        } else {
          const Interval ci =
              batch_agm_interval(f, n.children[0], w, prefix, t0, visits);
          los.push_back(ci.lo);
          his.push_back(ci.hi);
        }
      }
      if (n.kind == NodeKind::Globally)
        return Interval(agm_and(std::span<const double>(los)),
                        agm_and(std::span<const double>(his)));
      return Interval(agm_or(std::span<const double>(los)),
                      agm_or(std::span<const double>(his)));
    }
  }
  throw std::logic_error("unreachable");
}

inline Interval batch_agm_interval(const Formula& f, const std::vector<Vec>& prefix,
                                   int t0, long long* visits = nullptr) {
  return batch_agm_interval(f, f.root(), t0, prefix, t0, visits);
}

struct RandomFormulaConfig {
  int state_dim = 2;
  int max_depth = 3;
  int max_horizon = 12;
};

inline int random_formula_node(FormulaBuilder& b, Rng& rng, int depth,
                               const RandomFormulaConfig& cfg, int& pred_count) {
  const bool leaf = depth >= cfg.max_depth || uniform(rng, 0.0, 1.0) < 0.25;
  if (leaf) {
    const double roll = uniform(rng, 0.0, 1.0);
    if (roll < 0.04) return b.add_true();
    if (roll < 0.08) return b.add_false();
    const std::string id = "p" + std::to_string(pred_count++);
    if (uniform(rng, 0.0, 1.0) < 0.7) {
      Vec coeffs(cfg.state_dim);
      for (int i = 0; i < cfg.state_dim; ++i) coeffs[i] = uniform(rng, -1.0, 1.0);
      return b.add_predicate(Predicate::affine(id, coeffs, uniform(rng, -1.0, 1.0),
                                               uniform(rng, -0.5, 0.5),
                                               uniform(rng, 0.4, 1.5)));
    }
    Vec center(2);
    center << uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5);
    return b.add_predicate(Predicate::ball(id, center, uniform(rng, 0.4, 1.5),
                                           {0, 1}, uniform(rng, 0.0, 1.0) < 0.5,
                                           uniform(rng, -0.3, 0.3),
                                           uniform(rng, 0.4, 1.5)));
  }
  const double roll = uniform(rng, 0.0, 1.0);
  if (roll < 0.4) {
    const int m = uniform_int(rng, 2, 3);
    std::vector<int> kids;
    for (int i = 0; i < m; ++i)
      kids.push_back(random_formula_node(b, rng, depth + 1, cfg, pred_count));
    return roll < 0.2 ? b.add_and(std::move(kids)) : b.add_or(std::move(kids));
  }
  const int a = uniform_int(rng, 0, 3);
  const int bb = a + uniform_int(rng, 1, 4);
  const int child = random_formula_node(b, rng, depth + 1, cfg, pred_count);
  return roll < 0.7 ? b.add_globally(a, bb, child) : b.add_finally(a, bb, child);
}

inline Formula random_formula(Rng& rng, const RandomFormulaConfig& cfg = {}) {
  for (;;) {
    FormulaBuilder b;
    int pred_count = 0;
    const int root = random_formula_node(b, rng, 0, cfg, pred_count);
    Formula f = b.finish(root);
    if (f.horizon() <= cfg.max_horizon) return f;
  }
}

inline std::vector<Vec> random_states(Rng& rng, int count, int dim,
                                      double lo = -2.0, double hi = 2.0) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vec s(dim);
    for (int d = 0; d < dim; ++d) s[d] = uniform(rng, lo, hi);
    out.push_back(s);
  }
  return out;
}

}  // namespace rrt_eta::testing
