#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rrt_eta/formula.hpp"
#include "rrt_eta/interval.hpp"
#include "rrt_eta/monitor.hpp"
#include "rrt_eta/system.hpp"

namespace rrt_eta {

enum class CompositionMode { stochastic, fpl };

struct CompositionConfig {
  CompositionMode mode = CompositionMode::fpl;
  double p_and = -1.0;
  double p_or = 1.0;
  double beta = 0.1;
  std::uint64_t rng_seed = 0;
};

inline constexpr double kFulfillmentFloor = 1e-6;
inline constexpr double kOrthogonalCos = 1e-6;

/// Direction plus the robustness interval of the subformula that produced it.
struct GuidancePair {
  Vec chi;
  Interval interval;
};

/// Zero vectors count as orthogonal so a dead child never suppresses a live
/// sibling.
inline bool orthogonal(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return true;
  return std::abs(a.dot(b)) / (na * nb) <= kOrthogonalCos;
}

/// Direction of increasing satisfaction for a single predicate: the measure
/// gradient pulled through the state Jacobian, gated on whether the one-step
/// displacement under u actually improves the measure.
inline Vec dias_predicate(const Vec& q, const Vec& u, const Predicate& mu,
                          const SystemModel& system) {
  const Vec g = mu.measure_gradient(q);
  if (g.norm() < 1e-12) return Vec::Zero(q.size());
  const Vec displacement = system.step(q, u) - q;
  if (g.dot(displacement) <= 0.0) return Vec::Zero(q.size());
  return system.jacobian(q, u).transpose() * g;
}

/// Stochastic ordering of two subformulae. A strictly dominated interval is
/// listed first deterministically; otherwise a Bernoulli draw biased by the
/// interval sums orders the pair. The second index is the one the blend
/// follows.
inline std::pair<int, int> choose(const Interval& i1, const Interval& i2,
                                  Rng& rng) {
  if (i1.lo < i2.lo && i1.hi < i2.hi) return {1, 2};
  if (i1.lo > i2.lo && i1.hi > i2.hi) return {2, 1};
  const double p = clamp01(0.5 + ((i1.lo + i1.hi) - (i2.lo + i2.hi)) / 8.0);
  const bool flip = std::bernoulli_distribution(p)(rng);
  return flip ? std::pair<int, int>{2, 1} : std::pair<int, int>{1, 2};
}

inline Vec blend(const Vec& chosen, const Vec& other) {
  if (orthogonal(chosen, other)) return chosen + other;
  return chosen;
}

/// Binary stochastic composition, folded left-to-right over n-ary nodes; the
/// accumulated direction carries the followed side's interval.
inline Vec compose_stochastic(std::span<const GuidancePair> pairs, Rng& rng) {
  if (pairs.size() < 2)
    throw std::invalid_argument("compose_stochastic: needs >= 2 pairs");
  Vec acc_chi = pairs[0].chi;
  Interval acc_int = pairs[0].interval;
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    const int followed = choose(acc_int, pairs[i].interval, rng).second;
    const Vec& chosen = followed == 1 ? acc_chi : pairs[i].chi;
    const Vec& rest = followed == 1 ? pairs[i].chi : acc_chi;
    acc_chi = blend(chosen, rest);
    acc_int = followed == 1 ? acc_int : pairs[i].interval;
  }
  return acc_chi;
}

/// Power mean with the geometric-mean limit at p = 0. Inputs are clamped to
/// [kFulfillmentFloor, 1] so negative exponents stay finite.
inline double power_mean(std::span<const double> f, double p) {
  if (f.empty()) throw std::invalid_argument("power_mean: empty input");
  const double n = static_cast<double>(f.size());
  if (p == 0.0) {
    double acc = 0.0;
    for (double v : f) acc += std::log(std::clamp(v, kFulfillmentFloor, 1.0));
    return std::exp(acc / n);
  }
  double acc = 0.0;
  for (double v : f) acc += std::pow(std::clamp(v, kFulfillmentFloor, 1.0), p);
  return std::pow(acc / n, 1.0 / p);
}

inline double power_mean(std::initializer_list<double> f, double p) {
  return power_mean(std::span<const double>(f.begin(), f.size()), p);
}

/// d mu_p / d f_i evaluated at f.
inline double power_mean_partial(std::span<const double> f, double p,
                                 std::size_t i) {
  const double n = static_cast<double>(f.size());
  const double fi = std::clamp(f[i], kFulfillmentFloor, 1.0);
  if (p == 0.0) return power_mean(f, p) / (n * fi);  // geometric-mean limit
  const double mu = power_mean(f, p);
  return (1.0 / n) * std::pow(fi, p - 1.0) * std::pow(mu, 1.0 - p);
}

/// Maps a robustness interval onto a fulfillment level in [0, 1].
inline double fulfillment(const Interval& I) {
  return std::clamp((I.lo + I.hi + 2.0) / 4.0, kFulfillmentFloor, 1.0);
}

/// Guaranteed minimum component fulfillment when the power mean equals y;
/// returns the vacuous bound 0 where the root is not real.
inline double min_fulfillment_bound(double y, int n, double p) {
  if (n < 1) throw std::invalid_argument("min_fulfillment_bound: n < 1");
  if (p == 0.0) return std::pow(y, static_cast<double>(n));
  const double radicand =
      static_cast<double>(n) * (std::pow(y, p) - 1.0) + 1.0;
  if (radicand <= 0.0) return 0.0;
  return std::exp(std::log(radicand) / p);
}

/// Fulfillment-weighted composition: orthogonal directions add; otherwise
/// each direction is weighted by the power-mean sensitivity of its
/// fulfillment, plus a noise term that fades as fulfillments separate.
inline Vec compose_fpl(std::span<const GuidancePair> pairs, NodeKind op,
                       const CompositionConfig& cfg, Rng& rng) {
  if (pairs.size() < 2)
    throw std::invalid_argument("compose_fpl: needs >= 2 pairs");
  const std::size_t n = pairs.size();

  bool all_orth = true;
  for (std::size_t i = 0; i < n && all_orth; ++i)
    for (std::size_t j = i + 1; j < n && all_orth; ++j)
      all_orth = orthogonal(pairs[i].chi, pairs[j].chi);
  if (all_orth) {
    Vec sum = pairs[0].chi;
    for (std::size_t i = 1; i < n; ++i) sum += pairs[i].chi;
    return sum;
  }

  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = fulfillment(pairs[i].interval);
  const double p = op == NodeKind::And ? cfg.p_and : cfg.p_or;

  std::vector<double> raw(n);
  double raw_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = std::pow(f[i], p) * power_mean_partial(std::span<const double>(f), p, i);
    raw_sum += raw[i];
  }

  Vec out = Vec::Zero(pairs[0].chi.size());
  for (std::size_t i = 0; i < n; ++i) {
    double spread = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) spread = std::max(spread, std::abs(f[i] - f[j]));
    const double r = uniform(rng, -1.0, 1.0);
    const double alpha = cfg.beta * r * (1.0 - spread);
    const double w = raw[i] / raw_sum + alpha;
    out += w * pairs[i].chi;
  }
  return out;
}

/// Source of current per-subformula robustness intervals, keyed by node id.
using NodeIntervalFn = std::function<Interval(int)>;

/// Direction of increasing satisfaction for a whole formula: predicates
/// produce gated gradient directions, temporal operators pass through, and
/// Boolean operators compose their children using the configured mechanism
/// with the current per-node intervals.
inline Vec dias(const Vec& q, const Vec& u, const Formula& phi, int node_id,
                const NodeIntervalFn& intervals, const CompositionConfig& cfg,
                const SystemModel& system, Rng& rng) {
  const auto& n = phi.node(node_id);
  switch (n.kind) {
    case NodeKind::True:
    case NodeKind::False:
      return Vec::Zero(q.size());
    case NodeKind::Pred:
      return dias_predicate(q, u, phi.predicate_of(node_id), system);
    case NodeKind::Globally:
    case NodeKind::Finally:
      return dias(q, u, phi, n.children[0], intervals, cfg, system, rng);
    case NodeKind::And:
    case NodeKind::Or: {
      std::vector<GuidancePair> pairs;
      pairs.reserve(n.children.size());
      for (int c : n.children)
        pairs.push_back(GuidancePair{
            dias(q, u, phi, c, intervals, cfg, system, rng), intervals(c)});
      if (cfg.mode == CompositionMode::stochastic)
        return compose_stochastic(pairs, rng);
      return compose_fpl(pairs, n.kind, cfg, rng);
    }
  }
  throw std::logic_error("unreachable");
}

inline Vec dias(const Vec& q, const Vec& u, const Formula& phi,
                const MonitorState& monitor, const CompositionConfig& cfg,
                const SystemModel& system, Rng& rng) {
  return dias(q, u, phi, phi.root(),
              [&monitor](int id) { return monitor.node_interval(id); }, cfg,
              system, rng);
}

}  // namespace rrt_eta
