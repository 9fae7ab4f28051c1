#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <vector>

#include "rrt_eta/formula.hpp"
#include "rrt_eta/system.hpp"

namespace rrt_eta {

/// End-effector pose (x, y, psi) of a planar serial arm.
inline Vec fk_planar_arm(const Vec& joints, const std::vector<double>& links) {
  if (joints.size() != static_cast<Eigen::Index>(links.size()))
    throw std::invalid_argument("fk_planar_arm: joints/links mismatch");
  double x = 0.0, y = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < links.size(); ++i) {
    acc += joints[static_cast<Eigen::Index>(i)];
    x += links[i] * std::cos(acc);
    y += links[i] * std::sin(acc);
  }
  Vec pose(3);
  pose << x, y, acc;
  return pose;
}

/// 3 x n Jacobian of the planar forward kinematics.
inline Mat fk_planar_jacobian(const Vec& joints, const std::vector<double>& links) {
  const int n = static_cast<int>(links.size());
  Mat J = Mat::Zero(3, n);
  // dx/dq_k = -sum_{i>=k} l_i sin(cumsum_i), dy/dq_k = sum_{i>=k} l_i cos(...).
  std::vector<double> cum(links.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < links.size(); ++i) {
    acc += joints[static_cast<Eigen::Index>(i)];
    cum[i] = acc;
  }
  for (int k = 0; k < n; ++k) {
    double sx = 0.0, sy = 0.0;
    for (int i = k; i < n; ++i) {
      sx -= links[static_cast<std::size_t>(i)] * std::sin(cum[static_cast<std::size_t>(i)]);
      sy += links[static_cast<std::size_t>(i)] * std::cos(cum[static_cast<std::size_t>(i)]);
    }
    J(0, k) = sx;
    J(1, k) = sy;
    J(2, k) = 1.0;
  }
  return J;
}

/// Workspace target constraining a subset of the pose axes (0=x, 1=y, 2=psi).
struct IkTarget {
  std::vector<int> pose_axes;
  Vec values;
};

inline constexpr double kIkTolerance = 1e-4;

/// Damped-least-squares IK from a seed configuration. Joint limits are
/// enforced by projection each iteration; fails after max_iters or when the
/// target is outside the reachable annulus.
inline std::optional<Vec> solve_ik(const IkTarget& target, const Vec& seed,
                                   const std::vector<double>& links,
                                   const AxisBox& joint_limits,
                                   double tol = kIkTolerance,
                                   int max_iters = 200) {
  if (target.pose_axes.size() != static_cast<std::size_t>(target.values.size()))
    throw std::invalid_argument("solve_ik: target axes/values mismatch");

  // Reachability precheck when both position coordinates are constrained.
  double total = 0.0;
  for (double l : links) total += l;
  {
    double x = 0.0, y = 0.0;
    int have = 0;
    for (std::size_t i = 0; i < target.pose_axes.size(); ++i) {
      if (target.pose_axes[i] == 0) x = target.values[static_cast<Eigen::Index>(i)], ++have;
      if (target.pose_axes[i] == 1) y = target.values[static_cast<Eigen::Index>(i)], ++have;
    }
    if (have == 2 && std::hypot(x, y) > total) return std::nullopt;
  }

  const int rows = static_cast<int>(target.pose_axes.size());
  Vec q = seed;

  auto error = [&](const Vec& joints) {
    const Vec pose = fk_planar_arm(joints, links);
    Vec e(rows);
    for (int i = 0; i < rows; ++i) {
      const int axis = target.pose_axes[static_cast<std::size_t>(i)];
      double d = target.values[i] - pose[axis];
      if (axis == 2) d = wrap_angle(d);
      e[i] = d;
    }
    return e;
  };

  // Levenberg-style damping: shrink while steps help, grow when they don't.
  double damping = 0.1;
  Vec e = error(q);
  for (int iter = 0; iter < max_iters && e.norm() > tol; ++iter) {
    const Mat Jfull = fk_planar_jacobian(q, links);
    Mat J(rows, Jfull.cols());
    for (int i = 0; i < rows; ++i)
      J.row(i) = Jfull.row(target.pose_axes[static_cast<std::size_t>(i)]);
    const Mat JJt = J * J.transpose() + damping * damping * Mat::Identity(rows, rows);
    Vec trial = q + J.transpose() * JJt.ldlt().solve(e);
    for (Eigen::Index i = 0; i < trial.size(); ++i)
      trial[i] = std::clamp(trial[i], joint_limits.lo[i], joint_limits.hi[i]);
    const Vec e_trial = error(trial);
    if (e_trial.norm() < e.norm()) {
      q = trial;
      e = e_trial;
      damping = std::max(1e-3, damping * 0.7);
    } else {
      damping = std::min(1e3, damping * 2.5);
    }
  }
  if (e.norm() > tol || !joint_limits.contains(q, 1e-9)) return std::nullopt;
  return q;
}

/// Discretized workspace-pose -> joint-solution cache. Positions quantize at
/// 0.01 m, orientations at 5 degrees. Concurrent reads share the lock; a
/// duplicate solve after a racy miss is permitted, an inconsistent entry is
/// not.
class IkCache {
 public:
  struct Entry {
    Vec joints;
    Vec pose;  // exact FK of joints, recorded at solve time
  };

  IkCache(double position_resolution = 0.01,
          double orientation_resolution = 5.0 * kPi / 180.0)
      : pos_res_(position_resolution), ang_res_(orientation_resolution) {}

  std::optional<Entry> lookup(const IkTarget& target) const {
    const auto key = make_key(target);
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      ++misses_;
      return std::nullopt;
    }
    ++hits_;
    return it->second;
  }

  void insert(const IkTarget& target, Entry entry) {
    const auto key = make_key(target);
    std::unique_lock lock(mutex_);
    entries_.emplace(key, std::move(entry));
  }

  long long hits() const { return hits_; }
  long long misses() const { return misses_; }
  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }
  double hit_rate() const {
    const long long total = hits_ + misses_;
    return total == 0 ? 0.0 : static_cast<double>(hits_) / static_cast<double>(total);
  }

  template <typename Fn>  // fn(const Entry&)
  void for_each(Fn&& fn) const {
    std::shared_lock lock(mutex_);
    for (const auto& [key, entry] : entries_) fn(entry);
  }

 private:
  std::vector<long long> make_key(const IkTarget& target) const {
    std::vector<long long> key;
    key.reserve(2 * target.pose_axes.size());
    for (std::size_t i = 0; i < target.pose_axes.size(); ++i) {
      const int axis = target.pose_axes[i];
      const double res = axis == 2 ? ang_res_ : pos_res_;
      key.push_back(axis);
      key.push_back(static_cast<long long>(
          std::floor(target.values[static_cast<Eigen::Index>(i)] / res)));
    }
    return key;
  }

  double pos_res_, ang_res_;
  mutable std::map<std::vector<long long>, Entry> entries_;
  mutable std::shared_mutex mutex_;
  mutable std::atomic<long long> hits_{0};
  mutable std::atomic<long long> misses_{0};
};

/// Planar N-link arm under joint-velocity control, planned in the augmented
/// state (q_1..q_n, x, y, psi) so predicate evaluation reads cached workspace
/// coordinates instead of recomputing kinematics.
class PlanarArm final : public SystemModel {
 public:
  PlanarArm(std::vector<double> links, AxisBox joint_limits, double velocity_limit,
            double dt)
      : SystemModel(augmented_bounds(links, joint_limits),
                    velocity_bounds(links.size(), velocity_limit), dt),
        links_(std::move(links)),
        joint_limits_(std::move(joint_limits)) {}

  int joint_count() const { return static_cast<int>(links_.size()); }
  const std::vector<double>& links() const { return links_; }
  const AxisBox& joint_limits() const { return joint_limits_; }
  double total_length() const {
    double s = 0.0;
    for (double l : links_) s += l;
    return s;
  }

  Vec augmented_state(const Vec& joints) const {
    Vec out(joint_count() + 3);
    out.head(joint_count()) = joints;
    out.tail(3) = fk_planar_arm(joints, links_);
    return out;
  }
  Vec joints_of(const Vec& state) const { return state.head(joint_count()); }
  Vec pose_of(const Vec& state) const { return state.tail(3); }
  int pose_axis(int pose_coord) const { return joint_count() + pose_coord; }

  Mat jacobian(const Vec& q, const Vec& u) const override {
    const int n = joint_count();
    Mat J = Mat::Zero(n + 3, n + 3);
    J.topLeftCorner(n, n) = Mat::Identity(n, n);
    const Vec joints_next = q.head(n) + u * dt();
    J.bottomLeftCorner(3, n) = fk_planar_jacobian(joints_next, links_);
    return J;
  }

  std::optional<double> lipschitz() const override {
    // Frobenius bound on the combined (state, control) Jacobian over the
    // whole domain; coarse but certified.
    const double S = total_length();
    const double n = static_cast<double>(joint_count());
    return std::sqrt((1.0 + dt() * dt()) * n * (2.0 + 2.0 * S * S));
  }

 protected:
  Vec step_impl(const Vec& q, const Vec& u) const override {
    const Vec joints = q.head(joint_count()) + u * dt();
    Vec out(q.size());
    out.head(joint_count()) = joints;
    out.tail(3) = fk_planar_arm(joints, links_);
    return out;
  }

 private:
  static AxisBox augmented_bounds(const std::vector<double>& links,
                                  const AxisBox& joint_limits) {
    const int n = static_cast<int>(links.size());
    if (joint_limits.dim() != n)
      throw std::invalid_argument("PlanarArm: joint limit dims mismatch");
    double total = 0.0;
    for (double l : links) total += l;
    Vec lo(n + 3), hi(n + 3);
    lo.head(n) = joint_limits.lo;
    hi.head(n) = joint_limits.hi;
    lo[n] = lo[n + 1] = -total;
    hi[n] = hi[n + 1] = total;
    // psi is the raw joint-angle sum, so it ranges over the summed limits.
    double psi_lo = 0.0, psi_hi = 0.0;
    for (int i = 0; i < n; ++i) {
      psi_lo += joint_limits.lo[i];
      psi_hi += joint_limits.hi[i];
    }
    lo[n + 2] = psi_lo;
    hi[n + 2] = psi_hi;
    return AxisBox(lo, hi);
  }

  static AxisBox velocity_bounds(std::size_t n, double velocity_limit) {
    if (!(velocity_limit > 0.0))
      throw std::invalid_argument("PlanarArm: velocity limit must be > 0");
    Vec lo = Vec::Constant(static_cast<Eigen::Index>(n), -velocity_limit);
    Vec hi = Vec::Constant(static_cast<Eigen::Index>(n), velocity_limit);
    return AxisBox(lo, hi);
  }

  std::vector<double> links_;
  AxisBox joint_limits_;
};

/// Splits the predicates active at step t into workspace-region hints (in the
/// arm's pose block) and configuration-space predicates (joint block only).
struct ActiveSplit {
  std::vector<const Predicate*> workspace;
  std::vector<const Predicate*> configuration;
};

inline ActiveSplit split_active_predicates(const Formula& phi, int t,
                                           const PlanarArm& arm) {
  ActiveSplit out;
  const int n = arm.joint_count();
  for (const auto& ap : phi.active_predicates(t)) {
    const Predicate& p = phi.predicates()[ap.pred];
    if (p.region_hint()) {
      bool in_pose = true;
      for (int axis : p.region_hint()->axes) in_pose = in_pose && axis >= n;
      if (in_pose) {
        out.workspace.push_back(&p);
        continue;
      }
    }
    out.configuration.push_back(&p);
  }
  return out;
}

/// Workspace-biased augmented-state sampling: when a workspace predicate is
/// active at step t, sample a pose inside its region, resolve joints through
/// the IK cache, and return [q, FK(q)]. Otherwise sample joint space
/// directly. Fails (for the caller to fall back to uniform sampling) after
/// max_retries rejections.
inline std::optional<Vec> adaptive_sample(const Formula& phi, int t,
                                          const PlanarArm& arm, IkCache& cache,
                                          Rng& rng, int max_retries = 50) {
  const ActiveSplit active = split_active_predicates(phi, t, arm);
  const int n = arm.joint_count();

  auto satisfies_config = [&](const Vec& aug) {
    for (const Predicate* p : active.configuration)
      if (p->robustness(aug) <= 0.0) return false;
    return true;
  };

  if (active.workspace.empty()) {
    for (int attempt = 0; attempt < max_retries; ++attempt) {
      const Vec joints = arm.joint_limits().sample(rng);
      const Vec aug = arm.augmented_state(joints);
      if (!satisfies_config(aug)) continue;
      return aug;
    }
    return std::nullopt;
  }

  for (int attempt = 0; attempt < max_retries; ++attempt) {
    const Predicate* choice =
        active.workspace[static_cast<std::size_t>(uniform_int(
            rng, 0, static_cast<int>(active.workspace.size()) - 1))];
    const RegionHint& hint = *choice->region_hint();

    Vec probe = Vec::Zero(n + 3);
    hint.sample_into(probe, rng);
    IkTarget target;
    for (int axis : hint.axes) {
      target.pose_axes.push_back(axis - n);
    }
    target.values.resize(static_cast<Eigen::Index>(hint.axes.size()));
    for (std::size_t i = 0; i < hint.axes.size(); ++i)
      target.values[static_cast<Eigen::Index>(i)] = probe[hint.axes[i]];

    if (auto entry = cache.lookup(target)) {
      Vec aug(n + 3);
      aug.head(n) = entry->joints;
      aug.tail(3) = entry->pose;
      if (satisfies_config(aug)) return aug;
      continue;
    }

    const Vec seed = arm.joint_limits().sample(rng);
    const auto joints = solve_ik(target, seed, arm.links(), arm.joint_limits());
    if (!joints) continue;
    const Vec aug = arm.augmented_state(*joints);
    if (!satisfies_config(aug)) continue;
    cache.insert(target, IkCache::Entry{*joints, arm.pose_of(aug)});
    return aug;
  }
  return std::nullopt;
}

}  // namespace rrt_eta
