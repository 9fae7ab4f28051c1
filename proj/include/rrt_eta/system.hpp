#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rrt_eta/core.hpp"

namespace rrt_eta {

/// Discrete-time dynamics contract: q' = f(q, u) on a bounded state space
/// with bounded controls. Implementations are immutable and shareable.
class SystemModel {
 public:
  SystemModel(AxisBox state_bounds, AxisBox control_bounds, double dt)
      : state_bounds_(std::move(state_bounds)),
        control_bounds_(std::move(control_bounds)),
        dt_(dt) {
    if (!(dt_ > 0.0)) throw std::invalid_argument("SystemModel: dt must be > 0");
  }
  virtual ~SystemModel() = default;

  int state_dim() const { return static_cast<int>(state_bounds_.dim()); }
  int control_dim() const { return static_cast<int>(control_bounds_.dim()); }
  const AxisBox& state_bounds() const { return state_bounds_; }
  const AxisBox& control_bounds() const { return control_bounds_; }
  double dt() const { return dt_; }

  Vec step(const Vec& q, const Vec& u) const {
    if (q.size() != state_bounds_.dim())
      throw std::invalid_argument("step: state dim mismatch");
    if (u.size() != control_bounds_.dim())
      throw std::invalid_argument("step: control dim mismatch");
    if (!control_bounds_.contains(u, 1e-9))
      throw std::invalid_argument("step: control outside bounds");
    return step_impl(q, u);
  }

  /// State Jacobian of f at (q, u). Central finite differences by default.
  virtual Mat jacobian(const Vec& q, const Vec& u) const {
    const double h = 1e-6;
    const int n = state_dim();
    Mat J(n, n);
    for (int i = 0; i < n; ++i) {
      Vec qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      J.col(i) = (step_impl(qp, u) - step_impl(qm, u)) / (2.0 * h);
    }
    return J;
  }

  /// Certified Lipschitz constant for f over the bounded domain, when one
  /// exists (angle wrapping breaks global continuity for some systems).
  virtual std::optional<double> lipschitz() const { return std::nullopt; }

  /// State axes holding angles; distances wrap differences on these axes.
  virtual const std::vector<int>& angle_axes() const {
    static const std::vector<int> none;
    return none;
  }

  double distance(const Vec& a, const Vec& b) const {
    Vec d = a - b;
    for (int axis : angle_axes()) d[axis] = wrap_angle(d[axis]);
    return d.norm();
  }

  /// Closed-form control sequence reaching q_goal in T steps, when the
  /// dynamics admit one. Used to seed exact-steering refinement.
  virtual std::optional<std::vector<Vec>> exact_connect_seed(const Vec& /*q0*/,
                                                             const Vec& /*q_goal*/,
                                                             int /*T*/) const {
    return std::nullopt;
  }

 protected:
  virtual Vec step_impl(const Vec& q, const Vec& u) const = 0;

 private:
  AxisBox state_bounds_;
  AxisBox control_bounds_;
  double dt_;
};

/// Point robot: position integrates velocity, velocity integrates the
/// commanded acceleration.
class DoubleIntegrator final : public SystemModel {
 public:
  DoubleIntegrator(int dims, AxisBox state_bounds, AxisBox control_bounds,
                   double dt)
      : SystemModel(std::move(state_bounds), std::move(control_bounds), dt),
        dims_(dims) {
    if (state_dim() != 2 * dims_ || control_dim() != dims_)
      throw std::invalid_argument("DoubleIntegrator: bounds dims mismatch");
  }

  Mat jacobian(const Vec&, const Vec&) const override {
    Mat J = Mat::Identity(state_dim(), state_dim());
    for (int i = 0; i < dims_; ++i) J(i, dims_ + i) = dt();
    return J;
  }

  std::optional<double> lipschitz() const override {
    // Largest singular value of the combined [A B] update matrix.
    Mat AB(state_dim(), state_dim() + control_dim());
    AB.setZero();
    AB.block(0, 0, state_dim(), state_dim()) = jacobian(Vec(), Vec());
    for (int i = 0; i < dims_; ++i) AB(dims_ + i, state_dim() + i) = dt();
    return AB.jacobiSvd().singularValues()(0);
  }

  std::optional<std::vector<Vec>> exact_connect_seed(const Vec& q0,
                                                     const Vec& q_goal,
                                                     int T) const override {
    if (T < 1) return std::nullopt;
    // Per axis: two linear constraints (final position and velocity) on the
    // T accelerations; take the min-norm solution.
    std::vector<Vec> controls(static_cast<std::size_t>(T), Vec::Zero(dims_));
    Mat M(2, T);
    for (int k = 0; k < T; ++k) {
      M(0, k) = dt() * dt() * static_cast<double>(T - 1 - k);
      M(1, k) = dt();
    }
    const auto solver = M.completeOrthogonalDecomposition();
    for (int axis = 0; axis < dims_; ++axis) {
      const double p0 = q0[axis], v0 = q0[dims_ + axis];
      Eigen::Vector2d rhs;
      rhs << q_goal[axis] - p0 - static_cast<double>(T) * dt() * v0,
          q_goal[dims_ + axis] - v0;
      const Vec u = solver.solve(rhs);
      for (int k = 0; k < T; ++k) {
        const double lo = control_bounds().lo[axis], hi = control_bounds().hi[axis];
        controls[static_cast<std::size_t>(k)][axis] = std::clamp(u[k], lo, hi);
      }
    }
    return controls;
  }

 protected:
  Vec step_impl(const Vec& q, const Vec& u) const override {
    Vec out(q.size());
    for (int i = 0; i < dims_; ++i) {
      out[i] = q[i] + q[dims_ + i] * dt();
      out[dims_ + i] = q[dims_ + i] + u[i] * dt();
    }
    return out;
  }

 private:
  int dims_;
};

/// Nonholonomic unicycle with state (x, y, theta, v, omega). Controls are
/// the next-step velocity commands, so v and omega track the control history.
class Unicycle final : public SystemModel {
 public:
  Unicycle(AxisBox state_bounds, AxisBox control_bounds, double dt)
      : SystemModel(std::move(state_bounds), std::move(control_bounds), dt) {
    if (state_dim() != 5 || control_dim() != 2)
      throw std::invalid_argument("Unicycle: expects 5 state / 2 control dims");
  }

  Mat jacobian(const Vec& q, const Vec&) const override {
    const double th = q[2], v = q[3];
    Mat J = Mat::Zero(5, 5);
    J(0, 0) = 1.0;
    J(0, 2) = -v * std::sin(th) * dt();
    J(0, 3) = std::cos(th) * dt();
    J(1, 1) = 1.0;
    J(1, 2) = v * std::cos(th) * dt();
    J(1, 3) = std::sin(th) * dt();
    J(2, 2) = 1.0;
    J(2, 4) = dt();
    return J;
  }

  const std::vector<int>& angle_axes() const override {
    static const std::vector<int> axes{2};
    return axes;
  }

 protected:
  Vec step_impl(const Vec& q, const Vec& u) const override {
    Vec out(5);
    out[0] = q[0] + q[3] * std::cos(q[2]) * dt();
    out[1] = q[1] + q[3] * std::sin(q[2]) * dt();
    out[2] = wrap_angle(q[2] + q[4] * dt());
    out[3] = u[0];
    out[4] = u[1];
    return out;
  }
};

/// Per-step (control, resulting state) record of one tree edge.
struct Segment {
  std::vector<Vec> controls;
  std::vector<Vec> states;  // states after each control, excludes the start
  int length() const { return static_cast<int>(states.size()); }
};

/// Applies a constant control for the given number of steps. Returns all
/// intermediate states, or nullopt once the state leaves its bounds.
inline std::optional<std::vector<Vec>> rollout(const SystemModel& system,
                                               const Vec& q, const Vec& u,
                                               int steps) {
  std::vector<Vec> states;
  states.reserve(static_cast<std::size_t>(steps));
  Vec cur = q;
  for (int i = 0; i < steps; ++i) {
    cur = system.step(cur, u);
    if (!system.state_bounds().contains(cur, 1e-9)) return std::nullopt;
    states.push_back(cur);
  }
  return states;
}

inline std::optional<Vec> steer(const SystemModel& system, const Vec& q,
                                const Vec& u, int steps) {
  if (steps == 0) return q;
  auto states = rollout(system, q, u, steps);
  if (!states) return std::nullopt;
  return states->back();
}

struct SteeringBudget {
  int shots = 64;        // candidate control sequences
  int refine_iters = 8;  // coordinate-descent passes
  int t_max = 5;         // step cap for exact connections
  double eps_connect = 0.05;
};

namespace detail {

inline std::optional<std::vector<Vec>> rollout_sequence(
    const SystemModel& system, const Vec& q, const std::vector<Vec>& controls) {
  std::vector<Vec> states;
  states.reserve(controls.size());
  Vec cur = q;
  for (const Vec& u : controls) {
    cur = system.step(cur, u);
    if (!system.state_bounds().contains(cur, 1e-9)) return std::nullopt;
    states.push_back(cur);
  }
  return states;
}

inline double terminal_error(const SystemModel& system,
                             const std::vector<Vec>& states, const Vec& q0,
                             const Vec& goal) {
  return system.distance(states.empty() ? q0 : states.back(), goal);
}

}  // namespace detail

/// Attempts an exact connection from q_start to q_final in exactly T steps:
/// random shooting over control sequences plus coordinate-descent refinement,
/// seeded by a closed-form connect when the system provides one. Succeeds
/// when the terminal state lands within eps_connect of the goal.
inline std::optional<Segment> steer_exact(const SystemModel& system,
                                          const Vec& q_start, const Vec& q_final,
                                          int T, const SteeringBudget& budget,
                                          Rng& rng) {
  if (T == 0)
    return system.distance(q_start, q_final) <= budget.eps_connect
               ? std::optional<Segment>(Segment{})
               : std::nullopt;
  if (T < 0 || T > budget.t_max) return std::nullopt;

  const int m = system.control_dim();
  std::vector<Vec> best;
  std::vector<Vec> best_states;
  double best_err = std::numeric_limits<double>::infinity();

  auto consider = [&](const std::vector<Vec>& controls) {
    auto states = detail::rollout_sequence(system, q_start, controls);
    if (!states) return;
    const double err = detail::terminal_error(system, *states, q_start, q_final);
    if (err < best_err) {
      best_err = err;
      best = controls;
      best_states = std::move(*states);
    }
  };

  if (auto seed = system.exact_connect_seed(q_start, q_final, T)) consider(*seed);
  consider(std::vector<Vec>(static_cast<std::size_t>(T),
                            Vec::Zero(m)));  // coasting
  for (int k = 0; k < budget.shots; ++k) {
    std::vector<Vec> controls;
    if (k % 2 == 0) {
      const Vec u = system.control_bounds().sample(rng);
      controls.assign(static_cast<std::size_t>(T), u);
    } else {
      for (int i = 0; i < T; ++i)
        controls.push_back(system.control_bounds().sample(rng));
    }
    consider(controls);
  }
  if (best.empty() && !(best_err < std::numeric_limits<double>::infinity()))
    return std::nullopt;  // every rollout left the state bounds

  // Coordinate descent over the flattened control sequence; two sweeps per
  // scale so improvements can compound before the step shrinks.
  const AxisBox& ub = system.control_bounds();
  for (int pass = 0; pass < budget.refine_iters && best_err > budget.eps_connect;
       ++pass) {
    const double frac = 0.5 / static_cast<double>(1 << pass);
    for (int sweep = 0; sweep < 2 && best_err > budget.eps_connect; ++sweep) {
      for (int i = 0; i < T; ++i) {
        for (int j = 0; j < m; ++j) {
          const double delta = frac * (ub.hi[j] - ub.lo[j]);
          for (double sign : {1.0, -1.0}) {
            std::vector<Vec> trial = best;
            trial[static_cast<std::size_t>(i)][j] = std::clamp(
                trial[static_cast<std::size_t>(i)][j] + sign * delta, ub.lo[j],
                ub.hi[j]);
            consider(trial);
          }
        }
      }
    }
  }

  if (best_err > budget.eps_connect) return std::nullopt;
  return Segment{std::move(best), std::move(best_states)};
}

}  // namespace rrt_eta
