#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace rrt_eta {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline constexpr double kPi = 3.14159265358979323846;

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Axis-aligned box, used for state/control bounds and sampling regions.
struct AxisBox {
  Vec lo;
  Vec hi;

  AxisBox() = default;
  AxisBox(Vec l, Vec h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size()) throw std::invalid_argument("AxisBox: dim mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (lo[i] > hi[i]) throw std::invalid_argument("AxisBox: lo > hi");
  }

  Eigen::Index dim() const { return lo.size(); }

  bool contains(const Vec& q, double tol = 0.0) const {
    if (q.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (q[i] < lo[i] - tol || q[i] > hi[i] + tol) return false;
    return true;
  }

  Vec sample(Rng& rng) const {
    Vec q(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) q[i] = uniform(rng, lo[i], hi[i]);
    return q;
  }

  Vec center() const { return 0.5 * (lo + hi); }
};

}  // namespace rrt_eta
