#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rrt_eta {

/// Robustness interval [lo, hi] with -1 <= lo <= hi <= 1. Bounds every
/// robustness value any completion of a partial trace can take.
struct Interval {
  double lo = -1.0;
  double hi = 1.0;

  Interval() = default;
  Interval(double l, double h) : lo(l), hi(h) {
    // Tolerate sub-epsilon crossings from rounding; anything larger is a bug.
    if (lo > hi) {
      if (lo - hi > 1e-9) throw std::invalid_argument("Interval: lo > hi");
      hi = lo;
    }
    lo = std::clamp(lo, -1.0, 1.0);
    hi = std::clamp(hi, -1.0, 1.0);
  }

  static Interval unknown() { return Interval(-1.0, 1.0); }
  static Interval singleton(double v) { return Interval(v, v); }

  bool is_singleton() const { return lo == hi; }
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }

  bool contains(double v, double slack = 0.0) const {
    return v >= lo - slack && v <= hi + slack;
  }
  /// True when `other` lies inside this interval (up to slack).
  bool includes(const Interval& other, double slack = 0.0) const {
    return other.lo >= lo - slack && other.hi <= hi + slack;
  }

  bool operator==(const Interval& o) const { return lo == o.lo && hi == o.hi; }
};

}  // namespace rrt_eta
