#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rrt_eta/core.hpp"

namespace rrt_eta {

/// Region used to bias sampling toward states that satisfy a predicate.
/// Lives in a subset of the state axes (e.g. the x,y position of a mobile
/// robot, or the cached end-effector pose of an arm).
struct RegionHint {
  struct BoxRegion {
    Vec lo, hi;
  };
  struct BallRegion {
    Vec center;
    double radius = 0.0;
  };

  std::vector<int> axes;
  std::variant<BoxRegion, BallRegion> shape;

  static RegionHint box(std::vector<int> axes, Vec lo, Vec hi) {
    RegionHint h;
    h.axes = std::move(axes);
    h.shape = BoxRegion{std::move(lo), std::move(hi)};
    h.validate();
    return h;
  }
  static RegionHint ball(std::vector<int> axes, Vec center, double radius) {
    RegionHint h;
    h.axes = std::move(axes);
    h.shape = BallRegion{std::move(center), radius};
    h.validate();
    return h;
  }

  void validate() const {
    if (axes.empty()) throw std::invalid_argument("RegionHint: no axes");
    if (const auto* b = std::get_if<BoxRegion>(&shape)) {
      if (b->lo.size() != static_cast<Eigen::Index>(axes.size()) ||
          b->hi.size() != b->lo.size())
        throw std::invalid_argument("RegionHint: box dim mismatch");
      for (Eigen::Index i = 0; i < b->lo.size(); ++i)
        if (b->lo[i] > b->hi[i]) throw std::invalid_argument("RegionHint: empty box");
    } else {
      const auto& s = std::get<BallRegion>(shape);
      if (s.center.size() != static_cast<Eigen::Index>(axes.size()))
        throw std::invalid_argument("RegionHint: ball dim mismatch");
      if (s.radius <= 0.0) throw std::invalid_argument("RegionHint: radius <= 0");
    }
  }

  /// Sample a point in the hint region and scatter it into a full state vector
  /// whose remaining axes were already filled by the caller.
  void sample_into(Vec& state, Rng& rng) const {
    if (const auto* b = std::get_if<BoxRegion>(&shape)) {
      for (std::size_t i = 0; i < axes.size(); ++i)
        state[axes[i]] = uniform(rng, b->lo[i], b->hi[i]);
    } else {
      const auto& s = std::get<BallRegion>(shape);
      // Rejection from the bounding box; dimension is small.
      const Eigen::Index d = s.center.size();
      Vec p(d);
      for (;;) {
        for (Eigen::Index i = 0; i < d; ++i)
          p[i] = uniform(rng, -s.radius, s.radius);
        if (p.norm() <= s.radius) break;
      }
      for (std::size_t i = 0; i < axes.size(); ++i)
        state[axes[i]] = s.center[i] + p[i];
    }
  }
};

// The three measure shapes a predicate can carry. Kept at namespace scope:
// gcc rejects variant members over nested classes with default initializers
// when used from in-class definitions.
struct AffineMeasure {
  Vec coeffs;  // full state dimension
  double offset = 0.0;
};
struct BallMeasure {
  Vec center;
  double radius = 0.0;
  std::vector<int> axes;  // state axes the ball lives in
  bool inside = true;     // h = r - ||s-c|| when inside, ||s-c|| - r otherwise
};
struct BoxMeasure {
  Vec lo, hi;
  std::vector<int> axes;
  bool inside = true;  // h = min margin into the box, negated when outside
};

/// Atomic predicate h(s) > threshold over the state vector, with a measure
/// function h that is affine, a signed ball distance, or a signed box margin.
/// Robustness is (h - threshold) / (2*scale) clamped to [-1, 1], so `scale`
/// controls how quickly satisfaction saturates.
class Predicate {
 public:
  Predicate() = default;

  static Predicate affine(std::string id, Vec coeffs, double offset,
                          double threshold, double scale) {
    Predicate p;
    p.id_ = std::move(id);
    p.h_ = AffineMeasure{std::move(coeffs), offset};
    p.threshold_ = threshold;
    p.set_scale(scale);
    return p;
  }

  static Predicate ball(std::string id, Vec center, double radius,
                        std::vector<int> axes, bool inside, double threshold,
                        double scale) {
    if (radius <= 0.0) throw std::invalid_argument("Predicate: ball radius <= 0");
    if (center.size() != static_cast<Eigen::Index>(axes.size()))
      throw std::invalid_argument("Predicate: ball center/axes mismatch");
    Predicate p;
    p.id_ = std::move(id);
    p.h_ = BallMeasure{std::move(center), radius, std::move(axes), inside};
    p.threshold_ = threshold;
    p.set_scale(scale);
    return p;
  }

  static Predicate box(std::string id, Vec lo, Vec hi, std::vector<int> axes,
                       bool inside, double threshold, double scale) {
    if (lo.size() != hi.size() || lo.size() != static_cast<Eigen::Index>(axes.size()))
      throw std::invalid_argument("Predicate: box dim mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (lo[i] >= hi[i]) throw std::invalid_argument("Predicate: empty box");
    Predicate p;
    p.id_ = std::move(id);
    p.h_ = BoxMeasure{std::move(lo), std::move(hi), std::move(axes), inside};
    p.threshold_ = threshold;
    p.set_scale(scale);
    return p;
  }

  const std::string& id() const { return id_; }
  double threshold() const { return threshold_; }
  double scale() const { return scale_; }
  const std::optional<RegionHint>& region_hint() const { return hint_; }
  void set_region_hint(RegionHint h) { hint_ = std::move(h); }

  bool is_affine() const { return std::holds_alternative<AffineMeasure>(h_); }
  const AffineMeasure& as_affine() const { return std::get<AffineMeasure>(h_); }

  /// Raw measure h(s), before threshold shift and normalization.
  double measure(const Vec& s) const {
    if (const auto* a = std::get_if<AffineMeasure>(&h_)) {
      if (s.size() != a->coeffs.size())
        throw std::invalid_argument("Predicate: state dim mismatch for " + id_);
      return a->coeffs.dot(s) + a->offset;
    }
    if (const auto* b = std::get_if<BallMeasure>(&h_)) {
      const double d = subspace_distance(s, b->center, b->axes);
      return b->inside ? b->radius - d : d - b->radius;
    }
    const auto& bx = std::get<BoxMeasure>(h_);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bx.axes.size(); ++i) {
      const double v = at(s, bx.axes[i]);
      margin = std::min(margin, std::min(v - bx.lo[i], bx.hi[i] - v));
    }
    return bx.inside ? margin : -margin;
  }

  /// Normalized robustness in [-1, 1].
  double robustness(const Vec& s) const {
    return std::clamp((measure(s) - threshold_) / (2.0 * scale_), -1.0, 1.0);
  }

  /// Gradient of the raw measure h w.r.t. the state. Analytic for all three
  /// measure kinds; the box uses the active-face subgradient.
  Vec measure_gradient(const Vec& s) const {
    Vec g = Vec::Zero(s.size());
    if (const auto* a = std::get_if<AffineMeasure>(&h_)) {
      g = a->coeffs;
      return g;
    }
    if (const auto* b = std::get_if<BallMeasure>(&h_)) {
      Vec diff(b->center.size());
      for (std::size_t i = 0; i < b->axes.size(); ++i)
        diff[static_cast<Eigen::Index>(i)] = at(s, b->axes[i]) - b->center[i];
      const double d = diff.norm();
      if (d < 1e-12) return g;  // at the center the direction is undefined
      const double sign = b->inside ? -1.0 : 1.0;
      for (std::size_t i = 0; i < b->axes.size(); ++i)
        g[b->axes[i]] = sign * diff[static_cast<Eigen::Index>(i)] / d;
      return g;
    }
    const auto& bx = std::get<BoxMeasure>(h_);
    double margin = std::numeric_limits<double>::infinity();
    int axis = bx.axes[0];
    double dir = 1.0;
    for (std::size_t i = 0; i < bx.axes.size(); ++i) {
      const double v = at(s, bx.axes[i]);
      if (v - bx.lo[i] < margin) {
        margin = v - bx.lo[i];
        axis = bx.axes[i];
        dir = 1.0;
      }
      if (bx.hi[i] - v < margin) {
        margin = bx.hi[i] - v;
        axis = bx.axes[i];
        dir = -1.0;
      }
    }
    g[axis] = bx.inside ? dir : -dir;
    return g;
  }

  /// The complement predicate: !(h > t) rewritten as (-h > -t).
  Predicate negated(const std::string& new_id) const {
    Predicate p = *this;
    p.id_ = new_id;
    p.threshold_ = -threshold_;
    p.hint_.reset();  // the hint marked the satisfying region of the original
    if (auto* a = std::get_if<AffineMeasure>(&p.h_)) {
      a->coeffs = -a->coeffs;
      a->offset = -a->offset;
    } else if (auto* b = std::get_if<BallMeasure>(&p.h_)) {
      b->inside = !b->inside;
    } else {
      std::get<BoxMeasure>(p.h_).inside = !std::get<BoxMeasure>(p.h_).inside;
    }
    return p;
  }

 private:
  void set_scale(double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("Predicate: scale must be > 0");
    scale_ = scale;
  }

  static double at(const Vec& s, int axis) {
    if (axis < 0 || axis >= s.size())
      throw std::invalid_argument("Predicate: axis out of range");
    return s[axis];
  }

  static double subspace_distance(const Vec& s, const Vec& center,
                                  const std::vector<int>& axes) {
    double sq = 0.0;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const double d = at(s, axes[i]) - center[static_cast<Eigen::Index>(i)];
      sq += d * d;
    }
    return std::sqrt(sq);
  }

  std::string id_;
  std::variant<AffineMeasure, BallMeasure, BoxMeasure> h_;
  double threshold_ = 0.0;
  double scale_ = 1.0;
  std::optional<RegionHint> hint_;
};

}  // namespace rrt_eta
