#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "oracles.hpp"
#include "rrt_eta/robustness.hpp"

using namespace rrt_eta;

namespace {

Predicate coord_pred(const std::string& id, int axis, int dim, double scale = 0.5) {
  Vec c = Vec::Zero(dim);
  c[axis] = 1.0;
  return Predicate::affine(id, c, 0.0, 0.0, scale);
}

Trace constant_trace(const Vec& s, int len, int t0 = 0) {
  Trace tr;
  tr.t0 = t0;
  tr.samples.assign(static_cast<std::size_t>(len), s);
  return tr;
}

}  // namespace

TEST_CASE("agm_or branch values") {
  CHECK(agm_or({-1.0, -1.0, -1.0}) == Catch::Approx(-1.0).margin(1e-12));
  CHECK(agm_or({-0.5, 0.5}) == Catch::Approx(0.25));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double r = uniform(rng, -1.0, 1.0);
    CHECK(agm_or({r}) == Catch::Approx(r).margin(1e-12));
    CHECK(agm_and({r}) == Catch::Approx(r).margin(1e-12));
  }
}

TEST_CASE("agm_and branch values") {
  CHECK(agm_and({0.3, 0.3, 0.3}) == Catch::Approx(0.3).margin(1e-12));
  CHECK(agm_and({0.5, -0.5}) == Catch::Approx(-0.25));
  CHECK(agm_and({1.0, 1.0}) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("aggregators reject bad input") {
  CHECK_THROWS_AS(agm_or(std::span<const double>{}), std::invalid_argument);
  CHECK_THROWS_AS(agm_or({1.5}), std::invalid_argument);
  CHECK_THROWS_AS(agm_and({-1.2, 0.0}), std::invalid_argument);
}

TEST_CASE("predicate robustness normalization") {
  Predicate p = coord_pred("p", 0, 1, 0.5);
  Vec s(1);
  s << 0.0;
  CHECK(p.robustness(s) == 0.0);  // h == threshold
  s << 1.0;                       // h - threshold == 2*scale
  CHECK(p.robustness(s) == Catch::Approx(1.0));
  s << 5.0;
  CHECK(p.robustness(s) == 1.0);  // clamped

  // Distance predicate: at the ball center the normalized robustness is 1.
  Vec c(2);
  c << 3.5, 3.5;
  Predicate ball = Predicate::ball("target", c, 1.0, {0, 1}, true, 0.0, 0.5);
  Vec q(2);
  q << 3.5, 3.5;
  CHECK(ball.robustness(q) == Catch::Approx(1.0));
  q << 3.5, 4.5;  // on the boundary
  CHECK(ball.robustness(q) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("predicate dimension mismatch") {
  Predicate p = coord_pred("p", 0, 2);
  Vec s(3);
  s.setZero();
  CHECK_THROWS_AS(p.robustness(s), std::invalid_argument);
}

TEST_CASE("globally over a constant trace returns the constant robustness") {
  FormulaBuilder b;
  const int leaf = b.add_predicate(coord_pred("p", 0, 1));
  Formula f = b.finish(b.add_globally(0, 5, leaf));
  Vec s(1);
  s << 0.37;
  Trace tr = constant_trace(s, 6);
  CHECK(agm_robustness(tr, f) == Catch::Approx(0.37).margin(1e-12));
}

TEST_CASE("two-subformula conjunction matches hand-computed aggregation") {
  // Subformula robustness exactly 0.1 and 0.9.
  FormulaBuilder b;
  const int p1 = b.add_predicate(coord_pred("p1", 0, 2));
  const int p2 = b.add_predicate(coord_pred("p2", 1, 2));
  Formula f = b.finish(b.add_and({p1, p2}));
  Vec s(2);
  s << 0.1, 0.9;
  Trace tr = constant_trace(s, 1);

  const double agm = agm_robustness(tr, f);
  const double expected = std::sqrt(1.1 * 1.9) - 1.0;
  CHECK(agm == Catch::Approx(expected).epsilon(1e-12));
  CHECK(agm > 0.1);
  CHECK(minmax_robustness(tr, f) == Catch::Approx(0.1));
}

TEST_CASE("window of size one reduces to the sample's robustness") {
  FormulaBuilder b;
  const int leaf = b.add_predicate(coord_pred("p", 0, 1));
  Formula f = b.finish(b.add_finally(0, 0, leaf));
  Vec s(1);
  s << -0.42;
  Trace tr = constant_trace(s, 1);
  CHECK(agm_robustness(tr, f) == Catch::Approx(-0.42));
}

TEST_CASE("min-max eventually takes the window maximum") {
  FormulaBuilder b;
  const int leaf = b.add_predicate(coord_pred("p", 0, 1));
  Formula f = b.finish(b.add_finally(0, 7, leaf));
  Rng rng(3);
  Trace tr;
  tr.t0 = 0;
  double best = -1.0;
  for (int i = 0; i < 8; ++i) {
    Vec s(1);
    s << uniform(rng, -1.0, 1.0);
    tr.samples.push_back(s);
    best = std::max(best, f.predicates()[0].robustness(s));
  }
  CHECK(minmax_robustness(tr, f) == Catch::Approx(best));
}

TEST_CASE("incomplete traces are rejected") {
  FormulaBuilder b;
  const int leaf = b.add_predicate(coord_pred("p", 0, 1));
  Formula f = b.finish(b.add_globally(0, 5, leaf));
  Vec s(1);
  s << 0.0;
  Trace tr = constant_trace(s, 5);  // horizon 5 needs 6 samples
  CHECK_THROWS_AS(agm_robustness(tr, f), incomplete_trace);
  CHECK_THROWS_AS(minmax_robustness(tr, f), incomplete_trace);
}

TEST_CASE("suffix evaluation honors the trace start step") {
  FormulaBuilder b;
  const int leaf = b.add_predicate(coord_pred("p", 0, 1));
  Formula f = b.finish(b.add_finally(1, 2, leaf));
  Trace tr;
  tr.t0 = 4;
  for (double v : {-0.9, 0.6, -0.2}) {
    Vec s(1);
    s << v;
    tr.samples.push_back(s);
  }
  // Window covers absolute steps 5..6 -> robustness 0.6 and -0.2.
  CHECK(agm_robustness(tr, f) == Catch::Approx(agm_or({0.6, -0.2})));
  CHECK(minmax_robustness(tr, f) == Catch::Approx(0.6));
}

TEST_CASE("sign agreement between AGM and min-max semantics") {
  Rng rng(11);
  int checked = 0;
  while (checked < 300) {
    Formula f = rrt_eta::testing::random_formula(rng);
    Trace tr;
    tr.t0 = 0;
    tr.samples = rrt_eta::testing::random_states(rng, f.horizon() + 1, 2);
    const double mm = minmax_robustness(tr, f);
    if (std::abs(mm) < 1e-9) continue;
    const double agm = agm_robustness(tr, f);
    INFO(f.to_string());
    CHECK(agm * mm > 0.0);
    ++checked;
  }
}

TEST_CASE("aggregation bounds, idempotence, permutation invariance") {
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const int n = uniform_int(rng, 1, 8);
    std::vector<double> v;
    for (int j = 0; j < n; ++j) v.push_back(uniform(rng, -1.0, 1.0));

    const double a = agm_and(std::span<const double>(v));
    const double o = agm_or(std::span<const double>(v));
    CHECK(a <= *std::max_element(v.begin(), v.end()) + 1e-12);
    CHECK(o >= *std::min_element(v.begin(), v.end()) - 1e-12);
    CHECK((a >= -1.0 && a <= 1.0));
    CHECK((o >= -1.0 && o <= 1.0));

    std::vector<double> shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(agm_and(std::span<const double>(shuffled)) == Catch::Approx(a).margin(1e-12));
    CHECK(agm_or(std::span<const double>(shuffled)) == Catch::Approx(o).margin(1e-12));
  }
  for (int i = 0; i < 100; ++i) {
    const double r = uniform(rng, -1.0, 1.0);
    const int n = uniform_int(rng, 1, 6);
    std::vector<double> v(static_cast<std::size_t>(n), r);
    CHECK(agm_and(std::span<const double>(v)) == Catch::Approx(r).margin(1e-12));
    CHECK(agm_or(std::span<const double>(v)) == Catch::Approx(r).margin(1e-12));
  }
}

TEST_CASE("raising any input never decreases the aggregate") {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const int n = uniform_int(rng, 1, 6);
    std::vector<double> v;
    for (int j = 0; j < n; ++j) v.push_back(uniform(rng, -1.0, 1.0));
    std::vector<double> raised = v;
    const int k = uniform_int(rng, 0, n - 1);
    raised[static_cast<std::size_t>(k)] =
        std::min(1.0, raised[static_cast<std::size_t>(k)] + uniform(rng, 0.0, 0.5));
    CHECK(agm_and(std::span<const double>(raised)) >=
          agm_and(std::span<const double>(v)) - 1e-12);
    CHECK(agm_or(std::span<const double>(raised)) >=
          agm_or(std::span<const double>(v)) - 1e-12);
  }
}

TEST_CASE("min-max prefix interval pads unobserved slots") {
  FormulaBuilder b;
  const int leaf = b.add_predicate(coord_pred("p", 0, 1));
  Formula f = b.finish(b.add_globally(0, 3, leaf));
  std::vector<Vec> prefix;
  Vec s(1);
  s << 0.4;
  prefix.push_back(s);
  const Interval it = minmax_prefix_interval(prefix, 0, f);
  CHECK(it.lo == Catch::Approx(-1.0));
  CHECK(it.hi == Catch::Approx(0.4));

  // Complete prefix collapses to the exact min-max robustness.
  s << -0.1;
  prefix.push_back(s);
  s << 0.9;
  prefix.push_back(s);
  s << 0.2;
  prefix.push_back(s);
  const Interval done = minmax_prefix_interval(prefix, 0, f);
  CHECK(done.is_singleton());
  Trace tr{prefix, 0};
  CHECK(done.lo == Catch::Approx(minmax_robustness(tr, f)));
}
