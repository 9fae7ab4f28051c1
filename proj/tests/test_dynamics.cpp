#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "rrt_eta/arm.hpp"
#include "rrt_eta/parser.hpp"
#include "rrt_eta/system.hpp"

using namespace rrt_eta;

namespace {

Vec make_vec(std::initializer_list<double> vals) {
  Vec v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v[i++] = x;
  return v;
}

Unicycle make_unicycle(double dt = 1.0) {
  return Unicycle(AxisBox(make_vec({0, 0, -kPi, -0.3, -1.0}),
                          make_vec({4, 4, kPi, 0.3, 1.0})),
                  AxisBox(make_vec({-0.3, -1.0}), make_vec({0.3, 1.0})), dt);
}

DoubleIntegrator make_di(double dt = 1.0) {
  return DoubleIntegrator(
      2,
      AxisBox(make_vec({0, 0, -1.5, -1.5}), make_vec({8, 8, 1.5, 1.5})),
      AxisBox(make_vec({-1, -1}), make_vec({1, 1})), dt);
}

PlanarArm make_arm(double dt = 1.0) {
  return PlanarArm({1.0, 1.0, 1.0},
                   AxisBox(Vec::Constant(3, -kPi), Vec::Constant(3, kPi)), 0.5,
                   dt);
}

}  // namespace

TEST_CASE("unicycle step follows the discrete dynamics") {
  Unicycle sys = make_unicycle();
  // Zero velocity leaves position unchanged.
  Vec q = make_vec({1.0, 1.0, 0.7, 0.0, 0.0});
  Vec next = sys.step(q, make_vec({0.0, 0.0}));
  CHECK(next[0] == 1.0);
  CHECK(next[1] == 1.0);

  // Heading 0 at v = 0.3 advances x by 0.3 per unit step.
  q = make_vec({1.0, 1.0, 0.0, 0.3, 0.0});
  next = sys.step(q, make_vec({0.1, 0.2}));
  CHECK(next[0] == Catch::Approx(1.3));
  CHECK(next[1] == Catch::Approx(1.0));
  CHECK(next[3] == 0.1);  // controls set next-step velocities
  CHECK(next[4] == 0.2);

  // Heading pi/2 advances y only.
  q = make_vec({1.0, 1.0, kPi / 2, 0.3, 0.0});
  next = sys.step(q, make_vec({0.0, 0.0}));
  CHECK(next[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(next[1] == Catch::Approx(1.3));

  CHECK_THROWS_AS(sys.step(q, make_vec({0.5, 0.0})), std::invalid_argument);
}

TEST_CASE("unicycle heading wraps into (-pi, pi]") {
  Unicycle sys = make_unicycle();
  const Vec q = make_vec({2.0, 2.0, 3.0, 0.0, 1.0});  // omega pushes past pi
  const Vec next = sys.step(q, make_vec({0.0, 0.0}));
  CHECK(next[2] == Catch::Approx(3.0 + 1.0 - 2.0 * kPi));
  CHECK(next[2] <= kPi);
  CHECK(next[2] > -kPi);
}

TEST_CASE("double integrator is a chain of Euler updates") {
  DoubleIntegrator sys = make_di();
  // Zero control drifts in a straight line.
  Vec q = make_vec({1.0, 1.0, 0.5, -0.25});
  Vec next = sys.step(q, make_vec({0.0, 0.0}));
  CHECK(next[0] == Catch::Approx(1.5));
  CHECK(next[1] == Catch::Approx(0.75));
  CHECK(next[2] == 0.5);

  // Acceleration changes velocity now, position next step.
  q = make_vec({2.0, 2.0, 0.0, 0.0});
  next = sys.step(q, make_vec({0.4, -0.2}));
  CHECK(next[0] == 2.0);
  CHECK(next[1] == 2.0);
  CHECK(next[2] == Catch::Approx(0.4));
  CHECK(next[3] == Catch::Approx(-0.2));
}

TEST_CASE("declared Lipschitz constants certify the dynamics") {
  Rng rng(21);
  auto check_system = [&](const SystemModel& sys, int trials) {
    REQUIRE(sys.lipschitz().has_value());
    const double L = *sys.lipschitz();
    for (int i = 0; i < trials; ++i) {
      const Vec q1 = sys.state_bounds().sample(rng);
      const Vec q2 = sys.state_bounds().sample(rng);
      const Vec u1 = sys.control_bounds().sample(rng);
      const Vec u2 = sys.control_bounds().sample(rng);
      const double lhs = (sys.step(q1, u1) - sys.step(q2, u2)).norm();
      const double rhs = L * std::sqrt((q1 - q2).squaredNorm() + (u1 - u2).squaredNorm());
      CHECK(lhs <= rhs + 1e-9);
    }
  };
  check_system(make_di(), 10000);
  check_system(make_arm(), 10000);
}

TEST_CASE("state Jacobians match finite differences") {
  Rng rng(22);
  const Unicycle uni = make_unicycle();
  const DoubleIntegrator di = make_di();
  const PlanarArm arm = make_arm();
  const std::vector<const SystemModel*> systems{&uni, &di, &arm};
  for (const SystemModel* sys : systems) {
    for (int trial = 0; trial < 30; ++trial) {
      const Vec q = sys->state_bounds().sample(rng);
      const Vec u = sys->control_bounds().sample(rng);
      const Mat J = sys->jacobian(q, u);
      const double h = 1e-6;
      for (int i = 0; i < sys->state_dim(); ++i) {
        Vec qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        const Vec col = (sys->step(qp, u) - sys->step(qm, u)) / (2.0 * h);
        for (int r = 0; r < sys->state_dim(); ++r)
          CHECK(J(r, i) == Catch::Approx(col[r]).margin(2e-5));
      }
    }
  }
}

TEST_CASE("planar arm forward kinematics") {
  const std::vector<double> links{1.0, 1.0};
  Vec q = make_vec({0.0, 0.0});
  Vec pose = fk_planar_arm(q, links);
  CHECK(pose[0] == Catch::Approx(2.0));
  CHECK(pose[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(pose[2] == Catch::Approx(0.0));

  q = make_vec({kPi / 2, 0.0});
  pose = fk_planar_arm(q, links);
  CHECK(pose[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(pose[1] == Catch::Approx(2.0));
  CHECK(pose[2] == Catch::Approx(kPi / 2));

  q = make_vec({kPi / 2, -kPi / 2});
  pose = fk_planar_arm(q, links);
  CHECK(pose[0] == Catch::Approx(1.0));
  CHECK(pose[1] == Catch::Approx(1.0));
  CHECK(pose[2] == Catch::Approx(0.0).margin(1e-12));

  // Three links at zero stretch to the full reach.
  const PlanarArm arm = make_arm();
  const Vec aug = arm.augmented_state(Vec::Zero(3));
  CHECK(aug[3] == Catch::Approx(3.0));
  CHECK(aug[4] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("inverse kinematics solves and respects reachability") {
  const PlanarArm arm = make_arm();
  Rng rng(23);

  // A target equal to the seed's pose returns the seed untouched.
  const Vec q0 = make_vec({0.3, -0.5, 0.9});
  const Vec pose0 = fk_planar_arm(q0, arm.links());
  IkTarget t0{{0, 1, 2}, pose0};
  const auto same = solve_ik(t0, q0, arm.links(), arm.joint_limits());
  REQUIRE(same.has_value());
  CHECK((*same - q0).norm() == 0.0);

  // Unreachable targets fail fast.
  IkTarget far{{0, 1}, make_vec({5.0, 5.0})};
  CHECK_FALSE(solve_ik(far, q0, arm.links(), arm.joint_limits()).has_value());

  // Random reachable targets round-trip within tolerance whenever the solve
  // lands; a single run from one random seed fails some of the time, which
  // callers absorb by retrying with fresh seeds.
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Vec joints = arm.joint_limits().sample(rng);
    const Vec pose = fk_planar_arm(joints, arm.links());
    IkTarget target{{0, 1}, make_vec({pose[0], pose[1]})};
    const Vec seed = arm.joint_limits().sample(rng);
    if (const auto q = solve_ik(target, seed, arm.links(), arm.joint_limits())) {
      const Vec reached = fk_planar_arm(*q, arm.links());
      CHECK(std::hypot(reached[0] - pose[0], reached[1] - pose[1]) <= kIkTolerance);
      ++solved;
    }
  }
  CHECK(solved >= 110);
}

TEST_CASE("ik cache hits skip the solver and stay consistent") {
  const PlanarArm arm = make_arm();
  IkCache cache;
  IkTarget target{{0, 1}, make_vec({1.473, 0.881})};

  CHECK_FALSE(cache.lookup(target).has_value());
  const auto q = solve_ik(target, make_vec({0.3, 0.3, 0.3}), arm.links(),
                          arm.joint_limits());
  REQUIRE(q.has_value());
  cache.insert(target, IkCache::Entry{*q, fk_planar_arm(*q, arm.links())});

  // Same cell, slightly different pose: a hit, no new solve needed.
  IkTarget nearby{{0, 1}, make_vec({1.4732, 0.8812})};
  const auto entry = cache.lookup(nearby);
  REQUIRE(entry.has_value());
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 1);
  CHECK((fk_planar_arm(entry->joints, arm.links()) - entry->pose).norm() <=
        kIkTolerance);
}

TEST_CASE("adaptive sampling uses joint space without workspace predicates") {
  const PlanarArm arm = make_arm();
  // Only a configuration constraint: first joint positive.
  Vec coeffs = Vec::Zero(6);
  coeffs[0] = 1.0;
  std::map<std::string, Predicate> table;
  table.emplace("elbow_up", Predicate::affine("elbow_up", coeffs, 0.0, 0.0, 1.0));
  Formula f = parse_formula("G[0,5](elbow_up)", table);

  IkCache cache;
  Rng rng(24);
  for (int i = 0; i < 20; ++i) {
    const auto s = adaptive_sample(f, 2, arm, cache, rng);
    REQUIRE(s.has_value());
    CHECK((*s)[0] > 0.0);  // configuration predicate satisfied
    const Vec pose = fk_planar_arm(arm.joints_of(*s), arm.links());
    CHECK((arm.pose_of(*s) - pose).norm() <= 1e-9);  // cache consistency
  }
  CHECK(cache.size() == 0);  // never touched the workspace path
}

TEST_CASE("adaptive sampling hits the ik cache on repeated regions") {
  const PlanarArm arm = make_arm();
  std::map<std::string, Predicate> table;
  Predicate reach = Predicate::box("reach", make_vec({1.45, 0.85}),
                                   make_vec({1.53, 0.93}), {3, 4}, true, 0.0, 0.04);
  reach.set_region_hint(
      RegionHint::box({3, 4}, make_vec({1.45, 0.85}), make_vec({1.53, 0.93})));
  table.emplace("reach", reach);
  Formula f = parse_formula("F[0,8](reach)", table);

  IkCache cache;
  Rng rng(25);
  int produced = 0;
  for (int i = 0; i < 200; ++i)
    if (adaptive_sample(f, 3, arm, cache, rng)) ++produced;
  CHECK(produced == 200);
  CHECK(cache.hit_rate() >= 0.5);  // 200 draws over an 8x8 cm box

  // Every cached solution reproduces its recorded pose exactly.
  cache.for_each([&](const IkCache::Entry& e) {
    CHECK((fk_planar_arm(e.joints, arm.links()) - e.pose).norm() <= kIkTolerance);
  });
}

TEST_CASE("steer iterates the dynamics under a constant control") {
  const DoubleIntegrator di = make_di();
  const Vec q = make_vec({1.0, 1.0, 0.2, 0.1});
  const Vec u = make_vec({0.3, -0.1});

  const auto unchanged = steer(di, q, u, 0);
  REQUIRE(unchanged.has_value());
  CHECK((*unchanged - q).norm() == 0.0);

  const auto two = steer(di, q, u, 2);
  const auto one = steer(di, q, u, 1);
  REQUIRE(two.has_value());
  REQUIRE(one.has_value());
  const auto chained = steer(di, *one, u, 1);
  REQUIRE(chained.has_value());
  CHECK((*two - *chained).norm() == 0.0);

  // Unicycle at full speed gains 0.3 in x per step once v settles.
  const Unicycle uni = make_unicycle();
  Vec s = make_vec({0.5, 2.0, 0.0, 0.3, 0.0});
  const auto rolled = rollout(uni, s, make_vec({0.3, 0.0}), 3);
  REQUIRE(rolled.has_value());
  CHECK((*rolled)[0][0] == Catch::Approx(0.8));
  CHECK((*rolled)[1][0] == Catch::Approx(1.1));
  CHECK((*rolled)[2][0] == Catch::Approx(1.4));
}

TEST_CASE("steer reports states that exit the bounds") {
  const Unicycle uni = make_unicycle();
  const Vec s = make_vec({3.9, 2.0, 0.0, 0.3, 0.0});
  CHECK_FALSE(steer(uni, s, make_vec({0.3, 0.0}), 3).has_value());
}

TEST_CASE("exact steering connects the double integrator in-envelope") {
  const DoubleIntegrator di = make_di();
  SteeringBudget budget;
  Rng rng(26);

  // The trivial self-connection needs no controls.
  const Vec q = make_vec({2.0, 2.0, 0.0, 0.0});
  const auto self = steer_exact(di, q, q, 0, budget, rng);
  REQUIRE(self.has_value());
  CHECK(self->length() == 0);

  // Targets generated by feasible rollouts are reconnected exactly.
  int ok = 0, feasible_trials = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int T = uniform_int(rng, 1, budget.t_max);
    Vec start = make_vec({uniform(rng, 2.0, 6.0), uniform(rng, 2.0, 6.0),
                          uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5)});
    std::vector<Vec> controls;
    for (int i = 0; i < T; ++i) controls.push_back(di.control_bounds().sample(rng));
    Vec goal = start;
    bool feasible = true;
    for (const Vec& u : controls) {
      goal = di.step(goal, u);
      feasible = feasible && di.state_bounds().contains(goal, 1e-9);
    }
    if (!feasible) continue;
    ++feasible_trials;
    const auto seg = steer_exact(di, start, goal, T, budget, rng);
    REQUIRE(seg.has_value());
    CHECK(seg->length() == T);
    CHECK(di.distance(seg->states.back(), goal) <= budget.eps_connect);
    // Replaying the returned controls reproduces the returned states.
    Vec replay = start;
    for (int i = 0; i < T; ++i) {
      replay = di.step(replay, seg->controls[static_cast<std::size_t>(i)]);
      CHECK((replay - seg->states[static_cast<std::size_t>(i)]).norm() == 0.0);
    }
    ++ok;
  }
  CHECK(feasible_trials >= 25);
  CHECK(ok == feasible_trials);  // linear dynamics always reconnect
}

TEST_CASE("exact steering refuses a lateral unicycle hop") {
  const Unicycle uni = make_unicycle();
  SteeringBudget budget;
  Rng rng(27);
  const Vec start = make_vec({2.0, 2.0, 0.0, 0.0, 0.0});
  const Vec goal = make_vec({2.0, 2.5, 0.0, 0.0, 0.0});  // pure sideways
  CHECK_FALSE(steer_exact(uni, start, goal, 1, budget, rng).has_value());
}

TEST_CASE("augmented arm states stay kinematically consistent through steps") {
  const PlanarArm arm = make_arm();
  Rng rng(28);
  Vec state = arm.augmented_state(arm.joint_limits().sample(rng) * 0.5);
  for (int i = 0; i < 25; ++i) {
    const Vec u = arm.control_bounds().sample(rng);
    const Vec next = arm.step(state, u);
    const Vec pose = fk_planar_arm(arm.joints_of(next), arm.links());
    REQUIRE((arm.pose_of(next) - pose).norm() <= 1e-9);
    if (arm.state_bounds().contains(next, 1e-9)) state = next;
  }
}
