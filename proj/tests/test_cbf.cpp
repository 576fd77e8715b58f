#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safenav/cbf.hpp"

using namespace safenav;
using namespace safenav::cbf;

namespace {

verify::SafeSet safe_set_with_box_near(const Eigen::Vector2d& pos, double offset) {
  verify::EnumerationResult res;
  Eigen::VectorXd rlo = Eigen::VectorXd::Constant(20, -100.0);
  Eigen::VectorXd rhi = Eigen::VectorXd::Constant(20, 100.0);
  res.root = verify::IntervalBox::make(rlo, rhi);
  verify::Leaf l;
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(20, -0.5);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(20, 0.5);
  lo[15] = pos.x() + offset - 0.5;
  hi[15] = pos.x() + offset + 0.5;
  lo[16] = pos.y() - 0.5;
  hi[16] = pos.y() + 0.5;
  l.box = verify::IntervalBox::make(lo, hi);
  l.kind = verify::LeafKind::Unsafe;
  l.violation_rate = 0.9;
  res.leaves.push_back(l);
  return verify::build_safe_set({res}, {15, 16});
}

}  // namespace

TEST_CASE("barrier value and gradient match the defining formula") {
  Eigen::Vector3d p(1.0, 0.0, 0.0), obs(0.0, 0.0, 0.0);
  CHECK(barrier_value(p, obs, 0.5) == doctest::Approx(0.75));
  CHECK(barrier_value(obs, obs, 0.5) == doctest::Approx(-0.25));

  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector3d a(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-1, 1));
    Eigen::Vector3d b(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-1, 1));
    auto g = barrier_gradient(a, b);
    // central finite difference on the position rows
    for (int d = 0; d < 3; ++d) {
      Eigen::Vector3d ap = a, am = a;
      ap[d] += 1e-6;
      am[d] -= 1e-6;
      double fd = (barrier_value(ap, b, 0.7) - barrier_value(am, b, 0.7)) / 2e-6;
      CHECK(g[d] == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK(g.tail<3>().norm() == 0.0);
  }
}

TEST_CASE("clearance radius modes") {
  FilterConfig cfg;
  cfg.sigma = 0.3;
  cfg.kappa = 1.5;
  cfg.kappa_cap = 3.0;

  cfg.mode = DSafeMode::Inflated;
  CHECK(compute_d_safe(cfg, std::nullopt) == doctest::Approx(0.3));
  CHECK(compute_d_safe(cfg, 2.0) == doctest::Approx(0.45));

  cfg.mode = DSafeMode::CappedDistance;
  CHECK(compute_d_safe(cfg, std::nullopt) == doctest::Approx(0.3));
  CHECK(compute_d_safe(cfg, 0.1) == doctest::Approx(0.3));   // floor at sigma
  CHECK(compute_d_safe(cfg, 0.6) == doctest::Approx(0.6));
  CHECK(compute_d_safe(cfg, 2.0) == doctest::Approx(0.9));   // capped at sigma * kappa_cap

  cfg.mode = DSafeMode::SquaredDistance;
  CHECK(compute_d_safe(cfg, std::nullopt) == doctest::Approx(0.3));
  CHECK(compute_d_safe(cfg, 2.0) == doctest::Approx(4.0));   // squared distance, as printed
}

TEST_CASE("unicycle constraint coefficients match an independent recomputation") {
  FilterConfig cfg;
  cfg.gamma = 1.3;
  cfg.lookahead = 0.8;
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    dynamics::UnicycleState s{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-kPi, kPi)};
    dynamics::ReferenceCommand r{rng.uniform(0, 0.5), rng.uniform(-1.5, 1.5)};
    Eigen::Vector2d obs(rng.uniform(-5, 5), rng.uniform(-5, 5));
    double d_safe = rng.uniform(0.2, 1.0);
    LinearConstraint lc = constraint_coeffs_unicycle(s, r, obs, d_safe, cfg);

    // written out with heading basis vectors instead of components
    Eigen::Vector2d diff(s.px - obs.x(), s.py - obs.y());
    Eigen::Vector2d fwd(std::cos(s.theta), std::sin(s.theta));
    Eigen::Vector2d lateral(-std::sin(s.theta), std::cos(s.theta));
    double av = 2.0 * diff.dot(fwd);
    double aw = 2.0 * cfg.lookahead * diff.dot(lateral);
    double h = diff.squaredNorm() - d_safe * d_safe;
    CHECK(lc.a[0] == doctest::Approx(av).epsilon(1e-12));
    CHECK(lc.a[1] == doctest::Approx(aw).epsilon(1e-12));
    CHECK(lc.b == doctest::Approx(av * r.v + aw * r.w + cfg.gamma * h).epsilon(1e-12));
  }
}

TEST_CASE("level-attitude boat constraint reduces to the unicycle one") {
  FilterConfig cfg;
  Rng rng(18);
  for (int i = 0; i < 100; ++i) {
    dynamics::BoatState b;
    b.px = rng.uniform(-5, 5);
    b.py = rng.uniform(-5, 5);
    b.psi = rng.uniform(-kPi, kPi);
    dynamics::UnicycleState u{b.px, b.py, b.psi};
    dynamics::ReferenceCommand r{rng.uniform(0, 0.8), rng.uniform(-0.3, 0.3)};
    Eigen::Vector2d obs(rng.uniform(-5, 5), rng.uniform(-5, 5));
    LinearConstraint cb = constraint_coeffs_boat(b, r, obs, 0.6, cfg);
    LinearConstraint cu = constraint_coeffs_unicycle(u, r, obs, 0.6, cfg);
    CHECK(cb.a[0] == doctest::Approx(cu.a[0]).epsilon(1e-12));
    CHECK(cb.a[1] == doctest::Approx(cu.a[1]).epsilon(1e-12));
    CHECK(cb.b == doctest::Approx(cu.b).epsilon(1e-12));
  }
}

TEST_CASE("boat sway drift tightens or relaxes the offset term") {
  FilterConfig cfg;
  dynamics::BoatState s;
  s.px = 0.0;
  s.py = 0.0;
  s.psi = 0.0;
  Eigen::Vector2d obs(0.0, 1.0);  // obstacle to port
  dynamics::ReferenceCommand r{0.0, 0.0};
  LinearConstraint still = constraint_coeffs_boat(s, r, obs, 0.5, cfg);
  s.v2 = 0.4;  // sliding toward the obstacle (body y points to it at psi=0)
  LinearConstraint sliding = constraint_coeffs_boat(s, r, obs, 0.5, cfg);
  CHECK(sliding.b < still.b);
  s.v2 = -0.4;
  LinearConstraint away = constraint_coeffs_boat(s, r, obs, 0.5, cfg);
  CHECK(away.b > still.b);
}

TEST_CASE("single-constraint qp has the closed-form projection solution") {
  Rng rng(19);
  for (int i = 0; i < 500; ++i) {
    LinearConstraint c;
    c.a = Eigen::Vector2d(rng.gaussian(), rng.gaussian());
    if (c.a.norm() < 0.1) continue;
    c.b = rng.uniform(-2.0, 1.0);
    QPResult res = solve_qp(c);
    REQUIRE(res.feasible);
    if (c.b >= 0.0) {
      CHECK(res.r_cbf.norm() == 0.0);
      continue;
    }
    // active constraint, gradient parallel to normal
    CHECK(c.a.dot(res.r_cbf) + c.b == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(res.r_cbf.x() * c.a.y() - res.r_cbf.y() * c.a.x()) < 1e-12);
    // no feasible point beats it: project random candidates and compare norms
    for (int k = 0; k < 50; ++k) {
      Eigen::Vector2d cand(rng.uniform(-3, 3), rng.uniform(-3, 3));
      double gap = c.a.dot(cand) + c.b;
      if (gap < 0.0) cand += (-gap / c.a.squaredNorm()) * c.a;  // project onto the boundary
      CHECK(cand.norm() >= res.r_cbf.norm() - 1e-9);
    }
  }
}

TEST_CASE("degenerate single constraint is infeasible") {
  LinearConstraint c;
  c.a = Eigen::Vector2d(1e-12, -1e-12);
  c.b = -0.5;
  CHECK_FALSE(solve_qp(c).feasible);
  c.b = 0.1;  // satisfied without moving: feasible regardless of the normal
  CHECK(solve_qp(c).feasible);
}

TEST_CASE("multi-constraint qp finds vertex optima") {
  // r_x >= 1 and r_y >= 1: optimum at the vertex (1, 1)
  std::vector<LinearConstraint> cs(2);
  cs[0].a = Eigen::Vector2d(1, 0);
  cs[0].b = -1.0;
  cs[1].a = Eigen::Vector2d(0, 1);
  cs[1].b = -1.0;
  QPResult res = solve_qp_multi(cs);
  REQUIRE(res.feasible);
  CHECK(res.r_cbf.x() == doctest::Approx(1.0));
  CHECK(res.r_cbf.y() == doctest::Approx(1.0));

  // one slack constraint: single-constraint projection wins
  cs[1].b = 5.0;
  res = solve_qp_multi(cs);
  REQUIRE(res.feasible);
  CHECK(res.r_cbf.x() == doctest::Approx(1.0));
  CHECK(res.r_cbf.y() == doctest::Approx(0.0).epsilon(1e-12));

  // all satisfied at the origin
  cs[0].b = 0.2;
  res = solve_qp_multi(cs);
  CHECK(res.r_cbf.norm() == 0.0);
}

TEST_CASE("multi-constraint qp agrees with the single solver") {
  Rng rng(20);
  for (int i = 0; i < 300; ++i) {
    LinearConstraint c;
    c.a = Eigen::Vector2d(rng.gaussian(), rng.gaussian());
    c.b = rng.uniform(-2.0, 1.0);
    if (c.a.norm() < 0.1) continue;
    QPResult a = solve_qp(c);
    QPResult b = solve_qp_multi({c});
    REQUIRE(a.feasible == b.feasible);
    CHECK((a.r_cbf - b.r_cbf).norm() < 1e-12);
  }
}

TEST_CASE("opposing halfplanes make the multi qp infeasible") {
  std::vector<LinearConstraint> cs(2);
  cs[0].a = Eigen::Vector2d(1, 0);
  cs[0].b = -1.0;  // r_x >= 1
  cs[1].a = Eigen::Vector2d(-1, 0);
  cs[1].b = -1.0;  // r_x <= -1
  CHECK_FALSE(solve_qp_multi(cs).feasible);
}

TEST_CASE("filter passes a clear path through untouched") {
  sim::World w;
  w.bounds = {{-50, -50}, {50, 50}};
  w.target = {10, 0};
  policy::AgentState agent;
  agent.uni = {0, 0, 0};
  policy::SensorConfig scfg;
  auto scan = policy::scan_beams(w, {0, 0}, 0.0, scfg);
  auto obs = policy::build_observation(w, agent, scan);
  FilterConfig cfg;
  auto res = filter_action(agent, {0.4, 0.2}, scan, obs, nullptr, cfg, {0.0, 0.5}, {-1.5, 1.5});
  CHECK(res.r.v == doctest::Approx(0.4));
  CHECK(res.r.w == doctest::Approx(0.2));
  CHECK_FALSE(res.diag.active);
  CHECK_FALSE(res.diag.obstacle_in_range);
  CHECK(std::isnan(res.diag.h));
}

TEST_CASE("filter slows the approach toward a frontal obstacle") {
  sim::World w;
  w.bounds = {{-50, -50}, {50, 50}};
  w.circles = {{{1.2, 0.0}, 0.3}};
  w.target = {10, 0};
  policy::AgentState agent;
  agent.uni = {0, 0, 0};
  policy::SensorConfig scfg;
  auto scan = policy::scan_beams(w, {0, 0}, 0.0, scfg);
  auto obs = policy::build_observation(w, agent, scan);
  FilterConfig cfg;
  cfg.sigma = 0.3;
  cfg.multi_constraint = false;
  auto res = filter_action(agent, {0.5, 0.0}, scan, obs, nullptr, cfg, {0.0, 0.5}, {-1.5, 1.5});
  CHECK(res.diag.obstacle_in_range);
  CHECK(res.diag.active);
  CHECK(res.r.v < 0.5);
  CHECK(res.diag.d_safe == doctest::Approx(0.3));
  // diagnostic h agrees with the formula at the reported obstacle point
  const double expect_h = (Eigen::Vector2d(0, 0) - res.diag.p_obs).squaredNorm() - 0.09;
  CHECK(res.diag.h == doctest::Approx(expect_h).epsilon(1e-12));
  CHECK(res.diag.constraints == 1);

  cfg.multi_constraint = true;
  auto multi = filter_action(agent, {0.5, 0.0}, scan, obs, nullptr, cfg, {0.0, 0.5}, {-1.5, 1.5});
  CHECK(multi.diag.constraints > 1);  // several cones see the circle
  CHECK(multi.r.v < 0.5);
}

TEST_CASE("disabled filter only clamps into actuator ranges") {
  sim::World w;
  w.bounds = {{-50, -50}, {50, 50}};
  w.circles = {{{0.5, 0.0}, 0.3}};
  policy::AgentState agent;
  agent.uni = {0, 0, 0};
  policy::SensorConfig scfg;
  auto scan = policy::scan_beams(w, {0, 0}, 0.0, scfg);
  auto obs = policy::build_observation(w, agent, scan);
  FilterConfig cfg;
  cfg.enabled = false;
  auto res = filter_action(agent, {0.9, -3.0}, scan, obs, nullptr, cfg, {0.0, 0.5}, {-1.5, 1.5});
  CHECK(res.r.v == doctest::Approx(0.5));
  CHECK(res.r.w == doctest::Approx(-1.5));
  CHECK_FALSE(res.diag.active);
}

TEST_CASE("matched unsafe region stretches the clearance") {
  sim::World w;
  w.bounds = {{-50, -50}, {50, 50}};
  w.circles = {{{1.5, 0.0}, 0.3}};
  w.target = {10, 0};
  policy::AgentState agent;
  agent.uni = {0, 0, 0};
  policy::SensorConfig scfg;
  auto scan = policy::scan_beams(w, {0, 0}, 0.0, scfg);
  auto obs = policy::build_observation(w, agent, scan);
  FilterConfig cfg;
  cfg.sigma = 0.3;
  cfg.kappa = 1.5;
  cfg.look_radius = 3.0;

  verify::SafeSet near = safe_set_with_box_near(agent.position2d(), 1.0);
  auto res = filter_action(agent, {0.5, 0.0}, scan, obs, &near, cfg, {0.0, 0.5}, {-1.5, 1.5});
  CHECK(res.diag.d_safe == doctest::Approx(0.45));

  verify::SafeSet far = safe_set_with_box_near(agent.position2d(), 50.0);
  res = filter_action(agent, {0.5, 0.0}, scan, obs, &far, cfg, {0.0, 0.5}, {-1.5, 1.5});
  CHECK(res.diag.d_safe == doctest::Approx(0.3));
}

TEST_CASE("hopeless constraint triggers the stop-and-rotate fallback") {
  // agent sitting exactly on a circle boundary: zero-range hit, degenerate normal
  sim::World w;
  w.bounds = {{-50, -50}, {50, 50}};
  w.circles = {{{0.5, 0.0}, 0.5}};
  w.target = {-5, 0};
  policy::AgentState agent;
  agent.uni = {0, 0, 0};
  policy::SensorConfig scfg;
  auto scan = policy::scan_beams(w, {0, 0}, 0.0, scfg);
  auto obs = policy::build_observation(w, agent, scan);
  FilterConfig cfg;
  cfg.sigma = 0.3;
  cfg.omega_escape = 1.0;
  auto res = filter_action(agent, {0.5, 0.0}, scan, obs, nullptr, cfg, {0.0, 0.5}, {-1.5, 1.5});
  CHECK(res.diag.fallback);
  CHECK(res.r.v == doctest::Approx(0.0));
  CHECK(std::abs(res.r.w) == doctest::Approx(1.0));
}

TEST_CASE("closed-loop filtering keeps the barrier nonnegative head-on") {
  sim::World w;
  w.bounds = {{-5, -5}, {15, 5}};
  w.circles = {{{3.0, 0.0}, 0.4}};
  w.target = {6.5, 0.0};
  w.accept_radius = 0.3;
  policy::AgentState agent;
  agent.uni = {0, 0, 0};
  policy::SensorConfig scfg;
  FilterConfig cfg;
  cfg.sigma = 0.3;
  ActionFilter filter(cfg);
  policy::ScriptedPolicyConfig pcfg;
  policy::ScriptedPolicy pol(pcfg, 0);

  double min_h = std::numeric_limits<double>::infinity();
  double min_clear = std::numeric_limits<double>::infinity();
  bool reached = false;
  for (int step = 0; step < 8000; ++step) {
    auto scan = policy::scan_beams(w, agent.position2d(), agent.uni.theta, scfg);
    auto obs = policy::build_observation(w, agent, scan);
    auto r_dnn = pol.act(obs);
    auto res = filter.step(agent, r_dnn, scan, obs, nullptr, {0.0, 0.5}, {-1.5, 1.5});
    agent.uni = dynamics::unicycle_step(agent.uni, res.r, 0.01);
    if (!std::isnan(res.diag.h)) min_h = std::min(min_h, res.diag.h);
    min_clear = std::min(min_clear, sim::min_obstacle_distance(w, agent.position2d()));
    if ((agent.position2d() - w.target).norm() <= w.accept_radius) {
      reached = true;
      break;
    }
  }
  CHECK(min_h >= -1e-3);
  CHECK(min_clear > 0.15);  // never even grazes the hull envelope
  CHECK(reached);           // the filter lets it slide around and finish
}
