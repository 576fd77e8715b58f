#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "safenav/policy.hpp"

using namespace safenav;
using namespace safenav::policy;

namespace {

sim::World empty_world() {
  sim::World w;
  w.bounds = {{-50, -50}, {50, 50}};
  return w;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("beam cones average analytic ray ranges") {
  sim::World w = empty_world();
  w.circles = {{{2.0, 0.0}, 0.5}};
  SensorConfig cfg;
  cfg.max_range = 3.5;
  BeamScan scan = scan_beams(w, {0, 0}, 0.0, cfg);

  // closed form: a ray at offset a hits iff |2 sin a| <= r, at 2cos(a) - sqrt(r^2 - 4 sin^2 a)
  auto analytic = [&](double deg) {
    double a = deg2rad(deg);
    double s = 2.0 * std::sin(a);
    if (std::abs(s) > 0.5) return 3.5;
    return 2.0 * std::cos(a) - std::sqrt(0.25 - s * s);
  };
  double expected0 = (analytic(2.4) + analytic(7.2) + analytic(12.0) + analytic(16.8) +
                      analytic(21.6)) / 5.0;
  CHECK(scan.cone_values[0] == doctest::Approx(expected0).epsilon(1e-12));
  CHECK(scan.cone_values[14] == doctest::Approx(expected0).epsilon(1e-9));
  for (int i = 1; i < 14; ++i) CHECK(scan.cone_values[i] == doctest::Approx(3.5));

  CHECK(scan.nearest_ray == 0);  // offset 2.4 deg, first of the two closest rays
  CHECK(scan.cone_nearest[0].hit);
  CHECK(scan.cone_nearest[14].hit);
  CHECK_FALSE(scan.cone_nearest[7].hit);
  CHECK(scan.rays.size() == 75);
}

TEST_CASE("beam scan respects heading rotation") {
  sim::World w = empty_world();
  w.circles = {{{0.0, 2.0}, 0.5}};  // due north
  SensorConfig cfg;
  BeamScan east = scan_beams(w, {0, 0}, 0.0, cfg);
  BeamScan north = scan_beams(w, {0, 0}, kPi / 2.0, cfg);
  // facing north puts the circle dead ahead: same cones as the dead-ahead case
  CHECK(north.cone_values[0] < cfg.max_range);
  CHECK(north.cone_values[14] < cfg.max_range);
  // facing east puts it ~90 deg left: cones 3 (84 deg center) and nearby
  CHECK(east.cone_values[3] < cfg.max_range);
  CHECK(east.cone_values[0] == doctest::Approx(cfg.max_range));
}

TEST_CASE("range noise is seed-reproducible and clamped") {
  sim::World w = empty_world();
  w.circles = {{{1.0, 0.0}, 0.5}};
  SensorConfig cfg;
  cfg.range_noise_sigma = 0.2;
  Rng a(42), b(42), c(7);
  BeamScan sa = scan_beams(w, {0, 0}, 0.0, cfg, &a);
  BeamScan sb = scan_beams(w, {0, 0}, 0.0, cfg, &b);
  BeamScan sc = scan_beams(w, {0, 0}, 0.0, cfg, &c);
  CHECK((sa.cone_values - sb.cone_values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sa.cone_values - sc.cone_values).cwiseAbs().maxCoeff() > 0.0);
  for (const auto& r : sa.rays) {
    CHECK(r.range >= 0.0);
    CHECK(r.range <= cfg.max_range);
  }
}

TEST_CASE("observation carries pose, target distance and relative bearing") {
  sim::World w = empty_world();
  w.target = {1.0, 4.0};
  AgentState agent;
  agent.kind = AgentKind::Unicycle;
  agent.uni = {1.0, 1.0, kPi / 2.0};
  SensorConfig cfg;
  ObservationVector obs = build_observation(w, agent, cfg);
  CHECK(obs.values.size() == 20);
  CHECK(obs.values[15] == doctest::Approx(1.0));
  CHECK(obs.values[16] == doctest::Approx(1.0));
  CHECK(obs.values[17] == doctest::Approx(kPi / 2.0));
  CHECK(obs.target_distance() == doctest::Approx(3.0));
  CHECK(obs.target_heading() == doctest::Approx(0.0).epsilon(1e-12));

  agent.uni.theta = -kPi / 2.0;  // target now directly behind
  obs = build_observation(w, agent, cfg);
  CHECK(std::abs(obs.target_heading()) == doctest::Approx(kPi));
}

TEST_CASE("boat observation is 23-dimensional with full attitude") {
  sim::World w = empty_world();
  w.target = {5.0, 0.0};
  AgentState agent;
  agent.kind = AgentKind::Boat;
  agent.boat.px = 1.0;
  agent.boat.py = 2.0;
  agent.boat.pz = 0.04;
  agent.boat.phi = 0.01;
  agent.boat.theta = -0.02;
  agent.boat.psi = 0.3;
  SensorConfig cfg;
  ObservationVector obs = build_observation(w, agent, cfg);
  CHECK(obs.values.size() == 23);
  CHECK(obs.values[17] == doctest::Approx(0.04));
  CHECK(obs.values[20] == doctest::Approx(0.3));
  CHECK(ObservationVector::position_dims(AgentKind::Boat) == std::vector<int>{15, 16, 17});
  CHECK(ObservationVector::position_dims(AgentKind::Unicycle) == std::vector<int>{15, 16});
}

TEST_CASE("network file loads and runs a hand-computed forward pass") {
  const std::string path = "net_hand_tmp.json";
  write_file(path, R"({
    "input_dim": 2,
    "output": {"mode": "tanh", "v_range": [0.0, 1.0], "w_range": [-2.0, 2.0]},
    "layers": [
      {"weights": [[1.0, -1.0], [0.5, 2.0]], "bias": [0.1, -0.2], "activation": "relu"},
      {"weights": [[1.0, 0.0], [-1.0, 1.0]], "bias": [0.0, 0.3], "activation": "linear"}
    ]
  })");
  PolicyNetwork net = load_network(path);
  std::remove(path.c_str());
  Eigen::Vector2d x(0.3, -0.4);
  // by hand: layer1 pre = (0.8, -0.85), relu -> (0.8, 0); layer2 -> (0.8, -0.5)
  Eigen::Vector2d raw = net.forward_raw(x);
  CHECK(raw[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(raw[1] == doctest::Approx(-0.5).epsilon(1e-14));
  Eigen::Vector2d y = net.forward(x);
  CHECK(y[0] == doctest::Approx(0.5 * (std::tanh(0.8) + 1.0)).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(-2.0 + 2.0 * (std::tanh(-0.5) + 1.0)).epsilon(1e-14));
}

TEST_CASE("zero-weight tanh head lands on range midpoints") {
  const std::string path = "net_zero_tmp.json";
  write_file(path, R"({
    "input_dim": 3,
    "output": {"mode": "tanh", "v_range": [0.0, 0.5], "w_range": [-1.5, 1.5]},
    "layers": [
      {"weights": [[0,0,0],[0,0,0]], "bias": [0,0], "activation": "linear"}
    ]
  })");
  PolicyNetwork net = load_network(path);
  std::remove(path.c_str());
  Eigen::Vector2d y = net.forward(Eigen::Vector3d(1.0, -2.0, 3.0));
  CHECK(y[0] == doctest::Approx(0.25));
  CHECK(y[1] == doctest::Approx(0.0));
}

TEST_CASE("linear output mode passes raw head values through") {
  const std::string path = "net_identity_tmp.json";
  write_file(path, R"({
    "input_dim": 2,
    "output": {"mode": "linear"},
    "layers": [
      {"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0], "activation": "linear"}
    ]
  })");
  PolicyNetwork net = load_network(path);
  std::remove(path.c_str());
  Eigen::Vector2d y = net.forward(Eigen::Vector2d(0.37, -5.25));
  CHECK(y[0] == 0.37);
  CHECK(y[1] == -5.25);
}

TEST_CASE("normalization applies before the first layer") {
  PolicyNetwork net;
  net.input_dim = 2;
  net.output_mode = OutputMode::Linear;
  net.norm_offset = Eigen::Vector2d(1.0, -1.0);
  net.norm_scale = Eigen::Vector2d(2.0, 0.5);
  Layer l;
  l.W = Eigen::Matrix2d::Identity();
  l.b = Eigen::Vector2d::Zero();
  l.act = Activation::Linear;
  net.layers = {l};
  Eigen::Vector2d y = net.forward(Eigen::Vector2d(3.0, 0.0));
  CHECK(y[0] == doctest::Approx(1.0));   // (3 - 1) / 2
  CHECK(y[1] == doctest::Approx(2.0));   // (0 + 1) / 0.5

  const std::string path = "net_norm_tmp.json";
  save_network(net, path);
  PolicyNetwork rt = load_network(path);
  std::remove(path.c_str());
  CHECK((rt.forward(Eigen::Vector2d(3.0, 0.0)) - y).norm() == 0.0);
}

TEST_CASE("network save/load round-trips bit-exactly") {
  PolicyNetwork net;
  net.input_dim = 4;
  net.v_range = {0.0, 0.8};
  net.w_range = {-0.3, 0.3};
  Rng rng(5);
  Layer l1;
  l1.W.resize(6, 4);
  l1.b.resize(6);
  for (int r = 0; r < 6; ++r) {
    l1.b[r] = rng.gaussian();
    for (int c = 0; c < 4; ++c) l1.W(r, c) = rng.gaussian();
  }
  l1.act = Activation::Tanh;
  Layer l2;
  l2.W.resize(2, 6);
  l2.b.resize(2);
  for (int r = 0; r < 2; ++r) {
    l2.b[r] = rng.gaussian();
    for (int c = 0; c < 6; ++c) l2.W(r, c) = rng.gaussian();
  }
  l2.act = Activation::Linear;
  net.layers = {l1, l2};
  const std::string path = "net_rt_tmp.json";
  save_network(net, path);
  PolicyNetwork rt = load_network(path);
  std::remove(path.c_str());
  Eigen::VectorXd x(4);
  x << 0.1, -0.7, 2.0, 0.04;
  CHECK((rt.forward(x) - net.forward(x)).norm() == 0.0);
}

TEST_CASE("network loader rejects malformed files") {
  const std::string path = "net_bad_tmp.json";
  write_file(path, R"({"input_dim": 2, "output": {"mode": "tanh"}, "layers": [
    {"weights": [[1.0, 0.0]], "bias": [0.0], "activation": "relu"}
  ]})");
  CHECK_THROWS_AS(load_network(path), ParseError);  // head emits 1 value

  write_file(path, R"({"input_dim": 2, "output": {"mode": "tanh"}, "layers": [
    {"weights": [[1.0], [0.0]], "bias": [0.0, 0.0], "activation": "relu"},
    {"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0], "activation": "linear"}
  ]})");
  CHECK_THROWS_AS(load_network(path), ParseError);  // dim chain broken

  write_file(path, R"({"input_dim": 2, "output": {"mode": "tanh"}, "layers": [
    {"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0], "activation": "swish"}
  ]})");
  CHECK_THROWS_AS(load_network(path), ParseError);  // unknown activation

  write_file(path, "not json at all {");
  CHECK_THROWS_AS(load_network(path), ParseError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_network("missing_net.json"), ParseError);
}

TEST_CASE("forward validates the input dimension") {
  PolicyNetwork net;
  net.input_dim = 3;
  Layer l;
  l.W = Eigen::MatrixXd::Zero(2, 3);
  l.b = Eigen::Vector2d::Zero();
  net.layers = {l};
  CHECK_THROWS_AS(net.forward(Eigen::Vector2d(1, 2)), InvalidStateError);
}

TEST_CASE("goal seeker steers toward the target bearing") {
  ScriptedPolicyConfig cfg;
  cfg.v_max = 0.5;
  cfg.w_max = 1.5;
  ScriptedPolicy pol(cfg, 0);
  ObservationVector obs;
  obs.kind = AgentKind::Unicycle;
  obs.values = Eigen::VectorXd::Zero(20);

  obs.values[19] = 0.0;  // dead ahead
  auto r = pol.act(obs);
  CHECK(r.v == doctest::Approx(0.5));
  CHECK(r.w == doctest::Approx(0.0));

  obs.values[19] = kPi / 2.0;  // hard left
  r = pol.act(obs);
  CHECK(r.w == doctest::Approx(1.5));
  CHECK(r.v == doctest::Approx(0.0).epsilon(1e-12));

  obs.values[19] = -0.2;
  r = pol.act(obs);
  CHECK(r.w == doctest::Approx(-0.4));
  CHECK(r.v == doctest::Approx(0.5 * std::cos(0.2)));

  obs.values[19] = kPi;  // directly behind: rotate in place
  r = pol.act(obs);
  CHECK(std::abs(r.w) == doctest::Approx(1.5));
  CHECK(r.v == doctest::Approx(0.0));
}

TEST_CASE("noisy goal seeker is seeded and clamped") {
  ScriptedPolicyConfig cfg;
  cfg.kind = ScriptedKind::NoisyGoalSeeker;
  ObservationVector obs;
  obs.kind = AgentKind::Unicycle;
  obs.values = Eigen::VectorXd::Zero(20);

  ScriptedPolicy a(cfg, 9), b(cfg, 9);
  bool any_diff = false;
  for (int i = 0; i < 200; ++i) {
    auto ra = a.act(obs);
    auto rb = b.act(obs);
    CHECK(ra.v == rb.v);
    CHECK(ra.w == rb.w);
    CHECK(ra.v >= 0.0);
    CHECK(ra.v <= cfg.v_max);
    CHECK(std::abs(ra.w) <= cfg.w_max);
    if (std::abs(ra.w) > 1e-12) any_diff = true;
  }
  CHECK(any_diff);  // noise actually moves the command
}
