#include "safenav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

namespace safenav::sim {

void DisturbanceConfig::validate() const {
  if (gust_sigma < 0.0) throw ConfigError("gust_sigma must be nonnegative");
  if (!drift.allFinite()) throw ConfigError("drift must be finite");
}

void StackConfig::validate() const {
  if (!(robot_radius > 0.0)) throw ConfigError("robot_radius must be positive");
  if (v_range[0] > v_range[1] || w_range[0] > w_range[1])
    throw ConfigError("actuator ranges are inverted");
  if (!(dt > 0.0)) throw ConfigError("control dt must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (policy.use_network) {
    if (!policy.network) throw ConfigError("network policy selected but no network loaded");
    if (policy.network->input_dim != policy::ObservationVector::dim_for(kind))
      throw ConfigError("network input size does not match the observation layout");
  }
  filter.validate();
  disturbance.validate();
  if (kind == policy::AgentKind::Boat) nmpc.validate();
}

StackConfig StackConfig::unicycle_defaults() { return {}; }

StackConfig StackConfig::boat_defaults() {
  StackConfig cfg;
  cfg.kind = policy::AgentKind::Boat;
  cfg.robot_radius = 0.5;
  cfg.v_range = {0.0, 1.2};
  cfg.w_range = {-0.8, 0.8};
  cfg.sensor.max_range = 12.0;
  cfg.filter.sigma = 0.8;
  cfg.filter.gamma = 0.2;  // the hull answers slowly, brake much earlier than the unicycle
  cfg.filter.lookahead = 1.0;  // bow point; the hull swings away before the center moves
  cfg.filter.sense_radius = 8.0;
  cfg.filter.look_radius = 10.0;
  cfg.filter.omega_escape = 0.5;
  cfg.escape.stuck_window = 40;  // control runs at the planner period, not the plant step
  cfg.escape.drive_speed = 0.6;
  cfg.escape.front_clear = 3.0;
  cfg.escape.drive_steps = 120;
  cfg.escape.rotate_cap = 140;
  cfg.policy.scripted_cfg.v_max = 1.0;
  cfg.policy.scripted_cfg.w_max = 0.8;
  return cfg;
}

namespace {

policy::AgentState spawn_agent(const World& w, const StackConfig& cfg) {
  policy::AgentState agent;
  agent.kind = cfg.kind;
  if (cfg.kind == policy::AgentKind::Unicycle) {
    agent.uni = {w.spawn.x(), w.spawn.y(), w.spawn_heading};
  } else {
    agent.boat = {};
    agent.boat.px = w.spawn.x();
    agent.boat.py = w.spawn.y();
    agent.boat.psi = w.spawn_heading;
    const auto& p = cfg.boat_params;
    agent.boat.pz = p.m / (p.rho * p.A_wl * p.C_b);  // rest draft
  }
  return agent;
}

}  // namespace

EpisodeRunner::EpisodeRunner(const World& w, const StackConfig& cfg, std::uint64_t seed)
    : world_(w),
      cfg_(cfg),
      agent_(spawn_agent(w, cfg)),
      filter_(cfg.filter, cfg.escape),
      nmpc_(cfg.nmpc, cfg.boat_params),
      sensor_rng_(mix_seed(seed, 2)),
      gust_rng_(mix_seed(seed, 3)) {
  cfg_.validate();
  if (!cfg_.policy.use_network) {
    scripted_ = std::make_unique<policy::ScriptedPolicy>(cfg_.policy.scripted_cfg,
                                                         mix_seed(seed, 1));
  }
}

StepDiagnostics EpisodeRunner::step() {
  StepDiagnostics out;
  const Eigen::Vector2d pos = agent_.position2d();
  auto scan = policy::scan_beams(world_, pos, agent_.heading(), cfg_.sensor, &sensor_rng_);
  last_obs_ = policy::build_observation(world_, agent_, scan);

  out.r_dnn = cfg_.policy.use_network ? cfg_.policy.network->act(last_obs_)
                                      : scripted_->act(last_obs_);

  if (cfg_.filter_enabled) {
    auto res = filter_.step(agent_, out.r_dnn, scan, last_obs_, cfg_.safe_set.get(),
                            cfg_.v_range, cfg_.w_range);
    out.r = res.r;
    out.filter = res.diag;
  } else {
    out.r.v = clamp(out.r_dnn.v, cfg_.v_range[0], cfg_.v_range[1]);
    out.r.w = clamp(out.r_dnn.w, cfg_.w_range[0], cfg_.w_range[1]);
  }

  Eigen::Vector2d push = cfg_.disturbance.drift;
  if (cfg_.disturbance.gust_sigma > 0.0) {
    push.x() += gust_rng_.gaussian(0.0, cfg_.disturbance.gust_sigma);
    push.y() += gust_rng_.gaussian(0.0, cfg_.disturbance.gust_sigma);
  }

  if (cfg_.kind == policy::AgentKind::Unicycle) {
    agent_.uni = dynamics::unicycle_step(agent_.uni, out.r, cfg_.dt);
    agent_.uni.px += push.x() * cfg_.dt;
    agent_.uni.py += push.y() * cfg_.dt;
    t_ += cfg_.dt;
  } else {
    out.u = nmpc_.solve(agent_.boat, out.r).u_star;
    const int substeps = std::max(1, static_cast<int>(std::llround(cfg_.nmpc.dt / cfg_.dt)));
    const double sub_dt = cfg_.nmpc.dt / substeps;
    for (int s = 0; s < substeps; ++s) {
      agent_.boat = dynamics::boat_step(agent_.boat, out.u, cfg_.boat_params, sub_dt);
      agent_.boat.px += push.x() * sub_dt;
      agent_.boat.py += push.y() * sub_dt;
    }
    t_ += cfg_.nmpc.dt;
  }

  const Eigen::Vector2d now = agent_.position2d();
  out.nearest_distance = min_obstacle_distance(world_, now);
  out.collided = out.nearest_distance < cfg_.robot_radius;
  out.reached = (now - world_.target).norm() <= world_.accept_radius;
  return out;
}

EpisodeLog run_episode(const World& w, const StackConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  EpisodeLog log;
  log.kind = cfg.kind;
  log.seed = seed;

  if ((w.spawn - w.target).norm() <= w.accept_radius) {
    log.outcome = Outcome::Success;
    return log;
  }

  EpisodeRunner runner(w, cfg, seed);
  const double dt = cfg.control_dt();
  for (int i = 0; i < cfg.max_steps; ++i) {
    StepDiagnostics d;
    try {
      d = runner.step();
    } catch (const Error& e) {
      log.outcome = Outcome::Timeout;
      log.error = e.what();
      break;
    }

    StepRecord rec;
    rec.t = runner.time();
    if (cfg.kind == policy::AgentKind::Unicycle) {
      rec.state = runner.agent().uni.to_vector();
    } else {
      rec.state = runner.agent().boat.to_vector();
    }
    if (cfg.record_observations) rec.observation = runner.last_observation().values;
    rec.r_dnn_v = d.r_dnn.v;
    rec.r_dnn_w = d.r_dnn.w;
    rec.r_v = d.r.v;
    rec.r_w = d.r.w;
    rec.u_left = d.u.left;
    rec.u_right = d.u.right;
    rec.h = d.filter.h;
    rec.d_safe = d.filter.d_safe;
    rec.nearest_distance = d.nearest_distance;
    if (d.filter.active) {
      rec.events |= kEventFilterActive;
      ++log.corrections;
    }
    if (d.filter.fallback) {
      rec.events |= kEventQpFallback;
      ++log.fallbacks;
    }
    if (d.collided) rec.events |= kEventCollision;
    if (d.reached && !d.collided) rec.events |= kEventSuccess;
    if (!std::isnan(d.filter.h)) log.min_h = std::min(log.min_h, d.filter.h);
    log.records.push_back(std::move(rec));
    ++log.steps;
    log.duration = log.steps * dt;

    if (d.collided) {
      log.outcome = Outcome::Collision;
      return log;
    }
    if (d.reached) {
      log.outcome = Outcome::Success;
      return log;
    }
  }
  if (log.outcome != Outcome::Timeout) log.outcome = Outcome::Timeout;
  return log;
}

EvaluateResult evaluate(const World& w, const StackConfig& cfg, int episodes,
                        std::uint64_t base_seed, int jobs, bool keep_records) {
  if (episodes < 1) throw ConfigError("episodes must be at least 1");
  cfg.validate();
  EvaluateResult out;
  out.logs.resize(episodes);

  jobs = std::max(1, std::min(jobs, episodes));
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&](int start) {
    for (int i = start; i < episodes; i += jobs) {
      try {
        out.logs[i] = run_episode(w, cfg, mix_seed(base_seed, static_cast<std::uint64_t>(i)));
        if (!keep_records) out.logs[i].records.clear();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker, j);
    for (auto& th : threads) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  Metrics& m = out.metrics;
  m.episodes = episodes;
  double steps_sum = 0.0, steps_sq = 0.0, minh_sum = 0.0;
  int minh_n = 0;
  int succ = 0, coll = 0;
  for (const auto& log : out.logs) {
    succ += log.outcome == Outcome::Success;
    coll += log.outcome == Outcome::Collision;
    steps_sum += log.steps;
    steps_sq += double(log.steps) * log.steps;
    m.fallbacks += log.fallbacks;
    m.corrections += log.corrections;
    m.mean_duration += log.duration;
    if (std::isfinite(log.min_h)) {
      minh_sum += log.min_h;
      ++minh_n;
    }
  }
  const double n = episodes;
  m.success_rate = succ / n;
  m.collision_rate = coll / n;
  m.timeout_rate = 1.0 - m.success_rate - m.collision_rate;
  m.mean_steps = steps_sum / n;
  m.mean_duration /= n;
  if (episodes > 1) {
    m.std_steps = std::sqrt(std::max(0.0, (steps_sq - n * m.mean_steps * m.mean_steps) / (n - 1)));
    m.success_std = std::sqrt(n * m.success_rate * (1.0 - m.success_rate) / (n - 1));
    m.collision_std = std::sqrt(n * m.collision_rate * (1.0 - m.collision_rate) / (n - 1));
  }
  if (minh_n > 0) m.mean_min_h = minh_sum / minh_n;
  return out;
}

WorldSpec world_spec_from_name(const std::string& name) {
  if (name == "indoor_cluttered") return WorldSpec::IndoorCluttered;
  if (name == "aquatic_coastline") return WorldSpec::AquaticCoastline;
  throw ConfigError("unknown world spec: " + name);
}

std::string world_spec_name(WorldSpec spec) {
  return spec == WorldSpec::IndoorCluttered ? "indoor_cluttered" : "aquatic_coastline";
}

namespace {

// rejection-sample a point with clearance from obstacles and, optionally, a
// minimum separation from another point
Eigen::Vector2d place_point(const World& w, Rng& rng, const Eigen::Vector2d& lo,
                            const Eigen::Vector2d& hi, double clearance,
                            const Eigen::Vector2d* other, double min_separation,
                            const char* what) {
  for (int attempt = 0; attempt < 4000; ++attempt) {
    Eigen::Vector2d p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()));
    if (min_obstacle_distance(w, p) < clearance) continue;
    if (other && (p - *other).norm() < min_separation) continue;
    return p;
  }
  throw Error(std::string("world generation failed placing ") + what);
}

World generate_indoor(std::uint64_t seed) {
  World w;
  w.bounds = {{0.0, 0.0}, {10.0, 10.0}};
  w.segments = {{{0, 0}, {10, 0}}, {{10, 0}, {10, 10}}, {{10, 10}, {0, 10}}, {{0, 10}, {0, 0}}};
  w.accept_radius = 0.3;

  Rng rng(mix_seed(seed, 101));
  const double gap = 1.2;  // clear corridor between any two obstacle surfaces
  // a congested draw restarts from scratch on the same stream, so every seed
  // still maps to exactly one world
  for (int reset = 0; w.circles.empty(); ++reset) {
    if (reset >= 16) throw Error("world generation failed placing obstacles");
    const int count = rng.uniform_int(8, 12);
    std::vector<Circle> circles;
    bool full = true;
    for (int i = 0; i < count && full; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < 4000 && !placed; ++attempt) {
        const double r = rng.uniform(0.3, 0.6);
        Eigen::Vector2d c(rng.uniform(r + gap, 10.0 - r - gap),
                          rng.uniform(r + gap, 10.0 - r - gap));
        bool ok = true;
        for (const auto& o : circles) {
          if ((c - o.center).norm() < r + o.radius + gap) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        circles.push_back({c, r});
        placed = true;
      }
      full = placed;
    }
    if (full) w.circles = std::move(circles);
  }

  const double clearance = 0.7;  // robot radius + sigma + margin
  w.spawn = place_point(w, rng, {0.8, 0.8}, {9.2, 9.2}, clearance, nullptr, 0.0, "spawn");
  w.target =
      place_point(w, rng, {0.8, 0.8}, {9.2, 9.2}, clearance, &w.spawn, 6.0, "target");
  w.spawn_heading = std::atan2(w.target.y() - w.spawn.y(), w.target.x() - w.spawn.x());
  return w;
}

World generate_aquatic(std::uint64_t seed) {
  World w;
  w.bounds = {{0.0, 0.0}, {40.0, 40.0}};
  w.accept_radius = 1.0;

  Rng rng(mix_seed(seed, 202));
  // jagged coastline down the western edge
  Eigen::Vector2d prev(3.0 + rng.uniform(-1.5, 1.5), 0.0);
  for (double y = 5.0; y <= 40.0 + 1e-9; y += 5.0) {
    Eigen::Vector2d next(3.0 + rng.uniform(-1.5, 1.5), y);
    w.segments.push_back({prev, next});
    prev = next;
  }

  for (int reset = 0; w.circles.empty(); ++reset) {
    if (reset >= 16) throw Error("world generation failed placing islands");
    const int islands = rng.uniform_int(2, 4);
    std::vector<Circle> circles;
    bool full = true;
    for (int i = 0; i < islands && full; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < 4000 && !placed; ++attempt) {
        const double r = rng.uniform(1.5, 3.0);
        Eigen::Vector2d c(rng.uniform(10.0 + r, 36.0), rng.uniform(4.0 + r, 36.0 - r));
        bool ok = true;
        for (const auto& o : circles) {
          if ((c - o.center).norm() < r + o.radius + 4.0) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        circles.push_back({c, r});
        placed = true;
      }
      full = placed;
    }
    if (full) w.circles = std::move(circles);
  }

  const double clearance = 2.0;
  w.spawn = place_point(w, rng, {8.0, 3.0}, {38.0, 37.0}, clearance, nullptr, 0.0, "spawn");
  w.target =
      place_point(w, rng, {8.0, 3.0}, {38.0, 37.0}, clearance, &w.spawn, 15.0, "target");
  w.spawn_heading = std::atan2(w.target.y() - w.spawn.y(), w.target.x() - w.spawn.x());
  return w;
}

}  // namespace

World generate_world(WorldSpec spec, std::uint64_t seed) {
  return spec == WorldSpec::IndoorCluttered ? generate_indoor(seed) : generate_aquatic(seed);
}

}  // namespace safenav::sim
