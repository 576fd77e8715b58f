#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "safenav/cbf.hpp"
#include "safenav/dynamics.hpp"
#include "safenav/nmpc.hpp"
#include "safenav/policy.hpp"
#include "safenav/trajlog.hpp"
#include "safenav/verification.hpp"
#include "safenav/world.hpp"

namespace safenav::sim {

struct DisturbanceConfig {
  Eigen::Vector2d drift{0.0, 0.0};  // constant Earth-frame velocity, m/s
  double gust_sigma = 0.0;          // per-axis Gaussian resampled each control step, m/s

  void validate() const;
};

struct PolicySource {
  bool use_network = false;
  policy::ScriptedKind scripted = policy::ScriptedKind::GoalSeeker;
  policy::ScriptedPolicyConfig scripted_cfg;
  std::shared_ptr<const policy::PolicyNetwork> network;
};

// Everything above the plant for one agent: policy, filter, controller,
// sensing, and actuation limits.
struct StackConfig {
  policy::AgentKind kind = policy::AgentKind::Unicycle;
  double robot_radius = 0.15;
  Eigen::Vector2d v_range{0.0, 0.5};
  Eigen::Vector2d w_range{-1.5, 1.5};
  PolicySource policy;
  bool filter_enabled = true;
  cbf::FilterConfig filter;
  cbf::EscapeConfig escape;
  nmpc::NMPCConfig nmpc;
  dynamics::BoatParams boat_params;
  policy::SensorConfig sensor;
  DisturbanceConfig disturbance;
  double dt = 0.01;     // unicycle control period; the boat runs at nmpc.dt
  int max_steps = 2000;
  std::shared_ptr<const verify::SafeSet> safe_set;
  bool record_observations = false;

  void validate() const;
  double control_dt() const { return kind == policy::AgentKind::Boat ? nmpc.dt : dt; }

  static StackConfig unicycle_defaults();
  static StackConfig boat_defaults();
};

struct StepDiagnostics {
  dynamics::ReferenceCommand r_dnn{0.0, 0.0};
  dynamics::ReferenceCommand r{0.0, 0.0};
  dynamics::ThrustCommand u{0.0, 0.0};
  cbf::FilterDiagnostics filter;
  double nearest_distance = std::numeric_limits<double>::infinity();
  bool collided = false;
  bool reached = false;
};

// One agent stepping through one world: holds the filter and controller state
// plus the per-episode noise streams.
class EpisodeRunner {
 public:
  EpisodeRunner(const World& w, const StackConfig& cfg, std::uint64_t seed);

  StepDiagnostics step();
  const policy::AgentState& agent() const { return agent_; }
  double time() const { return t_; }
  const policy::ObservationVector& last_observation() const { return last_obs_; }

 private:
  const World& world_;
  StackConfig cfg_;
  policy::AgentState agent_;
  std::unique_ptr<policy::ScriptedPolicy> scripted_;
  cbf::ActionFilter filter_;
  nmpc::NMPCController nmpc_;
  Rng sensor_rng_;
  Rng gust_rng_;
  policy::ObservationVector last_obs_;
  double t_ = 0.0;
};

EpisodeLog run_episode(const World& w, const StackConfig& cfg, std::uint64_t seed);

struct Metrics {
  int episodes = 0;
  double success_rate = 0.0;    // fractions in [0, 1]
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double success_std = 0.0;     // std of the per-episode indicator
  double collision_std = 0.0;
  double mean_steps = 0.0;
  double std_steps = 0.0;
  double mean_min_h = std::numeric_limits<double>::quiet_NaN();  // over filtered episodes
  double mean_duration = 0.0;
  int fallbacks = 0;
  int corrections = 0;
};

// Episode i runs with seed mix_seed(base_seed, i); independent episodes may
// run on jobs threads, aggregation is order-stable.
struct EvaluateResult {
  Metrics metrics;
  std::vector<EpisodeLog> logs;
};

EvaluateResult evaluate(const World& w, const StackConfig& cfg, int episodes,
                        std::uint64_t base_seed, int jobs = 1, bool keep_records = false);

enum class WorldSpec { IndoorCluttered, AquaticCoastline };

WorldSpec world_spec_from_name(const std::string& name);
std::string world_spec_name(WorldSpec spec);

// Seeded procedural layouts: a walled room with scattered circular obstacles,
// or an open water patch with a coastline polyline and islands. Spawn and
// target are placed with verified clearance; placement failure throws.
World generate_world(WorldSpec spec, std::uint64_t seed);

}  // namespace safenav::sim
