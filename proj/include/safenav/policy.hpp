#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "safenav/common.hpp"
#include "safenav/dynamics.hpp"
#include "safenav/world.hpp"

namespace safenav::policy {

enum class AgentKind { Unicycle, Boat };

inline constexpr int kNumBeams = 15;
inline constexpr double kConeWidth = 2.0 * kPi / kNumBeams;  // 24 degrees

// Tagged pose container so one pipeline serves both plants.
struct AgentState {
  AgentKind kind = AgentKind::Unicycle;
  dynamics::UnicycleState uni;
  dynamics::BoatState boat;

  Eigen::Vector2d position2d() const {
    return kind == AgentKind::Unicycle ? Eigen::Vector2d(uni.px, uni.py)
                                       : Eigen::Vector2d(boat.px, boat.py);
  }
  double heading() const { return kind == AgentKind::Unicycle ? uni.theta : boat.psi; }
};

struct SensorConfig {
  double max_range = 3.5;
  int rays_per_cone = 5;
  double range_noise_sigma = 0.0;
};

struct BeamScan {
  Eigen::VectorXd cone_values;        // kNumBeams mean clipped ranges
  std::vector<sim::RayHit> rays;      // all rays, cone-major order
  std::vector<double> ray_angles;     // absolute world angles
  std::vector<sim::RayHit> cone_nearest;  // per cone; hit=false when all rays miss
  int nearest_ray = -1;               // global nearest hitting ray, -1 if none
};

// Cone i spans [i, i+1) * kConeWidth counter-clockwise from the heading; rays
// sit at offsets (j + 0.5) * cone/rays. Ranges clip at max_range; optional
// gaussian range noise (clamped to [0, max_range]) perturbs hit points too.
BeamScan scan_beams(const sim::World& w, const Eigen::Vector2d& pos, double heading,
                    const SensorConfig& cfg, Rng* noise = nullptr);

// Beam block first, then pose, then target distance and relative bearing.
// Unicycle: [beams(15), px, py, theta, dist, bearing] -> 20 dims.
// Boat: [beams(15), px, py, pz, phi, theta, psi, dist, bearing] -> 23 dims.
struct ObservationVector {
  AgentKind kind = AgentKind::Unicycle;
  Eigen::VectorXd values;

  static int dim_for(AgentKind k) { return k == AgentKind::Unicycle ? 20 : 23; }
  static std::vector<int> position_dims(AgentKind k) {
    return k == AgentKind::Unicycle ? std::vector<int>{15, 16} : std::vector<int>{15, 16, 17};
  }
  double beam(int i) const { return values[i]; }
  double target_distance() const { return values[values.size() - 2]; }
  double target_heading() const { return values[values.size() - 1]; }
};

ObservationVector build_observation(const sim::World& w, const AgentState& agent,
                                    const BeamScan& scan);
ObservationVector build_observation(const sim::World& w, const AgentState& agent,
                                    const SensorConfig& cfg, Rng* noise = nullptr);

enum class Activation { Relu, Tanh, Linear };

struct Layer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Activation act = Activation::Linear;
};

// TanhScaled squashes the two raw outputs into [v_range] x [w_range];
// Linear emits the raw head values (used by plain function approximators).
enum class OutputMode { TanhScaled, Linear };

struct PolicyNetwork {
  int input_dim = 0;
  std::vector<Layer> layers;
  OutputMode output_mode = OutputMode::TanhScaled;
  Eigen::Vector2d v_range{0.0, 1.0};
  Eigen::Vector2d w_range{-1.0, 1.0};
  // optional per-feature affine normalization x' = (x - offset) / scale
  Eigen::VectorXd norm_offset;
  Eigen::VectorXd norm_scale;

  bool has_normalization() const { return norm_offset.size() > 0; }
  // hidden stack output before the output head
  Eigen::Vector2d forward_raw(const Eigen::VectorXd& x) const;
  Eigen::Vector2d forward(const Eigen::VectorXd& x) const;
  dynamics::ReferenceCommand act(const ObservationVector& obs) const;
};

PolicyNetwork load_network(const std::string& path);
void save_network(const PolicyNetwork& net, const std::string& path);

enum class ScriptedKind { GoalSeeker, NoisyGoalSeeker };

struct ScriptedPolicyConfig {
  ScriptedKind kind = ScriptedKind::GoalSeeker;
  double v_max = 0.5;
  double w_max = 1.5;
  double heading_gain = 2.0;
  double noise_v = 0.05;
  double noise_w = 0.3;
};

// Steers toward the target bearing; the noisy variant adds white gaussian
// noise to both channels each call before clamping.
class ScriptedPolicy {
 public:
  ScriptedPolicy(const ScriptedPolicyConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}
  dynamics::ReferenceCommand act(const ObservationVector& obs);

 private:
  ScriptedPolicyConfig cfg_;
  Rng rng_;
};

}  // namespace safenav::policy
