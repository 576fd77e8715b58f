#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "safenav/dynamics.hpp"
#include "safenav/policy.hpp"
#include "safenav/verification.hpp"

namespace safenav::cbf {

enum class DSafeMode { SquaredDistance, CappedDistance, Inflated };

struct FilterConfig {
  bool enabled = true;
  double sigma = 0.3;        // base clearance radius
  double gamma = 1.0;        // class-K gain on h
  double lookahead = 0.0;    // steering lever arm; 0 keeps the center barrier exact
  DSafeMode mode = DSafeMode::Inflated;
  double kappa = 1.5;        // clearance inflation near mapped unsafe regions
  double kappa_cap = 3.0;    // distance cap multiple for the consistent-units mode
  double look_radius = 3.0;  // unsafe-region matching radius
  double sense_radius = 2.0; // obstacles beyond this are ignored
  bool multi_constraint = true;  // one constraint per cone; single nearest point otherwise
  double omega_escape = 1.0; // fallback turn rate when the QP is infeasible

  void validate() const;
};

// h(x) = |p - p_obs|^2 - d_safe^2
double barrier_value(const Eigen::Vector3d& p, const Eigen::Vector3d& p_obs, double d_safe);

// gradient over [position(3), attitude(3)]: attitude rows are zero
Eigen::Matrix<double, 6, 1> barrier_gradient(const Eigen::Vector3d& p,
                                             const Eigen::Vector3d& p_obs);

// Clearance radius, optionally stretched when a mapped unsafe region sits
// within look_radius. area_distance is the distance to its centroid.
double compute_d_safe(const FilterConfig& cfg, const std::optional<double>& area_distance);

// a . r_cbf + b >= 0 over the correction r_cbf = (dv, dw)
struct LinearConstraint {
  Eigen::Vector2d a{0.0, 0.0};
  double b = 0.0;
};

LinearConstraint constraint_coeffs_unicycle(const dynamics::UnicycleState& s,
                                            const dynamics::ReferenceCommand& r_dnn,
                                            const Eigen::Vector2d& p_obs, double d_safe,
                                            const FilterConfig& cfg);

// Same construction through the surge and yaw columns of the boat kinematics;
// drift from sway/heave velocity and roll-coupled yaw lands in b.
LinearConstraint constraint_coeffs_boat(const dynamics::BoatState& s,
                                        const dynamics::ReferenceCommand& r_dnn,
                                        const Eigen::Vector2d& p_obs, double d_safe,
                                        const FilterConfig& cfg);

struct QPResult {
  bool feasible = false;
  Eigen::Vector2d r_cbf{0.0, 0.0};
};

// min |r|^2 subject to a . r + b >= 0: zero when already satisfied, else the
// closed-form projection onto the constraint boundary.
QPResult solve_qp(const LinearConstraint& c);

// Candidate enumeration for up to a few dozen halfplanes: origin, single
// projections, pairwise vertices; minimum-norm feasible candidate wins.
QPResult solve_qp_multi(const std::vector<LinearConstraint>& cs);

struct FilterDiagnostics {
  bool obstacle_in_range = false;
  bool active = false;     // correction changed the command
  bool fallback = false;   // infeasible QP, stop-and-rotate applied
  double h = std::numeric_limits<double>::quiet_NaN();
  double d_safe = std::numeric_limits<double>::quiet_NaN();
  int constraints = 0;
  Eigen::Vector2d r_cbf{0.0, 0.0};
  Eigen::Vector2d p_obs{0.0, 0.0};
};

struct FilterResult {
  dynamics::ReferenceCommand r;
  FilterDiagnostics diag;
};

// One control-step pass: pick sensed obstacle point(s), stretch the clearance
// against the mapped unsafe regions, assemble constraints, solve, and clamp
// the corrected command into the actuator ranges.
FilterResult filter_action(const policy::AgentState& agent,
                           const dynamics::ReferenceCommand& r_dnn,
                           const policy::BeamScan& scan, const policy::ObservationVector& obs,
                           const verify::SafeSet* safe_set, const FilterConfig& cfg,
                           const Eigen::Vector2d& v_range, const Eigen::Vector2d& w_range);

// +1 to rotate left, -1 to rotate right, by comparing summed cone ranges on
// each side of the heading.
double escape_direction(const policy::BeamScan& scan);

struct EscapeConfig {
  int stuck_window = 100;     // consecutive stalled steps before engaging
  double stuck_speed = 0.02;  // |v| below this counts as stalled
  double drive_speed = 0.35;  // surge commanded while skirting an obstacle
  double front_clear = 0.9;   // forward clearance needed to stop rotating
  int drive_steps = 300;      // skirting steps before handing back to the policy
  int rotate_cap = 350;       // rotation steps before trying the other way
};

// Smallest clipped range over the two cones straddling the heading.
double front_clearance(const policy::BeamScan& scan, double fallback_range);

// Stateful wrapper around filter_action. The projection can cancel the whole
// command when the agent faces an obstacle dead on, parking it at the safety
// boundary while the policy keeps pointing back at it. After a run of
// stalled-but-commanded steps this overrides the policy with a two-phase
// maneuver: rotate in place toward the more open side until the front cones
// clear, then drive straight to skirt the blocker. Both phases still pass
// through filter_action, so the override never weakens the barrier condition
// (rotation does not move a unicycle's center at all).
class ActionFilter {
 public:
  explicit ActionFilter(const FilterConfig& cfg, const EscapeConfig& esc = {});

  FilterResult step(const policy::AgentState& agent, const dynamics::ReferenceCommand& r_dnn,
                    const policy::BeamScan& scan, const policy::ObservationVector& obs,
                    const verify::SafeSet* safe_set, const Eigen::Vector2d& v_range,
                    const Eigen::Vector2d& w_range);
  void reset();
  const FilterConfig& config() const { return cfg_; }

 private:
  enum class Phase { None, Rotate, Drive };

  FilterConfig cfg_;
  EscapeConfig esc_;
  Phase phase_ = Phase::None;
  int stuck_ = 0;
  int count_ = 0;
  double dir_ = 1.0;
};

}  // namespace safenav::cbf
