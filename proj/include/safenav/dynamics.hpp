#pragma once

#include <Eigen/Dense>
#include <functional>

#include "safenav/common.hpp"

namespace safenav::dynamics {

// High-level velocity reference: surge speed and yaw rate.
struct ReferenceCommand {
  double v = 0.0;
  double w = 0.0;
};

// Differential thrust pair, Newtons.
struct ThrustCommand {
  double left = 0.0;
  double right = 0.0;
};

struct UnicycleState {
  double px = 0.0;
  double py = 0.0;
  double theta = 0.0;

  Eigen::Vector3d to_vector() const { return {px, py, theta}; }
  static UnicycleState from_vector(const Eigen::Vector3d& v) {
    return {v[0], v[1], v[2]};
  }
};

struct UnicycleDerivative {
  double dpx = 0.0;
  double dpy = 0.0;
  double dtheta = 0.0;
};

UnicycleDerivative unicycle_derivative(const UnicycleState& s, const ReferenceCommand& r);

// Body frame: x forward, y starboard, z down. World frame is NED, so pz grows
// downward and a floating hull has pz in (0, draft_max).
// State layout: [v1 v2 v3 w1 w2 w3 px py pz phi theta psi].
struct BoatState {
  double v1 = 0.0, v2 = 0.0, v3 = 0.0;
  double w1 = 0.0, w2 = 0.0, w3 = 0.0;
  double px = 0.0, py = 0.0, pz = 0.0;
  double phi = 0.0, theta = 0.0, psi = 0.0;

  Eigen::Matrix<double, 12, 1> to_vector() const;
  static BoatState from_vector(const Eigen::Matrix<double, 12, 1>& v);
};

struct BoatParams {
  double m = 20.0;
  double g = 9.81;
  double rho = 1000.0;
  double Ix = 1.0, Iy = 2.0, Iz = 2.0;
  // drag reference areas per body axis
  double A_x = 0.12, A_y = 0.25, A_z = 0.40;
  // quadratic drag coefficients, translational and rotational
  double C_Fx = 0.8, C_Fy = 1.2, C_Fz = 1.5;
  double C_Mx = 0.4, C_My = 0.4, C_Mz = 0.08;
  // buoyancy: waterline area, hull coefficient, max draft
  double A_wl = 0.5;
  double C_b = 1.0;
  double draft_max = 0.3;
  // restoring moment gains (torque per radian per Newton of buoyancy)
  double k_phi = 0.25, k_theta = 0.25;
  // inertia coupling coefficients; c1 = 0 keeps the hull laterally symmetric
  double c1 = 0.0, c2 = 0.1, c5 = 0.15, c6 = 0.05, c8 = 0.1;
  double d_motor = 0.4;
  double thrust_max = 40.0;
  // pitch singularity guard for the Euler-rate kinematics
  double theta_max = 1.48;
};

struct PoseDerivative {
  double dpx = 0.0, dpy = 0.0, dpz = 0.0;
  double dphi = 0.0, dtheta = 0.0, dpsi = 0.0;
};

struct VelocityDerivative {
  double dv1 = 0.0, dv2 = 0.0, dv3 = 0.0;
  double dw1 = 0.0, dw2 = 0.0, dw3 = 0.0;
};

// Generalized force/moment in body frame.
struct ForceMoment {
  double X = 0.0, Y = 0.0, Z = 0.0;
  double K = 0.0, M = 0.0, N = 0.0;
};

// ZYX-Euler navigation equations (earth rates from body rates).
// Throws InvalidStateError when |pitch| exceeds theta_max.
PoseDerivative boat_kinematic_derivative(const BoatState& s, const BoatParams& p);

// Submerged volume from draft, saturating at draft_max; zero when airborne.
double submerged_volume(double pz, const BoatParams& p);
// Buoyancy magnitude rho * g * V_sub * C_b; acts against NED gravity.
double buoyancy_force(double pz, const BoatParams& p);

ForceMoment boat_forces(const BoatState& s, const ThrustCommand& u, const BoatParams& p);

VelocityDerivative boat_dynamic_derivative(const BoatState& s, const ThrustCommand& u,
                                           const BoatParams& p);

Eigen::Matrix<double, 12, 1> boat_derivative(const BoatState& s, const ThrustCommand& u,
                                             const BoatParams& p);

using DerivFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using WrapFn = std::function<void(Eigen::VectorXd&)>;

// Classic fixed-step RK4. Angles are wrapped only once, after the update;
// stage states keep raw angles so stage arithmetic stays smooth across +-pi.
// Throws IntegrationError naming the stage that produced a non-finite value.
Eigen::VectorXd rk4_step(const DerivFn& f, const Eigen::VectorXd& x, double dt,
                         const WrapFn& wrap = {});

UnicycleState unicycle_step(const UnicycleState& s, const ReferenceCommand& r, double dt);
BoatState boat_step(const BoatState& s, const ThrustCommand& u, const BoatParams& p, double dt);

}  // namespace safenav::dynamics
