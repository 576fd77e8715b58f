#include "safenav/dynamics.hpp"

#include <cmath>

namespace safenav::dynamics {

UnicycleDerivative unicycle_derivative(const UnicycleState& s, const ReferenceCommand& r) {
  return {r.v * std::cos(s.theta), r.v * std::sin(s.theta), r.w};
}

Eigen::Matrix<double, 12, 1> BoatState::to_vector() const {
  Eigen::Matrix<double, 12, 1> x;
  x << v1, v2, v3, w1, w2, w3, px, py, pz, phi, theta, psi;
  return x;
}

BoatState BoatState::from_vector(const Eigen::Matrix<double, 12, 1>& v) {
  BoatState s;
  s.v1 = v[0];
  s.v2 = v[1];
  s.v3 = v[2];
  s.w1 = v[3];
  s.w2 = v[4];
  s.w3 = v[5];
  s.px = v[6];
  s.py = v[7];
  s.pz = v[8];
  s.phi = v[9];
  s.theta = v[10];
  s.psi = v[11];
  return s;
}

PoseDerivative boat_kinematic_derivative(const BoatState& s, const BoatParams& p) {
  const double theta = wrap_angle(s.theta);
  if (std::abs(theta) > p.theta_max) {
    throw InvalidStateError("pitch magnitude " + std::to_string(std::abs(theta)) +
                            " exceeds theta_max " + std::to_string(p.theta_max));
  }
  const double cphi = std::cos(s.phi), sphi = std::sin(s.phi);
  const double cth = std::cos(s.theta), sth = std::sin(s.theta);
  const double cpsi = std::cos(s.psi), spsi = std::sin(s.psi);

  PoseDerivative d;
  d.dpx = s.v1 * cpsi * cth + s.v2 * (cpsi * sth * sphi - spsi * cphi) +
          s.v3 * (cpsi * sth * cphi + spsi * sphi);
  d.dpy = s.v1 * spsi * cth + s.v2 * (spsi * sth * sphi + cpsi * cphi) +
          s.v3 * (spsi * sth * cphi - cpsi * sphi);
  d.dpz = -s.v1 * sth + s.v2 * cth * sphi + s.v3 * cth * cphi;
  d.dphi = s.w1 + (sth / cth) * (s.w2 * sphi + s.w3 * cphi);
  d.dtheta = s.w2 * cphi - s.w3 * sphi;
  d.dpsi = (s.w2 * sphi + s.w3 * cphi) / cth;
  return d;
}

double submerged_volume(double pz, const BoatParams& p) {
  return p.A_wl * clamp(pz, 0.0, p.draft_max);
}

double buoyancy_force(double pz, const BoatParams& p) {
  return p.rho * p.g * submerged_volume(pz, p) * p.C_b;
}

namespace {
// sign-corrected quadratic drag: 0.5 * rho * v|v| * C * A
inline double quad_drag(double v, double rho, double C, double A) {
  return 0.5 * rho * v * std::abs(v) * C * A;
}
}  // namespace

ForceMoment boat_forces(const BoatState& s, const ThrustCommand& u, const BoatParams& p) {
  const double Fx = quad_drag(s.v1, p.rho, p.C_Fx, p.A_x);
  const double Fy = quad_drag(s.v2, p.rho, p.C_Fy, p.A_y);
  const double Fz = quad_drag(s.v3, p.rho, p.C_Fz, p.A_z);
  const double Mx = quad_drag(s.w1, p.rho, p.C_Mx, p.A_x);
  const double My = quad_drag(s.w2, p.rho, p.C_My, p.A_y);
  const double Mz = quad_drag(s.w3, p.rho, p.C_Mz, p.A_z);
  const double Fb = buoyancy_force(s.pz, p);

  ForceMoment f;
  f.X = (u.right + u.left) - Fx;
  f.Y = -Fy;
  f.Z = -Fb - Fz;  // buoyancy opposes NED gravity (z down)
  f.K = -Mx - p.k_phi * s.phi * Fb;
  f.M = -My - p.k_theta * s.theta * Fb;
  f.N = 0.5 * (u.right - u.left) * p.d_motor - Mz;
  return f;
}

VelocityDerivative boat_dynamic_derivative(const BoatState& s, const ThrustCommand& u,
                                           const BoatParams& p) {
  const ForceMoment f = boat_forces(s, u, p);
  const double sphi = std::sin(s.phi), cphi = std::cos(s.phi);
  const double sth = std::sin(s.theta), cth = std::cos(s.theta);

  VelocityDerivative d;
  d.dv1 = -s.w2 * s.v3 + s.w3 * s.v2 - p.g * sth + f.X / p.m;
  d.dv2 = -s.w3 * s.v1 + s.w1 * s.v3 + p.g * sphi * cth + f.Y / p.m;
  d.dv3 = -s.w1 * s.v2 + s.w2 * s.v1 + p.g * cphi * cth + f.Z / p.m;
  d.dw1 = (p.c1 * s.w2 + p.c2 * s.w1) * s.w2 + f.K / p.Ix;
  d.dw2 = p.c5 * s.w1 * s.w3 - p.c6 * (s.w1 * s.w1 - s.w3 * s.w3) + f.M / p.Iy;
  d.dw3 = (p.c8 * s.w1 - p.c2 * s.w3) * s.w2 + f.N / p.Iz;
  return d;
}

Eigen::Matrix<double, 12, 1> boat_derivative(const BoatState& s, const ThrustCommand& u,
                                             const BoatParams& p) {
  const VelocityDerivative dv = boat_dynamic_derivative(s, u, p);
  const PoseDerivative dp = boat_kinematic_derivative(s, p);
  Eigen::Matrix<double, 12, 1> dx;
  dx << dv.dv1, dv.dv2, dv.dv3, dv.dw1, dv.dw2, dv.dw3, dp.dpx, dp.dpy, dp.dpz, dp.dphi,
      dp.dtheta, dp.dpsi;
  return dx;
}

Eigen::VectorXd rk4_step(const DerivFn& f, const Eigen::VectorXd& x, double dt,
                         const WrapFn& wrap) {
  const char* stage = "k1";
  Eigen::VectorXd k1 = f(x);
  if (!k1.allFinite()) throw IntegrationError(std::string("non-finite derivative at ") + stage);
  stage = "k2";
  Eigen::VectorXd k2 = f(x + (0.5 * dt) * k1);
  if (!k2.allFinite()) throw IntegrationError(std::string("non-finite derivative at ") + stage);
  stage = "k3";
  Eigen::VectorXd k3 = f(x + (0.5 * dt) * k2);
  if (!k3.allFinite()) throw IntegrationError(std::string("non-finite derivative at ") + stage);
  stage = "k4";
  Eigen::VectorXd k4 = f(x + dt * k3);
  if (!k4.allFinite()) throw IntegrationError(std::string("non-finite derivative at ") + stage);

  Eigen::VectorXd x1 = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!x1.allFinite()) throw IntegrationError("non-finite state after update");
  if (wrap) wrap(x1);
  return x1;
}

UnicycleState unicycle_step(const UnicycleState& s, const ReferenceCommand& r, double dt) {
  auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    UnicycleDerivative d = unicycle_derivative(UnicycleState::from_vector(x.head<3>()), r);
    Eigen::Vector3d dx(d.dpx, d.dpy, d.dtheta);
    return dx;
  };
  auto wrap = [](Eigen::VectorXd& x) { x[2] = wrap_angle(x[2]); };
  Eigen::VectorXd x1 = rk4_step(f, s.to_vector(), dt, wrap);
  return UnicycleState::from_vector(x1.head<3>());
}

BoatState boat_step(const BoatState& s, const ThrustCommand& u, const BoatParams& p, double dt) {
  auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return boat_derivative(BoatState::from_vector(x), u, p);
  };
  auto wrap = [](Eigen::VectorXd& x) {
    x[9] = wrap_angle(x[9]);
    x[10] = wrap_angle(x[10]);
    x[11] = wrap_angle(x[11]);
  };
  Eigen::VectorXd x1 = rk4_step(f, s.to_vector(), dt, wrap);
  return BoatState::from_vector(x1);
}

}  // namespace safenav::dynamics
