#include "safenav/cbf.hpp"

#include <cmath>

namespace safenav::cbf {

namespace {
constexpr double kDegenerateNorm = 1e-9;
constexpr double kFeasSlack = 1e-9;
}  // namespace

void FilterConfig::validate() const {
  if (sigma <= 0.0) throw ConfigError("filter sigma must be positive");
  if (gamma <= 0.0) throw ConfigError("filter gamma must be positive");
  if (lookahead < 0.0) throw ConfigError("filter lookahead must be nonnegative");
  if (kappa < 1.0) throw ConfigError("filter kappa must be >= 1");
  if (kappa_cap < 1.0) throw ConfigError("filter kappa_cap must be >= 1");
}

double barrier_value(const Eigen::Vector3d& p, const Eigen::Vector3d& p_obs, double d_safe) {
  return (p - p_obs).squaredNorm() - d_safe * d_safe;
}

Eigen::Matrix<double, 6, 1> barrier_gradient(const Eigen::Vector3d& p,
                                             const Eigen::Vector3d& p_obs) {
  Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
  g.head<3>() = 2.0 * (p - p_obs);
  return g;
}

double compute_d_safe(const FilterConfig& cfg, const std::optional<double>& area_distance) {
  switch (cfg.mode) {
    case DSafeMode::SquaredDistance:
      return area_distance ? std::max(cfg.sigma, *area_distance * *area_distance) : cfg.sigma;
    case DSafeMode::CappedDistance:
      return area_distance
                 ? std::max(cfg.sigma, std::min(*area_distance, cfg.sigma * cfg.kappa_cap))
                 : cfg.sigma;
    case DSafeMode::Inflated:
      return area_distance ? cfg.sigma * cfg.kappa : cfg.sigma;
  }
  return cfg.sigma;
}

LinearConstraint constraint_coeffs_unicycle(const dynamics::UnicycleState& s,
                                            const dynamics::ReferenceCommand& r_dnn,
                                            const Eigen::Vector2d& p_obs, double d_safe,
                                            const FilterConfig& cfg) {
  const Eigen::Vector2d d(s.px - p_obs.x(), s.py - p_obs.y());
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  LinearConstraint lc;
  lc.a[0] = 2.0 * (d.x() * c + d.y() * sn);
  lc.a[1] = 2.0 * cfg.lookahead * (-d.x() * sn + d.y() * c);
  const double h = d.squaredNorm() - d_safe * d_safe;
  lc.b = lc.a[0] * r_dnn.v + lc.a[1] * r_dnn.w + cfg.gamma * h;
  return lc;
}

LinearConstraint constraint_coeffs_boat(const dynamics::BoatState& s,
                                        const dynamics::ReferenceCommand& r_dnn,
                                        const Eigen::Vector2d& p_obs, double d_safe,
                                        const FilterConfig& cfg) {
  const Eigen::Vector2d d(s.px - p_obs.x(), s.py - p_obs.y());
  const double cphi = std::cos(s.phi), sphi = std::sin(s.phi);
  const double cth = std::cos(s.theta), sth = std::sin(s.theta);
  const double cpsi = std::cos(s.psi), spsi = std::sin(s.psi);

  LinearConstraint lc;
  // surge column of the navigation equations (planar part)
  lc.a[0] = 2.0 * (d.x() * cpsi * cth + d.y() * spsi * cth);
  // yaw column: lever arm times the w3 gain of dpsi
  const double lever = 2.0 * cfg.lookahead * (-d.x() * spsi + d.y() * cpsi);
  lc.a[1] = lever * (cphi / cth);

  const double h = d.squaredNorm() - d_safe * d_safe;
  // drift: sway and heave transport of the planar position
  const double drift_px = s.v2 * (cpsi * sth * sphi - spsi * cphi) +
                          s.v3 * (cpsi * sth * cphi + spsi * sphi);
  const double drift_py = s.v2 * (spsi * sth * sphi + cpsi * cphi) +
                          s.v3 * (spsi * sth * cphi - cpsi * sphi);
  // plus the pitch-rate share of the yaw rate through the same lever
  const double drift_yaw = lever * (s.w2 * sphi / cth);
  lc.b = 2.0 * (d.x() * drift_px + d.y() * drift_py) + drift_yaw + lc.a[0] * r_dnn.v +
         lc.a[1] * r_dnn.w + cfg.gamma * h;
  return lc;
}

QPResult solve_qp(const LinearConstraint& c) {
  if (c.b >= 0.0) return {true, Eigen::Vector2d::Zero()};
  const double n2 = c.a.squaredNorm();
  if (n2 < kDegenerateNorm * kDegenerateNorm) return {false, Eigen::Vector2d::Zero()};
  return {true, (-c.b / n2) * c.a};
}

QPResult solve_qp_multi(const std::vector<LinearConstraint>& cs) {
  if (cs.empty()) return {true, Eigen::Vector2d::Zero()};
  auto feasible = [&](const Eigen::Vector2d& r) {
    for (const auto& c : cs) {
      if (c.a.dot(r) + c.b < -kFeasSlack) return false;
    }
    return true;
  };
  bool found = false;
  Eigen::Vector2d best = Eigen::Vector2d::Zero();
  double best_n2 = std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::Vector2d& r) {
    const double n2 = r.squaredNorm();
    if (n2 < best_n2 && feasible(r)) {
      best = r;
      best_n2 = n2;
      found = true;
    }
  };
  consider(Eigen::Vector2d::Zero());
  for (const auto& c : cs) {
    const double n2 = c.a.squaredNorm();
    if (n2 < kDegenerateNorm * kDegenerateNorm) continue;
    consider((-c.b / n2) * c.a);
  }
  for (size_t i = 0; i < cs.size(); ++i) {
    for (size_t j = i + 1; j < cs.size(); ++j) {
      const auto& ci = cs[i];
      const auto& cj = cs[j];
      const double det = ci.a.x() * cj.a.y() - ci.a.y() * cj.a.x();
      if (std::abs(det) < 1e-12) continue;
      // a_i . r = -b_i, a_j . r = -b_j
      Eigen::Vector2d r((-ci.b * cj.a.y() + cj.b * ci.a.y()) / det,
                        (-cj.b * ci.a.x() + ci.b * cj.a.x()) / det);
      consider(r);
    }
  }
  if (!found) return {false, Eigen::Vector2d::Zero()};
  return {true, best};
}

FilterResult filter_action(const policy::AgentState& agent,
                           const dynamics::ReferenceCommand& r_dnn,
                           const policy::BeamScan& scan, const policy::ObservationVector& obs,
                           const verify::SafeSet* safe_set, const FilterConfig& cfg,
                           const Eigen::Vector2d& v_range, const Eigen::Vector2d& w_range) {
  cfg.validate();
  auto clamp_cmd = [&](double v, double w) {
    return dynamics::ReferenceCommand{clamp(v, v_range[0], v_range[1]),
                                      clamp(w, w_range[0], w_range[1])};
  };
  FilterResult out;
  out.diag = FilterDiagnostics{};
  if (!cfg.enabled) {
    out.r = clamp_cmd(r_dnn.v, r_dnn.w);
    return out;
  }

  const Eigen::Vector2d pos = agent.position2d();
  const double z = agent.kind == policy::AgentKind::Boat ? agent.boat.pz : 0.0;

  // obstacle points within attention range
  std::vector<Eigen::Vector2d> points;
  if (cfg.multi_constraint) {
    for (const auto& hit : scan.cone_nearest) {
      if (hit.hit && hit.range <= cfg.sense_radius) points.push_back(hit.point);
    }
  } else if (scan.nearest_ray >= 0) {
    const auto& hit = scan.rays[scan.nearest_ray];
    if (hit.range <= cfg.sense_radius) points.push_back(hit.point);
  }
  if (points.empty()) {
    out.r = clamp_cmd(r_dnn.v, r_dnn.w);
    return out;
  }
  out.diag.obstacle_in_range = true;

  std::optional<double> area_distance;
  if (safe_set && !safe_set->entries.empty()) {
    auto matches = verify::match_unsafe_regions(obs.values, *safe_set, cfg.look_radius);
    if (!matches.empty()) area_distance = matches.front().distance;
  }
  const double d_safe = compute_d_safe(cfg, area_distance);
  out.diag.d_safe = d_safe;

  std::vector<LinearConstraint> constraints;
  constraints.reserve(points.size());
  double nearest_h = std::numeric_limits<double>::infinity();
  Eigen::Vector2d nearest_point = points.front();
  for (const auto& pt : points) {
    LinearConstraint lc =
        agent.kind == policy::AgentKind::Unicycle
            ? constraint_coeffs_unicycle(agent.uni, r_dnn, pt, d_safe, cfg)
            : constraint_coeffs_boat(agent.boat, r_dnn, pt, d_safe, cfg);
    constraints.push_back(lc);
    const double h = barrier_value(Eigen::Vector3d(pos.x(), pos.y(), z),
                                   Eigen::Vector3d(pt.x(), pt.y(), z), d_safe);
    if (h < nearest_h) {
      nearest_h = h;
      nearest_point = pt;
    }
  }
  out.diag.h = nearest_h;
  out.diag.p_obs = nearest_point;
  out.diag.constraints = static_cast<int>(constraints.size());

  QPResult qp;
  if (!cfg.multi_constraint && constraints.size() == 1) {
    qp = solve_qp(constraints.front());
  } else {
    // actuator box on the corrected command, so the solution needs no
    // after-the-fact clamp that would break the certified constraint
    std::vector<LinearConstraint> all = constraints;
    all.push_back({{1.0, 0.0}, r_dnn.v - v_range[0]});
    all.push_back({{-1.0, 0.0}, v_range[1] - r_dnn.v});
    all.push_back({{0.0, 1.0}, r_dnn.w - w_range[0]});
    all.push_back({{0.0, -1.0}, w_range[1] - r_dnn.w});
    qp = solve_qp_multi(all);
  }
  if (!qp.feasible) {
    out.diag.fallback = true;
    out.diag.active = true;
    out.r = clamp_cmd(0.0, escape_direction(scan) * cfg.omega_escape);
    return out;
  }
  out.diag.r_cbf = qp.r_cbf;
  out.diag.active = qp.r_cbf.squaredNorm() > 1e-24;
  out.r = clamp_cmd(r_dnn.v + qp.r_cbf[0], r_dnn.w + qp.r_cbf[1]);
  return out;
}

double escape_direction(const policy::BeamScan& scan) {
  double left = 0.0, right = 0.0;
  for (int i = 0; i < policy::kNumBeams; ++i) {
    const double center = wrap_angle((i + 0.5) * policy::kConeWidth);
    if (center > 0.0) {
      left += scan.cone_values[i];
    } else {
      right += scan.cone_values[i];
    }
  }
  return left >= right ? 1.0 : -1.0;
}

double front_clearance(const policy::BeamScan& scan, double fallback_range) {
  double best = fallback_range;
  for (int i : {0, policy::kNumBeams - 1}) {
    const auto& nearest = scan.cone_nearest[i];
    best = std::min(best, nearest.hit ? nearest.range : scan.cone_values[i]);
  }
  return best;
}

ActionFilter::ActionFilter(const FilterConfig& cfg, const EscapeConfig& esc)
    : cfg_(cfg), esc_(esc) {
  cfg_.validate();
}

void ActionFilter::reset() {
  phase_ = Phase::None;
  stuck_ = 0;
  count_ = 0;
  dir_ = 1.0;
}

FilterResult ActionFilter::step(const policy::AgentState& agent,
                                const dynamics::ReferenceCommand& r_dnn,
                                const policy::BeamScan& scan,
                                const policy::ObservationVector& obs,
                                const verify::SafeSet* safe_set, const Eigen::Vector2d& v_range,
                                const Eigen::Vector2d& w_range) {
  if (!cfg_.enabled) {
    return filter_action(agent, r_dnn, scan, obs, safe_set, cfg_, v_range, w_range);
  }

  const auto filtered = [&](const dynamics::ReferenceCommand& nominal) {
    return filter_action(agent, nominal, scan, obs, safe_set, cfg_, v_range, w_range);
  };
  const auto as_override = [](FilterResult res) {
    res.diag.fallback = true;
    res.diag.active = true;
    return res;
  };
  const dynamics::ReferenceCommand rotate_cmd{0.0, dir_ * cfg_.omega_escape};
  const dynamics::ReferenceCommand drive_cmd{esc_.drive_speed, 0.0};
  const double front = front_clearance(scan, cfg_.sense_radius);

  if (phase_ == Phase::Rotate) {
    FilterResult probe = filtered(drive_cmd);
    if (front > esc_.front_clear && probe.r.v > 0.5 * esc_.drive_speed) {
      phase_ = Phase::Drive;
      count_ = 0;
      return as_override(probe);
    }
    if (++count_ > esc_.rotate_cap) {
      dir_ = -dir_;
      count_ = 0;
    }
    return as_override(filtered(rotate_cmd));
  }

  if (phase_ == Phase::Drive) {
    FilterResult out = filtered(drive_cmd);
    if (front < 0.5 * esc_.front_clear || out.r.v < esc_.stuck_speed) {
      phase_ = Phase::Rotate;
      count_ = 0;
      return as_override(filtered(rotate_cmd));
    }
    if (++count_ > esc_.drive_steps) {
      phase_ = Phase::None;
      stuck_ = 0;
    }
    return as_override(out);
  }

  FilterResult out = filtered(r_dnn);
  const bool stalled = out.diag.active && std::abs(out.r.v) < esc_.stuck_speed &&
                       std::abs(r_dnn.v) > 5.0 * esc_.stuck_speed;
  stuck_ = stalled ? stuck_ + 1 : 0;
  if (stuck_ >= esc_.stuck_window) {
    stuck_ = 0;
    phase_ = Phase::Rotate;
    count_ = 0;
    dir_ = escape_direction(scan);
    return as_override(filtered({0.0, dir_ * cfg_.omega_escape}));
  }
  return out;
}

}  // namespace safenav::cbf
