#include "safenav/nmpc.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "safenav/common.hpp"

namespace safenav::nmpc {

void NMPCConfig::validate() const {
  if (horizon < 1) throw ConfigError("nmpc horizon must be at least 1");
  if (!(dt > 0.0)) throw ConfigError("nmpc dt must be positive");
  if (q.minCoeff() < 0.0 || r_weight.minCoeff() < 0.0)
    throw ConfigError("nmpc weights must be nonnegative");
  if (u_min > u_max) throw ConfigError("nmpc thrust bounds are inverted");
  if (max_iters < 1) throw ConfigError("nmpc max_iters must be at least 1");
  if (tol < 0.0) throw ConfigError("nmpc tol must be nonnegative");
  if (!(fd_step > 0.0)) throw ConfigError("nmpc fd_step must be positive");
}

namespace {

Eigen::VectorXd clamp_decision(Eigen::VectorXd u, const NMPCConfig& cfg) {
  for (int i = 0; i < u.size(); ++i) u[i] = clamp(u[i], cfg.u_min, cfg.u_max);
  return u;
}

// rollout_cost that reports failure instead of throwing, for probe points the
// line search or finite differences may push into invalid territory
std::optional<double> try_cost(const dynamics::BoatState& x0, const Eigen::VectorXd& u,
                               const dynamics::ReferenceCommand& r, const NMPCConfig& cfg,
                               const dynamics::BoatParams& params) {
  try {
    return rollout_cost(x0, u, r, cfg, params);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

double rollout_cost(const dynamics::BoatState& x0, const Eigen::VectorXd& u,
                    const dynamics::ReferenceCommand& r, const NMPCConfig& cfg,
                    const dynamics::BoatParams& params) {
  if (u.size() != 2 * cfg.horizon) throw SolverError("decision vector size mismatch");
  dynamics::BoatState x = x0;
  double cost = 0.0;
  for (int k = 0; k < cfg.horizon; ++k) {
    dynamics::ThrustCommand uk{u[2 * k], u[2 * k + 1]};
    try {
      x = dynamics::boat_step(x, uk, params, cfg.dt);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "non-finite rollout at stage " << k << ": " << e.what();
      throw SolverError(msg.str());
    }
    const double ev = x.v1 - r.v;
    const double ew = x.w3 - r.w;
    cost += cfg.q[0] * ev * ev + cfg.q[1] * ew * ew;
    cost += cfg.r_weight[0] * uk.left * uk.left + cfg.r_weight[1] * uk.right * uk.right;
  }
  return cost;
}

NMPCSolution nmpc_solve(const dynamics::BoatState& x0, const dynamics::ReferenceCommand& r,
                        const NMPCConfig& cfg, const dynamics::BoatParams& params,
                        const std::vector<dynamics::ThrustCommand>* warm) {
  cfg.validate();
  const int n = 2 * cfg.horizon;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  if (warm) {
    const int m = std::min<int>(cfg.horizon, static_cast<int>(warm->size()));
    for (int k = 0; k < m; ++k) {
      u[2 * k] = (*warm)[k].left;
      u[2 * k + 1] = (*warm)[k].right;
    }
    for (int k = m; k < cfg.horizon && m > 0; ++k) {
      u[2 * k] = (*warm)[m - 1].left;
      u[2 * k + 1] = (*warm)[m - 1].right;
    }
  }
  u = clamp_decision(std::move(u), cfg);

  NMPCSolution sol;
  double cost = rollout_cost(x0, u, r, cfg, params);
  sol.cost_trace.push_back(cost);

  Eigen::VectorXd grad(n);
  double alpha = 1.0;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd up = u, um = u;
      up[i] += cfg.fd_step;
      um[i] -= cfg.fd_step;
      const auto cp = try_cost(x0, up, r, cfg, params);
      const auto cm = try_cost(x0, um, r, cfg, params);
      if (cp && cm) {
        grad[i] = (*cp - *cm) / (2.0 * cfg.fd_step);
      } else if (cp) {
        grad[i] = (*cp - cost) / cfg.fd_step;
      } else if (cm) {
        grad[i] = (cost - *cm) / cfg.fd_step;
      } else {
        grad[i] = 0.0;
      }
    }

    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      Eigen::VectorXd cand = clamp_decision(u - alpha * grad, cfg);
      const Eigen::VectorXd step = u - cand;
      if (step.squaredNorm() == 0.0) break;  // projection pinned every coordinate
      const auto c_new = try_cost(x0, cand, r, cfg, params);
      if (c_new && *c_new <= cost - 1e-4 * grad.dot(step)) {
        const double gain = cost - *c_new;
        u = std::move(cand);
        cost = *c_new;
        sol.cost_trace.push_back(cost);
        ++sol.iterations;
        accepted = true;
        if (bt == 0) alpha *= 2.0;
        if (gain <= cfg.tol) sol.converged = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      sol.converged = true;  // stationary within line-search resolution
      break;
    }
    if (sol.converged) break;
  }

  sol.plan.resize(cfg.horizon);
  for (int k = 0; k < cfg.horizon; ++k) sol.plan[k] = {u[2 * k], u[2 * k + 1]};
  sol.u_star = sol.plan.front();
  sol.cost = cost;
  return sol;
}

NMPCController::NMPCController(const NMPCConfig& cfg, const dynamics::BoatParams& params)
    : cfg_(cfg), params_(params) {
  cfg_.validate();
}

void NMPCController::reset() { plan_.clear(); }

NMPCSolution NMPCController::solve(const dynamics::BoatState& x,
                                   const dynamics::ReferenceCommand& r) {
  std::vector<dynamics::ThrustCommand> shifted;
  const std::vector<dynamics::ThrustCommand>* warm = nullptr;
  if (cfg_.warm_start && !plan_.empty()) {
    shifted.assign(plan_.begin() + 1, plan_.end());
    shifted.push_back(plan_.back());
    warm = &shifted;
  }
  NMPCSolution sol = nmpc_solve(x, r, cfg_, params_, warm);
  plan_ = sol.plan;
  return sol;
}

TrackLog track_episode(const dynamics::BoatState& x0, const std::vector<ReferenceStep>& schedule,
                       const NMPCConfig& cfg, const dynamics::BoatParams& params,
                       double plant_dt) {
  cfg.validate();
  if (schedule.empty()) throw ConfigError("empty reference schedule");
  if (!(plant_dt > 0.0)) throw ConfigError("plant_dt must be positive");

  TrackLog log;
  NMPCController ctrl(cfg, params);
  dynamics::BoatState x = x0;
  const int substeps = std::max(1, static_cast<int>(std::llround(cfg.dt / plant_dt)));
  const double sub_dt = cfg.dt / substeps;
  const double duration = schedule.back().until;

  double t = 0.0;
  std::size_t seg = 0;
  while (t < duration - 1e-9) {
    while (seg + 1 < schedule.size() && t >= schedule[seg].until - 1e-9) ++seg;
    const dynamics::ReferenceCommand ref = schedule[seg].r;

    NMPCSolution sol;
    try {
      sol = ctrl.solve(x, ref);
      log.samples.push_back({t, x.v1, x.w3, ref, sol.u_star, sol.cost});
      for (int s = 0; s < substeps; ++s) x = dynamics::boat_step(x, sol.u_star, params, sub_dt);
    } catch (const Error& e) {
      log.completed = false;
      log.error = e.what();
      break;
    }
    t += cfg.dt;
  }
  log.final_state = x;
  return log;
}

}  // namespace safenav::nmpc
