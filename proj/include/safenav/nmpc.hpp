#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "safenav/dynamics.hpp"

namespace safenav::nmpc {

struct NMPCConfig {
  int horizon = 10;
  double dt = 0.05;                        // prediction step, also the control period
  Eigen::Vector2d q{10.0, 10.0};           // tracking weights on (v1, w3)
  Eigen::Vector2d r_weight{1e-5, 1e-5};    // input weights on (left, right)
  double u_min = -40.0;
  double u_max = 40.0;
  int max_iters = 50;
  double tol = 1e-6;                       // stop when an iteration gains less than this
  bool warm_start = true;
  double fd_step = 1e-3;                   // central-difference probe on thrusts, N

  void validate() const;
};

struct NMPCSolution {
  dynamics::ThrustCommand u_star{0.0, 0.0};
  std::vector<dynamics::ThrustCommand> plan;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;                  // stopped on tol or stationarity, not max_iters
  std::vector<double> cost_trace;          // initial cost, then cost after each iteration
};

// Cost of one open-loop thrust sequence u (interleaved left/right, length 2H):
// sum over stages of e' Q e + u' R u with e the (v1, w3) tracking error after
// the stage. Throws SolverError naming the stage when the rollout leaves the
// finite/valid envelope.
double rollout_cost(const dynamics::BoatState& x0, const Eigen::VectorXd& u,
                    const dynamics::ReferenceCommand& r, const NMPCConfig& cfg,
                    const dynamics::BoatParams& params);

// Direct single-shooting solve: projected-gradient descent with backtracking
// line search, gradients by central finite differences over the decision
// variables. warm, when given, seeds the iterate (clamped into bounds).
NMPCSolution nmpc_solve(const dynamics::BoatState& x0, const dynamics::ReferenceCommand& r,
                        const NMPCConfig& cfg, const dynamics::BoatParams& params,
                        const std::vector<dynamics::ThrustCommand>* warm = nullptr);

// Receding-horizon wrapper owning the warm-start buffer: each solve shifts the
// previous plan by one stage and repeats its tail.
class NMPCController {
 public:
  NMPCController(const NMPCConfig& cfg, const dynamics::BoatParams& params);

  NMPCSolution solve(const dynamics::BoatState& x, const dynamics::ReferenceCommand& r);
  void reset();
  const NMPCConfig& config() const { return cfg_; }

 private:
  NMPCConfig cfg_;
  dynamics::BoatParams params_;
  std::vector<dynamics::ThrustCommand> plan_;
};

// Piecewise-constant reference segment, active while t < until.
struct ReferenceStep {
  double until = 0.0;
  dynamics::ReferenceCommand r{0.0, 0.0};
};

struct TrackSample {
  double t = 0.0;
  double v1 = 0.0;
  double w3 = 0.0;
  dynamics::ReferenceCommand r{0.0, 0.0};
  dynamics::ThrustCommand u{0.0, 0.0};
  double cost = 0.0;
};

struct TrackLog {
  std::vector<TrackSample> samples;
  dynamics::BoatState final_state;
  bool completed = true;
  std::string error;
};

// Closed-loop run against a schedule: solve at every control period, hold the
// first input across the finer plant substeps. Solver failures end the run
// with completed = false and the message kept.
TrackLog track_episode(const dynamics::BoatState& x0, const std::vector<ReferenceStep>& schedule,
                       const NMPCConfig& cfg, const dynamics::BoatParams& params,
                       double plant_dt = 0.01);

}  // namespace safenav::nmpc
