#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "safenav/policy.hpp"

namespace safenav::sim {

enum class Outcome { Success, Collision, Timeout };

std::string outcome_name(Outcome o);
Outcome outcome_from_name(const std::string& s);

// step event bits
inline constexpr unsigned kEventFilterActive = 1u;
inline constexpr unsigned kEventQpFallback = 2u;
inline constexpr unsigned kEventCollision = 4u;
inline constexpr unsigned kEventSuccess = 8u;

struct StepRecord {
  double t = 0.0;
  Eigen::VectorXd state;        // plant state (3 unicycle, 12 boat)
  Eigen::VectorXd observation;  // empty unless observation recording is on
  double r_dnn_v = 0.0, r_dnn_w = 0.0;
  double r_v = 0.0, r_w = 0.0;
  double u_left = 0.0, u_right = 0.0;  // boat only
  double h = std::numeric_limits<double>::quiet_NaN();
  double d_safe = std::numeric_limits<double>::quiet_NaN();
  double nearest_distance = std::numeric_limits<double>::infinity();
  unsigned events = 0;
};

struct EpisodeLog {
  policy::AgentKind kind = policy::AgentKind::Unicycle;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Timeout;
  int steps = 0;  // control steps executed
  double duration = 0.0;
  double min_h = std::numeric_limits<double>::infinity();
  int corrections = 0;  // control steps where the filter changed the action
  int fallbacks = 0;    // control steps that hit the infeasible-QP fallback
  std::string error;    // component failure that forced a timeout, empty otherwise
  std::vector<StepRecord> records;
};

void save_trajectory_csv(const EpisodeLog& log, const std::string& path);
EpisodeLog load_trajectory_csv(const std::string& path);

}  // namespace safenav::sim
