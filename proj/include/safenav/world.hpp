#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "safenav/common.hpp"

namespace safenav::sim {

struct Circle {
  Eigen::Vector2d center{0.0, 0.0};
  double radius = 0.0;
};

struct Segment {
  Eigen::Vector2d a{0.0, 0.0};
  Eigen::Vector2d b{0.0, 0.0};
};

struct Rect {
  Eigen::Vector2d lo{0.0, 0.0};
  Eigen::Vector2d hi{0.0, 0.0};

  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y();
  }
  Eigen::Vector2d size() const { return hi - lo; }
};

struct World {
  Rect bounds;
  std::vector<Circle> circles;
  std::vector<Segment> segments;
  Eigen::Vector2d spawn{0.0, 0.0};
  double spawn_heading = 0.0;
  Eigen::Vector2d target{0.0, 0.0};
  double accept_radius = 0.3;
};

struct RayHit {
  bool hit = false;
  double range = 0.0;
  Eigen::Vector2d point{0.0, 0.0};
};

// Nearest obstacle along the ray; range saturates at max_range on a miss.
RayHit cast_ray(const World& w, const Eigen::Vector2d& origin, double angle, double max_range);

// Distance from p to the nearest obstacle surface. Negative inside a circle;
// segments contribute their (non-negative) point-to-segment distance.
double min_obstacle_distance(const World& w, const Eigen::Vector2d& p);

double point_segment_distance(const Eigen::Vector2d& p, const Segment& s);

World load_world(const std::string& path);
void save_world(const World& w, const std::string& path);

}  // namespace safenav::sim
