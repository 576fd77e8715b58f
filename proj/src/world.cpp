#include "safenav/world.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace safenav::sim {

namespace {

// smallest t >= 0 with |o + t d - c| = r, or negative when none
double ray_circle(const Eigen::Vector2d& o, const Eigen::Vector2d& d, const Circle& c) {
  const Eigen::Vector2d oc = o - c.center;
  const double b = 2.0 * d.dot(oc);
  const double cc = oc.squaredNorm() - c.radius * c.radius;
  const double disc = b * b - 4.0 * cc;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / 2.0;
  if (t0 >= 0.0) return t0;
  const double t1 = (-b + sq) / 2.0;
  if (t1 >= 0.0) return t1;
  return -1.0;
}

double ray_segment(const Eigen::Vector2d& o, const Eigen::Vector2d& d, const Segment& s) {
  const Eigen::Vector2d e = s.b - s.a;
  const double denom = d.x() * e.y() - d.y() * e.x();
  if (std::abs(denom) < 1e-12) return -1.0;  // parallel (collinear overlap ignored)
  const Eigen::Vector2d ao = s.a - o;
  const double t = (ao.x() * e.y() - ao.y() * e.x()) / denom;
  const double u = (ao.x() * d.y() - ao.y() * d.x()) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return -1.0;
  return t;
}

}  // namespace

RayHit cast_ray(const World& w, const Eigen::Vector2d& origin, double angle, double max_range) {
  const Eigen::Vector2d d(std::cos(angle), std::sin(angle));
  double best = max_range;
  bool hit = false;
  for (const auto& c : w.circles) {
    double t = ray_circle(origin, d, c);
    if (t >= 0.0 && t < best) {
      best = t;
      hit = true;
    }
  }
  for (const auto& s : w.segments) {
    double t = ray_segment(origin, d, s);
    if (t >= 0.0 && t < best) {
      best = t;
      hit = true;
    }
  }
  return {hit, best, origin + best * d};
}

double point_segment_distance(const Eigen::Vector2d& p, const Segment& s) {
  const Eigen::Vector2d e = s.b - s.a;
  const double len2 = e.squaredNorm();
  if (len2 < 1e-24) return (p - s.a).norm();
  const double u = clamp((p - s.a).dot(e) / len2, 0.0, 1.0);
  return (p - (s.a + u * e)).norm();
}

double min_obstacle_distance(const World& w, const Eigen::Vector2d& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : w.circles) best = std::min(best, (p - c.center).norm() - c.radius);
  for (const auto& s : w.segments) best = std::min(best, point_segment_distance(p, s));
  return best;
}

namespace {

Eigen::Vector2d vec2(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json to_json(const Eigen::Vector2d& v) { return {v.x(), v.y()}; }

}  // namespace

World load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open world file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid world json in " + path + ": " + e.what());
  }
  World w;
  try {
    w.bounds.lo = vec2(j.at("bounds").at("lo"));
    w.bounds.hi = vec2(j.at("bounds").at("hi"));
    for (const auto& c : j.value("circles", nlohmann::json::array())) {
      Circle cc;
      cc.center = vec2(c.at("center"));
      cc.radius = c.at("radius").get<double>();
      if (cc.radius <= 0.0) throw ParseError("circle radius must be positive");
      w.circles.push_back(cc);
    }
    for (const auto& s : j.value("segments", nlohmann::json::array())) {
      w.segments.push_back({vec2(s.at("a")), vec2(s.at("b"))});
    }
    w.spawn = vec2(j.at("spawn"));
    w.spawn_heading = j.value("spawn_heading", 0.0);
    w.target = vec2(j.at("target"));
    w.accept_radius = j.value("accept_radius", 0.3);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad world schema in " + path + ": " + e.what());
  }
  return w;
}

void save_world(const World& w, const std::string& path) {
  nlohmann::json j;
  j["bounds"] = {{"lo", to_json(w.bounds.lo)}, {"hi", to_json(w.bounds.hi)}};
  j["circles"] = nlohmann::json::array();
  for (const auto& c : w.circles) {
    j["circles"].push_back({{"center", to_json(c.center)}, {"radius", c.radius}});
  }
  j["segments"] = nlohmann::json::array();
  for (const auto& s : w.segments) {
    j["segments"].push_back({{"a", to_json(s.a)}, {"b", to_json(s.b)}});
  }
  j["spawn"] = to_json(w.spawn);
  j["spawn_heading"] = w.spawn_heading;
  j["target"] = to_json(w.target);
  j["accept_radius"] = w.accept_radius;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write world file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace safenav::sim
