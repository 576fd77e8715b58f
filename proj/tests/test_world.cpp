#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "safenav/world.hpp"

using namespace safenav;
using namespace safenav::sim;

namespace {

World box_world() {
  World w;
  w.bounds = {{0, 0}, {10, 10}};
  w.segments = {{{0, 0}, {10, 0}}, {{10, 0}, {10, 10}}, {{10, 10}, {0, 10}}, {{0, 10}, {0, 0}}};
  return w;
}

}  // namespace

TEST_CASE("ray hits a circle dead ahead at the analytic range") {
  World w;
  w.circles = {{{2.0, 0.0}, 0.5}};
  auto h = cast_ray(w, {0, 0}, 0.0, 10.0);
  CHECK(h.hit);
  CHECK(h.range == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(h.point.x() == doctest::Approx(1.5));
  CHECK(h.point.y() == doctest::Approx(0.0));
}

TEST_CASE("tangent ray grazes the circle") {
  World w;
  w.circles = {{{2.0, 1.0}, 1.0}};
  auto h = cast_ray(w, {0, 0}, 0.0, 10.0);
  CHECK(h.hit);
  CHECK(h.range == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("miss saturates at max range") {
  World w;
  w.circles = {{{0.0, 5.0}, 1.0}};
  auto h = cast_ray(w, {0, 0}, 0.0, 3.5);
  CHECK_FALSE(h.hit);
  CHECK(h.range == 3.5);
}

TEST_CASE("circle behind the origin is ignored") {
  World w;
  w.circles = {{{-3.0, 0.0}, 1.0}};
  auto h = cast_ray(w, {0, 0}, 0.0, 10.0);
  CHECK_FALSE(h.hit);
}

TEST_CASE("ray from inside a circle exits through the boundary") {
  World w;
  w.circles = {{{0.0, 0.0}, 2.0}};
  auto h = cast_ray(w, {0.5, 0.0}, 0.0, 10.0);
  CHECK(h.hit);
  CHECK(h.range == doctest::Approx(1.5));
}

TEST_CASE("ray intersects walls at analytic ranges") {
  World w = box_world();
  auto h = cast_ray(w, {5, 5}, 0.0, 100.0);
  CHECK(h.range == doctest::Approx(5.0));
  h = cast_ray(w, {5, 5}, kPi / 2.0, 100.0);
  CHECK(h.range == doctest::Approx(5.0));
  h = cast_ray(w, {5, 5}, kPi / 4.0, 100.0);
  CHECK(h.range == doctest::Approx(5.0 * std::sqrt(2.0)));
  // parallel to the bottom wall from above: never hits it, exits right wall
  h = cast_ray(w, {2, 1}, 0.0, 100.0);
  CHECK(h.range == doctest::Approx(8.0));
}

TEST_CASE("nearest of several obstacles wins") {
  World w = box_world();
  w.circles = {{{3.0, 5.0}, 0.5}, {{7.0, 5.0}, 0.5}};
  auto h = cast_ray(w, {5, 5}, kPi, 100.0);  // facing the left circle
  CHECK(h.range == doctest::Approx(1.5));
  h = cast_ray(w, {5, 5}, 0.0, 100.0);
  CHECK(h.range == doctest::Approx(1.5));
}

TEST_CASE("segment endpoints count as hits") {
  World w;
  w.segments = {{{2.0, 0.0}, {2.0, 3.0}}};
  auto h = cast_ray(w, {0, 0}, 0.0, 10.0);  // through the endpoint (2,0)
  CHECK(h.hit);
  CHECK(h.range == doctest::Approx(2.0));
}

TEST_CASE("min obstacle distance is signed for circles") {
  World w;
  w.circles = {{{0.0, 0.0}, 1.0}};
  CHECK(min_obstacle_distance(w, {3.0, 0.0}) == doctest::Approx(2.0));
  CHECK(min_obstacle_distance(w, {0.5, 0.0}) == doctest::Approx(-0.5));
  CHECK(min_obstacle_distance(w, {0.0, 0.0}) == doctest::Approx(-1.0));
}

TEST_CASE("point to segment distance handles interior and endpoints") {
  Segment s{{0, 0}, {4, 0}};
  CHECK(point_segment_distance({2, 3}, s) == doctest::Approx(3.0));
  CHECK(point_segment_distance({-3, 4}, s) == doctest::Approx(5.0));
  CHECK(point_segment_distance({6, 0}, s) == doctest::Approx(2.0));
  CHECK(point_segment_distance({2, 0}, s) == doctest::Approx(0.0));
}

TEST_CASE("min obstacle distance mixes circles and walls") {
  World w = box_world();
  w.circles = {{{5.0, 5.0}, 1.0}};
  CHECK(min_obstacle_distance(w, {5.0, 7.5}) == doctest::Approx(1.5));
  CHECK(min_obstacle_distance(w, {5.0, 9.0}) == doctest::Approx(1.0));  // top wall closer
}

TEST_CASE("world json round-trips") {
  World w = box_world();
  w.circles = {{{1.25, 2.5}, 0.4}, {{7.0, 3.0}, 0.55}};
  w.spawn = {1.0, 1.0};
  w.spawn_heading = 0.7;
  w.target = {9.0, 9.0};
  w.accept_radius = 0.25;
  const std::string path = "world_roundtrip_tmp.json";
  save_world(w, path);
  World r = load_world(path);
  std::remove(path.c_str());
  CHECK(r.circles.size() == 2);
  CHECK(r.segments.size() == 4);
  CHECK(r.circles[0].center.x() == doctest::Approx(1.25));
  CHECK(r.circles[1].radius == doctest::Approx(0.55));
  CHECK(r.spawn_heading == doctest::Approx(0.7));
  CHECK(r.target.y() == doctest::Approx(9.0));
  CHECK(r.accept_radius == doctest::Approx(0.25));
  CHECK(r.bounds.hi.x() == doctest::Approx(10.0));
}

TEST_CASE("malformed world files raise parse errors") {
  const std::string path = "world_bad_tmp.json";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"bounds\": {\"lo\": [0,0]}}", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_world(path), ParseError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_world("does_not_exist.json"), ParseError);
}
