#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "safenav/sim.hpp"
#include "safenav/verification.hpp"

namespace safenav::config {

// One enumeration request: the network under analysis, the properties it must
// satisfy, solver options, and the workspace window for the density grid.
struct EnumerationJob {
  std::string network_path;
  std::vector<std::string> property_paths;
  verify::EnumerationConfig options;
  std::vector<int> position_dims{15, 16};
  int density_resolution = 200;
  Eigen::Vector2d density_lo{0.0, 0.0};
  Eigen::Vector2d density_hi{10.0, 10.0};
};

struct ScenarioConfig {
  std::string name = "scenario";
  sim::WorldSpec world = sim::WorldSpec::IndoorCluttered;
  std::uint64_t world_seed = 42;
  sim::StackConfig stack = sim::StackConfig::unicycle_defaults();
  std::string weights_path;   // required when the policy source is a network
  std::string safe_set_path;  // optional enumeration artifact fed to the filter
  EnumerationJob enumeration;
  bool has_enumeration = false;
  int episodes = 100;
  std::uint64_t base_seed = 7;
  int jobs = 0;  // 0 picks the hardware thread count
  std::string output_dir = "out";

  void validate() const;
};

// Parses a scenario file: agent kind selects the default profile, present
// keys overlay it, relative paths resolve against the file's directory, and
// every referenced artifact (weights, safe set, enumeration inputs) must
// exist; the network and safe set are loaded into the stack immediately.
ScenarioConfig load_scenario(const std::string& path);

// Effective configuration with every field explicit; reloading the dump gives
// back an identical configuration.
std::string dump_scenario(const ScenarioConfig& cfg);
void save_scenario(const ScenarioConfig& cfg, const std::string& path);

}  // namespace safenav::config
