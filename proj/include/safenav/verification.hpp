#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "safenav/policy.hpp"
#include "safenav/trajlog.hpp"
#include "safenav/world.hpp"

namespace safenav::verify {

struct IntervalBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double width(int i) const { return hi[i] - lo[i]; }
  Eigen::VectorXd center() const { return 0.5 * (lo + hi); }
  double volume() const;
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;

  // validates lo <= hi componentwise
  static IntervalBox make(Eigen::VectorXd lo, Eigen::VectorXd hi);
};

// Safe iff c . a + b >= 0 for the network output a.
struct Halfplane {
  Eigen::VectorXd c;
  double b = 0.0;
};

struct OutputProperty {
  std::vector<Halfplane> halfplanes;

  double margin(const Eigen::VectorXd& a) const;  // min over halfplanes
  bool satisfied(const Eigen::VectorXd& a) const { return margin(a) >= 0.0; }
};

// Input region paired with the behavior required on it.
struct PropertySpec {
  std::string name;
  IntervalBox domain;
  OutputProperty property;
};

PropertySpec load_property(const std::string& path);
void save_property(const PropertySpec& spec, const std::string& path);
std::vector<PropertySpec> load_property_list(const std::string& path);
void save_property_list(const std::vector<PropertySpec>& specs, const std::string& path);

// Interval bound propagation: positive/negative weight split through affine
// layers, monotone activations on endpoints, output head on endpoints.
// Sound (encloses every concrete output) but not tight under cancellation.
IntervalBox interval_forward(const policy::PolicyNetwork& net, const IntervalBox& in);

enum class BoxVerdict { CertifiedSafe, CounterexampleFound, Unknown };

struct BoxCheck {
  BoxVerdict verdict = BoxVerdict::Unknown;
  IntervalBox output_bounds;
  double violation_rate = 0.0;         // fraction of MC samples violating
  Eigen::VectorXd counterexample;      // first violating sample, if any
};

// Certify via interval bounds; otherwise Monte-Carlo sample the box.
BoxCheck check_box(const policy::PolicyNetwork& net, const IntervalBox& box,
                   const OutputProperty& prop, int mc_samples, std::uint64_t seed);

struct EnumerationConfig {
  double min_width = 1.0 / 64.0;  // relative to root width per dimension
  int max_leaves = 4096;
  int mc_samples = 256;
  std::uint64_t seed = 0;
  int jobs = 1;
};

enum class LeafKind { Safe, Unsafe };

struct Leaf {
  IntervalBox box;
  LeafKind kind = LeafKind::Unsafe;
  double violation_rate = 0.0;
  bool has_counterexample = false;
  Eigen::VectorXd counterexample;
  bool pending = false;  // frontier box flushed by the leaf budget
};

struct EnumerationResult {
  IntervalBox root;
  std::vector<Leaf> leaves;  // sorted lexicographically, partitions root
  bool complete = true;
  long boxes_checked = 0;
  long splits = 0;
  int mc_samples = 0;

  double unsafe_volume() const;
  double safe_volume() const;
};

// Branch-and-bound refinement of the unsafe region. Certified boxes become
// safe leaves; boxes at min_width stay unsafe (conservative direction). The
// wave-parallel expansion keeps results byte-identical across job counts.
EnumerationResult enumerate_unsafe(const policy::PolicyNetwork& net, const IntervalBox& root,
                                   const OutputProperty& prop, const EnumerationConfig& cfg);

void save_enumeration(const EnumerationResult& result, const std::string& path);
EnumerationResult load_enumeration(const std::string& path);

struct UnsafeBox {
  IntervalBox box;
  double violation_rate = 0.0;
};

struct SafeSetEntry {
  IntervalBox root;
  std::vector<UnsafeBox> unsafe;
  bool complete = true;
};

// Union of enumerated domains minus their unsafe boxes; position_dims name
// the observation indices that carry workspace coordinates.
struct SafeSet {
  std::vector<SafeSetEntry> entries;
  std::vector<int> position_dims;

  bool in_unsafe(const Eigen::VectorXd& obs) const;
  // inside some enumerated domain and outside every unsafe box
  bool member(const Eigen::VectorXd& obs) const;
};

SafeSet build_safe_set(const std::vector<EnumerationResult>& results,
                       std::vector<int> position_dims);
void save_safe_set(const SafeSet& set, const std::string& path);
SafeSet load_safe_set(const std::string& path);

struct RegionMatch {
  Eigen::VectorXd p_area;  // unsafe-box centroid restricted to position dims
  double distance = 0.0;
  double violation_rate = 0.0;
};

// Unsafe boxes whose position centroid lies within look_radius of the
// observation's own position, nearest first.
std::vector<RegionMatch> match_unsafe_regions(const Eigen::VectorXd& obs, const SafeSet& set,
                                              double look_radius);

struct DensityMap {
  Eigen::Vector2d lo{0, 0};
  Eigen::Vector2d hi{0, 0};
  int resolution = 0;          // cells per axis
  Eigen::MatrixXd mass;        // [ix, iy]: overlap-fraction sum weighted by violation rate
};

DensityMap density_map(const SafeSet& set, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                       int resolution);
void save_density_map(const DensityMap& map, const std::string& path);

struct HarvestConfig {
  double epsilon = 0.25;      // half-width of the harvested observation box
  double d_block = 1.0;       // a cone reading below this marks an obstruction
  double v_slow = 0.1;        // speed cap demanded under frontal obstruction
  double frontal_half_angle = deg2rad(36.0);
  int lead_steps = 3;         // records taken before the collision step
  IntervalBox domain;         // harvested boxes are clamped into this
};

// Mines (input box, required behavior) pairs from collision logs: the box is
// an epsilon-neighborhood of the pre-collision observation, the property is
// the obstruction heuristic (frontal: slow down; side: do not steer into it).
std::vector<PropertySpec> harvest_unsafe_pairs(const std::vector<sim::EpisodeLog>& logs,
                                               const HarvestConfig& cfg);

}  // namespace safenav::verify
