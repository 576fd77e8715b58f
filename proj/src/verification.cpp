#include "safenav/verification.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

namespace safenav::verify {

double IntervalBox::volume() const {
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) v *= width(i);
  return v;
}

bool IntervalBox::contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != lo.size()) return false;
  for (int i = 0; i < dim(); ++i) {
    if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
  }
  return true;
}

IntervalBox IntervalBox::make(Eigen::VectorXd lo, Eigen::VectorXd hi) {
  if (lo.size() != hi.size()) throw ConfigError("interval bounds differ in dimension");
  for (int i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) {
      throw ConfigError("interval lower bound exceeds upper bound at dim " + std::to_string(i));
    }
  }
  IntervalBox b;
  b.lo = std::move(lo);
  b.hi = std::move(hi);
  return b;
}

double OutputProperty::margin(const Eigen::VectorXd& a) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& hp : halfplanes) m = std::min(m, hp.c.dot(a) + hp.b);
  return m;
}

namespace {

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

IntervalBox box_from_json(const nlohmann::json& j) {
  return IntervalBox::make(json_vec(j.at("lo")), json_vec(j.at("hi")));
}

nlohmann::json box_to_json(const IntervalBox& b) {
  return {{"lo", vec_json(b.lo)}, {"hi", vec_json(b.hi)}};
}

PropertySpec spec_from_json(const nlohmann::json& j) {
  PropertySpec spec;
  spec.name = j.value("name", "");
  spec.domain = box_from_json(j.at("domain"));
  for (const auto& h : j.at("halfplanes")) {
    Halfplane hp;
    hp.c = json_vec(h.at("c"));
    hp.b = h.at("b").get<double>();
    if (hp.c.size() == 0) throw ParseError("halfplane normal is empty");
    spec.property.halfplanes.push_back(std::move(hp));
  }
  if (spec.property.halfplanes.empty()) throw ParseError("property needs at least one halfplane");
  return spec;
}

nlohmann::json spec_to_json(const PropertySpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["domain"] = box_to_json(spec.domain);
  j["halfplanes"] = nlohmann::json::array();
  for (const auto& hp : spec.property.halfplanes) {
    j["halfplanes"].push_back({{"c", vec_json(hp.c)}, {"b", hp.b}});
  }
  return j;
}

nlohmann::json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ParseError(std::string("cannot open ") + what + " file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid ") + what + " json in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const nlohmann::json& j, const std::string& path, const char* what) {
  std::ofstream out(path);
  if (!out) throw ParseError(std::string("cannot write ") + what + " file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace

PropertySpec load_property(const std::string& path) {
  try {
    return spec_from_json(read_json_file(path, "property"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad property schema in " + path + ": " + e.what());
  }
}

void save_property(const PropertySpec& spec, const std::string& path) {
  write_json_file(spec_to_json(spec), path, "property");
}

std::vector<PropertySpec> load_property_list(const std::string& path) {
  nlohmann::json j = read_json_file(path, "property list");
  std::vector<PropertySpec> specs;
  try {
    if (j.is_array()) {
      for (const auto& e : j) specs.push_back(spec_from_json(e));
    } else {
      specs.push_back(spec_from_json(j));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad property schema in " + path + ": " + e.what());
  }
  return specs;
}

void save_property_list(const std::vector<PropertySpec>& specs, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : specs) j.push_back(spec_to_json(s));
  write_json_file(j, path, "property list");
}

namespace {

void interval_activation(Eigen::VectorXd& lo, Eigen::VectorXd& hi, policy::Activation act) {
  switch (act) {
    case policy::Activation::Relu:
      lo = lo.cwiseMax(0.0);
      hi = hi.cwiseMax(0.0);
      return;
    case policy::Activation::Tanh:
      lo = lo.array().tanh().matrix();
      hi = hi.array().tanh().matrix();
      return;
    case policy::Activation::Linear:
      return;
  }
}

}  // namespace

IntervalBox interval_forward(const policy::PolicyNetwork& net, const IntervalBox& in) {
  if (in.dim() != net.input_dim) {
    throw InvalidStateError("interval dimension " + std::to_string(in.dim()) +
                            " does not match network input " + std::to_string(net.input_dim));
  }
  Eigen::VectorXd lo = in.lo, hi = in.hi;
  if (net.has_normalization()) {
    lo = (lo - net.norm_offset).cwiseQuotient(net.norm_scale);
    hi = (hi - net.norm_offset).cwiseQuotient(net.norm_scale);
  }
  for (const auto& layer : net.layers) {
    const Eigen::MatrixXd Wp = layer.W.cwiseMax(0.0);
    const Eigen::MatrixXd Wn = layer.W.cwiseMin(0.0);
    Eigen::VectorXd nlo = Wp * lo + Wn * hi + layer.b;
    Eigen::VectorXd nhi = Wp * hi + Wn * lo + layer.b;
    interval_activation(nlo, nhi, layer.act);
    lo = std::move(nlo);
    hi = std::move(nhi);
  }
  if (lo.size() != 2) throw InvalidStateError("network head must emit 2 values");
  if (net.output_mode == policy::OutputMode::TanhScaled) {
    auto squash = [](double y, const Eigen::Vector2d& range) {
      return range[0] + 0.5 * (std::tanh(y) + 1.0) * (range[1] - range[0]);
    };
    Eigen::Vector2d olo(squash(lo[0], net.v_range), squash(lo[1], net.w_range));
    Eigen::Vector2d ohi(squash(hi[0], net.v_range), squash(hi[1], net.w_range));
    return IntervalBox::make(olo, ohi);
  }
  return IntervalBox::make(lo.head<2>(), hi.head<2>());
}

BoxCheck check_box(const policy::PolicyNetwork& net, const IntervalBox& box,
                   const OutputProperty& prop, int mc_samples, std::uint64_t seed) {
  if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
  BoxCheck res;
  res.output_bounds = interval_forward(net, box);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& hp : prop.halfplanes) {
    if (hp.c.size() != 2) throw ConfigError("output halfplane must be 2-dimensional");
    double lb = hp.b;
    for (int i = 0; i < 2; ++i) {
      lb += hp.c[i] >= 0.0 ? hp.c[i] * res.output_bounds.lo[i]
                           : hp.c[i] * res.output_bounds.hi[i];
    }
    worst = std::min(worst, lb);
  }
  if (worst >= 0.0) {
    res.verdict = BoxVerdict::CertifiedSafe;
    return res;
  }
  Rng rng(seed);
  Eigen::VectorXd x(box.dim());
  int violations = 0;
  for (int s = 0; s < mc_samples; ++s) {
    for (int i = 0; i < box.dim(); ++i) x[i] = box.lo[i] + rng.uniform() * box.width(i);
    if (prop.margin(net.forward(x)) < 0.0) {
      if (violations == 0) res.counterexample = x;
      ++violations;
    }
  }
  res.violation_rate = static_cast<double>(violations) / mc_samples;
  res.verdict = violations > 0 ? BoxVerdict::CounterexampleFound : BoxVerdict::Unknown;
  return res;
}

namespace {

void run_indexed(int jobs, size_t n, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<size_t>(jobs, n));
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

bool leaf_less(const Leaf& a, const Leaf& b) {
  for (int i = 0; i < a.box.dim(); ++i) {
    if (a.box.lo[i] != b.box.lo[i]) return a.box.lo[i] < b.box.lo[i];
  }
  for (int i = 0; i < a.box.dim(); ++i) {
    if (a.box.hi[i] != b.box.hi[i]) return a.box.hi[i] < b.box.hi[i];
  }
  return false;
}

}  // namespace

EnumerationResult enumerate_unsafe(const policy::PolicyNetwork& net, const IntervalBox& root,
                                   const OutputProperty& prop, const EnumerationConfig& cfg) {
  if (cfg.min_width <= 0.0) throw ConfigError("min_width must be positive");
  if (cfg.max_leaves < 1) throw ConfigError("max_leaves must be >= 1");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");

  EnumerationResult result;
  result.root = root;
  result.mc_samples = cfg.mc_samples;
  const Eigen::VectorXd root_width = root.hi - root.lo;

  struct Node {
    IntervalBox box;
    std::uint64_t key;
  };
  std::vector<Node> frontier;
  frontier.push_back({root, mix_seed(cfg.seed, 1)});

  const size_t max_leaves = static_cast<size_t>(cfg.max_leaves);
  while (!frontier.empty()) {
    std::vector<BoxCheck> checks(frontier.size());
    run_indexed(cfg.jobs, frontier.size(), [&](size_t i) {
      checks[i] = check_box(net, frontier[i].box, prop, cfg.mc_samples, frontier[i].key);
    });
    result.boxes_checked += static_cast<long>(frontier.size());

    std::vector<Node> next;
    for (size_t i = 0; i < frontier.size(); ++i) {
      Node& node = frontier[i];
      const BoxCheck& chk = checks[i];
      if (chk.verdict == BoxVerdict::CertifiedSafe) {
        Leaf leaf;
        leaf.box = std::move(node.box);
        leaf.kind = LeafKind::Safe;
        result.leaves.push_back(std::move(leaf));
        continue;
      }
      int split_dim = -1;
      double widest = 0.0;
      for (int d = 0; d < root.dim(); ++d) {
        if (root_width[d] <= 0.0) continue;
        const double nw = node.box.width(d) / root_width[d];
        if (nw > widest) {
          widest = nw;
          split_dim = d;
        }
      }
      const bool splittable = split_dim >= 0 && widest > cfg.min_width * (1.0 + 1e-12);
      // every outstanding node yields at least one leaf; a split adds one more
      const size_t outstanding =
          result.leaves.size() + next.size() + (frontier.size() - i);
      const bool budget_ok = outstanding + 1 <= max_leaves;
      if (splittable && budget_ok) {
        ++result.splits;
        const double mid = 0.5 * (node.box.lo[split_dim] + node.box.hi[split_dim]);
        Node left{node.box, mix_seed(node.key, 2)};
        left.box.hi[split_dim] = mid;
        Node right{std::move(node.box), mix_seed(node.key, 3)};
        right.box.lo[split_dim] = mid;
        next.push_back(std::move(left));
        next.push_back(std::move(right));
      } else {
        Leaf leaf;
        leaf.box = std::move(node.box);
        leaf.kind = LeafKind::Unsafe;
        leaf.violation_rate = chk.violation_rate;
        if (chk.counterexample.size() > 0) {
          leaf.has_counterexample = true;
          leaf.counterexample = chk.counterexample;
        }
        if (splittable && !budget_ok) {
          leaf.pending = true;
          result.complete = false;
        }
        result.leaves.push_back(std::move(leaf));
      }
    }
    frontier = std::move(next);
  }
  std::sort(result.leaves.begin(), result.leaves.end(), leaf_less);
  return result;
}

double EnumerationResult::unsafe_volume() const {
  double v = 0.0;
  for (const auto& l : leaves) {
    if (l.kind == LeafKind::Unsafe) v += l.box.volume();
  }
  return v;
}

double EnumerationResult::safe_volume() const {
  double v = 0.0;
  for (const auto& l : leaves) {
    if (l.kind == LeafKind::Safe) v += l.box.volume();
  }
  return v;
}

void save_enumeration(const EnumerationResult& result, const std::string& path) {
  nlohmann::json j;
  j["root"] = box_to_json(result.root);
  j["complete"] = result.complete;
  j["boxes_checked"] = result.boxes_checked;
  j["splits"] = result.splits;
  j["mc_samples"] = result.mc_samples;
  j["leaves"] = nlohmann::json::array();
  for (const auto& l : result.leaves) {
    nlohmann::json lj;
    lj["lo"] = vec_json(l.box.lo);
    lj["hi"] = vec_json(l.box.hi);
    lj["kind"] = l.kind == LeafKind::Safe ? "safe" : "unsafe";
    lj["violation_rate"] = l.violation_rate;
    lj["pending"] = l.pending;
    if (l.has_counterexample) lj["counterexample"] = vec_json(l.counterexample);
    j["leaves"].push_back(std::move(lj));
  }
  write_json_file(j, path, "enumeration");
}

EnumerationResult load_enumeration(const std::string& path) {
  nlohmann::json j = read_json_file(path, "enumeration");
  EnumerationResult result;
  try {
    result.root = box_from_json(j.at("root"));
    result.complete = j.at("complete").get<bool>();
    result.boxes_checked = j.value("boxes_checked", 0L);
    result.splits = j.value("splits", 0L);
    result.mc_samples = j.value("mc_samples", 0);
    for (const auto& lj : j.at("leaves")) {
      Leaf l;
      l.box = IntervalBox::make(json_vec(lj.at("lo")), json_vec(lj.at("hi")));
      l.kind = lj.at("kind").get<std::string>() == "safe" ? LeafKind::Safe : LeafKind::Unsafe;
      l.violation_rate = lj.value("violation_rate", 0.0);
      l.pending = lj.value("pending", false);
      if (lj.contains("counterexample")) {
        l.counterexample = json_vec(lj["counterexample"]);
        l.has_counterexample = true;
      }
      result.leaves.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad enumeration schema in " + path + ": " + e.what());
  }
  return result;
}

SafeSet build_safe_set(const std::vector<EnumerationResult>& results,
                       std::vector<int> position_dims) {
  SafeSet set;
  set.position_dims = std::move(position_dims);
  for (const auto& r : results) {
    SafeSetEntry entry;
    entry.root = r.root;
    entry.complete = r.complete;
    for (const auto& l : r.leaves) {
      if (l.kind == LeafKind::Unsafe) entry.unsafe.push_back({l.box, l.violation_rate});
    }
    for (int d : set.position_dims) {
      if (d < 0 || d >= r.root.dim()) {
        throw ConfigError("position dim " + std::to_string(d) + " outside enumeration domain");
      }
    }
    set.entries.push_back(std::move(entry));
  }
  return set;
}

bool SafeSet::in_unsafe(const Eigen::VectorXd& obs) const {
  for (const auto& e : entries) {
    for (const auto& u : e.unsafe) {
      if (u.box.contains(obs)) return true;
    }
  }
  return false;
}

bool SafeSet::member(const Eigen::VectorXd& obs) const {
  bool in_domain = false;
  for (const auto& e : entries) {
    if (e.root.contains(obs)) {
      in_domain = true;
      break;
    }
  }
  return in_domain && !in_unsafe(obs);
}

void save_safe_set(const SafeSet& set, const std::string& path) {
  nlohmann::json j;
  j["position_dims"] = set.position_dims;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : set.entries) {
    nlohmann::json ej;
    ej["root"] = box_to_json(e.root);
    ej["complete"] = e.complete;
    ej["unsafe"] = nlohmann::json::array();
    for (const auto& u : e.unsafe) {
      ej["unsafe"].push_back(
          {{"lo", vec_json(u.box.lo)}, {"hi", vec_json(u.box.hi)},
           {"violation_rate", u.violation_rate}});
    }
    j["entries"].push_back(std::move(ej));
  }
  write_json_file(j, path, "safe set");
}

SafeSet load_safe_set(const std::string& path) {
  nlohmann::json j = read_json_file(path, "safe set");
  SafeSet set;
  try {
    set.position_dims = j.at("position_dims").get<std::vector<int>>();
    for (const auto& ej : j.at("entries")) {
      SafeSetEntry e;
      e.root = box_from_json(ej.at("root"));
      e.complete = ej.value("complete", true);
      for (const auto& uj : ej.at("unsafe")) {
        e.unsafe.push_back({IntervalBox::make(json_vec(uj.at("lo")), json_vec(uj.at("hi"))),
                            uj.value("violation_rate", 0.0)});
      }
      set.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad safe set schema in " + path + ": " + e.what());
  }
  return set;
}

std::vector<RegionMatch> match_unsafe_regions(const Eigen::VectorXd& obs, const SafeSet& set,
                                              double look_radius) {
  const int pd = static_cast<int>(set.position_dims.size());
  Eigen::VectorXd pos(pd);
  for (int i = 0; i < pd; ++i) {
    const int d = set.position_dims[i];
    if (d < 0 || d >= obs.size()) {
      throw InvalidStateError("position dim " + std::to_string(d) + " outside observation");
    }
    pos[i] = obs[d];
  }
  std::vector<RegionMatch> matches;
  for (const auto& e : set.entries) {
    for (const auto& u : e.unsafe) {
      Eigen::VectorXd c = u.box.center();
      Eigen::VectorXd p(pd);
      for (int i = 0; i < pd; ++i) p[i] = c[set.position_dims[i]];
      const double dist = (pos - p).norm();
      if (dist <= look_radius) matches.push_back({p, dist, u.violation_rate});
    }
  }
  std::stable_sort(matches.begin(), matches.end(),
                   [](const RegionMatch& a, const RegionMatch& b) { return a.distance < b.distance; });
  return matches;
}

DensityMap density_map(const SafeSet& set, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                       int resolution) {
  if (resolution < 1) throw ConfigError("density map resolution must be >= 1");
  if (set.position_dims.size() < 2) {
    throw ConfigError("density map needs at least two position dims");
  }
  DensityMap map;
  map.lo = lo;
  map.hi = hi;
  map.resolution = resolution;
  map.mass = Eigen::MatrixXd::Zero(resolution, resolution);
  const double cw = (hi.x() - lo.x()) / resolution;
  const double ch = (hi.y() - lo.y()) / resolution;
  if (cw <= 0.0 || ch <= 0.0) throw ConfigError("density map bounds are degenerate");
  const int dx = set.position_dims[0], dy = set.position_dims[1];
  for (const auto& e : set.entries) {
    for (const auto& u : e.unsafe) {
      const double bx0 = u.box.lo[dx], bx1 = u.box.hi[dx];
      const double by0 = u.box.lo[dy], by1 = u.box.hi[dy];
      const int ix0 = std::max(0, static_cast<int>(std::floor((bx0 - lo.x()) / cw)));
      const int ix1 = std::min(resolution - 1, static_cast<int>(std::floor((bx1 - lo.x()) / cw)));
      const int iy0 = std::max(0, static_cast<int>(std::floor((by0 - lo.y()) / ch)));
      const int iy1 = std::min(resolution - 1, static_cast<int>(std::floor((by1 - lo.y()) / ch)));
      for (int ix = ix0; ix <= ix1; ++ix) {
        const double cx0 = lo.x() + ix * cw, cx1 = cx0 + cw;
        const double ow = std::min(bx1, cx1) - std::max(bx0, cx0);
        if (ow <= 0.0) continue;
        for (int iy = iy0; iy <= iy1; ++iy) {
          const double cy0 = lo.y() + iy * ch, cy1 = cy0 + ch;
          const double oh = std::min(by1, cy1) - std::max(by0, cy0);
          if (oh <= 0.0) continue;
          map.mass(ix, iy) += (ow * oh) / (cw * ch) * u.violation_rate;
        }
      }
    }
  }
  return map;
}

void save_density_map(const DensityMap& map, const std::string& path) {
  nlohmann::json j;
  j["lo"] = {map.lo.x(), map.lo.y()};
  j["hi"] = {map.hi.x(), map.hi.y()};
  j["resolution"] = map.resolution;
  j["mass"] = nlohmann::json::array();
  for (int ix = 0; ix < map.resolution; ++ix) {
    nlohmann::json row = nlohmann::json::array();
    for (int iy = 0; iy < map.resolution; ++iy) row.push_back(map.mass(ix, iy));
    j["mass"].push_back(std::move(row));
  }
  write_json_file(j, path, "density map");
}

std::vector<PropertySpec> harvest_unsafe_pairs(const std::vector<sim::EpisodeLog>& logs,
                                               const HarvestConfig& cfg) {
  if (cfg.epsilon <= 0.0) throw ConfigError("harvest epsilon must be positive");
  if (cfg.domain.dim() == 0) throw ConfigError("harvest domain is unset");
  std::vector<PropertySpec> specs;
  for (const auto& log : logs) {
    if (log.outcome != sim::Outcome::Collision) continue;
    // the collision record, or the last one
    int hit = static_cast<int>(log.records.size()) - 1;
    for (int i = 0; i < static_cast<int>(log.records.size()); ++i) {
      if (log.records[i].events & sim::kEventCollision) {
        hit = i;
        break;
      }
    }
    for (int back = 1; back <= cfg.lead_steps; ++back) {
      const int idx = hit - back;
      if (idx < 0) break;
      const auto& rec = log.records[idx];
      if (rec.observation.size() != cfg.domain.dim()) continue;

      Eigen::VectorXd lo = rec.observation.array() - cfg.epsilon;
      Eigen::VectorXd hi = rec.observation.array() + cfg.epsilon;
      bool empty = false;
      for (int d = 0; d < lo.size(); ++d) {
        lo[d] = std::max(lo[d], cfg.domain.lo[d]);
        hi[d] = std::min(hi[d], cfg.domain.hi[d]);
        if (lo[d] > hi[d]) {
          empty = true;
          break;
        }
      }
      if (empty) continue;

      bool frontal = false, left = false, right = false;
      for (int i = 0; i < policy::kNumBeams; ++i) {
        if (rec.observation[i] >= cfg.d_block) continue;
        const double center = wrap_angle((i + 0.5) * policy::kConeWidth);
        if (std::abs(center) <= cfg.frontal_half_angle) {
          frontal = true;
        } else if (center > 0.0) {
          left = true;
        } else {
          right = true;
        }
      }
      OutputProperty prop;
      if (frontal) prop.halfplanes.push_back({Eigen::Vector2d(-1.0, 0.0), cfg.v_slow});
      if (left) prop.halfplanes.push_back({Eigen::Vector2d(0.0, -1.0), 0.0});
      if (right) prop.halfplanes.push_back({Eigen::Vector2d(0.0, 1.0), 0.0});
      if (prop.halfplanes.empty()) continue;

      PropertySpec spec;
      spec.name = "collision_seed" + std::to_string(log.seed) + "_step" + std::to_string(idx);
      spec.domain = IntervalBox::make(std::move(lo), std::move(hi));
      spec.property = std::move(prop);
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

}  // namespace safenav::verify
