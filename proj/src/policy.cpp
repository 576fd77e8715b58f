#include "safenav/policy.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace safenav::policy {

BeamScan scan_beams(const sim::World& w, const Eigen::Vector2d& pos, double heading,
                    const SensorConfig& cfg, Rng* noise) {
  if (cfg.rays_per_cone < 1) throw ConfigError("rays_per_cone must be >= 1");
  BeamScan scan;
  scan.cone_values.resize(kNumBeams);
  scan.cone_nearest.assign(kNumBeams, {});
  scan.rays.reserve(kNumBeams * cfg.rays_per_cone);
  scan.ray_angles.reserve(kNumBeams * cfg.rays_per_cone);
  const double ray_step = kConeWidth / cfg.rays_per_cone;
  double best_range = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kNumBeams; ++i) {
    double sum = 0.0;
    double cone_best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < cfg.rays_per_cone; ++j) {
      const double offset = i * kConeWidth + (j + 0.5) * ray_step;
      const double angle = wrap_angle(heading + offset);
      sim::RayHit hit = cast_ray(w, pos, angle, cfg.max_range);
      if (noise && cfg.range_noise_sigma > 0.0) {
        hit.range = clamp(hit.range + noise->gaussian(0.0, cfg.range_noise_sigma), 0.0,
                          cfg.max_range);
        hit.point = pos + hit.range * Eigen::Vector2d(std::cos(angle), std::sin(angle));
      }
      sum += hit.range;
      if (hit.hit && hit.range < cone_best) {
        cone_best = hit.range;
        scan.cone_nearest[i] = hit;
      }
      if (hit.hit && hit.range < best_range) {
        best_range = hit.range;
        scan.nearest_ray = static_cast<int>(scan.rays.size());
      }
      scan.rays.push_back(hit);
      scan.ray_angles.push_back(angle);
    }
    scan.cone_values[i] = sum / cfg.rays_per_cone;
  }
  return scan;
}

ObservationVector build_observation(const sim::World& w, const AgentState& agent,
                                    const BeamScan& scan) {
  ObservationVector obs;
  obs.kind = agent.kind;
  obs.values.resize(ObservationVector::dim_for(agent.kind));
  obs.values.head(kNumBeams) = scan.cone_values;
  const Eigen::Vector2d pos = agent.position2d();
  const Eigen::Vector2d to_target = w.target - pos;
  const double bearing = wrap_angle(std::atan2(to_target.y(), to_target.x()) - agent.heading());
  if (agent.kind == AgentKind::Unicycle) {
    obs.values[15] = agent.uni.px;
    obs.values[16] = agent.uni.py;
    obs.values[17] = agent.uni.theta;
    obs.values[18] = to_target.norm();
    obs.values[19] = bearing;
  } else {
    obs.values[15] = agent.boat.px;
    obs.values[16] = agent.boat.py;
    obs.values[17] = agent.boat.pz;
    obs.values[18] = agent.boat.phi;
    obs.values[19] = agent.boat.theta;
    obs.values[20] = agent.boat.psi;
    obs.values[21] = to_target.norm();
    obs.values[22] = bearing;
  }
  return obs;
}

ObservationVector build_observation(const sim::World& w, const AgentState& agent,
                                    const SensorConfig& cfg, Rng* noise) {
  return build_observation(w, agent, scan_beams(w, agent.position2d(), agent.heading(), cfg, noise));
}

namespace {

Eigen::VectorXd apply_activation(const Eigen::VectorXd& x, Activation act) {
  switch (act) {
    case Activation::Relu:
      return x.cwiseMax(0.0);
    case Activation::Tanh:
      return x.array().tanh().matrix();
    case Activation::Linear:
      return x;
  }
  throw InvalidStateError("unknown activation");
}

}  // namespace

Eigen::Vector2d PolicyNetwork::forward_raw(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim) {
    throw InvalidStateError("input dimension " + std::to_string(x.size()) + " does not match " +
                            std::to_string(input_dim));
  }
  Eigen::VectorXd h = x;
  if (has_normalization()) {
    h = (h - norm_offset).cwiseQuotient(norm_scale);
  }
  for (const auto& layer : layers) {
    h = apply_activation(layer.W * h + layer.b, layer.act);
  }
  if (h.size() != 2) throw InvalidStateError("network head must emit 2 values");
  return h;
}

Eigen::Vector2d PolicyNetwork::forward(const Eigen::VectorXd& x) const {
  Eigen::Vector2d y = forward_raw(x);
  if (output_mode == OutputMode::Linear) return y;
  const double sv = 0.5 * (std::tanh(y[0]) + 1.0);
  const double sw = 0.5 * (std::tanh(y[1]) + 1.0);
  return {v_range[0] + sv * (v_range[1] - v_range[0]),
          w_range[0] + sw * (w_range[1] - w_range[0])};
}

dynamics::ReferenceCommand PolicyNetwork::act(const ObservationVector& obs) const {
  Eigen::Vector2d y = forward(obs.values);
  return {y[0], y[1]};
}

namespace {

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw ParseError("unknown activation: " + s);
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Linear:
      return "linear";
  }
  return "linear";
}

}  // namespace

PolicyNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid network json in " + path + ": " + e.what());
  }
  PolicyNetwork net;
  try {
    net.input_dim = j.at("input_dim").get<int>();
    if (net.input_dim <= 0) throw ParseError("input_dim must be positive");
    const auto& out = j.at("output");
    const std::string mode = out.at("mode").get<std::string>();
    if (mode == "tanh") {
      net.output_mode = OutputMode::TanhScaled;
    } else if (mode == "linear") {
      net.output_mode = OutputMode::Linear;
    } else {
      throw ParseError("unknown output mode: " + mode);
    }
    if (out.contains("v_range")) {
      net.v_range = {out["v_range"][0].get<double>(), out["v_range"][1].get<double>()};
    }
    if (out.contains("w_range")) {
      net.w_range = {out["w_range"][0].get<double>(), out["w_range"][1].get<double>()};
    }
    if (net.v_range[0] > net.v_range[1] || net.w_range[0] > net.w_range[1]) {
      throw ParseError("output ranges must be ordered");
    }
    if (j.contains("normalization")) {
      const auto& n = j["normalization"];
      const auto& off = n.at("offset");
      const auto& sc = n.at("scale");
      if (static_cast<int>(off.size()) != net.input_dim ||
          static_cast<int>(sc.size()) != net.input_dim) {
        throw ParseError("normalization length must match input_dim");
      }
      net.norm_offset.resize(net.input_dim);
      net.norm_scale.resize(net.input_dim);
      for (int i = 0; i < net.input_dim; ++i) {
        net.norm_offset[i] = off[i].get<double>();
        net.norm_scale[i] = sc[i].get<double>();
        if (!(net.norm_scale[i] > 0.0)) throw ParseError("normalization scale must be positive");
      }
    }
    int prev = net.input_dim;
    for (const auto& lj : j.at("layers")) {
      Layer layer;
      const auto& wj = lj.at("weights");
      const int rows = static_cast<int>(wj.size());
      if (rows == 0) throw ParseError("empty weight matrix");
      const int cols = static_cast<int>(wj[0].size());
      if (cols != prev) {
        throw ParseError("layer expects " + std::to_string(cols) + " inputs, got " +
                         std::to_string(prev));
      }
      layer.W.resize(rows, cols);
      for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(wj[r].size()) != cols) throw ParseError("ragged weight matrix");
        for (int c = 0; c < cols; ++c) layer.W(r, c) = wj[r][c].get<double>();
      }
      const auto& bj = lj.at("bias");
      if (static_cast<int>(bj.size()) != rows) throw ParseError("bias length mismatch");
      layer.b.resize(rows);
      for (int r = 0; r < rows; ++r) layer.b[r] = bj[r].get<double>();
      layer.act = parse_activation(lj.at("activation").get<std::string>());
      if (!layer.W.allFinite() || !layer.b.allFinite()) {
        throw ParseError("non-finite network weights");
      }
      net.layers.push_back(std::move(layer));
      prev = rows;
    }
    if (net.layers.empty()) throw ParseError("network needs at least one layer");
    if (prev != 2) throw ParseError("final layer must emit 2 outputs");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad network schema in " + path + ": " + e.what());
  }
  return net;
}

void save_network(const PolicyNetwork& net, const std::string& path) {
  nlohmann::json j;
  j["input_dim"] = net.input_dim;
  j["output"]["mode"] = net.output_mode == OutputMode::TanhScaled ? "tanh" : "linear";
  j["output"]["v_range"] = {net.v_range[0], net.v_range[1]};
  j["output"]["w_range"] = {net.w_range[0], net.w_range[1]};
  if (net.has_normalization()) {
    j["normalization"]["offset"] = std::vector<double>(
        net.norm_offset.data(), net.norm_offset.data() + net.norm_offset.size());
    j["normalization"]["scale"] = std::vector<double>(
        net.norm_scale.data(), net.norm_scale.data() + net.norm_scale.size());
  }
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    nlohmann::json lj;
    lj["weights"] = nlohmann::json::array();
    for (int r = 0; r < layer.W.rows(); ++r) {
      std::vector<double> row(layer.W.cols());
      for (int c = 0; c < layer.W.cols(); ++c) row[c] = layer.W(r, c);
      lj["weights"].push_back(row);
    }
    lj["bias"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
    lj["activation"] = activation_name(layer.act);
    j["layers"].push_back(lj);
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write network file: " + path);
  out << j.dump(2) << "\n";
}

dynamics::ReferenceCommand ScriptedPolicy::act(const ObservationVector& obs) {
  const double bearing = obs.target_heading();
  double v = cfg_.v_max * std::max(0.0, std::cos(bearing));
  double w = clamp(cfg_.heading_gain * bearing, -cfg_.w_max, cfg_.w_max);
  if (cfg_.kind == ScriptedKind::NoisyGoalSeeker) {
    v += rng_.gaussian(0.0, cfg_.noise_v);
    w += rng_.gaussian(0.0, cfg_.noise_w);
  }
  return {clamp(v, 0.0, cfg_.v_max), clamp(w, -cfg_.w_max, cfg_.w_max)};
}

}  // namespace safenav::policy
