#include "safenav/config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>

#include <json.hpp>

namespace safenav::config {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void check_keys(const ordered_json& j, const char* block,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key '" + it.key() + "' in " + block);
    }
  }
}

Eigen::Vector2d vec2(const ordered_json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(std::string(what) + " must be a 2-element array");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string resolve(const std::string& path, const fs::path& base) {
  if (path.empty()) return path;
  fs::path p(path);
  return p.is_absolute() ? p.lexically_normal().string()
                         : (base / p).lexically_normal().string();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) {
    throw ConfigError(std::string(what) + " file does not exist: " + path);
  }
}

policy::AgentKind agent_kind_from_name(const std::string& s) {
  if (s == "unicycle") return policy::AgentKind::Unicycle;
  if (s == "boat") return policy::AgentKind::Boat;
  throw ConfigError("unknown agent kind: " + s);
}

std::string agent_kind_name(policy::AgentKind k) {
  return k == policy::AgentKind::Unicycle ? "unicycle" : "boat";
}

policy::ScriptedKind scripted_from_name(const std::string& s) {
  if (s == "goal_seeker") return policy::ScriptedKind::GoalSeeker;
  if (s == "noisy_goal_seeker") return policy::ScriptedKind::NoisyGoalSeeker;
  throw ConfigError("unknown scripted policy: " + s);
}

std::string scripted_name(policy::ScriptedKind k) {
  return k == policy::ScriptedKind::GoalSeeker ? "goal_seeker" : "noisy_goal_seeker";
}

cbf::DSafeMode d_safe_mode_from_name(const std::string& s) {
  if (s == "squared_distance") return cbf::DSafeMode::SquaredDistance;
  if (s == "capped_distance") return cbf::DSafeMode::CappedDistance;
  if (s == "inflated") return cbf::DSafeMode::Inflated;
  throw ConfigError("unknown d_safe mode: " + s);
}

std::string d_safe_mode_name(cbf::DSafeMode m) {
  switch (m) {
    case cbf::DSafeMode::SquaredDistance:
      return "squared_distance";
    case cbf::DSafeMode::CappedDistance:
      return "capped_distance";
    case cbf::DSafeMode::Inflated:
      return "inflated";
  }
  return "inflated";
}

void parse_boat_params(const ordered_json& j, dynamics::BoatParams& p) {
  check_keys(j, "agent.boat_params",
             {"m", "g", "rho", "Ix", "Iy", "Iz", "A_x", "A_y", "A_z", "C_Fx", "C_Fy", "C_Fz",
              "C_Mx", "C_My", "C_Mz", "A_wl", "C_b", "draft_max", "k_phi", "k_theta", "c1",
              "c2", "c5", "c6", "c8", "d_motor", "thrust_max", "theta_max"});
  p.m = j.value("m", p.m);
  p.g = j.value("g", p.g);
  p.rho = j.value("rho", p.rho);
  p.Ix = j.value("Ix", p.Ix);
  p.Iy = j.value("Iy", p.Iy);
  p.Iz = j.value("Iz", p.Iz);
  p.A_x = j.value("A_x", p.A_x);
  p.A_y = j.value("A_y", p.A_y);
  p.A_z = j.value("A_z", p.A_z);
  p.C_Fx = j.value("C_Fx", p.C_Fx);
  p.C_Fy = j.value("C_Fy", p.C_Fy);
  p.C_Fz = j.value("C_Fz", p.C_Fz);
  p.C_Mx = j.value("C_Mx", p.C_Mx);
  p.C_My = j.value("C_My", p.C_My);
  p.C_Mz = j.value("C_Mz", p.C_Mz);
  p.A_wl = j.value("A_wl", p.A_wl);
  p.C_b = j.value("C_b", p.C_b);
  p.draft_max = j.value("draft_max", p.draft_max);
  p.k_phi = j.value("k_phi", p.k_phi);
  p.k_theta = j.value("k_theta", p.k_theta);
  p.c1 = j.value("c1", p.c1);
  p.c2 = j.value("c2", p.c2);
  p.c5 = j.value("c5", p.c5);
  p.c6 = j.value("c6", p.c6);
  p.c8 = j.value("c8", p.c8);
  p.d_motor = j.value("d_motor", p.d_motor);
  p.thrust_max = j.value("thrust_max", p.thrust_max);
  p.theta_max = j.value("theta_max", p.theta_max);
}

ordered_json boat_params_json(const dynamics::BoatParams& p) {
  ordered_json j;
  j["m"] = p.m;
  j["g"] = p.g;
  j["rho"] = p.rho;
  j["Ix"] = p.Ix;
  j["Iy"] = p.Iy;
  j["Iz"] = p.Iz;
  j["A_x"] = p.A_x;
  j["A_y"] = p.A_y;
  j["A_z"] = p.A_z;
  j["C_Fx"] = p.C_Fx;
  j["C_Fy"] = p.C_Fy;
  j["C_Fz"] = p.C_Fz;
  j["C_Mx"] = p.C_Mx;
  j["C_My"] = p.C_My;
  j["C_Mz"] = p.C_Mz;
  j["A_wl"] = p.A_wl;
  j["C_b"] = p.C_b;
  j["draft_max"] = p.draft_max;
  j["k_phi"] = p.k_phi;
  j["k_theta"] = p.k_theta;
  j["c1"] = p.c1;
  j["c2"] = p.c2;
  j["c5"] = p.c5;
  j["c6"] = p.c6;
  j["c8"] = p.c8;
  j["d_motor"] = p.d_motor;
  j["thrust_max"] = p.thrust_max;
  j["theta_max"] = p.theta_max;
  return j;
}

}  // namespace

void ScenarioConfig::validate() const {
  stack.validate();
  if (stack.policy.use_network && !stack.policy.network) {
    throw ConfigError("policy source is a network but no weights are loaded");
  }
  if (episodes <= 0) throw ConfigError("episodes must be positive");
  if (jobs < 0) throw ConfigError("jobs must be nonnegative");
  if (has_enumeration) {
    if (enumeration.options.min_width <= 0.0 || enumeration.options.min_width > 1.0) {
      throw ConfigError("enumeration min_width must be in (0, 1]");
    }
    if (enumeration.options.max_leaves <= 0) {
      throw ConfigError("enumeration max_leaves must be positive");
    }
    if (enumeration.options.mc_samples <= 0) {
      throw ConfigError("enumeration mc_samples must be positive");
    }
    if (enumeration.network_path.empty()) {
      throw ConfigError("enumeration block needs a network path");
    }
    if (enumeration.property_paths.empty()) {
      throw ConfigError("enumeration block needs at least one property file");
    }
    if (enumeration.density_resolution <= 0) {
      throw ConfigError("density resolution must be positive");
    }
    if ((enumeration.density_hi - enumeration.density_lo).minCoeff() <= 0.0) {
      throw ConfigError("density window must have positive extent");
    }
  }
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw ParseError("scenario file " + path + ": " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();

  check_keys(j, "scenario",
             {"name", "world", "agent", "policy", "sensor", "disturbance", "filter", "escape",
              "nmpc", "sim", "run", "enumeration"});

  ScenarioConfig cfg;
  cfg.name = j.value("name", cfg.name);

  policy::AgentKind kind = policy::AgentKind::Unicycle;
  if (j.contains("agent")) {
    kind = agent_kind_from_name(j["agent"].value("kind", std::string("unicycle")));
  }
  cfg.stack = kind == policy::AgentKind::Boat ? sim::StackConfig::boat_defaults()
                                              : sim::StackConfig::unicycle_defaults();
  if (kind == policy::AgentKind::Boat && !j.contains("nmpc")) {
    throw ConfigError("boat scenarios need an nmpc block");
  }

  if (j.contains("world")) {
    const auto& w = j["world"];
    check_keys(w, "world", {"spec", "seed"});
    if (w.contains("spec")) cfg.world = sim::world_spec_from_name(w["spec"].get<std::string>());
    cfg.world_seed = w.value("seed", cfg.world_seed);
  }

  if (j.contains("agent")) {
    const auto& a = j["agent"];
    check_keys(a, "agent", {"kind", "radius", "v_range", "w_range", "boat_params"});
    cfg.stack.robot_radius = a.value("radius", cfg.stack.robot_radius);
    if (a.contains("v_range")) cfg.stack.v_range = vec2(a["v_range"], "agent.v_range");
    if (a.contains("w_range")) cfg.stack.w_range = vec2(a["w_range"], "agent.w_range");
    if (a.contains("boat_params")) parse_boat_params(a["boat_params"], cfg.stack.boat_params);
  }

  if (j.contains("policy")) {
    const auto& p = j["policy"];
    check_keys(p, "policy", {"source", "scripted", "weights"});
    const std::string source = p.value("source", std::string("scripted"));
    if (source == "network") {
      cfg.stack.policy.use_network = true;
      if (!p.contains("weights")) throw ConfigError("network policy needs a weights path");
      cfg.weights_path = resolve(p["weights"].get<std::string>(), base);
    } else if (source != "scripted") {
      throw ConfigError("unknown policy source: " + source);
    }
    if (p.contains("scripted")) {
      const auto& s = p["scripted"];
      check_keys(s, "policy.scripted",
                 {"kind", "v_max", "w_max", "heading_gain", "noise_v", "noise_w"});
      auto& sc = cfg.stack.policy.scripted_cfg;
      if (s.contains("kind")) {
        cfg.stack.policy.scripted = scripted_from_name(s["kind"].get<std::string>());
      }
      sc.kind = cfg.stack.policy.scripted;
      sc.v_max = s.value("v_max", sc.v_max);
      sc.w_max = s.value("w_max", sc.w_max);
      sc.heading_gain = s.value("heading_gain", sc.heading_gain);
      sc.noise_v = s.value("noise_v", sc.noise_v);
      sc.noise_w = s.value("noise_w", sc.noise_w);
    }
  }

  if (j.contains("sensor")) {
    const auto& s = j["sensor"];
    check_keys(s, "sensor", {"max_range", "rays_per_cone", "noise_sigma"});
    cfg.stack.sensor.max_range = s.value("max_range", cfg.stack.sensor.max_range);
    cfg.stack.sensor.rays_per_cone = s.value("rays_per_cone", cfg.stack.sensor.rays_per_cone);
    cfg.stack.sensor.range_noise_sigma =
        s.value("noise_sigma", cfg.stack.sensor.range_noise_sigma);
  }

  if (j.contains("disturbance")) {
    const auto& d = j["disturbance"];
    check_keys(d, "disturbance", {"drift", "gust_sigma"});
    if (d.contains("drift")) cfg.stack.disturbance.drift = vec2(d["drift"], "disturbance.drift");
    cfg.stack.disturbance.gust_sigma = d.value("gust_sigma", cfg.stack.disturbance.gust_sigma);
  }

  if (j.contains("filter")) {
    const auto& f = j["filter"];
    check_keys(f, "filter",
               {"enabled", "sigma", "gamma", "lookahead", "d_safe_mode", "kappa", "kappa_cap",
                "look_radius", "sense_radius", "multi_constraint", "omega_escape", "safe_set"});
    auto& fc = cfg.stack.filter;
    cfg.stack.filter_enabled = f.value("enabled", cfg.stack.filter_enabled);
    fc.enabled = cfg.stack.filter_enabled;
    fc.sigma = f.value("sigma", fc.sigma);
    fc.gamma = f.value("gamma", fc.gamma);
    fc.lookahead = f.value("lookahead", fc.lookahead);
    if (f.contains("d_safe_mode")) {
      fc.mode = d_safe_mode_from_name(f["d_safe_mode"].get<std::string>());
    }
    fc.kappa = f.value("kappa", fc.kappa);
    fc.kappa_cap = f.value("kappa_cap", fc.kappa_cap);
    fc.look_radius = f.value("look_radius", fc.look_radius);
    fc.sense_radius = f.value("sense_radius", fc.sense_radius);
    fc.multi_constraint = f.value("multi_constraint", fc.multi_constraint);
    fc.omega_escape = f.value("omega_escape", fc.omega_escape);
    if (f.contains("safe_set")) {
      cfg.safe_set_path = resolve(f["safe_set"].get<std::string>(), base);
    }
  }

  if (j.contains("escape")) {
    const auto& e = j["escape"];
    check_keys(e, "escape",
               {"stuck_window", "stuck_speed", "drive_speed", "front_clear", "drive_steps",
                "rotate_cap"});
    auto& ec = cfg.stack.escape;
    ec.stuck_window = e.value("stuck_window", ec.stuck_window);
    ec.stuck_speed = e.value("stuck_speed", ec.stuck_speed);
    ec.drive_speed = e.value("drive_speed", ec.drive_speed);
    ec.front_clear = e.value("front_clear", ec.front_clear);
    ec.drive_steps = e.value("drive_steps", ec.drive_steps);
    ec.rotate_cap = e.value("rotate_cap", ec.rotate_cap);
  }

  if (j.contains("nmpc")) {
    const auto& n = j["nmpc"];
    check_keys(n, "nmpc",
               {"horizon", "dt", "q", "r", "u_min", "u_max", "max_iters", "tol", "warm_start",
                "fd_step"});
    auto& nc = cfg.stack.nmpc;
    nc.horizon = n.value("horizon", nc.horizon);
    nc.dt = n.value("dt", nc.dt);
    if (n.contains("q")) nc.q = vec2(n["q"], "nmpc.q");
    if (n.contains("r")) nc.r_weight = vec2(n["r"], "nmpc.r");
    nc.u_min = n.value("u_min", nc.u_min);
    nc.u_max = n.value("u_max", nc.u_max);
    nc.max_iters = n.value("max_iters", nc.max_iters);
    nc.tol = n.value("tol", nc.tol);
    nc.warm_start = n.value("warm_start", nc.warm_start);
    nc.fd_step = n.value("fd_step", nc.fd_step);
  }

  if (j.contains("sim")) {
    const auto& s = j["sim"];
    check_keys(s, "sim", {"dt", "max_steps", "record_observations"});
    cfg.stack.dt = s.value("dt", cfg.stack.dt);
    cfg.stack.max_steps = s.value("max_steps", cfg.stack.max_steps);
    cfg.stack.record_observations =
        s.value("record_observations", cfg.stack.record_observations);
  }

  if (j.contains("run")) {
    const auto& r = j["run"];
    check_keys(r, "run", {"episodes", "seed", "jobs", "output_dir"});
    cfg.episodes = r.value("episodes", cfg.episodes);
    cfg.base_seed = r.value("seed", cfg.base_seed);
    cfg.jobs = r.value("jobs", cfg.jobs);
    // a write destination, kept as given so it lands relative to the caller
    cfg.output_dir = r.value("output_dir", cfg.output_dir);
  }

  if (j.contains("enumeration")) {
    const auto& e = j["enumeration"];
    check_keys(e, "enumeration",
               {"network", "properties", "min_width", "max_leaves", "mc_samples", "seed",
                "position_dims", "density"});
    cfg.has_enumeration = true;
    auto& job = cfg.enumeration;
    if (e.contains("network")) {
      job.network_path = resolve(e["network"].get<std::string>(), base);
    }
    if (e.contains("properties")) {
      for (const auto& p : e["properties"]) {
        job.property_paths.push_back(resolve(p.get<std::string>(), base));
      }
    }
    job.options.min_width = e.value("min_width", job.options.min_width);
    job.options.max_leaves = e.value("max_leaves", job.options.max_leaves);
    job.options.mc_samples = e.value("mc_samples", job.options.mc_samples);
    job.options.seed = e.value("seed", job.options.seed);
    if (e.contains("position_dims")) {
      job.position_dims = e["position_dims"].get<std::vector<int>>();
    }
    if (e.contains("density")) {
      const auto& d = e["density"];
      check_keys(d, "enumeration.density", {"resolution", "lo", "hi"});
      job.density_resolution = d.value("resolution", job.density_resolution);
      if (d.contains("lo")) job.density_lo = vec2(d["lo"], "density.lo");
      if (d.contains("hi")) job.density_hi = vec2(d["hi"], "density.hi");
    }
  }

  if (cfg.stack.policy.use_network) {
    require_file(cfg.weights_path, "weights");
    cfg.stack.policy.network =
        std::make_shared<policy::PolicyNetwork>(policy::load_network(cfg.weights_path));
  }
  if (!cfg.safe_set_path.empty()) {
    require_file(cfg.safe_set_path, "safe set");
    cfg.stack.safe_set =
        std::make_shared<verify::SafeSet>(verify::load_safe_set(cfg.safe_set_path));
  }
  if (cfg.has_enumeration) {
    require_file(cfg.enumeration.network_path, "enumeration network");
    for (const auto& p : cfg.enumeration.property_paths) require_file(p, "property");
  }

  cfg.validate();
  return cfg;
}

std::string dump_scenario(const ScenarioConfig& cfg) {
  const auto& st = cfg.stack;
  ordered_json j;
  j["name"] = cfg.name;
  j["world"] = {{"spec", sim::world_spec_name(cfg.world)}, {"seed", cfg.world_seed}};

  ordered_json agent;
  agent["kind"] = agent_kind_name(st.kind);
  agent["radius"] = st.robot_radius;
  agent["v_range"] = {st.v_range[0], st.v_range[1]};
  agent["w_range"] = {st.w_range[0], st.w_range[1]};
  if (st.kind == policy::AgentKind::Boat) agent["boat_params"] = boat_params_json(st.boat_params);
  j["agent"] = agent;

  ordered_json pol;
  pol["source"] = st.policy.use_network ? "network" : "scripted";
  if (st.policy.use_network) pol["weights"] = cfg.weights_path;
  const auto& sc = st.policy.scripted_cfg;
  pol["scripted"] = {{"kind", scripted_name(st.policy.scripted)}, {"v_max", sc.v_max},
                     {"w_max", sc.w_max},       {"heading_gain", sc.heading_gain},
                     {"noise_v", sc.noise_v},   {"noise_w", sc.noise_w}};
  j["policy"] = pol;

  j["sensor"] = {{"max_range", st.sensor.max_range},
                 {"rays_per_cone", st.sensor.rays_per_cone},
                 {"noise_sigma", st.sensor.range_noise_sigma}};
  j["disturbance"] = {{"drift", {st.disturbance.drift[0], st.disturbance.drift[1]}},
                      {"gust_sigma", st.disturbance.gust_sigma}};

  ordered_json f;
  f["enabled"] = st.filter_enabled;
  f["sigma"] = st.filter.sigma;
  f["gamma"] = st.filter.gamma;
  f["lookahead"] = st.filter.lookahead;
  f["d_safe_mode"] = d_safe_mode_name(st.filter.mode);
  f["kappa"] = st.filter.kappa;
  f["kappa_cap"] = st.filter.kappa_cap;
  f["look_radius"] = st.filter.look_radius;
  f["sense_radius"] = st.filter.sense_radius;
  f["multi_constraint"] = st.filter.multi_constraint;
  f["omega_escape"] = st.filter.omega_escape;
  if (!cfg.safe_set_path.empty()) f["safe_set"] = cfg.safe_set_path;
  j["filter"] = f;

  j["escape"] = {{"stuck_window", st.escape.stuck_window},
                 {"stuck_speed", st.escape.stuck_speed},
                 {"drive_speed", st.escape.drive_speed},
                 {"front_clear", st.escape.front_clear},
                 {"drive_steps", st.escape.drive_steps},
                 {"rotate_cap", st.escape.rotate_cap}};
  j["nmpc"] = {{"horizon", st.nmpc.horizon},
               {"dt", st.nmpc.dt},
               {"q", {st.nmpc.q[0], st.nmpc.q[1]}},
               {"r", {st.nmpc.r_weight[0], st.nmpc.r_weight[1]}},
               {"u_min", st.nmpc.u_min},
               {"u_max", st.nmpc.u_max},
               {"max_iters", st.nmpc.max_iters},
               {"tol", st.nmpc.tol},
               {"warm_start", st.nmpc.warm_start},
               {"fd_step", st.nmpc.fd_step}};
  j["sim"] = {{"dt", st.dt},
              {"max_steps", st.max_steps},
              {"record_observations", st.record_observations}};
  j["run"] = {{"episodes", cfg.episodes},
              {"seed", cfg.base_seed},
              {"jobs", cfg.jobs},
              {"output_dir", cfg.output_dir}};

  if (cfg.has_enumeration) {
    const auto& job = cfg.enumeration;
    ordered_json e;
    e["network"] = job.network_path;
    e["properties"] = job.property_paths;
    e["min_width"] = job.options.min_width;
    e["max_leaves"] = job.options.max_leaves;
    e["mc_samples"] = job.options.mc_samples;
    e["seed"] = job.options.seed;
    e["position_dims"] = job.position_dims;
    e["density"] = {{"resolution", job.density_resolution},
                    {"lo", {job.density_lo[0], job.density_lo[1]}},
                    {"hi", {job.density_hi[0], job.density_hi[1]}}};
    j["enumeration"] = e;
  }

  return j.dump(2) + "\n";
}

void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write scenario file: " + path);
  out << dump_scenario(cfg);
}

}  // namespace safenav::config
