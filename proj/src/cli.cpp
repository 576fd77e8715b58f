#include "safenav/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "safenav/config.hpp"
#include "safenav/sim.hpp"
#include "safenav/trajlog.hpp"
#include "safenav/verification.hpp"

namespace safenav::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct Overrides {
  int episodes = -1;
  long long seed = -1;
  int jobs = -1;
  std::string out;
  std::string filter;  // "", "on", "off"
  std::string dump_path;
  int traj_logs = 4;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

config::ScenarioConfig load_with_overrides(const std::string& path, const Overrides& o) {
  config::ScenarioConfig cfg = config::load_scenario(path);
  if (o.episodes >= 0) cfg.episodes = o.episodes;
  if (o.seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(o.seed);
  if (o.jobs >= 0) cfg.jobs = o.jobs;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.filter == "on") {
    cfg.stack.filter_enabled = true;
  } else if (o.filter == "off") {
    cfg.stack.filter_enabled = false;
  } else if (!o.filter.empty()) {
    throw ConfigError("--filter takes on or off");
  }
  cfg.stack.filter.enabled = cfg.stack.filter_enabled;
  cfg.validate();
  if (!o.dump_path.empty()) config::save_scenario(cfg, o.dump_path);
  return cfg;
}

std::string sanitize(const std::string& name) {
  std::string s = name.empty() ? "region" : name;
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

ordered_json metrics_json(const sim::Metrics& m) {
  ordered_json j;
  j["episodes"] = m.episodes;
  j["success_rate"] = m.success_rate;
  j["success_std"] = m.success_std;
  j["collision_rate"] = m.collision_rate;
  j["collision_std"] = m.collision_std;
  j["timeout_rate"] = m.timeout_rate;
  j["mean_steps"] = m.mean_steps;
  j["std_steps"] = m.std_steps;
  j["mean_min_h"] = m.mean_min_h;
  j["mean_duration"] = m.mean_duration;
  j["corrections"] = m.corrections;
  j["fallbacks"] = m.fallbacks;
  return j;
}

void print_metrics_row(std::ofstream& out, const std::string& label, const sim::Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s success %6.2f%% +- %5.2f%%  collision %6.2f%% +- %5.2f%%  timeout %6.2f%%  steps %.1f +- %.1f\n",
                label.c_str(), 100.0 * m.success_rate, 100.0 * m.success_std,
                100.0 * m.collision_rate, 100.0 * m.collision_std, 100.0 * m.timeout_rate,
                m.mean_steps, m.std_steps);
  out << buf;
}

int count_component_errors(const std::vector<sim::EpisodeLog>& logs) {
  return static_cast<int>(
      std::count_if(logs.begin(), logs.end(), [](const auto& l) { return !l.error.empty(); }));
}

ordered_json run_header(const config::ScenarioConfig& cfg) {
  ordered_json j;
  j["scenario"] = cfg.name;
  j["world"] = sim::world_spec_name(cfg.world);
  j["world_seed"] = cfg.world_seed;
  j["episodes"] = cfg.episodes;
  j["seed"] = cfg.base_seed;
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

int cmd_simulate(const std::string& config_path, const Overrides& o) {
  config::ScenarioConfig cfg = load_with_overrides(config_path, o);
  const sim::World world = sim::generate_world(cfg.world, cfg.world_seed);
  const int jobs = resolve_jobs(cfg.jobs);

  sim::EvaluateResult res =
      sim::evaluate(world, cfg.stack, cfg.episodes, cfg.base_seed, jobs, false);
  const int errors = count_component_errors(res.logs);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  sim::save_world(world, (out / "world.json").string());

  // full trajectories for the first few episodes, rerun with their own seeds
  const int n_logs = std::min(o.traj_logs, cfg.episodes);
  for (int i = 0; i < n_logs; ++i) {
    sim::StackConfig stack = cfg.stack;
    stack.record_observations = false;
    sim::EpisodeLog log = sim::run_episode(world, stack, mix_seed(cfg.base_seed, i));
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%03d.csv", i);
    sim::save_trajectory_csv(log, (out / name).string());
  }

  ordered_json j = run_header(cfg);
  j["filter_enabled"] = cfg.stack.filter_enabled;
  j["metrics"] = metrics_json(res.metrics);
  j["component_errors"] = errors;
  j["partial"] = errors > 0;
  write_text_file((out / "metrics.json").string(), j.dump(2) + "\n");

  std::ofstream txt(out / "metrics.txt");
  if (!txt) throw Error("cannot write metrics.txt");
  txt << "scenario " << cfg.name << "\n";
  txt << "world " << sim::world_spec_name(cfg.world) << " seed " << cfg.world_seed << "\n";
  txt << "episodes " << cfg.episodes << " seed " << cfg.base_seed << " filter "
      << (cfg.stack.filter_enabled ? "on" : "off") << "\n";
  print_metrics_row(txt, "result", res.metrics);
  txt << "mean_min_h " << fmt(res.metrics.mean_min_h) << "\n";
  txt << "corrections " << res.metrics.corrections << " fallbacks " << res.metrics.fallbacks
      << "\n";
  if (errors > 0) {
    txt << "partial: " << errors << " episode(s) aborted on component errors\n";
  }
  txt.close();

  std::printf("wrote %s\n", (out / "metrics.txt").string().c_str());
  return 0;
}

int cmd_evaluate(const std::string& config_path, const Overrides& o) {
  config::ScenarioConfig cfg = load_with_overrides(config_path, o);
  const sim::World world = sim::generate_world(cfg.world, cfg.world_seed);
  const int jobs = resolve_jobs(cfg.jobs);

  sim::StackConfig filtered = cfg.stack;
  filtered.filter_enabled = true;
  sim::StackConfig unfiltered = cfg.stack;
  unfiltered.filter_enabled = false;

  sim::EvaluateResult with =
      sim::evaluate(world, filtered, cfg.episodes, cfg.base_seed, jobs, false);
  sim::EvaluateResult without =
      sim::evaluate(world, unfiltered, cfg.episodes, cfg.base_seed, jobs, false);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);

  ordered_json j = run_header(cfg);
  j["rows"] = ordered_json::array();
  ordered_json rf = metrics_json(with.metrics);
  rf["label"] = "filtered";
  rf["component_errors"] = count_component_errors(with.logs);
  ordered_json ru = metrics_json(without.metrics);
  ru["label"] = "unfiltered";
  ru["component_errors"] = count_component_errors(without.logs);
  j["rows"].push_back(rf);
  j["rows"].push_back(ru);
  write_text_file((out / "evaluation.json").string(), j.dump(2) + "\n");

  std::ofstream txt(out / "evaluation.txt");
  if (!txt) throw Error("cannot write evaluation.txt");
  txt << "scenario " << cfg.name << " world " << sim::world_spec_name(cfg.world) << " seed "
      << cfg.world_seed << " episodes " << cfg.episodes << "\n";
  print_metrics_row(txt, "filtered", with.metrics);
  print_metrics_row(txt, "unfiltered", without.metrics);
  txt.close();

  std::printf("wrote %s\n", (out / "evaluation.txt").string().c_str());
  return 0;
}

int cmd_enumerate(const std::string& config_path, const Overrides& o) {
  config::ScenarioConfig cfg = load_with_overrides(config_path, o);
  if (!cfg.has_enumeration) {
    throw ConfigError("scenario has no enumeration block: " + config_path);
  }
  const config::EnumerationJob& job = cfg.enumeration;
  const policy::PolicyNetwork net = policy::load_network(job.network_path);

  std::vector<verify::PropertySpec> specs;
  for (const auto& p : job.property_paths) {
    auto batch = verify::load_property_list(p);
    specs.insert(specs.end(), batch.begin(), batch.end());
  }
  if (specs.empty()) throw ConfigError("no properties found in the given files");

  verify::EnumerationConfig opts = job.options;
  opts.jobs = resolve_jobs(cfg.jobs);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);

  std::vector<verify::EnumerationResult> results;
  ordered_json regions = ordered_json::array();
  bool incomplete = false;
  for (const auto& spec : specs) {
    verify::EnumerationResult res = verify::enumerate_unsafe(net, spec.domain, spec.property, opts);
    const std::string file = "region_" + sanitize(spec.name) + ".json";
    verify::save_enumeration(res, (out / file).string());
    ordered_json r;
    r["name"] = spec.name;
    r["file"] = file;
    r["complete"] = res.complete;
    r["boxes_checked"] = res.boxes_checked;
    r["splits"] = res.splits;
    r["leaves"] = res.leaves.size();
    r["unsafe_volume"] = res.unsafe_volume();
    r["safe_volume"] = res.safe_volume();
    regions.push_back(r);
    incomplete = incomplete || !res.complete;
    results.push_back(std::move(res));
  }

  verify::SafeSet set = verify::build_safe_set(results, job.position_dims);
  verify::save_safe_set(set, (out / "safe_set.json").string());
  verify::DensityMap dm =
      verify::density_map(set, job.density_lo, job.density_hi, job.density_resolution);
  verify::save_density_map(dm, (out / "density.csv").string());

  ordered_json j;
  j["scenario"] = cfg.name;
  j["network"] = job.network_path;
  j["min_width"] = opts.min_width;
  j["max_leaves"] = opts.max_leaves;
  j["mc_samples"] = opts.mc_samples;
  j["seed"] = opts.seed;
  j["incomplete"] = incomplete;
  j["regions"] = regions;
  write_text_file((out / "enumeration_summary.json").string(), j.dump(2) + "\n");

  std::printf("wrote %s%s\n", (out / "enumeration_summary.json").string().c_str(),
              incomplete ? " (incomplete: leaf budget hit)" : "");
  return 0;
}

int cmd_plot(const std::string& input, const std::string& kind, std::string out_path) {
  sim::EpisodeLog log = sim::load_trajectory_csv(input);
  if (log.records.empty()) throw ConfigError("trajectory has no steps: " + input);

  if (out_path.empty()) out_path = kind + ".csv";
  if (fs::path(out_path).has_parent_path()) {
    fs::create_directories(fs::path(out_path).parent_path());
  }
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path);
  const bool boat = log.kind == policy::AgentKind::Boat;

  if (kind == "tracking") {
    out << "t,ref_v,ref_w,v,w\n";
    for (const auto& r : log.records) {
      const double v = boat ? r.state[6] : r.r_v;
      const double w = boat ? r.state[11] : r.r_w;
      out << fmt(r.t) << ',' << fmt(r.r_v) << ',' << fmt(r.r_w) << ',' << fmt(v) << ','
          << fmt(w) << "\n";
    }
  } else if (kind == "trajectory") {
    out << "x,y,events\n";
    for (const auto& r : log.records) {
      out << fmt(r.state[0]) << ',' << fmt(r.state[1]) << ',' << r.events << "\n";
    }
  } else if (kind == "h_profile") {
    out << "t,h,d_safe\n";
    for (const auto& r : log.records) {
      out << fmt(r.t) << ',' << fmt(r.h) << ',' << fmt(r.d_safe) << "\n";
    }
  } else {
    throw ConfigError("unknown plot kind: " + kind);
  }
  out.close();
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"safe navigation toolkit: simulation, action filtering, enumeration"};
  app.require_subcommand(1);

  Overrides o;
  std::string config_path;
  std::string plot_input, plot_kind, plot_out;

  auto add_run_flags = [&](CLI::App* c, bool with_filter) {
    c->add_option("--config", config_path, "scenario file")->required();
    c->add_option("--episodes", o.episodes, "override episode count");
    c->add_option("--seed", o.seed, "override base seed");
    c->add_option("--jobs", o.jobs, "worker threads (0 = all cores)");
    c->add_option("--out", o.out, "override output directory");
    c->add_option("--dump-effective-config", o.dump_path,
                  "write the effective configuration to this path");
    if (with_filter) c->add_option("--filter", o.filter, "force the action filter on or off");
  };

  CLI::App* sim_cmd = app.add_subcommand("simulate", "run episodes, write trajectories and metrics");
  add_run_flags(sim_cmd, true);
  sim_cmd->add_option("--logs", o.traj_logs, "episodes to dump as full trajectory CSVs");

  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "filtered vs unfiltered metrics table over seeded episodes");
  add_run_flags(eval_cmd, false);

  CLI::App* enum_cmd =
      app.add_subcommand("enumerate", "branch-and-bound unsafe-region enumeration and density map");
  add_run_flags(enum_cmd, false);

  CLI::App* plot_cmd = app.add_subcommand("plot", "emit plot-ready series from a trajectory CSV");
  plot_cmd->add_option("--input", plot_input, "trajectory CSV")->required();
  plot_cmd->add_option("--kind", plot_kind, "tracking, trajectory, or h_profile")->required();
  plot_cmd->add_option("--out", plot_out, "output file (defaults to <kind>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim_cmd->parsed()) return cmd_simulate(config_path, o);
    if (eval_cmd->parsed()) return cmd_evaluate(config_path, o);
    if (enum_cmd->parsed()) return cmd_enumerate(config_path, o);
    if (plot_cmd->parsed()) return cmd_plot(plot_input, plot_kind, plot_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace safenav::cli
