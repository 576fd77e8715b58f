#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "safenav/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string bin_path() {
  const char* p = std::getenv("SAFE_NAV_BIN");
  REQUIRE_MESSAGE(p != nullptr, "SAFE_NAV_BIN must point at the safe_nav binary");
  return p;
}

std::string data_path() {
  const char* p = std::getenv("SAFE_NAV_DATA");
  REQUIRE_MESSAGE(p != nullptr, "SAFE_NAV_DATA must point at the data directory");
  return p;
}

struct TempDir {
  fs::path dir;
  TempDir() : dir(fs::current_path() / "cli_test_tmp") {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

int run_cli(const TempDir& t, const std::string& args) {
  const std::string cmd =
      bin_path() + " " + args + " > " + (t / "stdout.txt") + " 2> " + (t / "stderr.txt");
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json slurp_json(const std::string& path) { return json::parse(slurp(path)); }

std::string indoor_config() { return data_path() + "/configs/indoor.json"; }

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  TempDir t;
  CHECK(run_cli(t, "") == 2);
  CHECK(run_cli(t, "simulate") == 2);  // --config is required
  CHECK(run_cli(t, "simulate --config nope.json --bogus-flag 1") == 2);
  CHECK(run_cli(t, "plot --input nope.csv --kind sideways") == 2);
}

TEST_CASE("simulate writes world, metrics, and trajectory logs") {
  TempDir t;
  const int rc = run_cli(t, "simulate --config " + indoor_config() +
                                " --episodes 2 --logs 2 --out " + (t / "run"));
  CHECK(rc == 0);
  CHECK(fs::exists(t / "run/world.json"));
  CHECK(fs::exists(t / "run/metrics.txt"));
  CHECK(fs::exists(t / "run/episode_000.csv"));
  CHECK(fs::exists(t / "run/episode_001.csv"));
  const json m = slurp_json(t / "run/metrics.json");
  CHECK(m["episodes"] == 2);
  CHECK(m["filter_enabled"] == true);
  CHECK(m["metrics"]["collision_rate"] == 0.0);
  CHECK(m["component_errors"] == 0);
  CHECK(m["partial"] == false);
}

TEST_CASE("repeated runs with one seed are byte-identical") {
  TempDir t;
  const std::string args = "simulate --config " + indoor_config() + " --episodes 2 --logs 1";
  CHECK(run_cli(t, args + " --out " + (t / "a")) == 0);
  CHECK(run_cli(t, args + " --out " + (t / "b")) == 0);
  CHECK(slurp(t / "a/metrics.json") == slurp(t / "b/metrics.json"));
  CHECK(slurp(t / "a/metrics.txt") == slurp(t / "b/metrics.txt"));
  CHECK(slurp(t / "a/episode_000.csv") == slurp(t / "b/episode_000.csv"));

  CHECK(run_cli(t, "simulate --config " + indoor_config() + " --episodes 2 --logs 0 --seed 8 --out " +
                       (t / "c")) == 0);
  CHECK(slurp(t / "a/metrics.json") != slurp(t / "c/metrics.json"));
}

TEST_CASE("--filter off yields the unfiltered baseline") {
  TempDir t;
  CHECK(run_cli(t, "simulate --config " + indoor_config() + " --episodes 3 --logs 0 --filter off --out " +
                       (t / "raw")) == 0);
  const json m = slurp_json(t / "raw/metrics.json");
  CHECK(m["filter_enabled"] == false);
  CHECK(m["metrics"]["collision_rate"].get<double>() > 0.0);
}

TEST_CASE("missing weights file exits 2 and names the path") {
  TempDir t;
  std::ofstream cfg(t / "net.json");
  cfg << R"({"name":"x","policy":{"source":"network","weights":"no_such_weights.json"}})";
  cfg.close();
  CHECK(run_cli(t, "simulate --config " + (t / "net.json")) == 2);
  CHECK(slurp(t / "stderr.txt").find("no_such_weights.json") != std::string::npos);
}

TEST_CASE("network policy source runs through the stack") {
  TempDir t;
  std::ofstream cfg(t / "net.json");
  cfg << R"({"name":"netrun","policy":{"source":"network","weights":")" << data_path()
      << R"(/nets/example20.json"},"sim":{"max_steps":50},"run":{"episodes":1,"output_dir":")"
      << (t / "run") << R"("}})";
  cfg.close();
  CHECK(run_cli(t, "simulate --config " + (t / "net.json") + " --logs 0") == 0);
  CHECK(fs::exists(t / "run/metrics.json"));
}

TEST_CASE("evaluate emits the filtered vs unfiltered table") {
  TempDir t;
  CHECK(run_cli(t, "evaluate --config " + indoor_config() + " --episodes 3 --out " + (t / "ev")) ==
        0);
  const json e = slurp_json(t / "ev/evaluation.json");
  REQUIRE(e["rows"].size() == 2);
  CHECK(e["rows"][0]["label"] == "filtered");
  CHECK(e["rows"][1]["label"] == "unfiltered");
  CHECK(e["rows"][0]["collision_rate"].get<double>() == 0.0);
  CHECK(e["rows"][1]["collision_rate"].get<double>() > 0.0);
  const std::string txt = slurp(t / "ev/evaluation.txt");
  CHECK(txt.find("filtered") != std::string::npos);
  CHECK(txt.find("unfiltered") != std::string::npos);
}

TEST_CASE("plot emits the three series kinds") {
  TempDir t;
  REQUIRE(run_cli(t, "simulate --config " + indoor_config() + " --episodes 1 --logs 1 --out " +
                         (t / "run")) == 0);
  const std::string traj = t / "run/episode_000.csv";

  CHECK(run_cli(t, "plot --input " + traj + " --kind tracking --out " + (t / "tr.csv")) == 0);
  CHECK(slurp(t / "tr.csv").rfind("t,ref_v,ref_w,v,w\n", 0) == 0);

  CHECK(run_cli(t, "plot --input " + traj + " --kind trajectory --out " + (t / "xy.csv")) == 0);
  CHECK(slurp(t / "xy.csv").rfind("x,y,events\n", 0) == 0);

  CHECK(run_cli(t, "plot --input " + traj + " --kind h_profile --out " + (t / "h.csv")) == 0);
  std::ifstream h(t / "h.csv");
  std::string line;
  std::getline(h, line);
  CHECK(line == "t,h,d_safe");
  double min_h = 1e9;
  while (std::getline(h, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    const double hv = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    if (std::isfinite(hv)) min_h = std::min(min_h, hv);
  }
  CHECK(min_h >= -1e-3);  // filtered episode keeps the barrier nonnegative
}

TEST_CASE("malformed or empty trajectory input exits 2") {
  TempDir t;
  std::ofstream(t / "empty.csv").close();
  CHECK(run_cli(t, "plot --input " + (t / "empty.csv") + " --kind tracking") == 2);
  std::ofstream bad(t / "bad.csv");
  bad << "not,a,trajectory\n1,2,3\n";
  bad.close();
  CHECK(run_cli(t, "plot --input " + (t / "bad.csv") + " --kind tracking") == 2);
}

TEST_CASE("effective config dump reloads to the identical configuration") {
  TempDir t;
  const std::string common = " --episodes 2 --logs 0 --seed 9 --out " + (t / "run");
  CHECK(run_cli(t, "simulate --config " + indoor_config() + common +
                       " --dump-effective-config " + (t / "eff.json")) == 0);
  CHECK(run_cli(t, "simulate --config " + (t / "eff.json") + common +
                       " --dump-effective-config " + (t / "eff2.json")) == 0);
  CHECK(slurp(t / "eff.json") == slurp(t / "eff2.json"));

  const auto a = safenav::config::load_scenario(t / "eff.json");
  CHECK(safenav::config::dump_scenario(a) == slurp(t / "eff.json"));
}

TEST_CASE("enumerate writes regions, safe set, and density map deterministically") {
  TempDir t;
  const std::string cfg = data_path() + "/configs/enumerate_demo.json";
  CHECK(run_cli(t, "enumerate --config " + cfg + " --out " + (t / "e1")) == 0);
  CHECK(run_cli(t, "enumerate --config " + cfg + " --out " + (t / "e2")) == 0);
  for (const char* f :
       {"enumeration_summary.json", "region_demo_box.json", "safe_set.json", "density.csv"}) {
    CHECK(fs::exists(t / (std::string("e1/") + f)));
    CHECK_MESSAGE(slurp(t / (std::string("e1/") + f)) == slurp(t / (std::string("e2/") + f)), f);
  }
  const json s = slurp_json(t / "e1/enumeration_summary.json");
  CHECK(s["incomplete"] == false);
  CHECK(s["regions"][0]["complete"] == true);
  CHECK(s["regions"][0]["unsafe_volume"].get<double>() > 0.0);
}

TEST_CASE("leaf budget underrun flags the run incomplete but still exits 0") {
  TempDir t;
  std::ofstream cfg(t / "small.json");
  cfg << R"({"name":"small","enumeration":{"network":")" << data_path()
      << R"(/nets/demo2d.json","properties":[")" << data_path()
      << R"(/props/demo2d_box.json"],"min_width":0.0078125,"max_leaves":40,"mc_samples":16,)"
      << R"("position_dims":[0,1],"density":{"resolution":50,"lo":[-1,-1],"hi":[1,1]}},)"
      << R"("run":{"output_dir":")" << (t / "out") << R"("}})";
  cfg.close();
  CHECK(run_cli(t, "enumerate --config " + (t / "small.json")) == 0);
  CHECK(slurp_json(t / "out/enumeration_summary.json")["incomplete"] == true);
}

TEST_CASE("trivially safe network enumerates to an empty unsafe list") {
  TempDir t;
  std::ofstream net(t / "trivial.json");
  net << R"({"input_dim":2,"output":{"mode":"linear"},"layers":[)"
      << R"({"weights":[[0,0],[0,0]],"bias":[1.0,0.0],"activation":"linear"}]})";
  net.close();
  std::ofstream cfg(t / "cfg.json");
  cfg << R"({"name":"trivial","enumeration":{"network":")" << (t / "trivial.json")
      << R"(","properties":[")" << data_path()
      << R"(/props/demo2d_box.json"],"position_dims":[0,1],)"
      << R"("density":{"resolution":20,"lo":[-1,-1],"hi":[1,1]}},)"
      << R"("run":{"output_dir":")" << (t / "out") << R"("}})";
  cfg.close();
  CHECK(run_cli(t, "enumerate --config " + (t / "cfg.json")) == 0);
  const json s = slurp_json(t / "out/enumeration_summary.json");
  CHECK(s["regions"][0]["unsafe_volume"].get<double>() == 0.0);
  CHECK(s["regions"][0]["leaves"] == 1);
}

TEST_CASE("scenario parsing rejects unknown keys and bad blocks") {
  TempDir t;
  std::ofstream a(t / "a.json");
  a << R"({"name":"x","typo_block":{}})";
  a.close();
  CHECK(run_cli(t, "simulate --config " + (t / "a.json")) == 2);

  std::ofstream b(t / "b.json");
  b << R"({"name":"x","agent":{"kind":"boat"}})";  // boat without an nmpc block
  b.close();
  CHECK(run_cli(t, "simulate --config " + (t / "b.json")) == 2);
  CHECK(slurp(t / "stderr.txt").find("nmpc") != std::string::npos);
}
