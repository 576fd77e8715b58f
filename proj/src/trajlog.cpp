#include "safenav/trajlog.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace safenav::sim {

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Success:
      return "success";
    case Outcome::Collision:
      return "collision";
    case Outcome::Timeout:
      return "timeout";
  }
  return "timeout";
}

Outcome outcome_from_name(const std::string& s) {
  if (s == "success") return Outcome::Success;
  if (s == "collision") return Outcome::Collision;
  if (s == "timeout") return Outcome::Timeout;
  throw ParseError("unknown outcome: " + s);
}

namespace {

const char* kUnicycleColumns =
    "t,px,py,theta,r_dnn_v,r_dnn_w,r_v,r_w,h,d_safe,nearest_distance,events";
const char* kBoatColumns =
    "t,v1,v2,v3,w1,w2,w3,px,py,pz,phi,theta,psi,r_dnn_v,r_dnn_w,r_v,r_w,u_left,u_right,h,"
    "d_safe,nearest_distance,events";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void save_trajectory_csv(const EpisodeLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write trajectory file: " + path);
  const bool uni = log.kind == policy::AgentKind::Unicycle;
  out << "# agent=" << (uni ? "unicycle" : "boat") << " seed=" << log.seed
      << " outcome=" << outcome_name(log.outcome) << " steps=" << log.steps
      << " duration=" << fmt(log.duration) << " min_h=" << fmt(log.min_h)
      << " corrections=" << log.corrections << " fallbacks=" << log.fallbacks;
  if (!log.error.empty()) out << " error=" << log.error;  // kept last, may contain spaces
  out << "\n";
  out << (uni ? kUnicycleColumns : kBoatColumns) << "\n";
  for (const auto& r : log.records) {
    out << fmt(r.t);
    for (int i = 0; i < r.state.size(); ++i) out << "," << fmt(r.state[i]);
    out << "," << fmt(r.r_dnn_v) << "," << fmt(r.r_dnn_w) << "," << fmt(r.r_v) << ","
        << fmt(r.r_w);
    if (!uni) out << "," << fmt(r.u_left) << "," << fmt(r.u_right);
    out << "," << fmt(r.h) << "," << fmt(r.d_safe) << "," << fmt(r.nearest_distance) << ","
        << r.events << "\n";
  }
}

EpisodeLog load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trajectory file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# agent=", 0) != 0) {
    throw ParseError("trajectory file missing metadata header: " + path);
  }
  EpisodeLog log;
  std::string meta_line = line.substr(2);
  if (auto pos = meta_line.find(" error="); pos != std::string::npos) {
    log.error = meta_line.substr(pos + 7);
    meta_line.resize(pos);
  }
  {
    std::istringstream meta(meta_line);
    std::string kv;
    while (meta >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "agent") {
        if (val == "unicycle") {
          log.kind = policy::AgentKind::Unicycle;
        } else if (val == "boat") {
          log.kind = policy::AgentKind::Boat;
        } else {
          throw ParseError("unknown agent kind: " + val);
        }
      } else if (key == "seed") {
        log.seed = std::stoull(val);
      } else if (key == "outcome") {
        log.outcome = outcome_from_name(val);
      } else if (key == "steps") {
        log.steps = std::stoi(val);
      } else if (key == "duration") {
        log.duration = std::stod(val);
      } else if (key == "min_h") {
        log.min_h = std::stod(val);
      } else if (key == "corrections") {
        log.corrections = std::stoi(val);
      } else if (key == "fallbacks") {
        log.fallbacks = std::stoi(val);
      }
    }
  }
  if (!std::getline(in, line)) throw ParseError("trajectory file missing column header");
  const bool uni = log.kind == policy::AgentKind::Unicycle;
  const int state_dim = uni ? 3 : 12;
  const int expected = uni ? 12 : 23;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != expected) {
      throw ParseError("trajectory row has " + std::to_string(vals.size()) +
                       " columns, expected " + std::to_string(expected));
    }
    StepRecord r;
    int k = 0;
    r.t = vals[k++];
    r.state.resize(state_dim);
    for (int i = 0; i < state_dim; ++i) r.state[i] = vals[k++];
    r.r_dnn_v = vals[k++];
    r.r_dnn_w = vals[k++];
    r.r_v = vals[k++];
    r.r_w = vals[k++];
    if (!uni) {
      r.u_left = vals[k++];
      r.u_right = vals[k++];
    }
    r.h = vals[k++];
    r.d_safe = vals[k++];
    r.nearest_distance = vals[k++];
    r.events = static_cast<unsigned>(vals[k++]);
    log.records.push_back(std::move(r));
  }
  return log;
}

}  // namespace safenav::sim
