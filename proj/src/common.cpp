#include "safenav/common.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace safenav {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("SAFE_NAV_LOG");
    if (!env) return LogLevel::Warn;
    std::string v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "warn") return LogLevel::Warn;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static std::mutex mu;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

}  // namespace safenav
