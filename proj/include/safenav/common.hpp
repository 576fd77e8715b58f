#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace safenav {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) {
    a += 2.0 * kPi;
  } else if (a > kPi) {
    a -= 2.0 * kPi;
  }
  return a;
}

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

inline double deg2rad(double d) { return d * kPi / 180.0; }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct InvalidStateError : Error {
  using Error::Error;
};

struct IntegrationError : Error {
  using Error::Error;
};

struct SolverError : Error {
  using Error::Error;
};

// splitmix64; used to derive independent stream seeds from (seed, index) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// Deterministic RNG. mt19937_64 output is pinned by the standard; uniform and
// gaussian draws are built from raw bits (std::normal_distribution is not
// byte-stable across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  // Box-Muller, two uniforms per draw, no cached spare.
  double gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  double gaussian(double mu, double sigma) { return mu + sigma * gaussian(); }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Level comes from SAFE_NAV_LOG (error|warn|info|debug), default warn.
LogLevel log_level();
void log(LogLevel level, const std::string& msg);

inline void log_warn(const std::string& msg) { log(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::Debug, msg); }

}  // namespace safenav
