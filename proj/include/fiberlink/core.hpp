#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace fiberlink {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Carrier of ITU channel #44 (1542.14 nm).
inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kDefaultCarrierHz = kSpeedOfLight / 1542.14e-9;

// Invalid inputs, parameters or configuration blocks.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Uniformly sampled phase record in radians.
struct PhaseSeries {
  double fs = 1.0;
  std::vector<double> samples;
  double t0 = 0.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / fs; }
  double time_at(std::size_t i) const { return t0 + static_cast<double>(i) / fs; }
};

inline void validate(const PhaseSeries& s) {
  if (!(s.fs > 0.0) || !std::isfinite(s.fs)) {
    throw ConfigError("phase series: sample rate must be positive");
  }
  for (double v : s.samples) {
    if (!std::isfinite(v)) throw ConfigError("phase series: non-finite sample");
  }
}

// Wraps into (-pi, pi].
inline double wrap_phase(double x) {
  double r = std::remainder(x, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

inline double db_to_power(double db) { return std::pow(10.0, db / 10.0); }
inline double power_to_db(double p) { return 10.0 * std::log10(p); }

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  long double acc = 0.0;
  for (double x : v) acc += x;
  return static_cast<double>(acc / static_cast<long double>(v.size()));
}

inline double variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  long double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return static_cast<double>(acc / static_cast<long double>(v.size() - 1));
}

}  // namespace fiberlink
