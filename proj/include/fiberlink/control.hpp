#pragma once

// Behavioral servo electronics: tracking oscillator, divider + PFD, PI loop
// filters, delay-limited gain tuning and the cycle-slip rate model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "fiberlink/core.hpp"
#include "fiberlink/rng.hpp"

namespace fiberlink {

enum class Path { Fast = 0, Slow = 1 };

struct PiGains {
  double kp = 0.0;  // Hz per rad
  double ki = 0.0;  // Hz per rad*s
  bool operator==(const PiGains&) const = default;
};

struct ServoConfig {
  int divider_n = 152;
  double pfd_range = kPi;
  std::array<PiGains, 2> pi_gains{};  // indexed by Path
  double fast_bw = 100e3;
  double slow_bw = 0.5;
  double tracking_bw = 100e3;
  double loop_delay = 0.0;  // s, delay for the 1/(4 delay) check

  bool operator==(const ServoConfig&) const = default;

  const PiGains& gains(Path p) const { return pi_gains[static_cast<int>(p)]; }
  PiGains& gains(Path p) { return pi_gains[static_cast<int>(p)]; }
};

inline void validate(const ServoConfig& c) {
  if (c.divider_n < 1) throw ConfigError("servo: divider_n must be >= 1");
  if (!(c.fast_bw > 0.0) || !(c.slow_bw > 0.0) || !(c.tracking_bw > 0.0)) {
    throw ConfigError("servo: bandwidths must be positive");
  }
  if (!(c.slow_bw < c.fast_bw)) throw ConfigError("servo: slow_bw must be below fast_bw");
  if (!(c.loop_delay >= 0.0)) throw ConfigError("servo: loop_delay must be >= 0");
}

struct ServoState {
  std::array<double, 2> integrator{};  // rad*s per path
  double correction_phase = 0.0;       // rad
  double nco_phase = 0.0;              // tracking oscillator, rad
  double nco_integrator = 0.0;         // rad/s
  long long tracking_cycle = 0;
  std::uint64_t slip_count = 0;
  bool locked = true;
};

struct TrackingResult {
  double clean_phase = 0.0;
  bool slip = false;
};

// Type-II tracking PLL, damping 1/sqrt(2), noise bandwidth = tracking_bw.
// A slip is a change of the 2 pi branch the loop sits on.
inline TrackingResult tracking_step(double beat_phase, ServoState& state, const ServoConfig& cfg,
                                    double fs) {
  constexpr double zeta = 0.7071067811865476;
  const double bw = std::min(cfg.tracking_bw, fs / 10.0);
  const double wn = 2.0 * bw / (zeta + 1.0 / (4.0 * zeta));
  const double raw = beat_phase - state.nco_phase;
  const double err = wrap_phase(raw);
  const auto cycle = std::llround((raw - err) / kTwoPi);
  TrackingResult r;
  if (cycle != state.tracking_cycle) {
    r.slip = true;
    state.slip_count += static_cast<std::uint64_t>(std::llabs(cycle - state.tracking_cycle));
    state.tracking_cycle = cycle;
  }
  state.nco_integrator += wn * wn * err / fs;
  state.nco_phase += (2.0 * zeta * wn * err + state.nco_integrator) / fs;
  r.clean_phase = state.nco_phase;
  return r;
}

// Divide by N, compare with the reference, wrap into (-pi, pi].
inline double divide_pfd(double clean_phase, int divider_n, double ref_phase) {
  if (divider_n < 1) throw ConfigError("divide_pfd: divider_n must be >= 1");
  return wrap_phase(clean_phase / static_cast<double>(divider_n) - ref_phase);
}

// freq_command = kp*e + ki*integral(e); the correction phase advances by
// 2 pi * freq_command / fs.
inline double pi_step(double error, Path path, ServoState& state, const ServoConfig& cfg,
                      double fs) {
  const auto i = static_cast<int>(path);
  state.integrator[i] += error / fs;
  const auto& g = cfg.pi_gains[i];
  const double cmd = g.kp * error + g.ki * state.integrator[i];
  state.correction_phase += kTwoPi * cmd / fs;
  return cmd;
}

// Laser lock with the two-rate split: the fast path (injection current)
// handles the error, the slow path (temperature) integrates the fast
// integrator's content so it is offloaded below slow_bw.
struct TwoRateCommand {
  double fast = 0.0;
  double slow = 0.0;
};

inline TwoRateCommand two_rate_step(double error, ServoState& state, const ServoConfig& cfg,
                                    double fs) {
  TwoRateCommand c;
  c.fast = pi_step(error, Path::Fast, state, cfg, fs);
  const double offload = state.integrator[0] * kTwoPi * cfg.slow_bw;
  state.integrator[0] -= offload / fs;
  c.slow = pi_step(offload, Path::Slow, state, cfg, fs);
  return c;
}

// Frequency where the low-frequency open-loop magnitude of the compensation
// loop, 2/N * |kp + ki/(j w)| / f, falls to one.
inline double unity_gain_frequency(const PiGains& g, int divider_n) {
  auto mag = [&](double f) {
    const double w = kTwoPi * f;
    return 2.0 / divider_n * std::hypot(g.kp, g.ki / w) / f;
  };
  double lo = 1e-6, hi = 1e9;
  if (mag(lo) < 1.0) return 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    (mag(mid) > 1.0 ? lo : hi) = mid;
  }
  return lo;
}

// Warning text when the loop is faster than the 1/(4 delay) limit.
inline std::optional<std::string> delay_stability_warning(const ServoConfig& cfg) {
  if (cfg.loop_delay <= 0.0) return std::nullopt;
  const double fu = unity_gain_frequency(cfg.gains(Path::Fast), cfg.divider_n);
  const double limit = 1.0 / (4.0 * cfg.loop_delay);
  if (fu >= limit) {
    return "unity-gain frequency " + std::to_string(fu) + " Hz is at or above the delay limit " +
           std::to_string(limit) + " Hz";
  }
  return std::nullopt;
}

// Largest closed-loop pole magnitude of the sampled compensation loop
//   c[n+1] = c[n] - 2 pi/fs (kp e[n] + ki I[n+1]),  I[n+1] = I[n] + e[n]/fs,
//   e[n] = (c[n] + c[n-D]) / N
// where D is the round-trip delay in samples. Stable iff < 1.
inline double compensation_pole_radius(const PiGains& g, int divider_n, std::size_t rt_delay,
                                       double fs) {
  // (z-1)^2 z^D + gain (kp (z-1) + ki z / fs)(z^D + 1) = 0
  const std::size_t deg = rt_delay + 2;
  std::vector<double> p(deg + 1, 0.0);  // p[k] multiplies z^k
  const double gain = kTwoPi / (divider_n * fs);
  p[rt_delay + 2] += 1.0;
  p[rt_delay + 1] += -2.0;
  p[rt_delay] += 1.0;
  const double c1 = gain * (g.kp + g.ki / fs);  // z^1 term of the PI factor
  const double c0 = gain * (-g.kp);             // z^0 term
  p[rt_delay + 1] += c1;
  p[rt_delay] += c0;
  p[1] += c1;
  p[0] += c0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(deg),
                                                    static_cast<Eigen::Index>(deg));
  for (std::size_t i = 1; i < deg; ++i) {
    companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  }
  for (std::size_t k = 0; k < deg; ++k) {
    companion(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(deg - 1)) = -p[k] / p[deg];
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct ServoTuning {
  PiGains gains;
  double critical_scale_hz = 0.0;  // loop scale at the stability edge
  double gain_margin_db = 0.0;
};

// PI gains for the compensation loop from the delay-limited stability edge:
//   kp = N * g / 2,  ki = kp * 2 pi g * zero_ratio
// with the loop scale g found by bisection on the pole radius, then the
// whole loop gain lowered by gain_margin_db.
inline ServoTuning tune_compensation(double rt_delay_s, double fs, int divider_n,
                                     double zero_ratio, double gain_margin_db) {
  if (!(rt_delay_s > 0.0)) throw ConfigError("tune: round-trip delay must be positive");
  if (!(zero_ratio >= 0.0)) throw ConfigError("tune: zero ratio must be >= 0");
  const auto d = static_cast<std::size_t>(std::llround(rt_delay_s * fs));
  auto gains_at = [&](double g) {
    PiGains p;
    p.kp = divider_n * g / 2.0;
    p.ki = p.kp * kTwoPi * g * zero_ratio;
    return p;
  };
  double lo = 1e-3, hi = fs;
  if (compensation_pole_radius(gains_at(lo), divider_n, d, fs) >= 1.0) {
    throw ConfigError("tune: loop unstable even at minimal gain");
  }
  for (int it = 0; it < 60 && hi / lo > 1.0 + 1e-6; ++it) {
    const double mid = std::sqrt(lo * hi);
    (compensation_pole_radius(gains_at(mid), divider_n, d, fs) < 1.0 ? lo : hi) = mid;
  }
  ServoTuning t;
  t.critical_scale_hz = lo;
  t.gain_margin_db = gain_margin_db;
  const double scale = std::pow(10.0, -gain_margin_db / 20.0);
  t.gains = gains_at(lo);
  t.gains.kp *= scale;
  t.gains.ki *= scale;
  return t;
}

struct FilterStage {
  double center_hz = 0.0;
  double bandwidth_hz = 0.0;
  bool operator==(const FilterStage&) const = default;
};

struct FilterChainSpec {
  std::vector<FilterStage> stages;
  bool operator==(const FilterChainSpec&) const = default;
};

// Each band-pass is represented by its noise bandwidth; the chain passes
// the narrowest one.
inline double apply_filter_chain(const FilterChainSpec& spec, double /*snr_in_db_hz*/ = 0.0) {
  if (spec.stages.empty()) throw ConfigError("filter chain: no stages");
  double bw = spec.stages.front().bandwidth_hz;
  for (const auto& s : spec.stages) {
    if (!(s.bandwidth_hz > 0.0)) throw ConfigError("filter chain: bandwidth must be positive");
    bw = std::min(bw, s.bandwidth_hz);
  }
  return bw;
}

// rate = front_factor * (B/2) * exp(-exponent * 2 rho),  rho = SNR/(2 B)
struct SlipModel {
  double front_factor = 0.0;
  double exponent = 0.0;
  bool calibrated = false;
  bool operator==(const SlipModel&) const = default;
};

inline double loop_snr(double snr_density_db_hz, double loop_bw_hz) {
  return db_to_power(snr_density_db_hz) / (2.0 * loop_bw_hz);
}

inline double slip_rate_estimate(const SlipModel& model, double snr_density_db_hz,
                                 double noise_bw_hz, double loop_bw_hz) {
  if (!model.calibrated) {
    throw ConfigError("slip model is not calibrated; run `fiberlink calibrate` and put the "
                      "result in the slip_model block");
  }
  if (std::isnan(snr_density_db_hz) || !(db_to_power(snr_density_db_hz) > 0.0)) {
    throw ConfigError("slip_rate_estimate: non-physical SNR");
  }
  if (!(loop_bw_hz > 0.0) || loop_bw_hz > noise_bw_hz) {
    throw ConfigError("slip_rate_estimate: need 0 < loop_bw <= noise_bw");
  }
  const double rho = loop_snr(snr_density_db_hz, loop_bw_hz);
  return model.front_factor * (loop_bw_hz / 2.0) * std::exp(-model.exponent * 2.0 * rho);
}

// SNR density at which the modeled rate equals target_rate.
inline double slip_threshold_snr(const SlipModel& model, double bw_hz, double target_rate) {
  double lo = -50.0, hi = 250.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (slip_rate_estimate(model, mid, bw_hz, bw_hz) > target_rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct SlipMcPoint {
  double rho = 0.0;
  std::uint64_t slips = 0;
  double duration = 0.0;     // in units of the loop time constant 1/K
  double loop_bw = 0.25;     // noise bandwidth K/4 in the same units
  double rate() const { return static_cast<double>(slips) / duration; }
};

// First-order loop phase-error diffusion
//   dphi = -K sin(phi) dt - K sqrt(N0/2) dW,  K = 1,  B = K/4,  N0 = 1/(2 rho B)
// A crossing of +-pi counts as a slip once the error has run on to the
// neighbouring equilibrium (2 pi away); bare crossings chatter back and forth
// at any finite dt and would be counted many times.
inline SlipMcPoint simulate_first_order_slips(double rho, std::uint64_t samples, std::uint64_t seed,
                                              double dt = 0.02) {
  SlipMcPoint p;
  p.rho = rho;
  const double k = 1.0;
  const double b = k / 4.0;
  const double n0 = 1.0 / (2.0 * rho * b);
  const double sigma = k * std::sqrt(n0 / 2.0 * dt);
  Rng rng(seed);
  double phi = 0.0;  // relative to the current equilibrium
  for (std::uint64_t i = 0; i < samples; ++i) {
    phi += -k * std::sin(phi) * dt + sigma * rng.normal();
    if (phi >= kTwoPi) {
      phi -= kTwoPi;
      ++p.slips;
    } else if (phi <= -kTwoPi) {
      phi += kTwoPi;
      ++p.slips;
    }
  }
  p.duration = static_cast<double>(samples) * dt;
  p.loop_bw = b;
  return p;
}

struct SlipCalibration {
  SlipModel model;
  double mc_front_factor = 0.0;  // intercept of the Monte Carlo fit alone
  std::vector<SlipMcPoint> points;
};

// Exponent from a count-weighted log-linear fit of the Monte Carlo rates;
// front factor from the anchor (anchor_snr at anchor_bw gives anchor_rate).
inline SlipCalibration calibrate_slip_model(double anchor_snr_db_hz, double anchor_bw_hz,
                                            double anchor_rate, std::uint64_t samples_per_point,
                                            std::uint64_t seed,
                                            std::vector<double> rhos = {0.5, 0.75, 1.0, 1.25,
                                                                        1.5, 1.75}) {
  SlipCalibration cal;
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    auto p = simulate_first_order_slips(rhos[i], samples_per_point, mix_seed(seed, i));
    cal.points.push_back(p);
    if (p.slips == 0) continue;
    const double w = static_cast<double>(p.slips);
    const double x = 2.0 * p.rho;
    const double y = std::log(p.rate() / (p.loop_bw / 2.0));
    sw += w; sx += w * x; sy += w * y; sxx += w * x * x; sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0)) throw ConfigError("slip calibration: too few Monte Carlo slips to fit");
  const double slope = (sw * sxy - sx * sy) / det;
  const double intercept = (sy - slope * sx) / sw;
  cal.model.exponent = -slope;
  cal.mc_front_factor = std::exp(intercept);
  const double rho = loop_snr(anchor_snr_db_hz, anchor_bw_hz);
  cal.model.front_factor =
      anchor_rate / ((anchor_bw_hz / 2.0) * std::exp(-cal.model.exponent * 2.0 * rho));
  cal.model.calibrated = true;
  return cal;
}

}  // namespace fiberlink
