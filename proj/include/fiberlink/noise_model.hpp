#pragma once

// Power-law fiber phase noise: batch synthesis, streaming generators for
// long simulations, spatial distribution along spans, and band RMS readout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fiberlink/core.hpp"
#include "fiberlink/dsp.hpp"
#include "fiberlink/fft.hpp"
#include "fiberlink/rng.hpp"

namespace fiberlink {

// Piecewise scaling of every h coefficient from t_start_s onwards.
struct NoiseScaleStep {
  double t_start_s = 0.0;
  double factor = 1.0;
  bool operator==(const NoiseScaleStep&) const = default;
};

// One-sided phase PSD per km of fiber: S(f) = sum_a h[a] * f^a.
struct NoiseProfile {
  std::map<int, double> h;  // exponent in {-2..2} -> rad^2 Hz^(a-1) per km
  std::optional<double> f_low;
  std::optional<double> f_high;
  std::vector<NoiseScaleStep> schedule;

  bool operator==(const NoiseProfile&) const = default;

  bool is_zero() const {
    return std::all_of(h.begin(), h.end(), [](const auto& kv) { return kv.second == 0.0; });
  }

  double psd(double f, double length_km = 1.0) const {
    double s = 0.0;
    for (const auto& [a, coeff] : h) s += coeff * std::pow(f, a);
    return s * length_km;
  }

  NoiseProfile scaled(double c) const {
    NoiseProfile p = *this;
    for (auto& kv : p.h) kv.second *= c;
    return p;
  }
};

inline void validate(const NoiseProfile& p) {
  if (p.h.empty()) throw ConfigError("noise profile: no h coefficients given");
  for (const auto& [a, coeff] : p.h) {
    if (a < -2 || a > 2) {
      throw ConfigError("noise profile: exponent " + std::to_string(a) + " outside [-2, 2]");
    }
    if (!(coeff >= 0.0) || !std::isfinite(coeff)) {
      throw ConfigError("noise profile: h[" + std::to_string(a) + "] must be finite and >= 0");
    }
  }
  if (p.f_low && !(*p.f_low > 0.0)) throw ConfigError("noise profile: f_low must be > 0");
  if (p.f_low && p.f_high && !(*p.f_low < *p.f_high)) {
    throw ConfigError("noise profile: f_low must be below f_high");
  }
  for (const auto& s : p.schedule) {
    if (!(s.factor >= 0.0)) throw ConfigError("noise profile: schedule factor must be >= 0");
  }
}

// Frequency-domain shaping of white Gaussian noise. The record is periodic,
// so its periodogram carries no end-discontinuity leakage.
inline PhaseSeries synth_powerlaw(const NoiseProfile& profile, double length_km, std::size_t n,
                                  double fs, std::uint64_t seed) {
  validate(profile);
  if (n < 2) throw ConfigError("synth_powerlaw: need at least 2 samples");
  if (!(fs > 0.0)) throw ConfigError("synth_powerlaw: fs must be positive");
  if (!(length_km > 0.0)) throw ConfigError("synth_powerlaw: length_km must be positive");
  const double df = fs / static_cast<double>(n);
  const double f_low = profile.f_low.value_or(df);
  const double f_high = profile.f_high.value_or(fs / 2.0);
  if (f_high > fs / 2.0 * (1.0 + 1e-12)) {
    throw ConfigError("synth_powerlaw: f_high exceeds Nyquist");
  }
  if (f_low < df * (1.0 - 1e-9)) {
    throw ConfigError("synth_powerlaw: record of " + std::to_string(n) +
                      " samples cannot resolve f_low; need n >= fs/f_low");
  }

  PhaseSeries out{fs, std::vector<double>(n, 0.0), 0.0};
  if (profile.is_zero()) return out;

  Rng rng(seed);
  fft::RealInverse inv(n);
  auto spec = inv.input();
  std::fill(spec.begin(), spec.end(), std::complex<double>{});
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k <= half; ++k) {
    const double f = static_cast<double>(k) * df;
    const double g1 = rng.normal();
    const double g2 = rng.normal();
    if (f < f_low * (1.0 - 1e-9) || f > f_high * (1.0 + 1e-9)) continue;
    const double s = profile.psd(f, length_km);
    const bool nyquist = (n % 2 == 0) && k == half;
    if (nyquist) {
      spec[k] = {std::sqrt(n * fs * s / 2.0) * g1, 0.0};
    } else {
      const double amp = std::sqrt(n * fs * s / 4.0);
      spec[k] = {amp * g1, amp * g2};
    }
  }
  auto x = inv.execute();
  const double norm = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = x[i] * norm;
  return out;
}

// Streaming generator for arbitrarily long runs. Each exponent uses a
// time-domain filter of white noise:
//   -2 integrator, 0 white, +2 first difference,
//   -1 bank of first-order sections (three per decade), +1 its difference.
// Accurate to about +-1 dB between the record-length frequency and ~fs/4.
class NoiseStream {
 public:
  NoiseStream() = default;

  NoiseStream(const NoiseProfile& profile, double length_km, double fs, std::uint64_t seed,
              double duration_hint_s)
      : rng_(seed), fs_(fs), schedule_(profile.schedule) {
    validate(profile);
    if (!(fs > 0.0)) throw ConfigError("noise stream: fs must be positive");
    auto coeff = [&](int a) {
      auto it = profile.h.find(a);
      return it == profile.h.end() ? 0.0 : it->second * length_km;
    };
    const double h_m2 = coeff(-2), h_m1 = coeff(-1), h_0 = coeff(0), h_p1 = coeff(1),
                 h_p2 = coeff(2);
    sigma_rw_ = std::sqrt(2.0 * kPi * kPi * h_m2 / fs);
    sigma_white_ = std::sqrt(h_0 * fs / 2.0);
    sigma_blue_ = std::sqrt(h_p2 * fs * fs * fs / (8.0 * kPi * kPi));
    const double f_min = profile.f_low.value_or(1.0 / std::max(duration_hint_s, 1.0 / fs));
    if (h_m1 > 0.0) flicker_ = make_bank(h_m1, f_min);
    if (h_p1 > 0.0) violet_ = make_bank(h_p1 * fs * fs / (4.0 * kPi * kPi), f_min);
    if (profile.f_high && *profile.f_high < 0.49 * fs) {
      lowpass_ = dsp::ButterworthLowPass(2, *profile.f_high, fs);
    }
  }

  double next() {
    double scale = 1.0;
    if (!schedule_.empty()) {
      const double t = static_cast<double>(n_) / fs_;
      for (const auto& s : schedule_) {
        if (t >= s.t_start_s) scale = std::sqrt(s.factor);
      }
    }
    ++n_;
    double y = 0.0;
    if (sigma_rw_ > 0.0) {
      walk_ += scale * sigma_rw_ * rng_.normal();
      y += walk_;
    }
    if (sigma_white_ > 0.0) y += scale * sigma_white_ * rng_.normal();
    if (sigma_blue_ > 0.0) {
      const double w = rng_.normal();
      y += scale * sigma_blue_ * (w - last_blue_);
      last_blue_ = w;
    }
    if (!flicker_.empty()) y += scale * step_bank(flicker_);
    if (!violet_.empty()) {
      const double v = step_bank(violet_);
      y += scale * (v - last_violet_);
      last_violet_ = v;
    }
    if (lowpass_.active()) y = lowpass_.process(y);
    return y;
  }

  PhaseSeries take(std::size_t n) {
    PhaseSeries s{fs_, std::vector<double>(n), 0.0};
    for (auto& v : s.samples) v = next();
    return s;
  }

 private:
  struct Section {
    double a = 0.0;
    double sigma = 0.0;
    double state = 0.0;
  };

  std::vector<Section> make_bank(double h, double f_min) {
    constexpr double kPerDecade = 3.0;
    const double spacing = std::log(10.0) / kPerDecade;
    const double k = h * 2.0 * spacing / kPi;
    std::vector<Section> bank;
    for (double fi = f_min / 2.0; fi < fs_ / 2.0; fi *= std::exp(spacing)) {
      Section s;
      s.a = std::exp(-kTwoPi * fi / fs_);
      s.sigma = std::sqrt(k * fs_ * (1.0 - s.a) * (1.0 - s.a) / (2.0 * fi));
      bank.push_back(s);
    }
    return bank;
  }

  double step_bank(std::vector<Section>& bank) {
    double sum = 0.0;
    for (auto& s : bank) {
      s.state = s.a * s.state + s.sigma * rng_.normal();
      sum += s.state;
    }
    return sum;
  }

  Rng rng_{0};
  double fs_ = 1.0;
  std::vector<NoiseScaleStep> schedule_;
  std::uint64_t n_ = 0;
  double sigma_rw_ = 0.0, sigma_white_ = 0.0, sigma_blue_ = 0.0;
  double walk_ = 0.0, last_blue_ = 0.0, last_violet_ = 0.0;
  std::vector<Section> flicker_, violet_;
  dsp::ButterworthLowPass lowpass_;
};

// Independent noise process of one fiber piece, injected at position_delay.
struct SegmentNoise {
  double position_delay = 0.0;  // s, one-way from link input
  double length_km = 0.0;
  NoiseProfile profile;
  std::uint64_t seed = 0;

  NoiseStream make_stream(double fs, double duration_hint_s) const {
    return NoiseStream(profile, length_km, fs, seed, duration_hint_s);
  }
  PhaseSeries synthesize(std::size_t n, double fs) const {
    return synth_powerlaw(profile, length_km, n, fs, seed);
  }
};

// Splits a span into K equal pieces placed at their midpoints.
inline std::vector<SegmentNoise> distribute_span_noise(const NoiseProfile& profile,
                                                       double span_length_km,
                                                       double span_input_delay, double span_delay,
                                                       std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("distribute_span_noise: K must be >= 1");
  if (!(span_length_km > 0.0)) throw ConfigError("distribute_span_noise: span length must be > 0");
  validate(profile);
  std::vector<SegmentNoise> out;
  out.reserve(k);
  const double piece = span_length_km / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    SegmentNoise s;
    s.position_delay =
        span_input_delay + span_delay * (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    s.length_km = piece;
    s.profile = profile;
    s.seed = mix_seed(seed, i);
    out.push_back(std::move(s));
  }
  return out;
}

// Square root of the integrated one-sided PSD over [f_lo, f_hi], from a
// mean-removed, Hann-windowed periodogram of the whole record.
inline double rms_in_band(const PhaseSeries& series, double f_lo, double f_hi) {
  validate(series);
  if (series.size() < 2) throw ConfigError("rms_in_band: need at least 2 samples");
  if (!(f_lo >= 0.0) || !(f_lo < f_hi) || f_hi > series.fs / 2.0 * (1.0 + 1e-12)) {
    throw ConfigError("rms_in_band: band must satisfy 0 <= f_lo < f_hi <= fs/2");
  }
  const std::size_t n = series.size();
  fft::RealForward fwd(n);
  auto in = fwd.input();
  const double m = mean(series.samples);
  double wsum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
    in[i] = (series.samples[i] - m) * w;
    wsum2 += w * w;
  }
  auto spec = fwd.execute();
  const double df = series.fs / static_cast<double>(n);
  double power = 0.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * df;
    if (f < f_lo || f > f_hi) continue;
    const bool nyquist = (n % 2 == 0) && k == n / 2;
    const double scale = nyquist ? 1.0 : 2.0;
    power += scale * std::norm(spec[k]) / (series.fs * wsum2) * df;
  }
  return std::sqrt(power);
}

// Finds the coefficient of `exponent` (other terms unchanged) that gives
// target_rms over [f_lo, f_hi] for a length_km record, by bisection.
inline double calibrate_coefficient(const NoiseProfile& shape, int exponent, double length_km,
                                    double f_lo, double f_hi, double target_rms, std::size_t n,
                                    double fs, std::uint64_t seed) {
  if (!(target_rms > 0.0)) throw ConfigError("calibrate: target RMS must be positive");
  auto measure = [&](double h) {
    NoiseProfile p = shape;
    p.h[exponent] = h;
    return rms_in_band(synth_powerlaw(p, length_km, n, fs, seed), f_lo, f_hi);
  };
  double lo = 1e-12, hi = 1.0;
  while (measure(hi) < target_rms) {
    hi *= 10.0;
    if (hi > 1e30) throw ConfigError("calibrate: target RMS unreachable");
  }
  for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-10; ++it) {
    const double mid = std::sqrt(lo * hi);
    (measure(mid) < target_rms ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace fiberlink
