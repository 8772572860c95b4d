#pragma once

// Link topology -> bidirectional delay-line network in the phase domain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fiberlink/core.hpp"
#include "fiberlink/dsp.hpp"
#include "fiberlink/noise_model.hpp"
#include "fiberlink/rng.hpp"

namespace fiberlink {

inline constexpr double kDefaultGroupDelayPerKm = 5.0e-6;

struct Span {
  double length_km = 0.0;
  double loss_db_per_km = 0.2;
  NoiseProfile profile;
  std::size_t k = 1;
  bool operator==(const Span&) const = default;
};
struct Oadm {
  double insertion_loss_db = 1.0;
  bool operator==(const Oadm&) const = default;
};
struct Edfa {
  double gain_db = 0.0;
  bool operator==(const Edfa&) const = default;
};
struct Aom {
  double shift_hz = 0.0;
  bool operator==(const Aom&) const = default;
};
struct Reflector {
  double reflectance_db = -40.0;
  std::string note;
  bool operator==(const Reflector&) const = default;
};
struct Connector {
  double loss_db = 0.5;
  double reflectance_db = -35.0;
  std::size_t count = 1;
  bool operator==(const Connector&) const = default;
};

using Device = std::variant<Span, Oadm, Edfa, Aom, Reflector, Connector>;

struct LinkTopology {
  std::string name;
  std::vector<Device> devices;
  bool operator==(const LinkTopology&) const = default;
};

inline const char* device_kind(const Device& d) {
  constexpr const char* names[] = {"span", "oadm", "edfa", "aom", "reflector", "connector"};
  return names[d.index()];
}

inline double device_loss_db(const Device& d) {
  return std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Span>) return v.length_km * v.loss_db_per_km;
        else if constexpr (std::is_same_v<T, Oadm>) return v.insertion_loss_db;
        else if constexpr (std::is_same_v<T, Connector>) return v.loss_db * static_cast<double>(v.count);
        else return 0.0;
      },
      d);
}

inline double device_gain_db(const Device& d) {
  if (const auto* e = std::get_if<Edfa>(&d)) return e->gain_db;
  return 0.0;
}

inline std::optional<double> device_reflectance_db(const Device& d) {
  if (const auto* r = std::get_if<Reflector>(&d)) return r->reflectance_db;
  if (const auto* c = std::get_if<Connector>(&d)) return c->reflectance_db;
  return std::nullopt;
}

inline void validate(const LinkTopology& t) {
  if (t.devices.empty()) throw ConfigError("topology '" + t.name + "': no devices");
  bool has_span = false;
  for (std::size_t i = 0; i < t.devices.size(); ++i) {
    const auto& d = t.devices[i];
    const std::string where = "topology '" + t.name + "' device " + std::to_string(i) + " (" +
                              device_kind(d) + "): ";
    if (const auto* s = std::get_if<Span>(&d)) {
      has_span = true;
      if (!(s->length_km > 0.0)) throw ConfigError(where + "length_km must be > 0");
      if (!(s->loss_db_per_km >= 0.0)) throw ConfigError(where + "loss_db_per_km must be >= 0");
      if (s->k < 1) throw ConfigError(where + "K must be >= 1");
      validate(s->profile);
    } else if (const auto* o = std::get_if<Oadm>(&d)) {
      if (!(o->insertion_loss_db >= 0.0)) throw ConfigError(where + "insertion loss must be >= 0");
    } else if (const auto* e = std::get_if<Edfa>(&d)) {
      if (!(e->gain_db > 0.0 && e->gain_db <= 40.0)) {
        throw ConfigError(where + "gain_db must lie in (0, 40]");
      }
      if (i == 0 || i + 1 == t.devices.size()) {
        throw ConfigError(where + "an EDFA cannot terminate the chain");
      }
    } else if (const auto* r = std::get_if<Reflector>(&d)) {
      if (!(r->reflectance_db <= 0.0)) throw ConfigError(where + "reflectance_db must be <= 0");
    } else if (const auto* c = std::get_if<Connector>(&d)) {
      if (!(c->loss_db >= 0.0)) throw ConfigError(where + "loss_db must be >= 0");
      if (!(c->reflectance_db <= 0.0)) throw ConfigError(where + "reflectance_db must be <= 0");
      if (c->count < 1) throw ConfigError(where + "count must be >= 1");
    }
  }
  if (!has_span) throw ConfigError("topology '" + t.name + "': needs at least one span");
}

inline double total_length_km(const LinkTopology& t) {
  double l = 0.0;
  for (const auto& d : t.devices) {
    if (const auto* s = std::get_if<Span>(&d)) l += s->length_km;
  }
  return l;
}

struct OpticalTap {
  double phase = 0.0;
  double nominal_offset_hz = 0.0;
  double amplitude = 1.0;
  double polarization_angle = 0.0;
  bool transient = false;
};

struct PolarizationState {
  double misalignment_angle = 0.0;
  double drift_rate = 0.0;  // rad/sqrt(s)
  std::vector<double> controller_setting{0.0, 0.0};
  bool operator==(const PolarizationState&) const = default;
};

// Actuator channel i moves the effective angle by setting_i / (i + 1).
inline double controller_offset(const PolarizationState& s) {
  double off = 0.0;
  for (std::size_t i = 0; i < s.controller_setting.size(); ++i) {
    off += s.controller_setting[i] / static_cast<double>(i + 1);
  }
  return off;
}

inline double effective_misalignment(const PolarizationState& s) {
  return s.misalignment_angle - controller_offset(s);
}

inline double amplitude_factor(const PolarizationState& s) {
  return std::abs(std::cos(effective_misalignment(s)));
}

inline double reflect_into(double x, double lo, double hi) {
  const double w = hi - lo;
  double y = std::fmod(x - lo, 2.0 * w);
  if (y < 0.0) y += 2.0 * w;
  return lo + (y <= w ? y : 2.0 * w - y);
}

inline PolarizationState polarization_drift(PolarizationState s, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw ConfigError("polarization_drift: dt must be > 0");
  if (s.drift_rate == 0.0) return s;
  s.misalignment_angle =
      reflect_into(s.misalignment_angle + s.drift_rate * std::sqrt(dt) * rng.normal(), 0.0,
                   kPi / 2.0);
  return s;
}

struct BeatSample {
  double phase = 0.0;
  double amplitude = 0.0;
  double offset_hz = 0.0;
};

// White detection noise of one-sided PSD 10^(-snr/10) rad^2/Hz.
inline double detection_noise_std(double snr_density_db_hz, double fs) {
  if (std::isinf(snr_density_db_hz) && snr_density_db_hz > 0) return 0.0;
  return std::sqrt(std::pow(10.0, -snr_density_db_hz / 10.0) * fs / 2.0);
}

inline BeatSample heterodyne(const OpticalTap& a, const OpticalTap& b, double snr_density_db_hz,
                             double fs, Rng& rng) {
  BeatSample s;
  const double sd = detection_noise_std(snr_density_db_hz, fs);
  s.phase = a.phase - b.phase + (sd > 0.0 ? sd * rng.normal() : 0.0);
  s.amplitude = a.amplitude * b.amplitude * std::abs(std::cos(a.polarization_angle - b.polarization_angle));
  s.offset_hz = a.nominal_offset_hz - b.nominal_offset_hz;
  return s;
}

struct SpurPair {
  std::size_t first = 0;   // device index, first < second
  std::size_t second = 0;
  double path_gain_db = 0.0;        // net gain strictly between the two
  double reflectance_sum_db = 0.0;  // R_a + R_b
  double loop_gain_db() const { return 2.0 * path_gain_db + reflectance_sum_db; }
};

// Every pair of reflective elements with at least one EDFA between them.
inline std::vector<SpurPair> spur_pairs(const LinkTopology& t) {
  std::vector<SpurPair> out;
  const auto& d = t.devices;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto ri = device_reflectance_db(d[i]);
    if (!ri) continue;
    double net = 0.0;
    bool amp = false;
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if (const auto rj = device_reflectance_db(d[j]); rj && amp) {
        out.push_back({i, j, net, *ri + *rj});
      }
      net += device_gain_db(d[j]) - device_loss_db(d[j]);
      if (std::holds_alternative<Edfa>(d[j])) amp = true;
    }
  }
  return out;
}

struct CompileOptions {
  double group_delay_s_per_km = kDefaultGroupDelayPerKm;
  std::uint64_t seed = 0;
  double duration_hint_s = 1.0e4;
};

// Stateful stepping network: forward() then backward() once per sample.
class CompiledLink {
 public:
  double fs = 0.0;
  double one_way_delay = 0.0;        // s
  std::size_t delay_samples = 0;
  double one_way_loss_db = 0.0;       // losses - gains
  double passive_loss_db = 0.0;
  double total_gain_db = 0.0;
  double aom_shift_hz = 0.0;          // per pass
  std::vector<SegmentNoise> segments;
  std::vector<SpurPair> spur_reflection_pairs;

  CompiledLink() = default;

  CompiledLink(const LinkTopology& topology, double fs_hz, const CompileOptions& opt = {}) {
    validate(topology);
    if (!(fs_hz > 0.0)) throw ConfigError("compile: fs must be positive");
    fs = fs_hz;
    double pos = 0.0;
    std::size_t span_index = 0;
    for (const auto& d : topology.devices) {
      passive_loss_db += device_loss_db(d);
      total_gain_db += device_gain_db(d);
      if (const auto* a = std::get_if<Aom>(&d)) aom_shift_hz += a->shift_hz;
      if (const auto* s = std::get_if<Span>(&d)) {
        const double span_delay = s->length_km * opt.group_delay_s_per_km;
        if (!s->profile.is_zero()) {
          auto segs = distribute_span_noise(s->profile, s->length_km, pos, span_delay, s->k,
                                            mix_seed(opt.seed, span_index));
          segments.insert(segments.end(), segs.begin(), segs.end());
        }
        pos += span_delay;
        ++span_index;
      }
    }
    one_way_delay = pos;
    one_way_loss_db = passive_loss_db - total_gain_db;
    const double exact = one_way_delay * fs;
    delay_samples = static_cast<std::size_t>(std::llround(exact));
    if (delay_samples == 0 || std::abs(static_cast<double>(delay_samples) - exact) / exact >= 0.01) {
      throw ConfigError("compile: one-way delay " + std::to_string(one_way_delay) +
                        " s does not round to whole samples within 1% at fs = " +
                        std::to_string(fs) + " Hz; use fs >= " +
                        std::to_string(50.0 / one_way_delay) + " Hz");
    }
    spur_reflection_pairs = spur_pairs(topology);
    amplitude_ = std::pow(10.0, -one_way_loss_db / 20.0);
    // Positions rescaled so the far end sits exactly on delay_samples.
    const double to_samples = static_cast<double>(delay_samples) / one_way_delay;
    carrier_ = dsp::DelayLine(delay_samples);
    inject_ = dsp::DelayLine(delay_samples);
    for (const auto& s : segments) {
      Injector inj;
      inj.pos = s.position_delay * to_samples;
      inj.stream = s.make_stream(fs, opt.duration_hint_s);
      inj.line = dsp::DelayLine(delay_samples + 1);
      injectors_.push_back(std::move(inj));
    }
  }

  std::size_t t_index() const { return t_; }
  // Fiber noise alone in the last forward() result.
  double forward_noise() const { return forward_noise_; }
  bool warm() const { return t_ >= 2 * delay_samples; }

  // Advances noise by one sample and returns the field at the remote end.
  OpticalTap forward(double input_phase, double correction_phase, double pol_angle = 0.0) {
    carrier_.push(input_phase + correction_phase);
    correction_ = correction_phase;
    double noise = 0.0;
    for (auto& inj : injectors_) {
      inj.line.push(inj.stream.next());
      noise += inj.line.at_fractional(static_cast<double>(delay_samples) - inj.pos);
    }
    forward_noise_ = noise;
    OpticalTap tap;
    tap.phase = carrier_.at(delay_samples) + noise;
    tap.nominal_offset_hz = aom_shift_hz;
    tap.amplitude = amplitude_;
    tap.polarization_angle = pol_angle;
    tap.transient = t_ < delay_samples;
    return tap;
  }

  // Light re-injected at the remote end, seen back at the input after the
  // second AOM pass with the same correction.
  OpticalTap backward(double remote_inject_phase, double remote_offset_hz = 0.0) {
    inject_.push(remote_inject_phase);
    double noise = 0.0;
    for (const auto& inj : injectors_) noise += inj.line.at_fractional(inj.pos);
    OpticalTap tap;
    tap.phase = inject_.at(delay_samples) + noise + correction_;
    tap.nominal_offset_hz = remote_offset_hz + 2.0 * aom_shift_hz;
    tap.amplitude = amplitude_;
    tap.transient = t_ < 2 * delay_samples;
    ++t_;
    return tap;
  }

  struct Taps {
    OpticalTap remote;
    OpticalTap local_return;
  };

  Taps step_fields(double input_phase, double correction_phase, double remote_inject_phase,
                   double remote_offset_hz = 0.0) {
    Taps t;
    t.remote = forward(input_phase, correction_phase);
    t.local_return = backward(remote_inject_phase, remote_offset_hz);
    return t;
  }

 private:
  struct Injector {
    double pos = 0.0;  // samples from link input
    NoiseStream stream;
    dsp::DelayLine line;
  };

  dsp::DelayLine carrier_, inject_;
  std::vector<Injector> injectors_;
  double amplitude_ = 1.0;
  double correction_ = 0.0;
  double forward_noise_ = 0.0;
  std::size_t t_ = 0;
};

inline CompiledLink compile(const LinkTopology& topology, double fs,
                            const CompileOptions& opt = {}) {
  return CompiledLink(topology, fs, opt);
}

// Linear field amplitude after each device, starting from 1.
inline std::vector<double> amplitude_profile(const LinkTopology& t) {
  std::vector<double> out;
  double db = 0.0;
  for (const auto& d : t.devices) {
    db += device_gain_db(d) - device_loss_db(d);
    out.push_back(std::pow(10.0, db / 20.0));
  }
  return out;
}

}  // namespace fiberlink
