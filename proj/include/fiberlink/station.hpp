#pragma once

// Local station servo + remote laser station, composed into full runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fiberlink/control.hpp"
#include "fiberlink/core.hpp"
#include "fiberlink/dsp.hpp"
#include "fiberlink/optics.hpp"
#include "fiberlink/rng.hpp"

namespace fiberlink {

enum class RlsMode { ScanFrequency, SearchPolarization, Locked, Reoptimize };

inline const char* to_string(RlsMode m) {
  switch (m) {
    case RlsMode::ScanFrequency: return "SCAN_FREQUENCY";
    case RlsMode::SearchPolarization: return "SEARCH_POLARIZATION";
    case RlsMode::Locked: return "LOCKED";
    case RlsMode::Reoptimize: return "REOPTIMIZE";
  }
  return "?";
}

inline constexpr double kLaserTuningHalfSpan = 1.0e9;

struct RlsThresholds {
  double acquire_level = 0.9;
  double reoptimize_level = 0.7;
  double detect_level = 0.1;
  double capture_range_hz = 5.0e6;
  double scan_step_hz = 8.0e6;  // must stay below 2 x capture range
  double pol_step = 0.05;       // rad per coordinate move
  std::size_t max_steps = 2000;
  bool operator==(const RlsThresholds&) const = default;
};

inline void validate(const RlsThresholds& t) {
  if (!(t.acquire_level > t.reoptimize_level && t.reoptimize_level > 0.0)) {
    throw ConfigError("rls: need acquire_level > reoptimize_level > 0");
  }
  if (!(t.detect_level > 0.0 && t.detect_level < t.reoptimize_level)) {
    throw ConfigError("rls: detect_level must lie in (0, reoptimize_level)");
  }
  if (!(t.capture_range_hz > 0.0) || !(t.scan_step_hz > 0.0) ||
      !(t.scan_step_hz < 2.0 * t.capture_range_hz)) {
    throw ConfigError("rls: need 0 < scan_step_hz < 2 capture_range_hz");
  }
  if (!(t.pol_step > 0.0)) throw ConfigError("rls: pol_step must be > 0");
}

struct RlsState {
  RlsMode mode = RlsMode::ScanFrequency;
  double laser_offset_hz = 0.0;
  std::vector<double> pol_setting{0.0, 0.0};
  double beat_amplitude = 0.0;
  double lock_timer = 0.0;
  // search bookkeeping
  double scan_dir = 1.0;
  double pol_dir = 1.0;
  std::size_t pol_channel = 0;
  int reversals = 0;
  double last_amplitude = 0.0;
  std::size_t steps = 0;
  std::size_t pol_moves = 0;
  int sweep_ends = 0;
};

struct RlsCommands {
  double laser_freq_cmd = 0.0;
  std::vector<double> pol_cmd;
  bool lock_enable = false;
};

namespace detail {

inline void polarization_move(RlsState& s, const RlsThresholds& th, double amp) {
  if (amp < s.last_amplitude) {
    s.pol_dir = -s.pol_dir;
    if (++s.reversals >= 2) {
      s.pol_channel = (s.pol_channel + 1) % s.pol_setting.size();
      s.reversals = 0;
    }
  }
  s.pol_setting[s.pol_channel] += s.pol_dir * th.pol_step;
  s.last_amplitude = amp;
  ++s.pol_moves;
}

}  // namespace detail

// One tick of the acquisition / lock supervision logic.
inline RlsCommands rls_step(const BeatSample& beat, RlsState& s, const RlsThresholds& th, double dt,
                            Rng& rng) {
  const double amp = beat.amplitude;
  s.beat_amplitude = amp;
  ++s.steps;
  switch (s.mode) {
    case RlsMode::ScanFrequency:
      if (amp > th.acquire_level) {
        s.mode = RlsMode::Locked;
        s.lock_timer = 0.0;
      } else if (amp > th.detect_level) {
        s.mode = RlsMode::SearchPolarization;
        s.last_amplitude = amp;
        s.reversals = 0;
      } else {
        double next = s.laser_offset_hz + s.scan_dir * th.scan_step_hz;
        if (std::abs(next) > kLaserTuningHalfSpan) {
          s.scan_dir = -s.scan_dir;
          next = std::clamp(next, -kLaserTuningHalfSpan, kLaserTuningHalfSpan);
          // Two sweep ends without any beat: polarization may be near the
          // null, so kick the controller before sweeping again.
          if (++s.sweep_ends % 2 == 0 && !s.pol_setting.empty()) {
            s.pol_setting[0] += kPi / 4.0 * (rng.uniform() < 0.5 ? -1.0 : 1.0);
          }
        }
        s.laser_offset_hz = next;
      }
      break;
    case RlsMode::SearchPolarization:
      if (amp > th.acquire_level) {
        s.mode = RlsMode::Locked;
        s.lock_timer = 0.0;
      } else if (amp < th.detect_level) {
        s.mode = RlsMode::ScanFrequency;
      } else {
        detail::polarization_move(s, th, amp);
      }
      break;
    case RlsMode::Locked:
      if (amp < th.detect_level) {
        s.mode = RlsMode::ScanFrequency;
      } else if (amp < th.reoptimize_level) {
        s.mode = RlsMode::Reoptimize;
        s.last_amplitude = amp;
        s.reversals = 0;
        detail::polarization_move(s, th, amp);
      } else {
        s.lock_timer += dt;
      }
      break;
    case RlsMode::Reoptimize:
      if (amp < th.detect_level) {
        s.mode = RlsMode::ScanFrequency;
      } else if (amp >= th.acquire_level) {
        s.mode = RlsMode::Locked;
      } else {
        detail::polarization_move(s, th, amp);
      }
      break;
  }
  RlsCommands c;
  c.laser_freq_cmd = s.laser_offset_hz;
  c.pol_cmd = s.pol_setting;
  c.lock_enable = s.mode == RlsMode::Locked || s.mode == RlsMode::Reoptimize;
  return c;
}

// Beat amplitude the RLS detector sees: polarization overlap, zero outside
// the capture range of the laser tuning error.
inline double rls_beat_amplitude(const PolarizationState& pol, double laser_offset_error_hz,
                                 const RlsThresholds& th) {
  if (std::abs(laser_offset_error_hz) > th.capture_range_hz) return 0.0;
  return amplitude_factor(pol);
}

struct FrequencyPlan {
  double aom1_hz = 39e6;
  double rls_lock_offset_hz = 74e6;
  double short_link_aom_hz = 37e6;
  bool operator==(const FrequencyPlan&) const = default;

  double roundtrip_beat_hz() const { return 2.0 * aom1_hz + rls_lock_offset_hz; }
  double end_to_end_beat_hz() const { return aom1_hz + short_link_aom_hz; }
  // Share of the lock-offset oscillator phase that reaches the output.
  double rf_coefficient() const {
    return rls_lock_offset_hz == 0.0 ? 0.0 : 0.5 - short_link_aom_hz / rls_lock_offset_hz;
  }
};

// Exact rational number for frequency bookkeeping.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Fraction make(std::int64_t n, std::int64_t d) {
    if (d == 0) throw ConfigError("fraction with zero denominator");
    if (d < 0) { n = -n; d = -d; }
    const auto g = std::gcd(n < 0 ? -n : n, d);
    return g == 0 ? Fraction{0, 1} : Fraction{n / g, d / g};
  }
  Fraction operator+(const Fraction& o) const {
    return make(num * o.den + o.num * den, den * o.den);
  }
  Fraction operator-(const Fraction& o) const {
    return make(num * o.den - o.num * den, den * o.den);
  }
  bool is_zero() const { return num == 0; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Fraction&) const = default;
};

inline std::int64_t exact_hz(double f, const char* what) {
  const auto r = std::llround(f);
  if (std::abs(static_cast<double>(r) - f) > 1e-6) {
    throw ConfigError(std::string(what) + " must be a whole number of Hz");
  }
  return r;
}

struct CascadeStageReport {
  std::int64_t rls_output_hz = 0;       // delivered offset at the remote station
  std::int64_t stage_output_hz = 0;     // after the short measurement link
  std::int64_t roundtrip_beat_hz = 0;
  std::int64_t end_to_end_beat_hz = 0;
  Fraction rf_coefficient;              // this stage's lock oscillator at the final output
  bool shift_flagged = false;           // station-to-station shift above 100 MHz
};

struct CascadeReport {
  std::vector<CascadeStageReport> stages;
  std::vector<std::int64_t> delivered_offsets_hz;
  bool rf_sensitivity_cancelled = true;
  std::vector<std::string> flags;
};

inline constexpr std::int64_t kShiftFlagHz = 100'000'000;

// Symbolic bookkeeping of the delivered optical offset along a cascade.
// The compensated link leaves half of the lock oscillator phase on the
// remote laser; the short link AOM (derived from the same oscillator)
// removes short/lock of it.
inline CascadeReport cascade(const std::vector<FrequencyPlan>& plans) {
  if (plans.empty()) throw ConfigError("cascade: need at least one stage");
  CascadeReport rep;
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    const auto aom = exact_hz(p.aom1_hz, "aom1_hz");
    const auto lock = exact_hz(p.rls_lock_offset_hz, "rls_lock_offset_hz");
    const auto shrt = exact_hz(p.short_link_aom_hz, "short_link_aom_hz");
    CascadeStageReport st;
    st.roundtrip_beat_hz = 2 * aom + lock;
    st.end_to_end_beat_hz = aom + shrt;
    const auto before = offset;
    st.rls_output_hz = offset + aom + lock;
    st.stage_output_hz = st.rls_output_hz - shrt;
    st.rf_coefficient = lock == 0 ? Fraction{} : Fraction::make(1, 2) - Fraction::make(shrt, lock);
    const auto shift = st.rls_output_hz - before;
    if (std::abs(shift) > kShiftFlagHz) {
      st.shift_flagged = true;
      rep.flags.push_back("stage " + std::to_string(i) + ": remote station offset " +
                          std::to_string(shift) + " Hz exceeds 100 MHz");
    }
    if (!st.rf_coefficient.is_zero()) rep.rf_sensitivity_cancelled = false;
    offset = st.stage_output_hz;
    rep.delivered_offsets_hz.push_back(st.rls_output_hz);
    rep.delivered_offsets_hz.push_back(st.stage_output_hz);
    rep.stages.push_back(st);
  }
  return rep;
}

enum class EventKind { Slip, Fade, Reacquire, TransientEnd };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Slip: return "slip";
    case EventKind::Fade: return "fade";
    case EventKind::Reacquire: return "reacquire";
    case EventKind::TransientEnd: return "transient_end";
  }
  return "?";
}

struct RunEvent {
  double t = 0.0;
  EventKind kind = EventKind::Slip;
  std::string detail;
};

struct RunRecord {
  PhaseSeries end_to_end_phase;        // through the 10 Hz prefilter
  PhaseSeries end_to_end_unfiltered;
  PhaseSeries correction_phase;
  PhaseSeries free_running_phase;      // fiber noise alone, no compensation
  std::vector<RunEvent> events;
  std::size_t removed_points = 0;
  std::uint64_t slip_count = 0;
  bool unstable = false;
  double fs_sim = 0.0;
  double one_way_delay = 0.0;
};

struct RfWobble {
  double amplitude_rad = 0.0;
  double freq_hz = 0.0;
  bool operator==(const RfWobble&) const = default;
};

struct DetectionConfig {
  double roundtrip_snr_db_hz = 100.0;  // local round-trip beat
  double lock_snr_db_hz = 100.0;       // remote laser lock beat
  bool operator==(const DetectionConfig&) const = default;
};

struct ScenarioOptions {
  double fs = 1.0e4;
  double duration_s = 100.0;
  std::uint64_t seed = 1;
  bool compensation = true;
  double output_rate_hz = 1.0;
  double prefilter_hz = 10.0;
  double settle_s = 0.5;
  bool short_link = true;
  double group_delay_s_per_km = kDefaultGroupDelayPerKm;
  DetectionConfig detection;
  RfWobble rf_wobble;
  double interferometer_drift = 0.0;  // rad/sqrt(s) random walk, added to the output
  PolarizationState polarization;
  RlsThresholds rls;
  double rls_tick_s = 1.0e-3;
  double instability_limit = 1.0e9;
};

struct Scenario {
  LinkTopology topology;
  FrequencyPlan plan;
  ServoConfig servo;
  ScenarioOptions options;
};

inline void validate(const Scenario& sc) {
  validate(sc.topology);
  validate(sc.servo);
  validate(sc.options.rls);
  const auto& o = sc.options;
  if (!(o.fs > 0.0)) throw ConfigError("scenario: fs must be positive");
  if (!(o.output_rate_hz > 0.0) || o.output_rate_hz > o.fs) {
    throw ConfigError("scenario: output_rate_hz must lie in (0, fs]");
  }
  const double ratio = o.fs / o.output_rate_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ConfigError("scenario: fs must be an integer multiple of output_rate_hz");
  }
  if (!(o.prefilter_hz > 0.0) || !(o.prefilter_hz < o.fs / 2.0)) {
    throw ConfigError("scenario: prefilter_hz must lie in (0, fs/2)");
  }
  if (!(o.settle_s >= 0.0)) throw ConfigError("scenario: settle_s must be >= 0");
  if (!(o.rls_tick_s > 0.0)) throw ConfigError("scenario: rls_tick_s must be > 0");
}

// Full closed-loop run. The record starts after 2 tau + settle_s; events
// before that are kept with their true time.
inline RunRecord run_scenario(const Scenario& sc) {
  validate(sc);
  const auto& o = sc.options;
  const double fs = o.fs;
  CompileOptions copt;
  copt.group_delay_s_per_km = o.group_delay_s_per_km;
  copt.seed = mix_seed(o.seed, 1);
  copt.duration_hint_s = o.duration_s + o.settle_s;
  CompiledLink link = compile(sc.topology, fs, copt);
  if (o.duration_s < 100.0 * 2.0 * link.one_way_delay) {
    throw ConfigError("scenario: duration must be at least 100 round-trip delays (" +
                      std::to_string(200.0 * link.one_way_delay) + " s)");
  }
  Rng det_rng(mix_seed(o.seed, 2));
  Rng lock_rng(mix_seed(o.seed, 3));
  Rng pol_rng(mix_seed(o.seed, 4));
  Rng drift_rng(mix_seed(o.seed, 5));

  const double rt_sd = detection_noise_std(o.detection.roundtrip_snr_db_hz, fs);
  const double lock_sd = detection_noise_std(o.detection.lock_snr_db_hz, fs);
  const double rf_k = o.short_link && sc.plan.rls_lock_offset_hz != 0.0
                          ? sc.plan.short_link_aom_hz / sc.plan.rls_lock_offset_hz
                          : 0.0;
  const bool simulate_tracking = fs >= 10.0 * sc.servo.tracking_bw;
  const int n_div = sc.servo.divider_n;

  const auto transient = 2 * link.delay_samples;
  const auto start = transient + static_cast<std::size_t>(std::llround(o.settle_s * fs));
  const auto decim = static_cast<std::size_t>(std::llround(fs / o.output_rate_hz));
  const auto n_out = static_cast<std::size_t>(std::floor(o.duration_s * o.output_rate_hz));
  const auto total = start + n_out * decim;
  const auto tick = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(o.rls_tick_s * fs)));
  const double drift_sd = o.interferometer_drift * std::sqrt(1.0 / fs);

  RunRecord rec;
  rec.fs_sim = fs;
  // The PFD wraps the error, so an unstable linear loop turns into a bounded
  // slip storm rather than a runaway; flag it from the closed-loop poles.
  if (o.compensation && compensation_pole_radius(sc.servo.gains(Path::Fast), n_div,
                                                 2 * link.delay_samples, fs) >= 1.0) {
    rec.unstable = true;
  }
  rec.one_way_delay = link.one_way_delay;
  const double t0 = static_cast<double>(start) / fs;
  for (auto* s : {&rec.end_to_end_phase, &rec.end_to_end_unfiltered, &rec.correction_phase,
                  &rec.free_running_phase}) {
    s->fs = o.output_rate_hz;
    s->t0 = t0;
    s->samples.reserve(n_out);
  }

  ServoState servo;
  RlsState rls;
  rls.mode = RlsMode::Locked;
  rls.pol_setting = o.polarization.controller_setting;
  PolarizationState pol = o.polarization;
  dsp::ButterworthLowPass pre(4, o.prefilter_hz, fs);
  double laser = 0.0;          // remote laser phase
  double drift = 0.0;
  long long pfd_cycle = 0;
  bool frozen = false;

  for (std::size_t n = 0; n < total; ++n) {
    const double t = static_cast<double>(n) / fs;
    const double psi = o.rf_wobble.amplitude_rad == 0.0
                           ? 0.0
                           : o.rf_wobble.amplitude_rad * std::sin(kTwoPi * o.rf_wobble.freq_hz * t);
    const OpticalTap remote = link.forward(0.0, servo.correction_phase);

    if (n % tick == 0 && (pol.drift_rate > 0.0 || rls.mode != RlsMode::Locked)) {
      pol = polarization_drift(pol, static_cast<double>(tick) / fs, pol_rng);
      pol.controller_setting = rls.pol_setting;
      BeatSample b;
      b.amplitude = rls_beat_amplitude(pol, 0.0, o.rls);
      const auto before = rls.mode;
      rls_step(b, rls, o.rls, static_cast<double>(tick) / fs, pol_rng);
      pol.controller_setting = rls.pol_setting;
      if (before != rls.mode) {
        if (rls.mode == RlsMode::Reoptimize || rls.mode == RlsMode::ScanFrequency) {
          rec.events.push_back({t, EventKind::Fade,
                                std::string(to_string(before)) + " -> " + to_string(rls.mode)});
        } else if (rls.mode == RlsMode::Locked) {
          rec.events.push_back({t, EventKind::Reacquire,
                                std::string(to_string(before)) + " -> LOCKED"});
        }
      }
    }
    const bool lock = rls.mode == RlsMode::Locked || rls.mode == RlsMode::Reoptimize;
    if (lock) laser = remote.phase + psi + (lock_sd > 0.0 ? lock_sd * lock_rng.normal() : 0.0);

    const OpticalTap ret = link.backward(laser, sc.plan.rls_lock_offset_hz);
    const double rt = ret.phase + (rt_sd > 0.0 ? rt_sd * det_rng.normal() : 0.0);
    if (n == transient) rec.events.push_back({t, EventKind::TransientEnd, ""});

    if (sc.options.compensation && !frozen) {
      double clean = rt;
      if (simulate_tracking) {
        const auto before = servo.slip_count;
        clean = tracking_step(rt, servo, sc.servo, fs).clean_phase;
        for (auto k = before; k < servo.slip_count; ++k) {
          rec.events.push_back({t, EventKind::Slip, "tracking oscillator"});
        }
      }
      const double e = divide_pfd(clean, n_div, 0.0);
      const auto cycle = std::llround((clean / n_div - e) / kTwoPi);
      for (auto k = std::llabs(cycle - pfd_cycle); k > 0; --k) {
        ++servo.slip_count;
        rec.events.push_back({t, EventKind::Slip, "phase detector"});
      }
      pfd_cycle = cycle;
      pi_step(-e, Path::Fast, servo, sc.servo, fs);
      if (!std::isfinite(servo.correction_phase) ||
          std::abs(servo.correction_phase) > o.instability_limit) {
        rec.unstable = true;
        frozen = true;
        servo.correction_phase = 0.0;
      }
    }

    if (drift_sd > 0.0) drift += drift_sd * drift_rng.normal();
    const double delivered = laser - rf_k * psi + drift;
    const double filtered =
        n == transient ? (pre.settle(delivered), delivered) : pre.process(delivered);
    if (n >= start && (n - start) % decim == 0) {
      rec.end_to_end_phase.samples.push_back(filtered);
      rec.end_to_end_unfiltered.samples.push_back(delivered);
      rec.correction_phase.samples.push_back(servo.correction_phase);
      rec.free_running_phase.samples.push_back(link.forward_noise());
    }
  }
  rec.slip_count = servo.slip_count;
  return rec;
}

}  // namespace fiberlink

namespace fiberlink {

// N identical compensated links in series; each stage has its own noise
// seed and the delivered residuals add.
inline RunRecord run_cascade(const Scenario& sc, std::size_t stages) {
  if (stages == 0) throw ConfigError("cascade: need at least one stage");
  if (stages == 1) return run_scenario(sc);
  RunRecord total;
  for (std::size_t i = 0; i < stages; ++i) {
    Scenario s = sc;
    s.options.seed = mix_seed(sc.options.seed, 100 + i);
    RunRecord r = run_scenario(s);
    for (auto& e : r.events) e.detail = "stage " + std::to_string(i) + ": " + e.detail;
    if (i == 0) {
      total = std::move(r);
      continue;
    }
    auto add = [](PhaseSeries& a, const PhaseSeries& b) {
      for (std::size_t k = 0; k < a.samples.size(); ++k) a.samples[k] += b.samples[k];
    };
    add(total.end_to_end_phase, r.end_to_end_phase);
    add(total.end_to_end_unfiltered, r.end_to_end_unfiltered);
    add(total.correction_phase, r.correction_phase);
    add(total.free_running_phase, r.free_running_phase);
    total.events.insert(total.events.end(), r.events.begin(), r.events.end());
    total.slip_count += r.slip_count;
    total.unstable = total.unstable || r.unstable;
    total.one_way_delay += r.one_way_delay;
  }
  std::stable_sort(total.events.begin(), total.events.end(),
                   [](const RunEvent& a, const RunEvent& b) { return a.t < b.t; });
  return total;
}

}  // namespace fiberlink
