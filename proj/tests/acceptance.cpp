// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fiberlink/analysis.hpp"
#include "fiberlink/config.hpp"
#include "fiberlink/io.hpp"
#include "fiberlink/noise_model.hpp"
#include "fiberlink/planner.hpp"
#include "fiberlink/station.hpp"

using namespace fiberlink;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string g(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

double peak_to_peak(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo;
}

void set_k(ScenarioConfig& c, std::size_t k) {
  for (auto& d : c.topology.devices) {
    if (auto* s = std::get_if<Span>(&d)) s->k = k;
  }
}

// n spans of 100 km each, same per-km noise as paper_540km
ScenarioConfig uniform_link(std::size_t n_spans) {
  auto c = load_preset("paper_540km");
  const NoiseProfile fiber = c.noise.at("fiber");
  c.topology.devices.clear();
  c.span_noise.clear();
  for (std::size_t i = 0; i < n_spans; ++i) {
    c.topology.devices.push_back(Span{100.0, 0.2, fiber, 2});
    c.span_noise.push_back("fiber");
  }
  c.planner.effective_reflectance_db.reset();
  return c;
}

Outcome servo_bump() {
  auto c = load_preset("paper_540km");
  c.tune->gain_margin_db = 3.0;  // maximum stable gain
  c.run.duration_s = 600.0;
  c.run.output_rate_hz = 1000.0;
  const auto rec = run_scenario(resolve(c));
  const auto psd = welch_psd(rec.end_to_end_unfiltered, 1 << 14, 0.5, Detrend::Linear);
  double best = -1.0, f_peak = 0.0;
  for (std::size_t i = 0; i < psd.freqs.size(); ++i) {
    if (psd.freqs[i] >= 1.0 && psd.values[i] > best) {
      best = psd.values[i];
      f_peak = psd.freqs[i];
    }
  }
  return {!rec.unstable && f_peak >= 40.0 && f_peak <= 100.0,
          "residual PSD peak at " + g(f_peak) + " Hz (want 40..100), unstable " +
              (rec.unstable ? "yes" : "no")};
}

Outcome delay_limited_law() {
  auto c = load_preset("paper_540km");
  set_k(c, 8);
  c.run.duration_s = 1200.0;
  c.run.output_rate_hz = 2000.0;
  const auto rec = run_scenario(resolve(c));
  const std::size_t seg = 1 << 17;
  const auto comp = welch_psd(rec.end_to_end_unfiltered, seg, 0.5, Detrend::Linear);
  const auto free = welch_psd(rec.free_running_phase, seg, 0.5, Detrend::Linear);
  const double tau = rec.one_way_delay;
  double worst = 0.0;
  std::ostringstream os;
  for (double f = 0.1; f <= 5.0 * 1.0001; f *= std::pow(50.0, 1.0 / 12.0)) {
    const double lo = f / 1.1, hi = f * 1.1;
    const double ratio = band_average(comp, lo, hi) / band_average(free, lo, hi);
    const double oracle = std::pow(kTwoPi * f * tau, 2) / 3.0;
    const double db = 10.0 * std::log10(ratio / oracle);
    if (std::abs(db) > std::abs(worst)) worst = db;
  }
  os << "worst deviation from (2 pi f tau)^2/3 over 0.1..5 Hz: " << g(worst) << " dB (K = 8)";
  return {std::abs(worst) <= 3.0, os.str()};
}

struct LongRun {
  AnalysisProducts products;
  double p2p = 0.0;
  double span = 0.0;
};

const LongRun& long_run() {
  static const LongRun r = [] {
    auto c = load_preset("paper_540km");
    c.run.duration_s = 1.0e5;
    c.analysis.taus_s = {1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0};
    const auto rec = run_scenario(resolve(c));
    LongRun lr;
    lr.products = analyze_series(rec.end_to_end_phase, rec.end_to_end_unfiltered, c.analysis);
    lr.p2p = peak_to_peak(rec.end_to_end_phase.samples);
    lr.span = c.run.duration_s;
    return lr;
  }();
  return r;
}

Outcome adev_reproduction() {
  const auto& lr = long_run();
  const auto& pts = lr.products.adev_filtered;
  if (pts.empty() || pts.front().tau != 1.0) return {false, "no 1 s point"};
  const double s1 = pts.front().sigma_y;
  const double slope = loglog_slope(pts, 1.0, 1000.0);
  const auto& last = pts.back();
  const double extrap = last.sigma_y * std::pow(3.0e4 / last.tau, slope);
  const bool ok = s1 >= 2e-15 && s1 <= 8e-15 && std::abs(slope + 1.0) <= 0.15 && extrap <= 1e-18;
  return {ok, "sigma_y(1 s) " + g(s1) + ", slope " + g(slope) + " over 1..1000 s, sigma_y(3e4 s) ~ " +
                  g(extrap) + " (from " + g(last.tau) + " s), p-p " + g(lr.p2p) + " rad"};
}

Outcome bandwidth_ratio() {
  const auto& p = long_run().products;
  if (p.adev_filtered.empty() || p.adev_unfiltered.empty()) return {false, "missing ADEV"};
  const double r = p.adev_unfiltered.front().sigma_y / p.adev_filtered.front().sigma_y;
  return {r >= 4.0 && r <= 16.0, "unfiltered / 10 Hz filtered at 1 s = " + g(r)};
}

Outcome scaling_laws() {
  const double duration = 2000.0;
  std::size_t removed = 0;
  // 1 Hz measurement band: inside the delay-limited band of the 1200 km link;
  // slips are removed as outliers
  auto run = [&](std::size_t spans, std::size_t stages) {
    auto c = uniform_link(spans);
    c.run.duration_s = duration;
    c.analysis.prefilter_hz = 1.0;
    const auto rec = run_cascade(resolve(c), stages);
    const auto y = pi_counter(rec.end_to_end_phase, 1.0 / rec.end_to_end_phase.fs, std::nullopt,
                              c.analysis.carrier_hz);
    const auto dg = deglitch(y, 5.0);
    removed += dg.removed;
    const auto pts = overlapping_adev(dg.cleaned, {1.0});
    if (pts.empty()) throw std::runtime_error("no 1 s ADEV point");
    return pts.front().sigma_y;
  };
  const double base = run(6, 1);
  const double doubled = run(12, 1);
  const double split = run(3, 2);
  const double len_ratio = doubled / base;
  const double split_ratio = base / split;
  const bool len_ok = std::abs(len_ratio / std::pow(2.0, 1.5) - 1.0) <= 0.15;
  const bool split_ok = std::abs(split_ratio / std::sqrt(2.0) - 1.0) <= 0.15;
  return {len_ok && split_ok,
          "2L/L = " + g(len_ratio) + " (want 2.828 +-15%: " + (len_ok ? "ok" : "no") +
              "), 1 / 2 cascades = " + g(split_ratio) + " (want 1.414 +-15%: " +
              (split_ok ? "ok" : "no") + "), " + std::to_string(removed) + " points deglitched"};
}

Outcome frequency_algebra() {
  const auto c = load_preset("paper_540km");
  const auto rep = cascade({c.plan});
  const auto& s = rep.stages.front();
  const bool flagged = s.shift_flagged && s.rls_output_hz == 113'000'000;
  const bool ok = s.roundtrip_beat_hz == 152'000'000 && s.end_to_end_beat_hz == 76'000'000 &&
                  s.rf_coefficient.is_zero() && rep.rf_sensitivity_cancelled && flagged;
  return {ok, "round trip " + std::to_string(s.roundtrip_beat_hz) + " Hz, end to end " +
                  std::to_string(s.end_to_end_beat_hz) + " Hz, 74 MHz coefficient " +
                  std::to_string(s.rf_coefficient.num) + "/" + std::to_string(s.rf_coefficient.den) +
                  ", stage shift " + std::to_string(s.rls_output_hz) + " Hz flagged " +
                  (flagged ? "yes" : "no")};
}

Outcome budget_and_oscillation() {
  const auto c = load_preset("paper_540km");
  const auto b = budget(c.topology);
  const bool ledger = b.total_loss_db >= 165.0 && std::abs(b.total_gain_db - 100.0) <= 1.0 &&
                      b.net_attenuation_db > 60.0;

  auto cavity = [](double gain) {
    NoiseProfile q;
    q.h[-2] = 0.0;
    LinkTopology t;
    t.devices = {Reflector{-30.0, "a"}, Span{1e-3, 0.0, q, 1}, Edfa{gain}, Span{1e-3, 0.0, q, 1},
                 Reflector{-30.0, "b"}};
    return oscillation_margin(t);
  };
  const double limit = cavity(20.0).amps.front().max_safe_gain_db;
  const bool single = limit <= 30.0 && cavity(30.0).oscillation_flagged &&
                      !cavity(29.99).oscillation_flagged;

  const auto osc = oscillation_margin(c.topology, c.planner.effective_reflectance_db);
  double lo = 1e300, hi = -1e300;
  for (const auto& a : osc.amps) {
    lo = std::min(lo, a.max_safe_gain_db);
    hi = std::max(hi, a.max_safe_gain_db);
  }
  const bool knob = !osc.amps.empty() && lo >= 12.0 && hi <= 20.0 && !osc.oscillation_flagged;
  return {ledger && single && knob,
          "loss " + g(b.total_loss_db) + " dB, gain " + g(b.total_gain_db) + " dB, net " +
              g(b.net_attenuation_db) + " dB; -30 dB pair gain must stay below " + g(limit) +
              " dB; per-amp limit " + g(lo) + ".." + g(hi) + " dB at " +
              g(*c.planner.effective_reflectance_db) + " dB effective reflectance"};
}

Outcome slip_calibration() {
  const auto cal = calibrate_slip_model(85.0, 14e6, 1e-4, 20'000'000, 1);
  const double anchor = slip_rate_estimate(cal.model, 85.0, 14e6, 14e6);
  const double thr = slip_threshold_snr(cal.model, DetectorParams{}.link_noise_bw_hz, 1e-4);
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (double snr = 60.0; snr <= 100.0; snr += 0.25) {
    const double r = slip_rate_estimate(cal.model, snr, 4e6, 4e6);
    monotone = monotone && r <= prev;
    prev = r;
  }
  for (std::size_t i = 1; i < cal.points.size(); ++i) {
    monotone = monotone && cal.points[i].rate() <= cal.points[i - 1].rate();
  }
  const bool ok = std::abs(anchor / 1e-4 - 1.0) < 1e-6 && std::abs(thr - 80.0) <= 5.0 && monotone;
  return {ok, "front factor " + g(cal.model.front_factor) + ", exponent " +
                  g(cal.model.exponent) + ", link threshold " + g(thr) + " dB/Hz, monotone " +
                  (monotone ? "yes" : "no")};
}

Outcome estimator_oracles() {
  std::ostringstream os;
  bool ok = true;

  const double h0 = 2e-30, fs = 10.0;
  Rng rng(2);
  FreqSeries y;
  y.fs_out = fs;
  y.y.resize(200000);
  for (auto& v : y.y) v = std::sqrt(h0 * fs / 2.0) * rng.normal();
  double worst_fm = 0.0;
  for (const auto& p : overlapping_adev(y, {0.1, 1.0, 10.0, 100.0})) {
    worst_fm = std::max(worst_fm, std::abs(p.sigma_y / std::sqrt(h0 / (2.0 * p.tau)) - 1.0));
  }
  ok = ok && worst_fm <= 0.10;
  os << "white FM " << g(100 * worst_fm) << "%";

  PhaseSeries w{1000.0, std::vector<double>(1 << 18), 0.0};
  for (auto& v : w.samples) v = 0.5 * rng.normal();
  const auto est = welch_psd(w, 4096, 0.5);
  const double expected = 0.25 * 2.0 / 1000.0;
  double worst_db = 0.0;
  for (std::size_t i = 1; i + 1 < est.freqs.size(); ++i) {
    if (est.freqs[i] < 5.0 || est.freqs[i] > 495.0) continue;
    if (i % 40 != 0) continue;
    const double db =
        10.0 * std::log10(band_average(est, est.freqs[i] - 5.0, est.freqs[i] + 5.0) / expected);
    worst_db = std::max(worst_db, std::abs(db));
  }
  double integral = 0.0;
  const double df = est.freqs[1] - est.freqs[0];
  for (double v : est.values) integral += v * df;
  const double parseval = std::abs(integral / variance(w.samples) - 1.0);
  ok = ok && worst_db <= 1.0 && parseval <= 0.05;
  os << ", Welch flat " << g(worst_db) << " dB, Parseval " << g(100 * parseval) << "%";

  NoiseProfile prof;
  prof.h[0] = 1e-4;
  prof.h[-2] = 1e-3;
  const auto phase = synth_powerlaw(prof, 1.0, 1 << 17, 100.0, 8);
  const std::vector<double> taus{0.01, 0.1, 1.0, 10.0};
  const auto a = overlapping_adev(pi_counter(phase, 0.01, std::nullopt, kDefaultCarrierHz), taus);
  const auto b = phase_adev(phase, taus, kDefaultCarrierHz);
  double worst_pi = a.size() == b.size() && !a.empty() ? 0.0 : 1.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    worst_pi = std::max(worst_pi, std::abs(a[i].sigma_y / b[i].sigma_y - 1.0));
  }
  ok = ok && worst_pi <= 0.01;
  os << ", Pi vs phase " << g(100 * worst_pi) << "%";
  return {ok, os.str()};
}

struct Harness {
  RlsThresholds th;
  PolarizationState pol;
  RlsState s;
  double target_hz = 0.0;
  Rng rng{1};

  double amplitude() {
    pol.controller_setting = s.pol_setting;
    return rls_beat_amplitude(pol, s.laser_offset_hz - target_hz, th);
  }
  RlsCommands tick() {
    BeatSample b;
    b.amplitude = amplitude();
    return rls_step(b, s, th, 1e-3, rng);
  }
};

Outcome automation_liveness() {
  int locked = 0, recovered = 0, logged = 0;
  std::uint64_t total_slips = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng r(mix_seed(seed, 77));
    Harness h;
    h.rng = Rng(seed);
    h.pol.misalignment_angle = r.uniform() * kPi / 2.0;
    h.s.pol_setting = {0.0, 0.0};
    h.s.laser_offset_hz = (2.0 * r.uniform() - 1.0) * kLaserTuningHalfSpan;
    h.target_hz = (2.0 * r.uniform() - 1.0) * 0.5 * kLaserTuningHalfSpan;
    while (h.s.mode != RlsMode::Locked && h.s.steps < h.th.max_steps) h.tick();
    if (h.s.mode == RlsMode::Locked && h.amplitude() >= h.th.acquire_level) ++locked;

    // scripted polarization fade on top of the locked state
    Harness f;
    f.rng = Rng(seed + 1000);
    f.tick();
    // deep enough to cross reoptimize_level, shallow enough to stay above detect_level
    const double depth = 0.9 + 0.5 * r.uniform();
    const int ramp = 100 + static_cast<int>(400 * r.uniform());
    const double base = f.pol.misalignment_angle;
    bool held = f.s.mode == RlsMode::Locked, restored = true;
    int reoptimized = 0;
    for (int i = 0; i < ramp + 2000; ++i) {
      if (i < ramp) f.pol.misalignment_angle = base + depth * i / ramp;
      const auto before = f.s.mode;
      held = held && f.tick().lock_enable;
      if (before == RlsMode::Reoptimize && f.s.mode == RlsMode::Locked) {
        ++reoptimized;
        restored = restored && f.amplitude() >= f.th.acquire_level;
      }
    }
    if (held && restored && reoptimized > 0 && f.s.mode == RlsMode::Locked &&
        f.amplitude() >= f.th.reoptimize_level) {
      ++recovered;
    }

    // tracking oscillator simulated at 10x its bandwidth, well above the link loop
    auto c = load_preset("toy_1span");
    c.run.duration_s = 1.0;
    c.run.fs_hz = 1e5;
    c.run.output_rate_hz = 10.0;
    c.run.seed = seed + 1;
    c.servo.tracking_bw = 1e4;
    c.detection.roundtrip_snr_db_hz = 66.0;
    const auto rec = run_scenario(resolve(c));
    std::uint64_t tracking = 0, detector = 0;
    for (const auto& e : rec.events) {
      if (e.kind != EventKind::Slip) continue;
      ++(e.detail == "tracking oscillator" ? tracking : detector);
    }
    total_slips += tracking;
    if (tracking > 0 && tracking + detector == rec.slip_count) ++logged;
  }
  return {locked == 100 && recovered == 100 && logged == 100 && total_slips > 0,
          "cold-start locks " + std::to_string(locked) + "/100, fades recovered without drop " +
              std::to_string(recovered) + "/100, slip logs complete " + std::to_string(logged) +
              "/100 (" + std::to_string(total_slips) + " tracking slips)"};
}

Outcome zero_offset() {
  int covered = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto c = load_preset("paper_540km");
    c.run.duration_s = 600.0;
    c.run.seed = seed;
    const auto rec = run_scenario(resolve(c));
    const auto y = pi_counter(rec.end_to_end_phase, 1.0, std::nullopt, c.analysis.carrier_hz);
    const auto m = mean_offset(y);
    const double z = m.std_error > 0.0 ? std::abs(m.mean) / m.std_error : 1e300;
    worst = std::max(worst, z);
    if (z < 3.0) ++covered;
  }
  return {covered >= 95, std::to_string(covered) + "/100 runs with |mean| < 3 std_error (max " +
                             g(worst) + " std_error)"};
}

Outcome determinism() {
  bool same = true;
  for (const char* name : {"toy_1span", "paper_540km", "cascade_2x150"}) {
    auto c = load_preset(name);
    c.run.duration_s = 60.0;
    const auto a = build_bundle(c);
    const auto b = build_bundle(c);
    same = same && a.files == b.files && a.files.size() >= 7;
    c.run.seed += 1;
    same = same && build_bundle(c).files.at("run.csv") != a.files.at("run.csv");
  }
  return {same, "bundles byte-identical for 3 presets, differing seed changes run.csv"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"servo bump", servo_bump},
      {"delay-limited residual law", delay_limited_law},
      {"ADEV reproduction", adev_reproduction},
      {"bandwidth ratio", bandwidth_ratio},
      {"scaling laws", scaling_laws},
      {"frequency algebra", frequency_algebra},
      {"budget and oscillation", budget_and_oscillation},
      {"slip-model calibration", slip_calibration},
      {"estimator oracles", estimator_oracles},
      {"automation liveness", automation_liveness},
      {"statistical zero offset", zero_offset},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s  C%zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
