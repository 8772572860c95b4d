#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fiberlink/analysis.hpp"
#include "fiberlink/config.hpp"
#include "fiberlink/station.hpp"

using namespace fiberlink;

namespace {

Scenario toy(double duration_s = 20.0) {
  auto c = load_preset("toy_1span");
  c.run.duration_s = duration_s;
  return resolve(c);
}

void silence(Scenario& sc) {
  for (auto& d : sc.topology.devices) {
    if (auto* s = std::get_if<Span>(&d)) s->profile.h = {{-2, 0.0}};
  }
  sc.options.detection.roundtrip_snr_db_hz = std::numeric_limits<double>::infinity();
  sc.options.detection.lock_snr_db_hz = std::numeric_limits<double>::infinity();
}

double peak_to_peak(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo;
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

Harness cold(double misalignment, double laser_hz, double target_hz, std::uint64_t seed) {
  Harness h;
  h.pol.misalignment_angle = misalignment;
  h.s.pol_setting = {0.0, 0.0};
  h.s.laser_offset_hz = laser_hz;
  h.target_hz = target_hz;
  h.rng = Rng(seed);
  return h;
}

}  // namespace

TEST(Rls, ThresholdValidation) {
  RlsThresholds t;
  EXPECT_NO_THROW(validate(t));
  t.reoptimize_level = 0.95;
  EXPECT_THROW(validate(t), ConfigError);
  t = RlsThresholds{};
  t.reoptimize_level = 0.0;
  EXPECT_THROW(validate(t), ConfigError);
}

TEST(Rls, AlignedAndInCaptureLocksWithoutPolarizationMoves) {
  auto h = cold(0.0, 1e6, 0.0, 1);
  h.tick();
  EXPECT_EQ(h.s.mode, RlsMode::Locked);
  EXPECT_EQ(h.s.pol_moves, 0u);
}

TEST(Rls, WeakBeatRecoveredByPolarizationSearch) {
  const double angle = std::acos(0.3 * RlsThresholds{}.acquire_level);
  auto h = cold(angle, 0.0, 0.0, 2);
  h.tick();
  EXPECT_EQ(h.s.mode, RlsMode::SearchPolarization);
  while (h.s.mode != RlsMode::Locked && h.s.steps < h.th.max_steps) h.tick();
  EXPECT_EQ(h.s.mode, RlsMode::Locked);
  EXPECT_GE(h.amplitude(), h.th.acquire_level);
  EXPECT_GT(h.s.pol_moves, 0u);
}

// Every initial misalignment on a fine grid, with the laser anywhere in its
// tuning span, reaches LOCKED within the configured step bound.
TEST(Rls, LivenessExhaustiveScan) {
  for (double angle = 0.0; angle <= kPi / 2.0 + 1e-12; angle += 0.01) {
    for (double laser : {-1e9, -4.4e8, 0.0, 2.3e8, 1e9}) {
      auto h = cold(angle, laser, 2.3e8, static_cast<std::uint64_t>(angle * 1000 + laser / 1e6));
      while (h.s.mode != RlsMode::Locked && h.s.steps < h.th.max_steps) {
        h.tick();
        ASSERT_LE(std::abs(h.s.laser_offset_hz), kLaserTuningHalfSpan);
      }
      ASSERT_EQ(h.s.mode, RlsMode::Locked) << "angle " << angle << " laser " << laser;
      EXPECT_GE(h.amplitude(), h.th.acquire_level);
    }
  }
}

TEST(Rls, FadeReoptimizesWithoutDroppingLock) {
  auto h = cold(0.0, 0.0, 0.0, 3);
  h.tick();
  ASSERT_EQ(h.s.mode, RlsMode::Locked);
  bool reoptimized = false;
  for (int i = 0; i < 2000; ++i) {
    if (i < 300) h.pol.misalignment_angle = 1.2 * i / 300.0;  // scripted drift
    const auto cmd = h.tick();
    EXPECT_TRUE(cmd.lock_enable) << i;
    reoptimized = reoptimized || h.s.mode == RlsMode::Reoptimize;
    if (h.s.mode == RlsMode::Locked) {
      EXPECT_GE(h.s.beat_amplitude, h.th.reoptimize_level);
    }
  }
  EXPECT_TRUE(reoptimized);
  EXPECT_EQ(h.s.mode, RlsMode::Locked);
  EXPECT_GE(h.amplitude(), h.th.acquire_level);
}

TEST(Rls, TotalFadeDropsToScan) {
  auto h = cold(0.0, 0.0, 0.0, 4);
  h.tick();
  h.pol.misalignment_angle = kPi / 2.0;
  h.tick();
  EXPECT_EQ(h.s.mode, RlsMode::ScanFrequency);
}

TEST(FrequencyPlanTest, PaperValues) {
  FrequencyPlan p;
  EXPECT_DOUBLE_EQ(p.roundtrip_beat_hz(), 152e6);
  EXPECT_DOUBLE_EQ(p.end_to_end_beat_hz(), 76e6);
  EXPECT_DOUBLE_EQ(p.rf_coefficient(), 0.0);
}

TEST(Cascade, PaperPlan) {
  const auto r = cascade({FrequencyPlan{}});
  ASSERT_EQ(r.stages.size(), 1u);
  EXPECT_EQ(r.stages[0].roundtrip_beat_hz, 152'000'000);
  EXPECT_EQ(r.stages[0].end_to_end_beat_hz, 76'000'000);
  EXPECT_EQ(r.stages[0].rls_output_hz, 113'000'000);
  EXPECT_EQ(r.stages[0].stage_output_hz, 76'000'000);
  EXPECT_TRUE(r.stages[0].rf_coefficient.is_zero());
  EXPECT_TRUE(r.rf_sensitivity_cancelled);
  EXPECT_TRUE(r.stages[0].shift_flagged);
  ASSERT_EQ(r.flags.size(), 1u);
  EXPECT_NE(r.flags[0].find("113000000"), std::string::npos);
}

TEST(Cascade, AllZeroOffsets) {
  const auto r = cascade({FrequencyPlan{0.0, 0.0, 0.0}});
  EXPECT_EQ(r.stages[0].stage_output_hz, 0);
  EXPECT_EQ(r.delivered_offsets_hz, (std::vector<std::int64_t>{0, 0}));
  EXPECT_TRUE(r.flags.empty());
}

TEST(Cascade, UncancelledReferenceIsReported) {
  const auto r = cascade({FrequencyPlan{39e6, 74e6, 0.0}});
  EXPECT_FALSE(r.rf_sensitivity_cancelled);
  EXPECT_EQ(r.stages[0].rf_coefficient, Fraction::make(1, 2));
  EXPECT_THROW(cascade({}), ConfigError);
  EXPECT_THROW(cascade({FrequencyPlan{39.5, 74e6, 37e6}}), ConfigError);
}

TEST(Cascade, TwoStagesAccumulate) {
  const auto r = cascade({FrequencyPlan{}, FrequencyPlan{}});
  ASSERT_EQ(r.stages.size(), 2u);
  EXPECT_EQ(r.stages[1].rls_output_hz, 76'000'000 + 113'000'000);
  EXPECT_EQ(r.stages[1].stage_output_hz, 152'000'000);
  EXPECT_EQ(r.flags.size(), 2u);
}

TEST(RunScenario, RejectsTooShortRuns) {
  auto sc = toy();
  sc.options.duration_s = 50.0 * 2.0 * 0.5e-3;
  EXPECT_THROW(run_scenario(sc), ConfigError);
}

TEST(RunScenario, ZeroNoiseIsConstant) {
  auto sc = toy();
  silence(sc);
  const auto rec = run_scenario(sc);
  ASSERT_EQ(rec.end_to_end_unfiltered.size(), 200u);
  EXPECT_LE(peak_to_peak(rec.end_to_end_unfiltered.samples), 1e-6);
  EXPECT_LE(peak_to_peak(rec.end_to_end_phase.samples), 1e-6);
  EXPECT_EQ(rec.slip_count, 0u);
  EXPECT_FALSE(rec.unstable);
}

TEST(RunScenario, RecordLayoutAndEvents) {
  const auto rec = run_scenario(toy());
  EXPECT_DOUBLE_EQ(rec.end_to_end_phase.fs, 10.0);
  EXPECT_EQ(rec.end_to_end_phase.size(), rec.correction_phase.size());
  EXPECT_EQ(rec.end_to_end_phase.size(), rec.free_running_phase.size());
  EXPECT_NEAR(rec.end_to_end_phase.t0, 2.0 * rec.one_way_delay + 0.5, 1e-12);
  ASSERT_FALSE(rec.events.empty());
  EXPECT_EQ(rec.events.front().kind, EventKind::TransientEnd);
  EXPECT_NEAR(rec.events.front().t, 2.0 * rec.one_way_delay, 1e-12);
  EXPECT_TRUE(std::is_sorted(rec.events.begin(), rec.events.end(),
                             [](const RunEvent& a, const RunEvent& b) { return a.t < b.t; }));
}

// The 74 MHz reference wobble reaches the output with coefficient 0.
TEST(RunScenario, RfWobbleCancelledAtOutput) {
  auto sc = toy(100.0);
  silence(sc);
  sc.options.rf_wobble = {1.0, 0.05};
  const auto rec = run_scenario(sc);
  EXPECT_LT(peak_to_peak(rec.end_to_end_unfiltered.samples) / 2.0, 1e-3);
  sc.options.short_link = false;
  const auto raw = run_scenario(sc);
  EXPECT_NEAR(peak_to_peak(raw.end_to_end_unfiltered.samples) / 2.0, 0.5, 0.05);
}

TEST(RunScenario, CompensationGainAtLeast20Db) {
  auto c = load_preset("paper_540km");
  c.run.duration_s = 300.0;
  c.run.output_rate_hz = 10.0;
  const auto rec = run_scenario(resolve(c));
  const double comp = rms_in_band(rec.end_to_end_phase, 0.01, 1.0);
  const double free = rms_in_band(rec.free_running_phase, 0.01, 1.0);
  EXPECT_LE(20.0 * std::log10(comp / free), -20.0);
}

TEST(RunScenario, PeakToPeakBelow40Rad) {
  auto c = load_preset("paper_540km");
  c.run.duration_s = 2000.0;
  const auto rec = run_scenario(resolve(c));
  EXPECT_LE(peak_to_peak(rec.end_to_end_phase.samples), 40.0);
}

// With h_-2 calibrated to 20 rad RMS in 0.1-10 Hz, the uncompensated output
// shows that RMS.
TEST(RunScenario, FreeRunningTwentyRadians) {
  NoiseProfile shape;
  shape.h[-2] = 1.0;
  const double h = calibrate_coefficient(shape, -2, 540.0, 0.1, 10.0, 20.0, 1 << 18, 100.0, 7);
  auto c = load_preset("paper_540km");
  for (auto& d : c.topology.devices) {
    if (auto* s = std::get_if<Span>(&d)) s->profile.h = {{-2, h}};
  }
  c.run.compensation = false;
  c.run.duration_s = 100.0;
  c.run.output_rate_hz = 100.0;
  double sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    c.run.seed = seed;
    const auto rec = run_scenario(resolve(c));
    const double r = rms_in_band(rec.end_to_end_phase, 0.1, 10.0);
    sum += r * r;
  }
  EXPECT_NEAR(std::sqrt(sum / 4.0), 20.0, 4.0);
}

TEST(RunScenario, UnstableGainsFlaggedNotFatal) {
  auto sc = toy(10.0);
  sc.servo.gains(Path::Fast).kp *= 40.0;
  sc.servo.gains(Path::Fast).ki *= 40.0;
  RunRecord rec;
  ASSERT_NO_THROW(rec = run_scenario(sc));
  EXPECT_TRUE(rec.unstable);
  for (double v : rec.end_to_end_unfiltered.samples) EXPECT_TRUE(std::isfinite(v));
}

TEST(RunScenario, EverySlipLoggedOnce) {
  auto c = load_preset("toy_1span");
  c.run.duration_s = 1.0;
  c.run.fs_hz = 1e5;  // 10x the tracking bandwidth, so it is simulated
  c.run.output_rate_hz = 10.0;
  c.servo.tracking_bw = 1e4;
  c.detection.roundtrip_snr_db_hz = 66.0;
  const auto rec = run_scenario(resolve(c));
  EXPECT_FALSE(rec.unstable);
  std::uint64_t tracking = 0, detector = 0;
  for (const auto& e : rec.events) {
    if (e.kind == EventKind::Slip) ++(e.detail == "tracking oscillator" ? tracking : detector);
  }
  EXPECT_GT(tracking, 0u);
  EXPECT_EQ(tracking + detector, rec.slip_count);
}

TEST(RunScenario, PolarizationFadesReoptimizedInRun) {
  auto sc = toy(60.0);
  sc.options.polarization.drift_rate = 0.3;
  const auto rec = run_scenario(sc);
  int fades = 0, reacq = 0;
  for (const auto& e : rec.events) {
    if (e.kind == EventKind::Fade) {
      ++fades;
      EXPECT_EQ(e.detail, "LOCKED -> REOPTIMIZE");
    }
    reacq += e.kind == EventKind::Reacquire;
  }
  EXPECT_GT(fades, 0);
  EXPECT_GE(reacq, fades - 1);
}

TEST(RunCascade, StagesAddAndSeedsDiffer) {
  auto sc = toy();
  const auto one = run_scenario(sc);
  const auto two = run_cascade(sc, 2);
  EXPECT_EQ(two.end_to_end_phase.size(), one.end_to_end_phase.size());
  EXPECT_NEAR(two.one_way_delay, 2.0 * one.one_way_delay, 1e-15);
  EXPECT_THROW(run_cascade(sc, 0), ConfigError);
}
