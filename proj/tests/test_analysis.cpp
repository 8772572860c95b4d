#include <gtest/gtest.h>

#include <cmath>

#include "fiberlink/analysis.hpp"
#include "fiberlink/noise_model.hpp"
#include "fiberlink/rng.hpp"

using namespace fiberlink;

namespace {

FreqSeries white_fm(double h0, std::size_t n, double fs, std::uint64_t seed) {
  // one-sided PSD h0 for y means per-sample variance h0 fs / 2
  Rng rng(seed);
  FreqSeries y;
  y.fs_out = fs;
  y.y.resize(n);
  const double sigma = std::sqrt(h0 * fs / 2.0);
  for (auto& v : y.y) v = sigma * rng.normal();
  return y;
}

}  // namespace

TEST(Welch, WhiteNoiseIsFlatAndConservesPower) {
  Rng rng(1);
  PhaseSeries s{1000.0, std::vector<double>(1 << 18), 0.0};
  for (auto& v : s.samples) v = 0.5 * rng.normal();
  const auto est = welch_psd(s, 4096, 0.5);
  const double expected = 0.25 * 2.0 / 1000.0;
  for (double f : {10.0, 50.0, 200.0, 450.0}) {
    EXPECT_NEAR(10.0 * std::log10(band_average(est, f - 5.0, f + 5.0) / expected), 0.0, 1.0);
  }
  double integral = 0.0;
  const double df = est.freqs[1] - est.freqs[0];
  for (double v : est.values) integral += v * df;
  EXPECT_NEAR(integral / variance(s.samples), 1.0, 0.05);
  EXPECT_NEAR(est.resolution_bw, 1.5 * 1000.0 / 4096.0, 1e-12);
}

TEST(Welch, SinusoidPeakBin) {
  PhaseSeries s{1000.0, std::vector<double>(1 << 16), 0.0};
  for (std::size_t i = 0; i < s.size(); ++i) s.samples[i] = std::sin(kTwoPi * 75.0 * i / 1000.0);
  const auto est = welch_psd(s, 4096, 0.5);
  const auto peak = std::max_element(est.values.begin(), est.values.end()) - est.values.begin();
  EXPECT_NEAR(est.freqs[static_cast<std::size_t>(peak)], 75.0, est.resolution_bw);
}

TEST(Welch, RejectsBadArguments) {
  PhaseSeries s{10.0, std::vector<double>(100, 0.0), 0.0};
  EXPECT_THROW(welch_psd(s, 200, 0.5), ConfigError);
  EXPECT_THROW(welch_psd(s, 2, 0.5), ConfigError);
  EXPECT_THROW(welch_psd(s, 32, 1.0), ConfigError);
  s.samples[3] = std::nan("");
  EXPECT_THROW(welch_psd(s, 32, 0.5), ConfigError);
}

TEST(Adev, WhiteFmMatchesAnalytic) {
  const double h0 = 2e-30;
  const auto y = white_fm(h0, 200000, 10.0, 2);
  const auto pts = overlapping_adev(y, {0.1, 1.0, 10.0, 100.0});
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    const double expected = std::sqrt(h0 / (2.0 * p.tau));
    EXPECT_NEAR(p.sigma_y / expected, 1.0, 0.1) << "tau " << p.tau;
    EXPECT_LT(p.ci_low, p.sigma_y);
    EXPECT_GT(p.ci_high, p.sigma_y);
  }
  EXPECT_NEAR(loglog_slope(pts, 0.1, 100.0), -0.5, 0.05);
}

TEST(Adev, ConstantFrequencyIsZero) {
  FreqSeries y;
  y.y.assign(1000, 3e-15);
  for (const auto& p : overlapping_adev(y, {1.0, 10.0, 100.0})) EXPECT_EQ(p.sigma_y, 0.0);
}

TEST(Adev, WhitePmCounterSlopeIsMinusOne) {
  Rng rng(12);
  PhaseSeries s{10.0, std::vector<double>(1000000), 0.0};
  for (auto& v : s.samples) v = rng.normal();
  const auto y = pi_counter(s, 0.1, std::nullopt, kDefaultCarrierHz);
  const auto pts = overlapping_adev(y, {0.1, 1.0, 10.0});
  EXPECT_NEAR(loglog_slope(pts, 0.1, 10.0), -1.0, 0.1);
}

TEST(Adev, SkipsInvalidTausWithNotices) {
  const auto y = white_fm(1.0, 300, 1.0, 3);
  std::vector<std::string> notices;
  const auto pts = overlapping_adev(y, {1.0, 2.5, 100.0, 101.0}, &notices);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(notices.size(), 2u);
}

TEST(Adev, CiWidensWithTau) {
  const auto y = white_fm(1.0, 10000, 1.0, 4);
  const auto pts = overlapping_adev(y, {1.0, 1000.0});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_LT(pts[0].ci_high / pts[0].ci_low, pts[1].ci_high / pts[1].ci_low);
}

TEST(PiCounter, AdevAgreesWithPhaseAdev) {
  // the counter differencing of phase is exactly the time-error route
  const double nu = kDefaultCarrierHz;
  const auto phase = synth_powerlaw([] {
    NoiseProfile p;
    p.h[0] = 1e-4;
    p.h[-2] = 1e-3;
    return p;
  }(), 1.0, 1 << 17, 100.0, 8);
  const auto y = pi_counter(phase, 0.01, std::nullopt, nu);
  const std::vector<double> taus{0.01, 0.1, 1.0, 10.0};
  const auto a = overlapping_adev(y, taus);
  const auto b = phase_adev(phase, taus, nu);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].sigma_y / b[i].sigma_y, 1.0, 0.01);
  }
}

TEST(PiCounter, LinearPhaseRampGivesConstantFrequency) {
  const double nu = 1e6;
  PhaseSeries s{100.0, std::vector<double>(1000), 0.0};
  for (std::size_t i = 0; i < s.size(); ++i) s.samples[i] = kTwoPi * 2.0 * i / 100.0;
  const auto y = pi_counter(s, 1.0, std::nullopt, nu);
  ASSERT_EQ(y.y.size(), 9u);
  for (double v : y.y) EXPECT_NEAR(v, 2.0 / nu, 1e-15);
  EXPECT_DOUBLE_EQ(y.fs_out, 1.0);
}

TEST(PiCounter, OneHertzRampAtOpticalCarrier) {
  PhaseSeries s{100.0, std::vector<double>(1000), 0.0};
  for (std::size_t i = 0; i < s.size(); ++i) s.samples[i] = kTwoPi * i / 100.0;
  const auto y = pi_counter(s, 1.0, std::nullopt, 194.4e12);
  for (double v : y.y) EXPECT_NEAR(v, 5.144e-15, 1e-18);
}

TEST(PiCounter, ZeroPhaseGivesZero) {
  PhaseSeries s{100.0, std::vector<double>(1000, 0.0), 0.0};
  for (double v : pi_counter(s, 0.1, 10.0, 194.4e12).y) EXPECT_EQ(v, 0.0);
}

TEST(PiCounter, RejectsNonIntegerGate) {
  PhaseSeries s{100.0, std::vector<double>(1000, 0.0), 0.0};
  EXPECT_THROW(pi_counter(s, 0.015, std::nullopt, 1e6), ConfigError);
  EXPECT_THROW(pi_counter(s, 0.001, std::nullopt, 1e6), ConfigError);
  EXPECT_THROW(pi_counter(s, 1.0, std::nullopt, 0.0), ConfigError);
}

TEST(PiCounter, PrefilterReducesWhitePmAdev) {
  Rng rng(6);
  PhaseSeries s{1000.0, std::vector<double>(200000), 0.0};
  for (auto& v : s.samples) v = rng.normal();
  const auto raw = overlapping_adev(pi_counter(s, 1.0, std::nullopt, 1e14), {1.0});
  const auto filt = overlapping_adev(pi_counter(s, 1.0, 10.0, 1e14), {1.0});
  ASSERT_EQ(raw.size(), 1u);
  ASSERT_EQ(filt.size(), 1u);
  // white PM ADEV scales with the square root of the measurement bandwidth
  EXPECT_NEAR(raw[0].sigma_y / filt[0].sigma_y, std::sqrt(500.0 / 10.0), 2.0);
}

TEST(Butterworth, MinusThreeDbAtCutoff) {
  const double fs = 1000.0, fc = 20.0;
  for (double f : {fc, 5.0, 100.0}) {
    auto lp = make_prefilter(fc, fs);
    double peak = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double out = lp.process(std::sin(kTwoPi * f * i / fs));
      if (i > 10000) peak = std::max(peak, std::abs(out));
    }
    const double expected = 1.0 / std::sqrt(1.0 + std::pow(f / fc, 8.0));
    EXPECT_NEAR(peak, expected, 0.02) << f;
  }
}

TEST(DelayLineTest, IntegerAndFractionalReads) {
  dsp::DelayLine d(8);
  for (int i = 1; i <= 5; ++i) d.push(i);
  EXPECT_EQ(d.at(0), 5.0);
  EXPECT_EQ(d.at(4), 1.0);
  EXPECT_EQ(d.at(5), 0.0);
  EXPECT_DOUBLE_EQ(d.at_fractional(1.25), 3.75);
}

TEST(Slope, ExactPowerLaw) {
  std::vector<AdevPoint> pts;
  for (double t : {1.0, 10.0, 100.0}) pts.push_back({t, 3e-15 / t, 0, 0, 0});
  EXPECT_NEAR(loglog_slope(pts, 1.0, 100.0), -1.0, 1e-12);
  EXPECT_THROW(loglog_slope(pts, 1000.0, 2000.0), ConfigError);
}

TEST(Deglitch, RemovesInjectedOutliers) {
  auto y = white_fm(1.0, 5000, 1.0, 10);
  const std::vector<std::size_t> spikes{100, 2000, 4321};
  for (auto i : spikes) y.y[i] += 50.0;
  const auto r = deglitch(y, 6.0);
  EXPECT_EQ(r.removed_indices, spikes);
  EXPECT_EQ(r.cleaned.y.size(), 5000u - 3u);
  EXPECT_THROW(deglitch(y, 0.0), ConfigError);
}

TEST(Deglitch, KeepsCleanData) {
  const auto y = white_fm(1.0, 100000, 1.0, 11);
  EXPECT_LE(deglitch(y, 6.0).removed, 1u);
}

TEST(Deglitch, TwoOutliersIn150000) {
  auto y = white_fm(1.0, 150000, 1.0, 13);
  const double sd = std::sqrt(variance(y.y));
  y.y[40000] += 100.0 * sd;
  y.y[120000] -= 100.0 * sd;
  const auto r = deglitch(y, 6.0);
  EXPECT_EQ(r.removed, 2u);
  EXPECT_EQ(deglitch(r.cleaned, 6.0).removed, 0u);
}

TEST(Deglitch, ConstantSeriesUntouched) {
  FreqSeries y;
  y.y.assign(500, 1e-15);
  EXPECT_EQ(deglitch(y, 6.0).removed, 0u);
}

TEST(MeanOffset, ThreeSigmaCoverage) {
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = mean_offset(white_fm(1e-30, 10000, 1.0, 1000 + seed));
    EXPECT_GT(m.std_error, 0.0);
    if (std::abs(m.mean) < 3.0 * m.std_error) ++covered;
  }
  EXPECT_GE(covered, 99);
}

TEST(MeanOffset, ConstantSeries) {
  FreqSeries y;
  y.y.assign(100, 2e-19);
  const auto m = mean_offset(y);
  EXPECT_DOUBLE_EQ(m.mean, 2e-19);
  EXPECT_EQ(m.std_error, 0.0);
}

TEST(MeanOffset, TwoSamplesAndErrors) {
  FreqSeries y;
  y.y = {1.0, 3.0};
  const auto m = mean_offset(y);
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  y.y = {1.0};
  EXPECT_THROW(mean_offset(y), ConfigError);
}
