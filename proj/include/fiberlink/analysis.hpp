#pragma once

// Measurement products computed from phase records: Welch PSD, Pi-type
// counter, overlapping Allan deviation, deglitching and mean offset.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "fiberlink/core.hpp"
#include "fiberlink/dsp.hpp"
#include "fiberlink/fft.hpp"

namespace fiberlink {

struct AdevPoint {
  double tau = 0.0;
  double sigma_y = 0.0;
  std::size_t n_samples = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct PsdEstimate {
  std::vector<double> freqs;
  std::vector<double> values;  // rad^2/Hz, one-sided
  double resolution_bw = 0.0;
};

struct FreqSeries {
  double fs_out = 1.0;
  std::vector<double> y;  // fractional frequency
  double carrier_hz = kDefaultCarrierHz;
  double t0 = 0.0;

  double tau0() const { return 1.0 / fs_out; }
};

enum class Detrend { None, Mean, Linear };

inline PsdEstimate welch_psd(const PhaseSeries& phase, std::size_t segment_len, double overlap,
                             Detrend detrend = Detrend::Mean) {
  validate(phase);
  if (segment_len < 4) throw ConfigError("welch_psd: segment length must be >= 4");
  if (segment_len > phase.size()) {
    throw ConfigError("welch_psd: segment length " + std::to_string(segment_len) +
                      " exceeds record length " + std::to_string(phase.size()));
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("welch_psd: overlap must be in [0, 1)");

  const std::size_t n = segment_len;
  const auto step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - overlap))));
  std::vector<double> window(n);
  double wsum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
    wsum2 += window[i] * window[i];
  }

  fft::RealForward fwd(n);
  const std::size_t bins = n / 2;
  std::vector<double> acc(bins, 0.0);
  std::size_t segments = 0;
  std::vector<double> seg(n);
  for (std::size_t start = 0; start + n <= phase.size(); start += step) {
    std::copy_n(phase.samples.begin() + static_cast<std::ptrdiff_t>(start), n, seg.begin());
    if (detrend == Detrend::Mean) {
      const double m = mean(seg);
      for (auto& v : seg) v -= m;
    } else if (detrend == Detrend::Linear) {
      // least-squares line against i - (n-1)/2
      const double c = 0.5 * static_cast<double>(n - 1);
      double sxy = 0.0, sxx = 0.0;
      const double m = mean(seg);
      for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) - c;
        sxy += x * (seg[i] - m);
        sxx += x * x;
      }
      const double slope = sxy / sxx;
      for (std::size_t i = 0; i < n; ++i) seg[i] -= m + slope * (static_cast<double>(i) - c);
    }
    auto in = fwd.input();
    for (std::size_t i = 0; i < n; ++i) in[i] = seg[i] * window[i];
    auto spec = fwd.execute();
    for (std::size_t k = 1; k <= bins; ++k) acc[k - 1] += std::norm(spec[k]);
    ++segments;
  }

  PsdEstimate est;
  const double df = phase.fs / static_cast<double>(n);
  est.resolution_bw = 1.5 * df;  // Hann equivalent noise bandwidth
  est.freqs.resize(bins);
  est.values.resize(bins);
  for (std::size_t k = 1; k <= bins; ++k) {
    const bool nyquist = (n % 2 == 0) && k == bins;
    const double scale = nyquist ? 1.0 : 2.0;
    est.freqs[k - 1] = static_cast<double>(k) * df;
    est.values[k - 1] = scale * acc[k - 1] / (static_cast<double>(segments) * phase.fs * wsum2);
  }
  return est;
}

// Mean PSD over the bins inside [f_lo, f_hi].
inline double band_average(const PsdEstimate& psd, double f_lo, double f_hi) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < psd.freqs.size(); ++i) {
    if (psd.freqs[i] >= f_lo && psd.freqs[i] <= f_hi) {
      sum += psd.values[i];
      ++count;
    }
  }
  if (count == 0) throw ConfigError("band_average: no PSD bins in band");
  return sum / static_cast<double>(count);
}

// 4th-order Butterworth, the counter's optional measurement-bandwidth filter.
inline dsp::ButterworthLowPass make_prefilter(double prefilter_hz, double fs) {
  return dsp::ButterworthLowPass(4, prefilter_hz, fs);
}

inline std::size_t gate_samples(double gate_s, double fs) {
  const double m = gate_s * fs;
  const auto r = static_cast<std::size_t>(std::llround(m));
  if (r < 1) throw ConfigError("pi_counter: gate shorter than one sample");
  if (std::abs(m - static_cast<double>(r)) > 1e-6 * m) {
    throw ConfigError("pi_counter: gate is not an integer number of samples");
  }
  return r;
}

// Dead-time-free Pi counter: y_k = (phi((k+1)T) - phi(kT)) / (2 pi nu T).
inline FreqSeries pi_counter(const PhaseSeries& phase, double gate_s,
                             std::optional<double> prefilter_hz, double carrier_hz) {
  validate(phase);
  if (!(carrier_hz > 0.0)) throw ConfigError("pi_counter: carrier must be positive");
  const std::size_t m = gate_samples(gate_s, phase.fs);
  std::vector<double> filtered;
  const std::vector<double>* src = &phase.samples;
  if (prefilter_hz) {
    auto lp = make_prefilter(*prefilter_hz, phase.fs);
    filtered.resize(phase.size());
    if (!phase.empty()) lp.settle(phase.samples.front());
    for (std::size_t i = 0; i < phase.size(); ++i) filtered[i] = lp.process(phase.samples[i]);
    src = &filtered;
  }
  FreqSeries out;
  out.fs_out = phase.fs / static_cast<double>(m);
  out.carrier_hz = carrier_hz;
  out.t0 = phase.t0;
  const double t = static_cast<double>(m) / phase.fs;
  const double scale = 1.0 / (kTwoPi * carrier_hz * t);
  for (std::size_t k = 0; (k + 1) * m < src->size(); ++k) {
    out.y.push_back(((*src)[(k + 1) * m] - (*src)[k * m]) * scale);
  }
  return out;
}

namespace detail {

// Overlapping Allan deviation from time-error samples x spaced tau0.
inline std::optional<AdevPoint> adev_from_x(const std::vector<double>& x, double tau0,
                                            std::size_t m) {
  if (m == 0 || x.size() < 2 * m + 1) return std::nullopt;
  const std::size_t terms = x.size() - 2 * m;
  long double acc = 0.0;
  for (std::size_t i = 0; i < terms; ++i) {
    const long double d = static_cast<long double>(x[i + 2 * m]) - 2.0L * x[i + m] + x[i];
    acc += d * d;
  }
  const double tau = static_cast<double>(m) * tau0;
  AdevPoint p;
  p.tau = tau;
  p.n_samples = terms;
  p.sigma_y = std::sqrt(static_cast<double>(acc / (2.0L * terms)) ) / tau;

  const double nx = static_cast<double>(x.size());
  const double md = static_cast<double>(m);
  double edf = (3.0 * (nx - 1.0) / (2.0 * md) - 2.0 * (nx - 2.0) / nx) * 4.0 * md * md /
               (4.0 * md * md + 5.0);
  edf = std::max(edf, 1.0);
  boost::math::chi_squared chi(edf);
  const double var = p.sigma_y * p.sigma_y;
  p.ci_low = std::sqrt(var * edf / boost::math::quantile(chi, 0.8415));
  p.ci_high = std::sqrt(var * edf / boost::math::quantile(chi, 0.1585));
  return p;
}

// Integrated time error. The first sample is subtracted (ADEV ignores a
// frequency offset) so a constant series gives exactly zero.
inline std::vector<double> time_error(const FreqSeries& y) {
  std::vector<double> x(y.y.size() + 1, 0.0);
  const double ref = y.y.empty() ? 0.0 : y.y.front();
  for (std::size_t i = 0; i < y.y.size(); ++i) x[i + 1] = x[i] + (y.y[i] - ref) * y.tau0();
  return x;
}

inline bool tau_to_m(double tau, double tau0, std::size_t& m) {
  const double r = tau / tau0;
  const auto mi = static_cast<std::size_t>(std::llround(r));
  if (mi == 0 || std::abs(r - static_cast<double>(mi)) > 1e-6 * r) return false;
  m = mi;
  return true;
}

}  // namespace detail

inline std::vector<AdevPoint> overlapping_adev(const FreqSeries& y, const std::vector<double>& taus,
                                               std::vector<std::string>* notices = nullptr) {
  const double tau0 = y.tau0();
  const auto x = detail::time_error(y);
  const double span = static_cast<double>(y.y.size()) * tau0;
  std::vector<AdevPoint> out;
  for (double tau : taus) {
    std::size_t m = 0;
    if (!detail::tau_to_m(tau, tau0, m)) {
      if (notices) notices->push_back("tau " + std::to_string(tau) + " s is not a multiple of tau0");
      continue;
    }
    if (tau > span / 3.0 * (1.0 + 1e-12)) {
      if (notices) notices->push_back("tau " + std::to_string(tau) + " s exceeds record span/3");
      continue;
    }
    if (auto p = detail::adev_from_x(x, tau0, m)) out.push_back(*p);
  }
  return out;
}

// Allan deviation straight from phase samples.
inline std::vector<AdevPoint> phase_adev(const PhaseSeries& phase, const std::vector<double>& taus,
                                         double carrier_hz) {
  std::vector<double> x(phase.size());
  for (std::size_t i = 0; i < phase.size(); ++i) x[i] = phase.samples[i] / (kTwoPi * carrier_hz);
  const double tau0 = 1.0 / phase.fs;
  const double span = static_cast<double>(phase.size() - 1) * tau0;
  std::vector<AdevPoint> out;
  for (double tau : taus) {
    std::size_t m = 0;
    if (!detail::tau_to_m(tau, tau0, m) || tau > span / 3.0 * (1.0 + 1e-12)) continue;
    if (auto p = detail::adev_from_x(x, tau0, m)) out.push_back(*p);
  }
  return out;
}

// Least-squares slope of log(sigma) versus log(tau).
inline double loglog_slope(const std::vector<AdevPoint>& pts, double tau_min, double tau_max) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& p : pts) {
    if (p.tau < tau_min || p.tau > tau_max || p.sigma_y <= 0.0) continue;
    const double lx = std::log10(p.tau), ly = std::log10(p.sigma_y);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    ++n;
  }
  if (n < 2) throw ConfigError("loglog_slope: fewer than two points in range");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct DeglitchResult {
  FreqSeries cleaned;
  std::size_t removed = 0;
  std::vector<std::size_t> removed_indices;
};

// Drops points farther than k_sigma robust deviations (1.4826 * MAD of the
// residuals) from a 61-point running median.
inline DeglitchResult deglitch(const FreqSeries& y, double k_sigma) {
  if (!(k_sigma > 0.0)) throw ConfigError("deglitch: k_sigma must be positive");
  constexpr std::size_t kHalf = 30;
  const std::size_t n = y.y.size();
  std::vector<double> resid(n);
  std::vector<double> win;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= kHalf ? i - kHalf : 0;
    const std::size_t hi = std::min(n, i + kHalf + 1);
    win.assign(y.y.begin() + static_cast<std::ptrdiff_t>(lo),
               y.y.begin() + static_cast<std::ptrdiff_t>(hi));
    auto mid = win.begin() + static_cast<std::ptrdiff_t>(win.size() / 2);
    std::nth_element(win.begin(), mid, win.end());
    resid[i] = y.y[i] - *mid;
  }
  std::vector<double> absr(n);
  for (std::size_t i = 0; i < n; ++i) absr[i] = std::abs(resid[i]);
  double scale = 0.0;
  if (n > 0) {
    auto mid = absr.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(absr.begin(), mid, absr.end());
    scale = 1.4826 * *mid;
  }
  DeglitchResult out;
  out.cleaned = y;
  out.cleaned.y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(resid[i]) > k_sigma * scale) {
      out.removed_indices.push_back(i);
    } else {
      out.cleaned.y.push_back(y.y[i]);
    }
  }
  out.removed = out.removed_indices.size();
  return out;
}

struct MeanOffset {
  double mean = 0.0;
  double std_error = 0.0;
};

// Standard error from the ADEV at the longest computable tau (span/3),
// extrapolated to the record length as white FM (tau^-1/2). The upper 1-sigma
// confidence bound is used since that tau has only ~2 degrees of freedom.
// Conservative when the noise is white PM, which falls faster.
inline MeanOffset mean_offset(const FreqSeries& y) {
  if (y.y.size() < 2) throw ConfigError("mean_offset: need at least 2 samples");
  MeanOffset r;
  r.mean = mean(y.y);
  const std::size_t m = std::max<std::size_t>(1, y.y.size() / 3);
  const double tau = static_cast<double>(m) * y.tau0();
  const double record = static_cast<double>(y.y.size()) * y.tau0();
  if (auto p = detail::adev_from_x(detail::time_error(y), y.tau0(), m)) {
    r.std_error = p->ci_high * std::sqrt(tau / record);
  }
  return r;
}

}  // namespace fiberlink
