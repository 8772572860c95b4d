#pragma once

#include <cmath>
#include <vector>

#include "fiberlink/core.hpp"

namespace fiberlink::dsp {

// Second-order section, transposed direct form II.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
  double s1 = 0.0, s2 = 0.0;

  double process(double x) {
    const double y = b0 * x + s1;
    s1 = b1 * x - a1 * y + s2;
    s2 = b2 * x - a2 * y;
    return y;
  }

  // Steady state for a constant input x0 (unit DC gain sections only).
  void settle(double x0) {
    s2 = (b2 - a2) * x0;
    s1 = (b1 - a1) * x0 + s2;
  }
};

// Butterworth low-pass from cascaded biquads, bilinear transform with
// prewarping so that the -3 dB point lands exactly on cutoff_hz.
class ButterworthLowPass {
 public:
  ButterworthLowPass() = default;

  ButterworthLowPass(int order, double cutoff_hz, double fs) {
    if (order < 2 || order % 2 != 0) {
      throw ConfigError("butterworth: order must be even and >= 2");
    }
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) {
      throw ConfigError("butterworth: cutoff must lie in (0, fs/2)");
    }
    const double k = 2.0 * fs;
    const double wc = k * std::tan(kPi * cutoff_hz / fs);
    for (int i = 0; i < order / 2; ++i) {
      const double damping = 2.0 * std::sin(kPi * (2.0 * i + 1.0) / (2.0 * order));
      const double a0 = k * k + damping * wc * k + wc * wc;
      Biquad s;
      s.b0 = wc * wc / a0;
      s.b1 = 2.0 * wc * wc / a0;
      s.b2 = wc * wc / a0;
      s.a1 = (2.0 * wc * wc - 2.0 * k * k) / a0;
      s.a2 = (k * k - damping * wc * k + wc * wc) / a0;
      sections_.push_back(s);
    }
  }

  double process(double x) {
    for (auto& s : sections_) x = s.process(x);
    return x;
  }

  void settle(double x0) {
    for (auto& s : sections_) s.settle(x0);
  }

  bool active() const { return !sections_.empty(); }

 private:
  std::vector<Biquad> sections_;
};

// Fixed-capacity history with fractional-delay reads (linear interpolation).
class DelayLine {
 public:
  DelayLine() = default;
  explicit DelayLine(std::size_t max_delay_samples)
      : buf_(max_delay_samples + 2, 0.0) {}

  void push(double x) {
    head_ = (head_ + 1) % buf_.size();
    buf_[head_] = x;
    ++count_;
  }

  // Value pushed `delay` samples ago; 0 before the line has filled.
  double at(std::size_t delay) const {
    if (delay >= count_) return 0.0;
    return buf_[(head_ + buf_.size() - delay) % buf_.size()];
  }

  double at_fractional(double delay) const {
    const double fl = std::floor(delay);
    const auto i = static_cast<std::size_t>(fl);
    const double frac = delay - fl;
    if (frac == 0.0) return at(i);
    return (1.0 - frac) * at(i) + frac * at(i + 1);
  }

  std::size_t capacity() const { return buf_.size() - 2; }
  std::size_t count() const { return count_; }

 private:
  std::vector<double> buf_{0.0, 0.0};
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

}  // namespace fiberlink::dsp
