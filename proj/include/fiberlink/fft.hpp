#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

namespace fiberlink::fft {

// FFTW planning is not thread-safe; execution of distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// Real-to-complex transform of fixed length n, output n/2+1 bins.
class RealForward {
 public:
  explicit RealForward(std::size_t n)
      : n_(n), in_(n), out_(n / 2 + 1) {
    std::lock_guard lock(planner_mutex());
    plan_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.data(),
                                     reinterpret_cast<fftw_complex*>(out_.data()),
                                     FFTW_ESTIMATE));
  }

  std::span<double> input() { return in_; }
  std::span<const std::complex<double>> execute() {
    fftw_execute(plan_.get());
    return out_;
  }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<double> in_;
  std::vector<std::complex<double>> out_;
  PlanHandle plan_;
};

// Complex(n/2+1)-to-real inverse transform, unnormalized.
class RealInverse {
 public:
  explicit RealInverse(std::size_t n)
      : n_(n), in_(n / 2 + 1), out_(n) {
    std::lock_guard lock(planner_mutex());
    plan_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                     reinterpret_cast<fftw_complex*>(in_.data()),
                                     out_.data(), FFTW_ESTIMATE));
  }

  std::span<std::complex<double>> input() { return in_; }
  std::span<const double> execute() {
    fftw_execute(plan_.get());
    return out_;
  }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> in_;
  std::vector<double> out_;
  PlanHandle plan_;
};

}  // namespace fiberlink::fft
