#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ovr {

// Real-input FFT of fixed size n backed by FFTW. Instances are cheap handles
// to cached plans; forward/inverse may be called concurrently.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  // in.size() == n, out.size() == n/2 + 1.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
  // Unnormalised inverse: inverse(forward(x)) == n * x.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  std::size_t n_;
  void* forward_plan_;
  void* inverse_plan_;
};

// Full linear convolution (length a.size() + b.size() - 1) via FFT.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b);

}  // namespace ovr
