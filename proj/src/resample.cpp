#include "ovr/resample.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace ovr {

namespace {

constexpr std::size_t kTapsPerPhase = 64;
constexpr double kKaiserBeta = 8.6;
constexpr double kCutoffFraction = 0.9;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::vector<double> design_prototype(std::size_t up, std::size_t down) {
  const std::size_t half = kTapsPerPhase * up / 2;
  const std::size_t taps = 2 * half + 1;
  // Cutoff in cycles per sample at the upsampled rate.
  const double fc = 0.5 * kCutoffFraction / static_cast<double>(std::max(up, down));
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  std::vector<double> h(taps);
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(half);
    const double r = t / static_cast<double>(half);
    const double kaiser = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[i] = static_cast<double>(up) * 2.0 * fc * sinc(2.0 * fc * t) * kaiser;
  }
  return h;
}

}  // namespace

std::vector<double> resample(std::span<const double> signal, int source_rate, int target_rate) {
  require(source_rate > 0 && target_rate > 0, Errc::invalid_argument, "sample rates must be positive");
  if (source_rate == target_rate) return {signal.begin(), signal.end()};

  const auto g = std::gcd(source_rate, target_rate);
  const auto up = static_cast<std::size_t>(target_rate / g);
  const auto down = static_cast<std::size_t>(source_rate / g);
  const auto h = design_prototype(up, down);
  const std::size_t half = (h.size() - 1) / 2;

  const auto len = signal.size();
  const std::size_t out_len = (len * up + down / 2) / down;
  std::vector<double> out(out_len, 0.0);
  const auto n_in = static_cast<long long>(len);

  for (std::size_t n = 0; n < out_len; ++n) {
    // Position on the upsampled grid, shifted by the filter's group delay.
    const std::size_t t = n * down + half;
    double acc = 0.0;
    for (std::size_t i = t % up; i < h.size(); i += up) {
      const long long idx = static_cast<long long>((t - i) / up);
      if (idx >= 0 && idx < n_in) acc += h[i] * signal[static_cast<std::size_t>(idx)];
    }
    out[n] = acc;
  }
  return out;
}

Waveform resample(const Waveform& wave, int target_rate) {
  wave.validate();
  Waveform out;
  out.sample_rate = target_rate;
  for (const auto& ch : wave.channels) out.channels.push_back(resample(ch, wave.sample_rate, target_rate));
  return out;
}

}  // namespace ovr
