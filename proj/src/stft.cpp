#include "ovr/stft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ovr/fft.hpp"

namespace ovr {

namespace {

std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

// Sum over frames of analysis*synthesis at each offset within one hop.
std::vector<double> overlap_profile(const StftConfig& c) {
  const auto wa = c.analysis_window();
  const auto ws = c.synthesis_window();
  std::vector<double> profile(c.hop, 0.0);
  for (std::size_t n = 0; n < c.window_length; ++n) profile[n % c.hop] += wa[n] * ws[n];
  return profile;
}

}  // namespace

std::string_view window_name(WindowType w) noexcept {
  switch (w) {
    case WindowType::sqrt_hann: return "sqrt_hann";
    case WindowType::hann: return "hann";
  }
  return "unknown";
}

WindowType parse_window(std::string_view name) {
  if (name == "sqrt_hann") return WindowType::sqrt_hann;
  if (name == "hann") return WindowType::hann;
  fail(Errc::invalid_argument, "unknown window '" + std::string(name) + "'");
}

std::vector<double> StftConfig::analysis_window() const {
  auto w = periodic_hann(window_length);
  if (window == WindowType::sqrt_hann)
    for (auto& v : w) v = std::sqrt(v);
  return w;
}

std::vector<double> StftConfig::synthesis_window() const { return analysis_window(); }

void StftConfig::validate() const {
  require(window_length >= 2 && hop >= 1, Errc::invalid_argument, "STFT window/hop must be positive");
  require(window_length % hop == 0, Errc::invalid_argument, "STFT hop must divide the window length");
  require(fft_size >= window_length && fft_size % 2 == 0, Errc::invalid_argument,
          "STFT fft_size must be even and >= window_length");
  const auto profile = overlap_profile(*this);
  const auto [lo, hi] = std::minmax_element(profile.begin(), profile.end());
  require(*lo > 0.0 && (*hi - *lo) <= 1e-9 * *hi, Errc::invalid_argument,
          "STFT window pair does not satisfy COLA for hop " + std::to_string(hop));
}

Spectrogram stft(std::span<const double> signal, int sample_rate, const StftConfig& config) {
  config.validate();
  const std::size_t len = signal.size();
  const std::size_t frames = (len + config.hop - 1) / config.hop;
  Spectrogram spec(config, sample_rate, frames, len);
  const auto window = config.analysis_window();
  RealFft fft(config.fft_size);
  std::vector<double> buffer(config.fft_size);
  for (std::size_t l = 0; l < frames; ++l) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    const std::size_t start = l * config.hop;
    for (std::size_t n = 0; n < config.window_length && start + n < len; ++n)
      buffer[n] = signal[start + n] * window[n];
    fft.forward(buffer, spec.frame(l));
  }
  return spec;
}

Spectrogram stft(const Waveform& mono, const StftConfig& config) {
  mono.validate();
  require(mono.channel_count() == 1, Errc::invalid_argument, "stft expects a single-channel waveform");
  return stft(mono.channel(0), mono.sample_rate, config);
}

std::vector<double> istft_samples(const Spectrogram& spec) {
  const StftConfig& config = spec.config;
  config.validate();
  require(spec.values.size() == spec.num_frames * spec.bins(), Errc::mismatch,
          "spectrogram storage does not match its frame count");
  require(spec.num_frames == (spec.source_length + config.hop - 1) / config.hop, Errc::mismatch,
          "spectrogram frame count does not match its configuration");

  const std::size_t total = spec.num_frames * config.hop + config.window_length;
  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  const auto wa = config.analysis_window();
  const auto ws = config.synthesis_window();
  RealFft fft(config.fft_size);
  std::vector<double> buffer(config.fft_size);
  const double scale = 1.0 / static_cast<double>(config.fft_size);

  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    fft.inverse(spec.frame(l), buffer);
    const std::size_t start = l * config.hop;
    for (std::size_t n = 0; n < config.window_length; ++n) {
      acc[start + n] += buffer[n] * scale * ws[n];
      norm[start + n] += wa[n] * ws[n];
    }
  }

  const auto profile = overlap_profile(config);
  const double floor = 1e-3 * profile.front();
  std::vector<double> out(spec.source_length);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = acc[i] / std::max(norm[i], floor);
  return out;
}

Waveform istft(const Spectrogram& spec) {
  return Waveform::mono(istft_samples(spec), spec.sample_rate);
}

}  // namespace ovr
