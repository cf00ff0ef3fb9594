#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ovr/waveform.hpp"

namespace ovr {

enum class WindowType {
  sqrt_hann,  // sqrt-Hann analysis and synthesis (COLA at hop = length/2)
  hann,       // Hann analysis and synthesis (COLA at hop = length/4)
};

std::string_view window_name(WindowType w) noexcept;
WindowType parse_window(std::string_view name);

struct StftConfig {
  std::size_t window_length = 512;
  std::size_t hop = 256;
  std::size_t fft_size = 512;
  WindowType window = WindowType::sqrt_hann;

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }

  std::vector<double> analysis_window() const;
  std::vector<double> synthesis_window() const;

  // Checks hop | window_length, fft_size >= window_length (even), and that
  // the analysis/synthesis product overlap-adds to a constant.
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

// Complex STFT, K = fft_size/2 + 1 bins by L frames, stored frame-major.
// Frame l covers samples [l*hop, l*hop + window_length).
struct Spectrogram {
  StftConfig config;
  int sample_rate = 16000;
  std::size_t num_frames = 0;
  std::size_t source_length = 0;
  std::vector<std::complex<double>> values;

  Spectrogram() = default;
  Spectrogram(const StftConfig& cfg, int rate, std::size_t frames, std::size_t length)
      : config(cfg), sample_rate(rate), num_frames(frames), source_length(length),
        values(frames * cfg.bins()) {}

  std::size_t bins() const noexcept { return config.bins(); }

  std::complex<double>& operator()(std::size_t k, std::size_t l) { return values[l * bins() + k]; }
  const std::complex<double>& operator()(std::size_t k, std::size_t l) const {
    return values[l * bins() + k];
  }

  std::span<std::complex<double>> frame(std::size_t l) {
    return std::span(values).subspan(l * bins(), bins());
  }
  std::span<const std::complex<double>> frame(std::size_t l) const {
    return std::span(values).subspan(l * bins(), bins());
  }

  bool same_grid(const Spectrogram& other) const noexcept {
    return config == other.config && sample_rate == other.sample_rate &&
           num_frames == other.num_frames && source_length == other.source_length;
  }
};

// L = ceil(len / hop); the tail is zero-padded.
Spectrogram stft(std::span<const double> signal, int sample_rate, const StftConfig& config);
Spectrogram stft(const Waveform& mono, const StftConfig& config);

// Weighted overlap-add, normalised by the accumulated window product so the
// round trip is exact wherever that product is not vanishingly small (all but
// the first few samples). Output length equals spec.source_length.
std::vector<double> istft_samples(const Spectrogram& spec);
Waveform istft(const Spectrogram& spec);

}  // namespace ovr
