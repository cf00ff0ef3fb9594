#pragma once

#include <span>
#include <vector>

#include "ovr/waveform.hpp"

namespace ovr {

// Extended short-time objective intelligibility. The constants are those of
// the original algorithm; overriding them is meant for tests only.
struct EstoiConfig {
  int sample_rate = 10000;
  std::size_t frame_length = 256;
  std::size_t hop = 128;
  std::size_t fft_size = 512;
  std::size_t num_bands = 15;
  double min_frequency = 150.0;
  std::size_t segment_frames = 30;
  double dynamic_range_db = 40.0;
};

// One-third-octave band matrix (num_bands x fft_size/2+1) of 0/1 weights.
std::vector<std::vector<double>> third_octave_bands(const EstoiConfig& config);

// Drops frames of both signals whose reference frame energy is more than
// dynamic_range_db below the loudest reference frame, then overlap-adds the
// kept frames. Signals must be at config.sample_rate and of equal length.
struct SilenceRemoved {
  std::vector<double> reference;
  std::vector<double> test;
  std::vector<bool> kept_frames;
};
SilenceRemoved remove_silent_frames(std::span<const double> reference, std::span<const double> test,
                                    const EstoiConfig& config = {});

// Score in [-1, 1]. Inputs are assumed sample-aligned; the longer one is
// trimmed to the shorter, both are resampled to 10 kHz. Throws
// Errc::too_short when fewer than segment_frames frames survive silence
// removal.
double estoi(std::span<const double> reference, std::span<const double> test, int sample_rate,
             const EstoiConfig& config = {});
double estoi(const Waveform& reference, const Waveform& test, const EstoiConfig& config = {});

// estoi(reference, processed) - estoi(reference, noisy)
double estoi_improvement(const Waveform& reference, const Waveform& noisy, const Waveform& processed,
                         const EstoiConfig& config = {});

// 10 log10(sum s^2 / sum n^2)
double snr_db(std::span<const double> signal, std::span<const double> noise);

}  // namespace ovr
