#pragma once

#include <span>

#include "ovr/waveform.hpp"

namespace ovr {

struct ActiveLevelOptions {
  double frame_seconds = 0.025;
  double hop_seconds = 0.0125;
  double dynamic_range_db = 40.0;
  double silence_floor_dbfs = -100.0;
};

// Energy-gated RMS level in dBFS (full-scale sine = -3.01 dBFS): the mean
// frame power over frames within dynamic_range_db of the loudest frame.
// Throws Errc::silent_signal when no frame exceeds silence_floor_dbfs.
double active_level_db(std::span<const double> signal, int sample_rate,
                       const ActiveLevelOptions& options = {});
// Level of channel 0.
double active_level_db(const Waveform& wave, const ActiveLevelOptions& options = {});

// Plain RMS level in dBFS over the whole signal; -inf for all-zero input.
double rms_db(std::span<const double> signal);

double power_to_db(double power);
double db_to_amplitude(double db);

}  // namespace ovr
