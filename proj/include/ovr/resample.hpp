#pragma once

#include <span>
#include <vector>

#include "ovr/waveform.hpp"

namespace ovr {

// Rational-ratio polyphase resampler with a Kaiser-windowed sinc prototype
// (beta 8.6, 64 taps per phase, cutoff at 90% of the lower Nyquist rate).
// Output length is round(len * target / source); the filter delay is
// compensated so output sample n aligns with time n / target_rate.
std::vector<double> resample(std::span<const double> signal, int source_rate, int target_rate);
Waveform resample(const Waveform& wave, int target_rate);

}  // namespace ovr
