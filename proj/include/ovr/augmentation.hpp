#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "ovr/annotation.hpp"
#include "ovr/rtf.hpp"
#include "ovr/waveform.hpp"

namespace ovr {

inline constexpr double kDefaultSmoothing = 0.5;

// First-order recursive smoothing of a per-frame transfer sequence:
//   out[l] = alpha * out[l-1] + (1 - alpha) * raw[l],  out[-1] = raw[0].
std::vector<ComplexVector> smooth_transfer(std::span<const ComplexVector* const> raw, double alpha);

// Smoothed per-frame transfer the model assigns to a labelled frame sequence.
std::vector<ComplexVector> transfer_sequence(const TransferModel& model,
                                             const std::vector<std::string>& frame_labels,
                                             double alpha);

// Simulated in-ear own voice: istft( H~(k,l) * stft(clean)(k,l) ) where H~
// is the smoothed phoneme-conditioned RTF of each frame. Output has the
// input's length and rate.
Waveform simulate_inear(const Waveform& clean, const PhonemeAnnotation& annotation,
                        const TransferModel& model, double alpha = kDefaultSmoothing);

// Same computation, bound to a declared target talker; throws
// Errc::mismatch if the model belongs to anyone else.
Waveform simulate_inear_personalized(const Waveform& clean, const PhonemeAnnotation& annotation,
                                     const TransferModel& model, std::string_view target_talker,
                                     double alpha = kDefaultSmoothing);

// Two-channel impulse responses (ch0 outer, ch1 in-ear) keyed by azimuth in
// degrees.
struct IrSet {
  int sample_rate = 0;
  std::map<int, Waveform> responses;

  const Waveform& at(int direction) const;
  void validate() const;

  // Reads "000.wav" ... "315.wav" style files from a directory.
  static IrSet load_directory(const std::filesystem::path& dir);
};

// Sum over d of source_d convolved with the IR of direction d, per channel.
// Output length = max source length + max IR length - 1.
Waveform spatialize_noise(std::span<const Waveform> sources, const IrSet& irs,
                          std::span<const int> directions);

// Loops (random circular offset) or crops (random start) noise to length.
Waveform fit_noise_length(const Waveform& noise, std::size_t length, std::uint64_t seed);

struct MixResult {
  Waveform mixture;       // own + gain * noise
  Waveform scaled_noise;  // gain * noise, trimmed to the mixture length
  double gain = 1.0;
  double speech_level_db = 0.0;  // active level, outer channel
  double noise_level_db = 0.0;   // RMS level of the unscaled noise, outer channel
  double achieved_snr_db = 0.0;
};

// Scales noise by one scalar on all channels so that the outer-channel
// (channel 0) active speech level minus noise RMS level equals snr_db.
// Noise of a different length is fitted with fit_noise_length(seed).
MixResult mix_at_snr(const Waveform& own, const Waveform& noise, double snr_db, std::uint64_t seed = 0);

}  // namespace ovr
