#include <cmath>

#include "ovr/augmentation.hpp"
#include "ovr/level.hpp"
#include "ovr/random.hpp"

namespace ovr {

Waveform fit_noise_length(const Waveform& noise, std::size_t length, std::uint64_t seed) {
  noise.validate();
  require(!noise.empty(), Errc::silent_signal, "noise signal is empty");
  const std::size_t n = noise.frames();
  if (n == length) return noise;
  Rng rng(seed);
  Waveform out = Waveform::zeros(noise.channel_count(), length, noise.sample_rate);
  if (n > length) {
    const std::size_t start = static_cast<std::size_t>(rng.below(n - length + 1));
    for (std::size_t c = 0; c < noise.channel_count(); ++c)
      std::copy_n(noise.channels[c].begin() + static_cast<std::ptrdiff_t>(start), length, out.channels[c].begin());
  } else {
    const std::size_t offset = static_cast<std::size_t>(rng.below(n));
    for (std::size_t c = 0; c < noise.channel_count(); ++c)
      for (std::size_t t = 0; t < length; ++t) out.channels[c][t] = noise.channels[c][(offset + t) % n];
  }
  return out;
}

MixResult mix_at_snr(const Waveform& own, const Waveform& noise, double snr_db, std::uint64_t seed) {
  own.validate();
  noise.validate();
  require(std::isfinite(snr_db), Errc::invalid_argument, "target SNR must be finite");
  require(own.sample_rate == noise.sample_rate, Errc::mismatch, "own voice and noise sample rates differ");
  require(own.channel_count() == noise.channel_count(), Errc::mismatch,
          "own voice and noise channel counts differ");
  require(!own.empty(), Errc::silent_signal, "own voice signal is empty");

  MixResult result;
  result.scaled_noise = fit_noise_length(noise, own.frames(), seed);
  result.speech_level_db = active_level_db(own);
  result.noise_level_db = rms_db(result.scaled_noise.channel(0));
  if (!std::isfinite(result.noise_level_db)) fail(Errc::silent_signal, "noise signal is silent at the outer microphone");

  result.gain = db_to_amplitude(result.speech_level_db - result.noise_level_db - snr_db);
  result.mixture = own;
  for (std::size_t c = 0; c < own.channel_count(); ++c) {
    auto& noise_ch = result.scaled_noise.channels[c];
    auto& mix_ch = result.mixture.channels[c];
    for (std::size_t t = 0; t < mix_ch.size(); ++t) {
      noise_ch[t] *= result.gain;
      mix_ch[t] += noise_ch[t];
    }
  }
  result.achieved_snr_db = result.speech_level_db - rms_db(result.scaled_noise.channel(0));
  return result;
}

}  // namespace ovr
