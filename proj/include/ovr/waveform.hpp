#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ovr/error.hpp"

namespace ovr {

// Time-domain audio, one vector per channel, 64-bit float samples with a
// nominal full scale of [-1, 1].
struct Waveform {
  std::vector<std::vector<double>> channels;
  int sample_rate = 16000;

  Waveform() = default;
  Waveform(std::vector<std::vector<double>> data, int rate)
      : channels(std::move(data)), sample_rate(rate) {}

  static Waveform mono(std::vector<double> samples, int rate) {
    Waveform w;
    w.channels.push_back(std::move(samples));
    w.sample_rate = rate;
    return w;
  }

  static Waveform zeros(std::size_t channel_count, std::size_t frames, int rate) {
    return Waveform(std::vector<std::vector<double>>(channel_count, std::vector<double>(frames, 0.0)),
                    rate);
  }

  std::size_t channel_count() const noexcept { return channels.size(); }
  std::size_t frames() const noexcept { return channels.empty() ? 0 : channels.front().size(); }
  bool empty() const noexcept { return frames() == 0; }

  std::span<const double> channel(std::size_t c) const { return channels.at(c); }
  std::span<double> channel(std::size_t c) { return channels.at(c); }

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(frames()) / sample_rate : 0.0;
  }

  void validate() const {
    require(sample_rate > 0, Errc::invalid_argument, "sample rate must be positive");
    require(!channels.empty(), Errc::invalid_argument, "waveform has no channels");
    for (const auto& ch : channels)
      require(ch.size() == channels.front().size(), Errc::invalid_argument,
              "waveform channels differ in length");
  }
};

// Picks channel c of w as a mono waveform.
inline Waveform select_channel(const Waveform& w, std::size_t c) {
  return Waveform::mono(w.channels.at(c), w.sample_rate);
}

inline Waveform stack_channels(const Waveform& a, const Waveform& b) {
  require(a.sample_rate == b.sample_rate, Errc::mismatch, "sample rates differ");
  require(a.frames() == b.frames(), Errc::mismatch, "channel lengths differ");
  Waveform out = a;
  for (const auto& ch : b.channels) out.channels.push_back(ch);
  return out;
}

}  // namespace ovr
