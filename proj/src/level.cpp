#include "ovr/level.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ovr {

double power_to_db(double power) {
  if (power <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(power);
}

double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

double rms_db(std::span<const double> signal) {
  if (signal.empty()) return -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double x : signal) sum += x * x;
  return power_to_db(sum / static_cast<double>(signal.size()));
}

double active_level_db(std::span<const double> signal, int sample_rate,
                       const ActiveLevelOptions& options) {
  require(!signal.empty(), Errc::invalid_argument, "active level of an empty signal");
  require(sample_rate > 0, Errc::invalid_argument, "sample rate must be positive");
  const auto frame = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(options.frame_seconds * sample_rate)));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(options.hop_seconds * sample_rate)));

  std::vector<double> powers;
  if (signal.size() <= frame) {
    double sum = 0.0;
    for (double x : signal) sum += x * x;
    powers.push_back(sum / static_cast<double>(signal.size()));
  } else {
    for (std::size_t start = 0; start + frame <= signal.size(); start += hop) {
      double sum = 0.0;
      for (std::size_t n = start; n < start + frame; ++n) sum += signal[n] * signal[n];
      powers.push_back(sum / static_cast<double>(frame));
    }
  }

  const double peak = *std::max_element(powers.begin(), powers.end());
  const double floor_power = std::pow(10.0, options.silence_floor_dbfs / 10.0);
  if (peak <= floor_power) fail(Errc::silent_signal, "silent signal: no frame above the silence floor");
  const double gate = peak * std::pow(10.0, -options.dynamic_range_db / 10.0);

  double sum = 0.0;
  std::size_t count = 0;
  for (double p : powers) {
    if (p >= gate && p > floor_power) {
      sum += p;
      ++count;
    }
  }
  return power_to_db(sum / static_cast<double>(count));
}

double active_level_db(const Waveform& wave, const ActiveLevelOptions& options) {
  wave.validate();
  return active_level_db(wave.channel(0), wave.sample_rate, options);
}

}  // namespace ovr
