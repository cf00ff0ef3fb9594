#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ovr/experiment_config.hpp"
#include "ovr/waveform.hpp"

namespace ovr::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "ovr");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double sigma = 1.0);

// Voiced harmonic complex with a gliding f0 and syllable-rate amplitude
// envelope separated by short pauses, after a 250 ms lead-in.
std::vector<double> speech_like(std::size_t n, int sample_rate, std::uint64_t seed);

// Bins 0..n/2 of the n-point DFT of x (zero padded), by direct summation.
std::vector<std::complex<double>> direct_dft(std::span<const double> x, std::size_t n);

// Frequency response of FIR g at bin k of an n-point grid.
std::complex<double> fir_response(std::span<const double> g, std::size_t k, std::size_t n);

// y[t] = sum_m g[m] x[t-m], same length as x.
std::vector<double> fir_filter(std::span<const double> x, std::span<const double> g);

double max_abs_diff(std::span<const double> a, std::span<const double> b, std::size_t from, std::size_t to);

double energy(std::span<const double> x);

// Own voice at the outer mic plus its in-ear version (low-passed and
// boosted, as through body conduction), and stationary white noise that the
// earplug attenuates at the in-ear mic. Channel 0 outer, channel 1 in-ear.
struct TwoChannelScene {
  Waveform speech;
  Waveform noise;
};
TwoChannelScene make_scene(std::size_t n, int sample_rate, std::uint64_t seed);

// Experiment with `screens` screens of `conditions` processed stimuli plus a
// hidden reference copy ("ref"), written as WAV files next to config.json.
// Screen i gets metadata talker = T(i % talkers + 1), sentence = i.
struct ExperimentFixture {
  std::filesystem::path config_path;
  ExperimentConfig config;
};
ExperimentFixture write_experiment(const std::filesystem::path& dir, const std::string& experiment_id,
                                   std::size_t screens, std::size_t conditions, std::size_t talkers = 1,
                                   bool with_training = false);

}  // namespace ovr::test
