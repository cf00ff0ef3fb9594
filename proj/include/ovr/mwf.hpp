#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ovr/mat2.hpp"
#include "ovr/stft.hpp"

namespace ovr {

// Enhancer contract: noisy outer and in-ear spectrograms in, estimate of the
// clean own voice at the outer (reference) microphone out, on the same grid.
class Enhancer {
 public:
  virtual ~Enhancer() = default;
  virtual Spectrogram enhance(const Spectrogram& noisy_outer, const Spectrogram& noisy_inear) = 0;
};

struct MwfConfig {
  double lambda_y = 0.92;  // smoothing of the noisy PSD matrix
  double lambda_v = 0.95;  // smoothing of the noise PSD matrix
  double q = 0.5;          // a-priori speech absence probability
  double mu = 1.0;         // speech distortion / noise reduction trade-off
  std::size_t init_frames = 10;
  double psd_floor = 1e-6;

  void validate() const;
};

// Per (bin, frame) filter and speech presence probability, frame-major like
// Spectrogram.
struct MwfTrace {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<Vec2> weights;
  std::vector<double> spp;

  const Vec2& weight(std::size_t k, std::size_t l) const { return weights[l * bins + k]; }
  double presence(std::size_t k, std::size_t l) const { return spp[l * bins + k]; }
};

// w = Phi_vv^{-1} Phi_xx e_o / (mu + tr(Phi_vv^{-1} Phi_xx))
Vec2 wiener_weights(const Mat2& phi_vv, const Mat2& phi_xx, double mu);

// Multichannel Gaussian-model speech presence probability
//   p = [1 + q/(1-q) (1+xi) exp(-beta/(1+xi))]^{-1},
//   xi = tr(Phi_vv^{-1} Phi_xx), beta = y^H Phi_vv^{-1} Phi_xx Phi_vv^{-1} y.
double speech_presence(const Mat2& phi_vv_inverse, const Mat2& phi_xx, const Vec2& y, double q);

// Multichannel Wiener filter with SPP-gated recursive noise PSD tracking.
// Frequency bins are independent recursions; each call starts from a fresh
// state.
class MwfEnhancer final : public Enhancer {
 public:
  explicit MwfEnhancer(MwfConfig config = {}, bool record_trace = false);

  Spectrogram enhance(const Spectrogram& noisy_outer, const Spectrogram& noisy_inear) override;

  const MwfConfig& config() const noexcept { return config_; }
  // Available after enhance() when record_trace was set.
  const std::optional<MwfTrace>& trace() const noexcept { return trace_; }

 private:
  MwfConfig config_;
  bool record_trace_;
  std::optional<MwfTrace> trace_;
};

Spectrogram enhance(const Spectrogram& noisy_outer, const Spectrogram& noisy_inear, const MwfConfig& config = {});

// Oracle injection: fixed per-bin Phi_vv / Phi_xx supplied by the caller,
// no tracking, no SPP. One matrix per frequency bin.
Spectrogram enhance_with_oracle(const Spectrogram& noisy_outer, const Spectrogram& noisy_inear,
                                std::span<const Mat2> phi_vv, std::span<const Mat2> phi_xx, double mu,
                                MwfTrace* trace = nullptr);

// Applies recorded filters to another signal pair, e.g. to split an
// enhanced mixture into its filtered speech and noise components.
Spectrogram apply_weights(const MwfTrace& trace, const Spectrogram& outer, const Spectrogram& inear);

// stft -> enhance -> istft on the outer/in-ear waveform pair.
Waveform enhance_waveform(const Waveform& noisy_outer, const Waveform& noisy_inear, const MwfConfig& config = {},
                          const StftConfig& stft_config = {});

}  // namespace ovr
