#pragma once

#include <complex>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ovr/annotation.hpp"
#include "ovr/stft.hpp"

namespace ovr {

using ComplexVector = std::vector<std::complex<double>>;

struct RtfOptions {
  std::size_t min_frames = 10;
  // Frames whose outer-mic energy is further than this below the loudest
  // frame of the same utterance are treated as silence and skipped.
  double energy_range_db = 40.0;
  // epsilon = regularization * max_k sum_l |S_o(k,l)|^2
  double regularization = 1e-10;
};

struct RtfEntry {
  ComplexVector rtf;
  std::size_t frames = 0;

  bool operator==(const RtfEntry&) const = default;
};

// Transfer-characteristics model of one talker: phoneme-specific relative
// transfer functions from the outer to the in-ear microphone, plus a global
// RTF over all speech-active frames that unknown or sparse phonemes fall
// back to.
struct TransferModel {
  std::string talker_id;
  StftConfig stft;
  int sample_rate = 16000;
  std::size_t min_frames = 10;
  std::map<std::string, RtfEntry, std::less<>> phonemes;
  RtfEntry global;

  // Entry for the phoneme if stored, else the global RTF. Never fails.
  const ComplexVector& lookup(std::string_view phoneme) const;

  void validate() const;

  bool operator==(const TransferModel&) const = default;
};

inline const ComplexVector& lookup_rtf(const TransferModel& model, std::string_view phoneme) {
  return model.lookup(phoneme);
}

// Fold-style accumulator of per-phoneme cross and auto power sums,
//   num_p(k) = sum_{l in L_p} S_i(k,l) conj(S_o(k,l)),  den_p(k) = sum |S_o(k,l)|^2,
// so several utterances of one talker can be pooled and partial
// accumulators merged (the merge is associative and commutative).
class RtfAccumulator {
 public:
  RtfAccumulator(const StftConfig& config, int sample_rate);

  void add(const Spectrogram& outer, const Spectrogram& inear, const PhonemeAnnotation& annotation,
           const RtfOptions& options = {});
  // Frame-level variant: labels[l] is the class of frame l; frames with
  // active[l] == false are skipped.
  void add_frames(const Spectrogram& outer, const Spectrogram& inear,
                  const std::vector<std::string>& labels, const std::vector<bool>& active);
  void merge(const RtfAccumulator& other);

  std::size_t active_frames() const noexcept { return global_.frames; }
  std::size_t frames_for(std::string_view label) const;

  // Throws Errc::numeric if no speech-active frame was accumulated.
  TransferModel finalize(std::string talker_id, const RtfOptions& options = {}) const;

 private:
  struct Sums {
    ComplexVector cross;
    std::vector<double> power;
    std::size_t frames = 0;
  };

  Sums& sums_for(const std::string& label);
  static RtfEntry solve(const Sums& sums, double regularization);

  StftConfig config_;
  int sample_rate_;
  std::map<std::string, Sums, std::less<>> by_label_;
  Sums global_;
};

// Per-frame speech-activity mask on the outer spectrogram.
std::vector<bool> energy_activity_mask(const Spectrogram& outer, double range_db);

// Single-utterance convenience over RtfAccumulator.
TransferModel estimate_rtfs(const Spectrogram& outer, const Spectrogram& inear,
                            const PhonemeAnnotation& annotation, const RtfOptions& options = {},
                            std::string talker_id = {});

// Versioned JSON model files.
inline constexpr int kTransferModelVersion = 1;
std::string model_to_json(const TransferModel& model);
TransferModel model_from_json(std::string_view text);
void save_model(const TransferModel& model, const std::filesystem::path& path);
TransferModel load_model(const std::filesystem::path& path);

}  // namespace ovr
