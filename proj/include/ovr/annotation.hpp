#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ovr/stft.hpp"

namespace ovr {

inline constexpr std::string_view kSilenceLabel = "sil";

struct PhonemeInterval {
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds, exclusive
  std::string label;
};

// Ordered, non-overlapping phoneme intervals; gaps read as "sil".
class PhonemeAnnotation {
 public:
  PhonemeAnnotation() = default;
  explicit PhonemeAnnotation(std::vector<PhonemeInterval> intervals);

  const std::vector<PhonemeInterval>& intervals() const noexcept { return intervals_; }
  bool empty() const noexcept { return intervals_.empty(); }

  // Label of the interval containing t (start <= t < end), else "sil".
  std::string_view label_at(double seconds) const;

  // UTF-8 TSV with columns start_s, end_s, phoneme. A header line whose
  // first field is not numeric is skipped; blank lines and '#' comments too.
  static PhonemeAnnotation parse_tsv(std::string_view text);
  static PhonemeAnnotation load_tsv(const std::filesystem::path& path);
  std::string to_tsv() const;

 private:
  std::vector<PhonemeInterval> intervals_;
};

// Label per STFT frame, taken at the frame's centre time
// (l*hop + window_length/2) / sample_rate.
std::vector<std::string> frame_phoneme_sequence(const PhonemeAnnotation& annotation,
                                                const StftConfig& config, int sample_rate,
                                                std::size_t frame_count);

}  // namespace ovr
