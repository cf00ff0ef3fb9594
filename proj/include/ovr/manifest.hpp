#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ovr {

enum class AugmentationMode { generic, personalized };
enum class Split { train, val, test };

std::string_view mode_name(AugmentationMode m) noexcept;
AugmentationMode parse_mode(std::string_view s);
std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view s);

struct NoiseSpec {
  std::vector<std::string> noise_paths;
  std::vector<int> directions;
  double snr_db = 0.0;

  bool operator==(const NoiseSpec&) const = default;
};

// One clean utterance available for augmentation.
struct CorpusEntry {
  std::string utterance_path;
  std::string annotation_path;
  std::optional<Split> split;
  std::optional<NoiseSpec> noise;
};

struct ManifestRow {
  std::string utterance_path;
  std::string annotation_path;
  std::string transfer_model_id;
  Split split = Split::train;
  std::optional<NoiseSpec> noise;

  bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
  AugmentationMode mode = AugmentationMode::generic;
  std::uint64_t seed = 0;
  std::vector<ManifestRow> rows;

  // Personalized manifests must reference exactly one transfer model.
  void validate() const;
  std::vector<std::string> model_ids() const;

  // JSON lines, one row per utterance; every row repeats mode and seed.
  std::string to_jsonl() const;
  static DatasetManifest from_jsonl(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

  bool operator==(const DatasetManifest&) const = default;
};

struct SplitSpec {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// Generic mode draws one model per utterance uniformly from model_ids;
// personalized mode requires exactly one model. With a SplitSpec the corpus
// is shuffled and partitioned into train/val/test of the given sizes
// (Errc::invalid_argument if they exceed the corpus); otherwise entry splits
// are kept (default train). Deterministic in seed.
DatasetManifest build_manifest(std::span<const CorpusEntry> corpus, std::span<const std::string> model_ids,
                               AugmentationMode mode, const std::optional<SplitSpec>& split_spec,
                               std::uint64_t seed);

// Corpus index: JSON lines with utterance_path, annotation_path and
// optional split / noise_spec.
std::vector<CorpusEntry> load_corpus_index(const std::filesystem::path& path);

// A recorded (outer, in-ear) own-voice utterance of a known talker.
struct RecordedUtterance {
  std::string talker_id;
  std::string outer_path;
  std::string inear_path;
  std::string annotation_path;

  bool operator==(const RecordedUtterance&) const = default;
};

// Generic fine-tuning data: count utterances drawn uniformly without
// replacement from the pooled training portions of all talkers.
std::vector<RecordedUtterance> select_generic_finetune_subset(std::span<const RecordedUtterance> pool,
                                                              std::size_t count, std::uint64_t seed);

// Personalized fine-tuning data: every training utterance of the target.
std::vector<RecordedUtterance> select_personalized_finetune_subset(std::span<const RecordedUtterance> pool,
                                                                   std::string_view target_talker);

}  // namespace ovr
