#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ovr {

struct MetricScale {
  double min = 0.0;
  double max = 1.0;  // +inf for open-ended scales
  bool higher_is_better = true;

  bool finite() const noexcept { return max < std::numeric_limits<double>::infinity(); }
  bool contains(double v) const noexcept { return v >= min && v <= max; }
  bool operator==(const MetricScale&) const = default;
};

// Lower-case, spaces/hyphens to underscores: "PEMO-Q PSM" -> "pemo_q_psm".
std::string canonical_metric_name(std::string_view name);

// Name -> scale, preloaded with the metric inventory of the listening
// experiment (PESQ 0.5-4.5, ESTOI/eMoBi-Q/PEMO-Q 0-1, MOS metrics 1-5,
// LEAP 1-13 lower-is-better, SCOREQ distance 0-inf lower-is-better).
class ScaleRegistry {
 public:
  static ScaleRegistry defaults();
  // JSON object name -> {min, max (null or "inf" for open), higher_is_better};
  // entries override or extend the defaults.
  static ScaleRegistry load_json(const std::filesystem::path& path);
  static ScaleRegistry from_json(std::string_view text);

  std::optional<MetricScale> find(std::string_view name) const;
  void set(std::string_view name, MetricScale scale);
  const std::map<std::string, MetricScale>& entries() const noexcept { return scales_; }

 private:
  std::map<std::string, MetricScale> scales_;
};

struct MetricRecord {
  std::string stimulus_id;
  std::string metric_name;
  double value = 0.0;
  MetricScale scale;
  bool out_of_scale = false;
};

struct IngestResult {
  std::vector<MetricRecord> records;
  std::vector<std::string> warnings;
};

// CSV with header "stimulus_id,value". Out-of-scale values are kept and
// flagged; a repeated stimulus_id keeps the last value and adds a warning.
// Parse errors (Errc::schema) name the offending line.
IngestResult parse_predictions(std::string_view csv, std::string_view metric_name, const MetricScale& scale);
IngestResult ingest_predictions(const std::filesystem::path& path, std::string_view metric_name,
                                const MetricScale& scale);

}  // namespace ovr
