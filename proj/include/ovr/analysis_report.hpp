#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovr/metric_records.hpp"
#include "ovr/ratings.hpp"
#include "ovr/stats.hpp"

namespace ovr {

inline constexpr int kAnalysisSchemaVersion = 1;

struct AnalysisOptions {
  ScreeningRule rule = ScreeningRule::reference_min_90_all_screens;
  // Screen metadata factor giving one Friedman analysis per level (e.g. per
  // talker). Empty, or absent from the metadata, means a single group.
  std::string group_factor = "talker";
  Statistic statistic = Statistic::mean;
  double alpha = 0.05;
  std::size_t exact_limit = 25;
};

struct PairwiseComparison {
  std::string a;
  std::string b;
  double w_plus = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  bool exact = true;
  bool significant = false;
};

struct GroupAnalysis {
  std::string label;  // "talker=T1" or "all"
  RatingMatrix matrix;
  std::optional<FriedmanResult> friedman;
  std::vector<PairwiseComparison> pairwise;  // lower triangle in condition order
  std::vector<std::string> notes;
};

struct MetricPredictions {
  std::string metric;
  MetricScale scale;
  std::vector<MetricRecord> records;
};

struct MetricAnalysis {
  std::string metric;
  MetricScale scale;
  std::size_t pairs = 0;
  std::optional<double> r;
  std::optional<double> rho;
  std::optional<double> rmse;
  std::optional<double> rmse3;
  std::vector<std::string> clipped;    // stimulus ids clipped before scaling
  std::vector<std::string> unmatched;  // predictions without ratings
  std::vector<std::string> notes;
};

struct AnalysisReport {
  AnalysisOptions options;
  ScreeningResult screening;
  std::vector<GroupAnalysis> groups;
  std::vector<MetricAnalysis> metrics;
  std::vector<std::string> warnings;
};

// Each <metric>.csv in dir becomes one MetricPredictions; the scale comes
// from the registry (Errc::schema for unknown metrics, Errc::io for a
// missing directory).
std::vector<MetricPredictions> load_prediction_dir(const std::filesystem::path& dir, const ScaleRegistry& scales,
                                                   std::vector<std::string>* warnings = nullptr);

// Screening, then per group: aggregation, Friedman, pairwise Wilcoxon with
// Bonferroni over all c(c-1)/2 pairs. Metrics are compared against the
// per-stimulus median of the kept participants (hidden reference excluded).
AnalysisReport run_analysis(const std::vector<RatingRecord>& records, const ScreenMetadata& metadata,
                            const std::vector<MetricPredictions>& predictions, const AnalysisOptions& options = {});

MetricAnalysis analyze_metric(const MetricPredictions& predictions, const std::map<std::string, double>& medians);

nlohmann::json report_to_json(const AnalysisReport& report);
// Lower-triangular table of adjusted p-values, '*' marking significance.
std::string render_pvalue_table(const GroupAnalysis& group, double alpha);
// Metric | r | rho_S | RMSE | RMSE3
std::string render_metric_table(const std::vector<MetricAnalysis>& metrics);
std::string render_report_text(const AnalysisReport& report);

}  // namespace ovr
