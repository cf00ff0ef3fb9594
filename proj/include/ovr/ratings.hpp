#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ovr {

inline constexpr std::string_view kHiddenReferenceLabel = "hidden_reference";

struct RatingRecord {
  std::string participant;
  std::string screen_id;
  std::string condition;
  double rating = 0.0;

  bool operator==(const RatingRecord&) const = default;
};

// CSV "participant,screen_id,condition,rating". Errors name the line.
std::vector<RatingRecord> parse_ratings_csv(std::string_view text);
std::vector<RatingRecord> load_ratings_csv(const std::filesystem::path& path);
std::string ratings_to_csv(const std::vector<RatingRecord>& records);

// screen_id -> factor -> level, e.g. {"talker": "T1", "sentence": "2", "noise": "cafe"}.
using ScreenMetadata = std::map<std::string, std::map<std::string, std::string>>;
// JSON: either {"screens": {id: {...}}} or {id: {...}}; non-string levels are stringified.
ScreenMetadata parse_screen_metadata(std::string_view json_text);
ScreenMetadata load_screen_metadata(const std::filesystem::path& path);

enum class Statistic { mean, median };
Statistic parse_statistic(std::string_view name);

struct AggregateSpec {
  // Only screens whose metadata matches every factor=level pair are used.
  std::map<std::string, std::string> where;
  Statistic statistic = Statistic::mean;
  bool exclude_hidden_reference = true;
};

struct RatingMatrix {
  std::vector<std::string> subjects;
  std::vector<std::string> conditions;
  std::vector<std::vector<double>> values;  // subjects x conditions
  // Aggregation trail: the screens folded into each cell, and the factors
  // whose levels vary among them (what was averaged over).
  std::vector<std::string> screens;
  std::map<std::string, std::set<std::string>> averaged_over;
  Statistic statistic = Statistic::mean;

  double at(std::size_t subject, std::size_t condition) const { return values.at(subject).at(condition); }
  std::vector<double> column(std::size_t condition) const;
};

// Collapses every (participant, condition) over the selected screens. The
// design must be complete: each subject rates each condition on each
// selected screen exactly once; otherwise Errc::schema lists the missing
// cells as participant/screen/condition.
RatingMatrix aggregate_ratings(const std::vector<RatingRecord>& records, const ScreenMetadata& metadata,
                               const AggregateSpec& spec = {});

// stimulus_id ("screen_id/condition") -> median over participants.
std::map<std::string, double> stimulus_medians(const std::vector<RatingRecord>& records);
std::string stimulus_id(std::string_view screen_id, std::string_view condition);

enum class ScreeningRule { reference_min_90_all_screens, reference_top_ranked };
std::string_view screening_rule_name(ScreeningRule rule);
ScreeningRule parse_screening_rule(std::string_view name);

struct ScreeningResult {
  ScreeningRule rule = ScreeningRule::reference_min_90_all_screens;
  std::vector<std::string> kept;
  std::map<std::string, std::string> excluded;  // participant -> reason
};

// Threshold rule: hidden reference rated below 90 on any screen. Rank rule:
// the threshold rule, plus hidden reference not strictly the highest rating
// on any screen. A screen without a hidden-reference rating does not count
// against a participant.
ScreeningResult screen_participants(const std::vector<RatingRecord>& records,
                                    ScreeningRule rule = ScreeningRule::reference_min_90_all_screens);

std::vector<RatingRecord> filter_participants(const std::vector<RatingRecord>& records,
                                              const std::vector<std::string>& keep);

}  // namespace ovr
