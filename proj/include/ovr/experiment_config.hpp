#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ovr {

struct StimulusSpec {
  std::string condition_label;
  std::filesystem::path path;
};

struct ScreenSpec {
  std::string screen_id;
  std::filesystem::path reference_stimulus;
  std::vector<StimulusSpec> stimuli;
  bool hidden_reference_included = true;
  // Free-form factors (talker, sentence, noise, ...) passed through to the
  // export metadata for the analysis.
  std::map<std::string, std::string> metadata;
  // Set by validate(): index into stimuli of the hidden reference, if any.
  std::optional<std::size_t> hidden_reference_index;
};

struct UiOptions {
  bool require_full_scale_use = false;
  bool loop_playback = true;
};

struct ExperimentConfig {
  std::string experiment_id;
  std::vector<ScreenSpec> screens;
  std::optional<ScreenSpec> training_screen;
  UiOptions ui_options;
  std::uint64_t seed = 0;
  bool randomize_screen_order = true;
  bool randomize_condition_order = true;

  // Relative stimulus paths resolve against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);

  // Checks every stimulus and reference decodes as WAV with one sample rate
  // per screen, labels are unique, and a screen with a hidden reference has
  // exactly one stimulus whose audio equals the reference. Fills
  // hidden_reference_index. Throws Errc::schema naming the screen.
  void validate();
  nlohmann::json to_json() const;

  const ScreenSpec& screen(std::string_view screen_id) const;
  std::size_t screen_index(std::string_view screen_id) const;
};

}  // namespace ovr
