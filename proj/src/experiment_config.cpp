#include "ovr/experiment_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "ovr/error.hpp"
#include "ovr/wav.hpp"

namespace ovr {

namespace {

using nlohmann::json;

ScreenSpec parse_screen(const json& j, const std::filesystem::path& base) {
  ScreenSpec s;
  s.screen_id = j.at("screen_id").get<std::string>();
  s.reference_stimulus = base / j.at("reference_stimulus").get<std::string>();
  s.hidden_reference_included = j.value("hidden_reference_included", true);
  for (const auto& st : j.at("stimuli"))
    s.stimuli.push_back({st.at("condition_label").get<std::string>(), base / st.at("path").get<std::string>()});
  if (j.contains("metadata")) {
    for (const auto& [k, v] : j["metadata"].items()) s.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return s;
}

json screen_json(const ScreenSpec& s) {
  json stimuli = json::array();
  for (const auto& st : s.stimuli) stimuli.push_back({{"condition_label", st.condition_label}, {"path", st.path.string()}});
  return {{"screen_id", s.screen_id},
          {"reference_stimulus", s.reference_stimulus.string()},
          {"hidden_reference_included", s.hidden_reference_included},
          {"metadata", s.metadata},
          {"stimuli", stimuli}};
}

bool same_audio(const Waveform& a, const Waveform& b) {
  return a.sample_rate == b.sample_rate && a.channels == b.channels;
}

void validate_screen(ScreenSpec& s) {
  const std::string where = "screen '" + s.screen_id + "': ";
  require(!s.screen_id.empty(), Errc::schema, "screen with empty screen_id");
  require(!s.stimuli.empty(), Errc::schema, where + "no stimuli");
  auto load = [&](const std::filesystem::path& p) {
    try {
      return load_wav(p);
    } catch (const Error& e) {
      fail(Errc::schema, where + "unreadable stimulus " + p.string() + ": " + e.what());
    }
  };
  const Waveform reference = load(s.reference_stimulus);
  std::set<std::string> labels;
  std::vector<std::size_t> matches;
  for (std::size_t i = 0; i < s.stimuli.size(); ++i) {
    const auto& st = s.stimuli[i];
    require(!st.condition_label.empty(), Errc::schema, where + "empty condition_label");
    require(labels.insert(st.condition_label).second, Errc::schema,
            where + "duplicate condition_label '" + st.condition_label + "'");
    const Waveform w = load(st.path);
    require(w.sample_rate == reference.sample_rate, Errc::schema,
            where + "sample rate of " + st.path.string() + " differs from the reference");
    if (same_audio(w, reference)) matches.push_back(i);
  }
  s.hidden_reference_index.reset();
  if (s.hidden_reference_included) {
    require(matches.size() == 1, Errc::schema,
            where + "expected exactly one stimulus identical to the reference, found " +
                std::to_string(matches.size()));
    s.hidden_reference_index = matches.front();
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    c.experiment_id = doc.at("experiment_id").get<std::string>();
    c.seed = doc.value("seed", std::uint64_t{0});
    const auto policy = doc.value("seed_policy", std::string("per_participant"));
    require(policy == "per_participant" || policy == "per-participant", Errc::schema,
            "unsupported seed_policy '" + policy + "'");
    c.randomize_screen_order = doc.value("randomize_screen_order", true);
    c.randomize_condition_order = doc.value("randomize_condition_order", true);
    if (doc.contains("ui_options")) {
      const auto& ui = doc["ui_options"];
      c.ui_options.require_full_scale_use = ui.value("require_full_scale_use", false);
      c.ui_options.loop_playback = ui.value("loop_playback", true);
    }
    for (const auto& s : doc.at("screens")) c.screens.push_back(parse_screen(s, base_dir));
    if (doc.contains("training_screen") && !doc["training_screen"].is_null()) {
      const auto& t = doc["training_screen"];
      if (t.is_string()) {
        // Replays one of the experiment screens.
        const auto id = t.get<std::string>();
        auto it = std::find_if(c.screens.begin(), c.screens.end(), [&](const auto& s) { return s.screen_id == id; });
        require(it != c.screens.end(), Errc::schema, "training_screen refers to unknown screen '" + id + "'");
        c.training_screen = *it;
      } else {
        c.training_screen = parse_screen(t, base_dir);
      }
    }
  } catch (const json::exception& e) {
    fail(Errc::schema, std::string("experiment config: ") + e.what());
  }
  require(!c.experiment_id.empty(), Errc::schema, "experiment config: empty experiment_id");
  require(!c.screens.empty(), Errc::schema, "experiment config: no screens");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open experiment config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(Errc::schema, path.string() + ": " + e.what());
  }
  auto config = from_json(doc, path.parent_path());
  config.validate();
  return config;
}

void ExperimentConfig::validate() {
  std::set<std::string> ids;
  for (auto& s : screens) {
    require(ids.insert(s.screen_id).second, Errc::schema, "duplicate screen_id '" + s.screen_id + "'");
    validate_screen(s);
  }
  if (training_screen) validate_screen(*training_screen);
}

json ExperimentConfig::to_json() const {
  json screens_json = json::array();
  for (const auto& s : screens) screens_json.push_back(screen_json(s));
  json out = {{"experiment_id", experiment_id},
              {"seed", seed},
              {"seed_policy", "per_participant"},
              {"randomize_screen_order", randomize_screen_order},
              {"randomize_condition_order", randomize_condition_order},
              {"ui_options",
               {{"require_full_scale_use", ui_options.require_full_scale_use},
                {"loop_playback", ui_options.loop_playback}}},
              {"screens", screens_json}};
  if (training_screen) out["training_screen"] = screen_json(*training_screen);
  return out;
}

const ScreenSpec& ExperimentConfig::screen(std::string_view screen_id) const { return screens[screen_index(screen_id)]; }

std::size_t ExperimentConfig::screen_index(std::string_view screen_id) const {
  for (std::size_t i = 0; i < screens.size(); ++i)
    if (screens[i].screen_id == screen_id) return i;
  fail(Errc::not_found, "unknown screen '" + std::string(screen_id) + "'");
}

}  // namespace ovr
