#include "ovr/experiment_service.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "ovr/random.hpp"

namespace ovr {

namespace {

using nlohmann::json;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t random64() {
  static std::mutex mutex;
  static std::random_device device;
  std::lock_guard lock(mutex);
  return (static_cast<std::uint64_t>(device()) << 32) ^ device();
}

std::string make_token(std::uint64_t secret, const std::string& tag) {
  return hex64(derive_seed(secret, tag)) + hex64(derive_seed(secret ^ 0x9e3779b97f4a7c15ULL, tag));
}

void assign_tokens(Session& s, const ExperimentConfig& config, std::uint64_t secret) {
  s.stimulus_tokens.assign(config.screens.size(), {});
  s.reference_tokens.assign(config.screens.size(), {});
  s.tokens.clear();
  for (std::size_t i = 0; i < config.screens.size(); ++i) {
    for (std::size_t j = 0; j < config.screens[i].stimuli.size(); ++j) {
      auto token = make_token(secret, "s" + std::to_string(i) + "/" + std::to_string(j));
      s.tokens[token] = {i, j};
      s.stimulus_tokens[i].push_back(std::move(token));
    }
    s.reference_tokens[i] = make_token(secret, "s" + std::to_string(i) + "/ref");
    s.tokens[s.reference_tokens[i]] = {i, std::nullopt};
  }
  s.training_tokens.clear();
  if (config.training_screen) {
    for (std::size_t j = 0; j <= config.training_screen->stimuli.size(); ++j) {
      const bool ref = j == config.training_screen->stimuli.size();
      auto token = make_token(secret, "t/" + (ref ? std::string("ref") : std::to_string(j)));
      s.tokens[token] = {std::nullopt, ref ? std::nullopt : std::optional<std::size_t>(j)};
      s.training_tokens.push_back(std::move(token));
    }
  }
}

SessionStatus derive_status(const Session& s, const ExperimentConfig& config) {
  for (const auto& screen : config.screens)
    if (!s.submissions.count(screen.screen_id)) return SessionStatus::in_progress;
  return SessionStatus::complete;
}

std::string stimulus_url(const std::string& session_id, const std::string& token) {
  return "/stimuli/" + token + "?session=" + session_id;
}

std::string export_label(const ScreenSpec& screen, std::size_t stimulus) {
  if (screen.hidden_reference_index && *screen.hidden_reference_index == stimulus)
    return std::string(kHiddenReferenceLabel);
  return screen.stimuli[stimulus].condition_label;
}

json ui_json(const UiOptions& ui) {
  return {{"require_full_scale_use", ui.require_full_scale_use}, {"loop_playback", ui.loop_playback}};
}

}  // namespace

std::string_view session_status_name(SessionStatus status) {
  return status == SessionStatus::complete ? "complete" : "in_progress";
}

std::uint64_t session_seed(const ExperimentConfig& config, std::string_view participant_id) {
  return derive_seed(config.seed, config.experiment_id + "\x1f" + std::string(participant_id));
}

PresentationOrder derive_presentation_order(const ExperimentConfig& config, std::uint64_t seed) {
  PresentationOrder order;
  order.screens.resize(config.screens.size());
  std::iota(order.screens.begin(), order.screens.end(), 0);
  if (config.randomize_screen_order) {
    Rng rng(derive_seed(seed, "screens"));
    rng.shuffle(order.screens);
  }
  for (const auto& screen : config.screens) {
    std::vector<std::size_t> conds(screen.stimuli.size());
    std::iota(conds.begin(), conds.end(), 0);
    if (config.randomize_condition_order) {
      Rng rng(derive_seed(seed, "conditions/" + screen.screen_id));
      rng.shuffle(conds);
    }
    order.conditions.push_back(std::move(conds));
  }
  return order;
}

ExperimentService::ExperimentService(std::vector<ExperimentConfig> experiments, std::filesystem::path data_dir)
    : data_dir_(std::move(data_dir)) {
  for (auto& e : experiments) {
    const auto id = e.experiment_id;
    require(experiments_.emplace(id, std::move(e)).second, Errc::schema, "duplicate experiment_id '" + id + "'");
  }
  std::filesystem::create_directories(data_dir_);
  for (const auto& [id, config] : experiments_) replay_experiment(config);
}

ExperimentService::~ExperimentService() = default;

std::filesystem::path ExperimentService::session_path(const std::string& experiment_id,
                                                      const std::string& session_id) const {
  return data_dir_ / experiment_id / (session_id + ".jsonl");
}

void ExperimentService::replay_experiment(const ExperimentConfig& config) {
  const auto dir = data_dir_ / config.experiment_id;
  if (!std::filesystem::is_directory(dir)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& f : std::filesystem::directory_iterator(dir))
    if (f.path().extension() == ".jsonl") files.push_back(f.path());
  std::sort(files.begin(), files.end());

  for (const auto& file : files) {
    const std::string name = file.filename().string();
    ReplayResult replay;
    try {
      replay = replay_records(file);
    } catch (const Error& e) {
      replay_warnings_.push_back(name + ": " + e.what() + "; session skipped");
      continue;
    }
    if (replay.records.empty() || replay.records.front().value("type", "") != "session") {
      replay_warnings_.push_back(name + ": no session header; skipped");
      continue;
    }
    const auto& h = replay.records.front();
    auto e = std::make_shared<Entry>();
    Session& s = e->session;
    try {
      s.session_id = h.at("session_id").get<std::string>();
      s.participant_id = h.at("participant_id").get<std::string>();
      s.experiment_id = h.at("experiment_id").get<std::string>();
      s.seed = h.at("seed").get<std::uint64_t>();
      s.created_ms = h.at("created_ms").get<std::int64_t>();
      s.order = derive_presentation_order(config, s.seed);
      std::vector<std::string> expected;
      for (auto i : s.order.screens) expected.push_back(config.screens[i].screen_id);
      if (s.experiment_id != config.experiment_id || h.at("screen_order").get<std::vector<std::string>>() != expected) {
        replay_warnings_.push_back(name + ": recorded presentation order does not match the current config; skipped");
        continue;
      }
      assign_tokens(s, config, h.at("token_secret").get<std::uint64_t>());
      for (std::size_t r = 1; r < replay.records.size(); ++r) {
        const auto& rec = replay.records[r];
        if (rec.value("type", "") != "submission") continue;
        const auto screen_id = rec.at("screen_id").get<std::string>();
        Submission sub;
        sub.ratings = rec.at("ratings").get<std::map<std::string, int>>();
        sub.timestamp_ms = rec.at("timestamp_ms").get<std::int64_t>();
        s.submissions[screen_id] = std::move(sub);
      }
    } catch (const std::exception& ex) {
      replay_warnings_.push_back(name + ": malformed session record (" + ex.what() + "); skipped");
      continue;
    }
    s.status = derive_status(s, config);
    if (replay.torn_tail) replay_warnings_.push_back(name + ": discarded a torn trailing record");
    e->log = std::make_unique<RecordLog>(file);
    sessions_[s.session_id] = std::move(e);
  }
}

const ExperimentConfig& ExperimentService::experiment(const std::string& experiment_id) const {
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end())
    throw ApiError(Errc::not_found, "unknown_experiment", "unknown experiment '" + experiment_id + "'");
  return it->second;
}

std::shared_ptr<ExperimentService::Entry> ExperimentService::entry(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ApiError(Errc::not_found, "unknown_session", "unknown session '" + session_id + "'");
  return it->second;
}

std::vector<std::string> ExperimentService::experiment_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, c] : experiments_) ids.push_back(id);
  return ids;
}

json ExperimentService::experiment_info(const std::string& experiment_id) const {
  const auto& c = experiment(experiment_id);
  return {{"experiment_id", c.experiment_id},
          {"screen_count", c.screens.size()},
          {"training_available", c.training_screen.has_value()},
          {"ui_options", ui_json(c.ui_options)}};
}

CreatedSession ExperimentService::create_session(const std::string& participant_id, const std::string& experiment_id) {
  const auto& config = experiment(experiment_id);
  if (participant_id.empty() || participant_id.size() > 128 ||
      participant_id.find_first_of(",\n\r\"") != std::string::npos)
    throw ApiError(Errc::invalid_argument, "invalid_participant",
                   "participant_id must be 1-128 characters without commas, quotes or newlines");

  std::lock_guard create_lock(create_mutex_);
  for (const auto& e : sessions_for(experiment_id)) {
    std::lock_guard lock(e->mutex);
    if (e->session.participant_id == participant_id && e->session.status == SessionStatus::in_progress)
      throw ApiError(Errc::conflict, "duplicate_session",
                     "participant '" + participant_id + "' already has an active session",
                     {{"session_id", e->session.session_id}});
  }

  auto e = std::make_shared<Entry>();
  Session& s = e->session;
  std::string id;
  do {
    id = hex64(random64()) + hex64(random64());
  } while (sessions_.count(id));
  s.session_id = id;
  s.participant_id = participant_id;
  s.experiment_id = experiment_id;
  s.seed = session_seed(config, participant_id);
  s.created_ms = now_ms();
  s.order = derive_presentation_order(config, s.seed);
  const std::uint64_t secret = random64();
  assign_tokens(s, config, secret);

  CreatedSession out{s.session_id, {}, s.seed};
  for (auto i : s.order.screens) out.screen_order.push_back(config.screens[i].screen_id);

  std::filesystem::create_directories(data_dir_ / experiment_id);
  e->log = std::make_unique<RecordLog>(session_path(experiment_id, s.session_id));
  e->log->append({{"type", "session"},
                  {"schema_version", kSessionSchemaVersion},
                  {"session_id", s.session_id},
                  {"participant_id", s.participant_id},
                  {"experiment_id", s.experiment_id},
                  {"seed", s.seed},
                  {"token_secret", secret},
                  {"created_ms", s.created_ms},
                  {"screen_order", out.screen_order}});
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[s.session_id] = std::move(e);
  }
  return out;
}

json ExperimentService::session_info(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  const auto& s = e->session;
  const auto& config = experiment(s.experiment_id);
  std::vector<std::string> order;
  std::vector<std::size_t> submitted;
  for (std::size_t n = 0; n < s.order.screens.size(); ++n) {
    const auto& id = config.screens[s.order.screens[n]].screen_id;
    order.push_back(id);
    if (s.submissions.count(id)) submitted.push_back(n);
  }
  return {{"session_id", s.session_id},
          {"participant_id", s.participant_id},
          {"experiment_id", s.experiment_id},
          {"status", session_status_name(s.status)},
          {"seed", s.seed},
          {"screen_count", order.size()},
          {"screen_order", order},
          {"submitted_screens", submitted}};
}

json ExperimentService::screen_descriptor(const std::string& session_id, std::size_t n) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  const auto& s = e->session;
  const auto& config = experiment(s.experiment_id);
  if (n >= s.order.screens.size())
    throw ApiError(Errc::not_found, "screen_out_of_range",
                   "screen " + std::to_string(n) + " out of range (0.." + std::to_string(s.order.screens.size() - 1) +
                       ")");
  const std::size_t idx = s.order.screens[n];
  const auto& screen = config.screens[idx];

  json stimuli = json::array();
  for (auto j : s.order.conditions[idx]) {
    const auto& token = s.stimulus_tokens[idx][j];
    stimuli.push_back({{"token", token}, {"url", stimulus_url(s.session_id, token)}});
  }
  const auto& ref = s.reference_tokens[idx];
  json out = {{"session_id", s.session_id},
              {"screen_index", n},
              {"screen_count", s.order.screens.size()},
              {"screen_id", screen.screen_id},
              {"reference", {{"token", ref}, {"url", stimulus_url(s.session_id, ref)}}},
              {"stimuli", stimuli},
              {"submitted", false},
              {"read_only", s.status == SessionStatus::complete},
              {"ui_options", ui_json(config.ui_options)}};
  auto sub = s.submissions.find(screen.screen_id);
  if (sub != s.submissions.end()) {
    json ratings = json::object();
    for (std::size_t j = 0; j < screen.stimuli.size(); ++j) {
      auto r = sub->second.ratings.find(screen.stimuli[j].condition_label);
      if (r != sub->second.ratings.end()) ratings[s.stimulus_tokens[idx][j]] = r->second;
    }
    out["submitted"] = true;
    out["ratings"] = ratings;
  }
  return out;
}

json ExperimentService::training_descriptor(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  const auto& s = e->session;
  const auto& config = experiment(s.experiment_id);
  if (!config.training_screen)
    throw ApiError(Errc::not_found, "no_training_screen", "experiment has no training screen");
  json stimuli = json::array();
  for (std::size_t j = 0; j + 1 < s.training_tokens.size(); ++j)
    stimuli.push_back({{"token", s.training_tokens[j]}, {"url", stimulus_url(s.session_id, s.training_tokens[j])}});
  const auto& ref = s.training_tokens.back();
  return {{"session_id", s.session_id},
          {"training", true},
          {"reference", {{"token", ref}, {"url", stimulus_url(s.session_id, ref)}}},
          {"stimuli", stimuli},
          {"ui_options", ui_json(config.ui_options)}};
}

StimulusRef ExperimentService::resolve_stimulus(const std::string& session_id, const std::string& token) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  const auto& s = e->session;
  auto it = s.tokens.find(token);
  if (it == s.tokens.end())
    throw ApiError(Errc::not_found, "invalid_token", "token is not valid for this session");
  const auto& config = experiment(s.experiment_id);
  const ScreenSpec& screen = it->second.screen ? config.screens[*it->second.screen] : *config.training_screen;
  return {it->second.stimulus ? screen.stimuli[*it->second.stimulus].path : screen.reference_stimulus};
}

SubmitResult ExperimentService::submit_ratings(const std::string& session_id, std::size_t n, const json& body) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  Session& s = e->session;
  const auto& config = experiment(s.experiment_id);
  if (s.status == SessionStatus::complete)
    throw ApiError(Errc::frozen, "session_frozen", "session is complete; ratings are frozen");
  if (n >= s.order.screens.size())
    throw ApiError(Errc::not_found, "screen_out_of_range", "screen " + std::to_string(n) + " out of range");
  const std::size_t idx = s.order.screens[n];
  const auto& screen = config.screens[idx];

  const json& ratings = body.is_object() && body.contains("ratings") ? body["ratings"] : body;
  if (!ratings.is_object())
    throw ApiError(Errc::rejected, "malformed_ratings", "ratings must be an object mapping token to rating");

  std::map<std::string, std::size_t> screen_tokens;
  for (std::size_t j = 0; j < screen.stimuli.size(); ++j) screen_tokens[s.stimulus_tokens[idx][j]] = j;

  std::vector<std::string> unknown, invalid;
  Submission sub;
  for (const auto& [token, value] : ratings.items()) {
    auto t = screen_tokens.find(token);
    if (t == screen_tokens.end()) {
      unknown.push_back(token);
      continue;
    }
    if (!value.is_number_integer() || value.get<long long>() < 0 || value.get<long long>() > 100) {
      invalid.push_back(token);
      continue;
    }
    sub.ratings[screen.stimuli[t->second].condition_label] = value.get<int>();
  }
  if (!unknown.empty())
    throw ApiError(Errc::rejected, "unknown_tokens", "ratings contain tokens not on this screen",
                   {{"tokens", unknown}});
  if (!invalid.empty())
    throw ApiError(Errc::rejected, "invalid_rating", "ratings must be integers in 0..100", {{"tokens", invalid}});
  std::vector<std::string> missing;
  for (auto j : s.order.conditions[idx])
    if (!ratings.contains(s.stimulus_tokens[idx][j])) missing.push_back(s.stimulus_tokens[idx][j]);
  if (!missing.empty())
    throw ApiError(Errc::rejected, "missing_tokens",
                   "missing ratings for " + std::to_string(missing.size()) + " stimulus token(s)",
                   {{"missing", missing}});
  if (config.ui_options.require_full_scale_use &&
      std::none_of(sub.ratings.begin(), sub.ratings.end(), [](const auto& kv) { return kv.second == 100; }))
    throw ApiError(Errc::rejected, "full_scale_required", "at least one stimulus must be rated 100");

  sub.timestamp_ms = now_ms();
  e->log->append({{"type", "submission"},
                  {"screen_id", screen.screen_id},
                  {"ratings", sub.ratings},
                  {"timestamp_ms", sub.timestamp_ms}});
  SubmitResult out;
  out.screen_id = screen.screen_id;
  out.replaced = s.submissions.count(screen.screen_id) > 0;
  s.submissions[screen.screen_id] = std::move(sub);
  s.status = derive_status(s, config);
  out.status = s.status;
  return out;
}

std::vector<std::shared_ptr<ExperimentService::Entry>> ExperimentService::sessions_for(
    const std::string& experiment_id) const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::shared_ptr<Entry>> out;
  for (const auto& [id, e] : sessions_)
    if (e->session.experiment_id == experiment_id) out.push_back(e);
  return out;
}

std::vector<std::shared_ptr<ExperimentService::Entry>> ExperimentService::export_sessions(
    const std::string& experiment_id, bool partial) const {
  std::map<std::string, std::pair<std::shared_ptr<Entry>, std::pair<std::int64_t, std::string>>> latest;
  for (const auto& e : sessions_for(experiment_id)) {
    std::lock_guard lock(e->mutex);
    const auto& s = e->session;
    if (!partial && s.status != SessionStatus::complete) continue;
    const auto key = std::pair{s.created_ms, s.session_id};
    auto it = latest.find(s.participant_id);
    if (it == latest.end() || it->second.second < key) latest[s.participant_id] = {e, key};
  }
  std::vector<std::shared_ptr<Entry>> out;
  for (auto& [participant, v] : latest) out.push_back(v.first);
  return out;
}

std::vector<RatingRecord> ExperimentService::export_records(const std::string& experiment_id, bool partial) const {
  const auto& config = experiment(experiment_id);
  std::vector<RatingRecord> rows;
  for (const auto& e : export_sessions(experiment_id, partial)) {
    std::lock_guard lock(e->mutex);
    const auto& s = e->session;
    for (const auto& screen : config.screens) {
      auto sub = s.submissions.find(screen.screen_id);
      if (sub == s.submissions.end()) continue;
      for (std::size_t j = 0; j < screen.stimuli.size(); ++j) {
        auto r = sub->second.ratings.find(screen.stimuli[j].condition_label);
        if (r == sub->second.ratings.end()) continue;
        rows.push_back({s.participant_id, screen.screen_id, export_label(screen, j), static_cast<double>(r->second)});
      }
    }
  }
  return rows;
}

std::string ExperimentService::export_csv(const std::string& experiment_id, bool partial) const {
  return ratings_to_csv(export_records(experiment_id, partial));
}

json ExperimentService::export_metadata(const std::string& experiment_id, bool partial) const {
  const auto& config = experiment(experiment_id);
  json screens = json::object();
  for (const auto& screen : config.screens) {
    json entry = screen.metadata;
    if (entry.is_null()) entry = json::object();
    screens[screen.screen_id] = entry;
  }
  json sessions = json::array();
  for (const auto& e : export_sessions(experiment_id, partial)) {
    std::lock_guard lock(e->mutex);
    const auto& s = e->session;
    std::vector<std::string> order;
    json condition_orders = json::object(), submitted = json::object();
    for (auto i : s.order.screens) {
      const auto& screen = config.screens[i];
      order.push_back(screen.screen_id);
      json labels = json::array();
      for (auto j : s.order.conditions[i]) labels.push_back(export_label(screen, j));
      condition_orders[screen.screen_id] = labels;
      auto sub = s.submissions.find(screen.screen_id);
      if (sub != s.submissions.end()) submitted[screen.screen_id] = sub->second.timestamp_ms;
    }
    sessions.push_back({{"session_id", s.session_id},
                        {"participant_id", s.participant_id},
                        {"status", session_status_name(s.status)},
                        {"seed", s.seed},
                        {"created_ms", s.created_ms},
                        {"screen_order", order},
                        {"condition_orders", condition_orders},
                        {"submitted_ms", submitted}});
  }
  return {{"schema_version", kSessionSchemaVersion},
          {"experiment_id", experiment_id},
          {"partial", partial},
          {"hidden_reference_label", kHiddenReferenceLabel},
          {"screens", screens},
          {"sessions", sessions}};
}

}  // namespace ovr
