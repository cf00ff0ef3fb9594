#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovr/error.hpp"
#include "ovr/experiment_config.hpp"
#include "ovr/ratings.hpp"
#include "ovr/session_store.hpp"

namespace ovr {

inline constexpr int kSessionSchemaVersion = 1;

// Service failure with a stable machine-readable code for API clients
// ("unknown_experiment", "missing_tokens", ...) and optional details.
class ApiError : public Error {
 public:
  ApiError(Errc code, std::string api_code, const std::string& message, nlohmann::json details = nullptr)
      : Error(code, message), api_code_(std::move(api_code)), details_(std::move(details)) {}

  const std::string& api_code() const noexcept { return api_code_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  std::string api_code_;
  nlohmann::json details_;
};

enum class SessionStatus { in_progress, complete };
std::string_view session_status_name(SessionStatus status);

struct Submission {
  std::map<std::string, int> ratings;  // condition label -> rating
  std::int64_t timestamp_ms = 0;
};

// Presentation order derived from a recorded seed.
struct PresentationOrder {
  std::vector<std::size_t> screens;                  // config screen indices in presentation order
  std::vector<std::vector<std::size_t>> conditions;  // per config screen: stimulus indices in presentation order
};
PresentationOrder derive_presentation_order(const ExperimentConfig& config, std::uint64_t session_seed);
std::uint64_t session_seed(const ExperimentConfig& config, std::string_view participant_id);

struct TokenTarget {
  std::optional<std::size_t> screen;     // config screen index; nullopt for the training screen
  std::optional<std::size_t> stimulus;   // stimulus index; nullopt for the labeled reference
};

struct Session {
  std::string session_id;
  std::string participant_id;
  std::string experiment_id;
  std::uint64_t seed = 0;
  std::int64_t created_ms = 0;
  PresentationOrder order;
  std::map<std::string, Submission> submissions;  // by screen_id
  SessionStatus status = SessionStatus::in_progress;
  // Opaque tokens; the label mapping never leaves the server.
  std::vector<std::vector<std::string>> stimulus_tokens;  // per config screen, per stimulus index
  std::vector<std::string> reference_tokens;              // per config screen
  std::vector<std::string> training_tokens;               // per training stimulus, then reference last
  std::map<std::string, TokenTarget> tokens;
};

struct CreatedSession {
  std::string session_id;
  std::vector<std::string> screen_order;  // screen ids in presentation order
  std::uint64_t seed = 0;
};

struct SubmitResult {
  std::string screen_id;
  bool replaced = false;
  SessionStatus status = SessionStatus::in_progress;
};

struct StimulusRef {
  std::filesystem::path path;
};

// Sessions live in <data_dir>/<experiment_id>/<session_id>.jsonl; existing
// logs are replayed on construction. Thread-safe; writes to one session are
// serialized.
class ExperimentService {
 public:
  ExperimentService(std::vector<ExperimentConfig> experiments, std::filesystem::path data_dir);
  ~ExperimentService();

  std::vector<std::string> experiment_ids() const;
  nlohmann::json experiment_info(const std::string& experiment_id) const;

  CreatedSession create_session(const std::string& participant_id, const std::string& experiment_id);
  nlohmann::json session_info(const std::string& session_id) const;
  nlohmann::json screen_descriptor(const std::string& session_id, std::size_t n) const;
  nlohmann::json training_descriptor(const std::string& session_id) const;
  StimulusRef resolve_stimulus(const std::string& session_id, const std::string& token) const;
  // body: {"ratings": {token: int}} or {token: int}.
  SubmitResult submit_ratings(const std::string& session_id, std::size_t n, const nlohmann::json& body);

  // Latest complete session per participant (plus in-progress ones with
  // partial = true); rows sorted by participant, then config screen and
  // stimulus order.
  std::vector<RatingRecord> export_records(const std::string& experiment_id, bool partial = false) const;
  std::string export_csv(const std::string& experiment_id, bool partial = false) const;
  nlohmann::json export_metadata(const std::string& experiment_id, bool partial = false) const;

  // Warnings gathered while replaying stored sessions.
  const std::vector<std::string>& replay_warnings() const noexcept { return replay_warnings_; }

 private:
  struct Entry {
    mutable std::mutex mutex;
    Session session;
    std::unique_ptr<RecordLog> log;
  };

  const ExperimentConfig& experiment(const std::string& experiment_id) const;
  std::shared_ptr<Entry> entry(const std::string& session_id) const;
  std::filesystem::path session_path(const std::string& experiment_id, const std::string& session_id) const;
  void replay_experiment(const ExperimentConfig& config);
  std::vector<std::shared_ptr<Entry>> sessions_for(const std::string& experiment_id) const;
  std::vector<std::shared_ptr<Entry>> export_sessions(const std::string& experiment_id, bool partial) const;

  std::map<std::string, ExperimentConfig> experiments_;
  std::filesystem::path data_dir_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex create_mutex_;
  std::vector<std::string> replay_warnings_;
};

}  // namespace ovr
