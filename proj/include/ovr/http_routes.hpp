#pragma once

#include "ovr/error.hpp"

namespace httplib {
class Server;
}

namespace ovr {

class ExperimentService;

// HTTP status used for a library error code (404 not found, 409 conflict
// or frozen, 422 rejected submission, 400 bad input, 500 otherwise).
int http_status(Errc code) noexcept;

// Registers the experiment API on server. Errors are JSON objects
// {"code", "message", "details"}.
//   GET  /health
//   GET  /experiments, /experiments/{id}
//   GET  /experiments/{id}/export[?partial=true]           text/csv
//   GET  /experiments/{id}/export/metadata[?partial=true]  JSON
//   POST /sessions {participant_id, experiment_id}
//   GET  /sessions/{id}, /sessions/{id}/screens/{n}, /sessions/{id}/training
//   POST /sessions/{id}/screens/{n}/ratings {"ratings": {token: 0..100}}
//   GET  /stimuli/{token}?session={id}                     audio/wav, ranges
void register_routes(httplib::Server& server, ExperimentService& service);

}  // namespace ovr
