#include "ovr/http_routes.hpp"

#include <httplib.h>

#include "ovr/experiment_service.hpp"
#include "ovr/wav.hpp"

namespace ovr {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const json& details = nullptr) {
  json body = {{"code", code}, {"message", message}};
  if (!details.is_null()) body["details"] = details;
  if (status == 422) body["status"] = "rejected";
  send_json(res, status, body);
}

// Runs fn, translating exceptions into JSON error responses.
template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ApiError& e) {
      send_error(res, http_status(e.code()), e.api_code(), e.what(), e.details());
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), std::string(errc_name(e.code())), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "malformed_json", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded()) throw ApiError(Errc::invalid_argument, "malformed_json", "request body is not valid JSON");
  return body;
}

std::size_t screen_number(const std::string& text) {
  if (text.size() > 9) throw ApiError(Errc::not_found, "screen_out_of_range", "screen index out of range");
  return static_cast<std::size_t>(std::stoul(text));
}

bool flag(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return false;
  const auto v = req.get_param_value(name);
  return v == "true" || v == "1" || v == "yes";
}

}  // namespace

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::not_found: return 404;
    case Errc::conflict:
    case Errc::frozen: return 409;
    case Errc::rejected: return 422;
    case Errc::invalid_argument:
    case Errc::schema:
    case Errc::format: return 400;
    default: return 500;
  }
}

void register_routes(httplib::Server& server, ExperimentService& service) {
  server.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, {{"status", "ok"}});
             }));

  server.Get("/experiments", guarded([&service](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, {{"experiments", service.experiment_ids()}});
             }));

  server.Get(R"(/experiments/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.experiment_info(req.matches[1]));
             }));

  server.Get(R"(/experiments/([^/]+)/export)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               res.status = 200;
               res.set_content(service.export_csv(req.matches[1], flag(req, "partial")), "text/csv");
             }));

  server.Get(R"(/experiments/([^/]+)/export/metadata)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.export_metadata(req.matches[1], flag(req, "partial")));
             }));

  server.Post("/sessions", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                if (!body.is_object() || !body.contains("participant_id") || !body.contains("experiment_id") ||
                    !body["participant_id"].is_string() || !body["experiment_id"].is_string())
                  throw ApiError(Errc::invalid_argument, "malformed_request",
                                 "body must be {\"participant_id\": string, \"experiment_id\": string}");
                const auto created = service.create_session(body["participant_id"], body["experiment_id"]);
                send_json(res, 201,
                          {{"session_id", created.session_id},
                           {"screen_order", created.screen_order},
                           {"screen_count", created.screen_order.size()},
                           {"seed", created.seed}});
              }));

  server.Get(R"(/sessions/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.session_info(req.matches[1]));
             }));

  server.Get(R"(/sessions/([^/]+)/screens/(\d+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.screen_descriptor(req.matches[1], screen_number(req.matches[2])));
             }));

  server.Get(R"(/sessions/([^/]+)/training)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.training_descriptor(req.matches[1]));
             }));

  server.Post(R"(/sessions/([^/]+)/screens/(\d+)/ratings)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const auto result =
                    service.submit_ratings(req.matches[1], screen_number(req.matches[2]), parse_body(req));
                send_json(res, 200,
                          {{"status", "accepted"},
                           {"screen_id", result.screen_id},
                           {"replaced", result.replaced},
                           {"session_status", session_status_name(result.status)}});
              }));

  server.Get(R"(/stimuli/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               if (!req.has_param("session"))
                 throw ApiError(Errc::invalid_argument, "missing_session", "query parameter 'session' is required");
               const auto ref = service.resolve_stimulus(req.get_param_value("session"), req.matches[1]);
               const auto bytes = read_file_bytes(ref.path);
               // Status left unset so the server answers ranges with 206.
               res.set_header("Cache-Control", "no-store");
               res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
             }));
}

}  // namespace ovr
