#include <doctest.h>

#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ovr/error.hpp"
#include "ovr/experiment_config.hpp"
#include "ovr/experiment_service.hpp"
#include "ovr/http_routes.hpp"
#include "ovr/ratings.hpp"
#include "ovr/session_store.hpp"
#include "ovr/wav.hpp"
#include "support.hpp"

using namespace ovr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string api_code(auto&& fn) {
  try {
    fn();
  } catch (const ApiError& e) {
    return e.api_code();
  } catch (const Error& e) {
    return "error:" + std::string(errc_name(e.code()));
  }
  return "no error";
}

// Ratings body for screen n: every stimulus token gets value(i).
json full_ratings(const json& descriptor, int base = 40) {
  json ratings = json::object();
  int i = 0;
  for (const auto& s : descriptor["stimuli"]) ratings[s["token"].get<std::string>()] = base + i++;
  return {{"ratings", ratings}};
}

void complete_session(ExperimentService& svc, const std::string& sid, std::size_t screens) {
  for (std::size_t n = 0; n < screens; ++n) svc.submit_ratings(sid, n, full_ratings(svc.screen_descriptor(sid, n)));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Server {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit Server(ExperimentService& svc) {
    register_routes(server, svc);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Server() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_SUITE("experiment_config") {
  TEST_CASE("loads, resolves paths and finds the hidden reference") {
    test::TempDir dir;
    const auto fx = test::write_experiment(dir.path(), "exp", 3, 2, 1, true);
    const auto& c = fx.config;
    CHECK(c.experiment_id == "exp");
    REQUIRE(c.screens.size() == 3);
    CHECK(c.screens[0].stimuli.size() == 3);
    CHECK(c.screens[0].hidden_reference_index == 0u);
    CHECK(fs::exists(c.screens[1].stimuli[2].path));
    CHECK(c.screens[2].metadata.at("sentence") == "2");
    REQUIRE(c.training_screen.has_value());
    CHECK_FALSE(c.training_screen->hidden_reference_index.has_value());
    CHECK(c.screen_index("s2") == 1);
    CHECK_THROWS_AS(c.screen("nope"), Error);
    const auto again = ExperimentConfig::from_json(c.to_json(), "/");
    CHECK(again.screens.size() == 3);
  }

  TEST_CASE("validation failures") {
    test::TempDir dir;
    const auto fx = test::write_experiment(dir.path(), "exp", 1, 2);
    auto doc = json::parse(slurp(fx.config_path));

    auto expect_schema = [&](json d) {
      try {
        auto c = ExperimentConfig::from_json(d, dir.path());
        c.validate();
        FAIL("expected error");
      } catch (const Error& e) {
        CHECK((e.code() == Errc::schema || e.code() == Errc::io || e.code() == Errc::format));
      }
    };
    auto no_copy = doc;
    no_copy["screens"][0]["stimuli"].erase(0);
    expect_schema(no_copy);
    auto dup = doc;
    dup["screens"][0]["stimuli"][2]["condition_label"] = "C1";
    expect_schema(dup);
    auto missing = doc;
    missing["screens"][0]["stimuli"][1]["path"] = "audio/none.wav";
    expect_schema(missing);
    auto policy = doc;
    policy["seed_policy"] = "global";
    expect_schema(policy);

    save_wav(Waveform::mono(std::vector<double>(800, 0.1), 8000), dir / "audio/odd.wav");
    auto rates = doc;
    rates["screens"][0]["stimuli"][1]["path"] = "audio/odd.wav";
    expect_schema(rates);

    auto no_hidden = doc;
    no_hidden["screens"][0]["hidden_reference_included"] = false;
    no_hidden["screens"][0]["stimuli"].erase(0);
    auto c = ExperimentConfig::from_json(no_hidden, dir.path());
    CHECK_NOTHROW(c.validate());
    CHECK_FALSE(c.screens[0].hidden_reference_index.has_value());
  }
}

TEST_SUITE("session_store") {
  TEST_CASE("record encoding and checksum") {
    const json data{{"a", 1}, {"b", "x"}};
    const auto line = encode_record(data);
    CHECK(line.back() == '\n');
    json out;
    CHECK(decode_record(line, out));
    CHECK(out == data);
    auto tampered = line;
    tampered[tampered.find("\"x\"") + 1] = 'y';
    CHECK_FALSE(decode_record(tampered, out));
    CHECK_FALSE(decode_record("{\"data\": 1}", out));
  }

  TEST_CASE("torn tail is dropped and truncated on reopen") {
    test::TempDir dir;
    const auto path = dir / "s.jsonl";
    {
      RecordLog log(path);
      log.append({{"n", 1}});
      log.append({{"n", 2}});
    }
    const auto full = slurp(path);
    // Cut the second record in half.
    fs::resize_file(path, full.size() - 7);
    auto r = replay_records(path);
    CHECK(r.torn_tail);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0]["n"] == 1);
    {
      RecordLog log(path);
      log.append({{"n", 3}});
    }
    r = replay_records(path);
    CHECK_FALSE(r.torn_tail);
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[1]["n"] == 3);
  }

  TEST_CASE("corruption before intact records is a format error") {
    test::TempDir dir;
    const auto path = dir / "s.jsonl";
    std::ofstream(path) << encode_record({{"n", 1}}) << "garbage\n" << encode_record({{"n", 2}});
    try {
      replay_records(path);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::format);
    }
  }

  TEST_CASE("missing file replays as empty") {
    test::TempDir dir;
    CHECK(replay_records(dir / "none.jsonl").records.empty());
  }
}

TEST_SUITE("experiment_service") {
  TEST_CASE("session creation rules") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 3, 2);
    ExperimentService svc({fx.config}, dir / "data");
    CHECK(svc.experiment_ids() == std::vector<std::string>{"exp"});
    CHECK(api_code([&] { svc.create_session("p1", "other"); }) == "unknown_experiment");
    CHECK(api_code([&] { svc.create_session("", "exp"); }) == "invalid_participant");
    CHECK(api_code([&] { svc.create_session("a,b", "exp"); }) == "invalid_participant");
    const auto s1 = svc.create_session("p1", "exp");
    CHECK(fs::exists(dir / "data" / "exp" / (s1.session_id + ".jsonl")));
    try {
      svc.create_session("p1", "exp");
      FAIL("expected conflict");
    } catch (const ApiError& e) {
      CHECK(e.api_code() == "duplicate_session");
      CHECK(e.details()["session_id"] == s1.session_id);
    }
    CHECK(api_code([&] { svc.session_info("nope"); }) == "unknown_session");
  }

  TEST_CASE("orders derive from recorded seeds, tokens are blinded and per session") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 8, 4);
    ExperimentService svc({fx.config}, dir / "data");
    const auto a = svc.create_session("alice", "exp");
    const auto b = svc.create_session("bob", "exp");
    CHECK(a.seed == session_seed(fx.config, "alice"));
    const auto order = derive_presentation_order(fx.config, a.seed);
    for (std::size_t n = 0; n < order.screens.size(); ++n)
      CHECK(a.screen_order[n] == fx.config.screens[order.screens[n]].screen_id);
    CHECK(a.screen_order != b.screen_order);

    std::set<std::string> tokens_a;
    for (std::size_t n = 0; n < 8; ++n)
      for (const auto& s : svc.screen_descriptor(a.session_id, n)["stimuli"]) tokens_a.insert(s["token"]);
    for (std::size_t n = 0; n < 8; ++n) {
      const auto d = svc.screen_descriptor(b.session_id, n);
      const auto text = d.dump();
      for (const auto* label : {"\"C1\"", "\"C2\"", "\"ref\"", "hidden_reference", "condition"})
        CHECK(text.find(label) == std::string::npos);
      for (const auto& s : d["stimuli"]) CHECK(tokens_a.count(s["token"]) == 0);
    }
    // Presented condition order follows the derived order.
    const auto d0 = svc.screen_descriptor(a.session_id, 0);
    CHECK(d0["stimuli"].size() == 5);
    CHECK(d0["screen_id"] == a.screen_order[0]);
  }

  TEST_CASE("stimulus resolution is isolated per session") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 2, 2);
    ExperimentService svc({fx.config}, dir / "data");
    const auto a = svc.create_session("a", "exp");
    const auto b = svc.create_session("b", "exp");
    const auto token = svc.screen_descriptor(a.session_id, 0)["stimuli"][1]["token"].get<std::string>();
    const auto ref = svc.screen_descriptor(a.session_id, 0)["reference"]["token"].get<std::string>();
    CHECK(fs::exists(svc.resolve_stimulus(a.session_id, token).path));
    CHECK(svc.resolve_stimulus(a.session_id, ref).path.filename().string().find("reference") != std::string::npos);
    CHECK(api_code([&] { svc.resolve_stimulus(b.session_id, token); }) == "invalid_token");
  }

  TEST_CASE("submission validation") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 2, 2);
    ExperimentService svc({fx.config}, dir / "data");
    const auto s = svc.create_session("p", "exp");
    const auto d = svc.screen_descriptor(s.session_id, 0);
    auto body = full_ratings(d);
    const auto first = d["stimuli"][0]["token"].get<std::string>();

    auto missing = body;
    missing["ratings"].erase(first);
    try {
      svc.submit_ratings(s.session_id, 0, missing);
      FAIL("expected rejection");
    } catch (const ApiError& e) {
      CHECK(e.api_code() == "missing_tokens");
      CHECK(e.details()["missing"] == json::array({first}));
    }
    auto high = body;
    high["ratings"][first] = 101;
    CHECK(api_code([&] { svc.submit_ratings(s.session_id, 0, high); }) == "invalid_rating");
    auto frac = body;
    frac["ratings"][first] = 50.5;
    CHECK(api_code([&] { svc.submit_ratings(s.session_id, 0, frac); }) == "invalid_rating");
    auto extra = body;
    extra["ratings"]["deadbeef"] = 1;
    CHECK(api_code([&] { svc.submit_ratings(s.session_id, 0, extra); }) == "unknown_tokens");
    CHECK(api_code([&] { svc.submit_ratings(s.session_id, 0, json::array()); }) == "malformed_ratings");
    CHECK(api_code([&] { svc.submit_ratings(s.session_id, 9, body); }) == "screen_out_of_range");

    const auto r = svc.submit_ratings(s.session_id, 0, body);
    CHECK(r.status == SessionStatus::in_progress);
    CHECK_FALSE(r.replaced);
    // Persisted before acknowledgment.
    CHECK(replay_records(dir / "data" / "exp" / (s.session_id + ".jsonl")).records.size() == 2);
    CHECK(svc.submit_ratings(s.session_id, 0, body).replaced);
  }

  TEST_CASE("completion freezes the session; re-registration allowed") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 2, 2);
    ExperimentService svc({fx.config}, dir / "data");
    const auto s = svc.create_session("p", "exp");
    svc.submit_ratings(s.session_id, 0, full_ratings(svc.screen_descriptor(s.session_id, 0)));
    CHECK(svc.session_info(s.session_id)["status"] == "in_progress");
    const auto last = svc.submit_ratings(s.session_id, 1, full_ratings(svc.screen_descriptor(s.session_id, 1)));
    CHECK(last.status == SessionStatus::complete);
    CHECK(svc.session_info(s.session_id)["status"] == "complete");
    CHECK(api_code([&] { svc.submit_ratings(s.session_id, 0, full_ratings(svc.screen_descriptor(s.session_id, 0))); }) ==
          "session_frozen");
    const auto frozen = svc.screen_descriptor(s.session_id, 0);
    CHECK(frozen["read_only"] == true);
    CHECK(frozen["submitted"] == true);
    CHECK(frozen.contains("ratings"));
    const auto again = svc.create_session("p", "exp");
    CHECK(again.session_id != s.session_id);
  }

  TEST_CASE("full-scale use option") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 1, 2);
    fx.config.ui_options.require_full_scale_use = true;
    ExperimentService svc({fx.config}, dir / "data");
    const auto s = svc.create_session("p", "exp");
    auto body = full_ratings(svc.screen_descriptor(s.session_id, 0));
    CHECK(api_code([&] { svc.submit_ratings(s.session_id, 0, body); }) == "full_scale_required");
    body["ratings"].begin().value() = 100;
    CHECK_NOTHROW(svc.submit_ratings(s.session_id, 0, body));
  }

  TEST_CASE("export: row count, stability, partial policy, hidden reference label") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 8, 8, 2);
    ExperimentService svc({fx.config}, dir / "data");
    const auto a = svc.create_session("a", "exp");
    complete_session(svc, a.session_id, 8);
    const auto b = svc.create_session("b", "exp");
    svc.submit_ratings(b.session_id, 0, full_ratings(svc.screen_descriptor(b.session_id, 0)));

    const auto rows = svc.export_records("exp");
    CHECK(rows.size() == 72);
    CHECK(std::count_if(rows.begin(), rows.end(), [](const RatingRecord& r) { return r.condition == kHiddenReferenceLabel; }) == 8);
    CHECK(svc.export_csv("exp") == svc.export_csv("exp"));
    CHECK(svc.export_records("exp", true).size() == 81);
    const auto meta = svc.export_metadata("exp");
    CHECK(meta["screens"]["s2"]["talker"] == "T2");
    CHECK(meta["sessions"].size() == 1);

    const auto parsed = parse_ratings_csv(svc.export_csv("exp"));
    const auto matrix = aggregate_ratings(parsed, parse_screen_metadata(meta.dump()));
    CHECK(matrix.subjects == std::vector<std::string>{"a"});
    CHECK(matrix.conditions.size() == 8);
  }

  TEST_CASE("replay restores sessions and survives a torn tail") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 3, 2);
    std::string sid;
    std::string csv;
    {
      ExperimentService svc({fx.config}, dir / "data");
      sid = svc.create_session("p", "exp").session_id;
      svc.submit_ratings(sid, 0, full_ratings(svc.screen_descriptor(sid, 0)));
      svc.submit_ratings(sid, 1, full_ratings(svc.screen_descriptor(sid, 1)));
      csv = svc.export_csv("exp", true);
    }
    const auto log = dir / "data" / "exp" / (sid + ".jsonl");
    {
      ExperimentService svc({fx.config}, dir / "data");
      CHECK(svc.export_csv("exp", true) == csv);
      CHECK(svc.session_info(sid)["submitted_screens"].size() == 2);
    }
    // Simulated crash in the middle of the third write.
    const auto bytes = slurp(log);
    std::ofstream(log, std::ios::app) << encode_record({{"type", "submission"}}).substr(0, 10);
    {
      ExperimentService svc({fx.config}, dir / "data");
      CHECK(svc.export_csv("exp", true) == csv);
      svc.submit_ratings(sid, 2, full_ratings(svc.screen_descriptor(sid, 2)));
      CHECK(svc.session_info(sid)["status"] == "complete");
    }
    ExperimentService svc({fx.config}, dir / "data");
    CHECK(svc.session_info(sid)["status"] == "complete");
    CHECK(svc.replay_warnings().empty());
  }

  TEST_CASE("mid-file corruption skips the session with a warning") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 2, 2);
    std::string sid;
    {
      ExperimentService svc({fx.config}, dir / "data");
      sid = svc.create_session("p", "exp").session_id;
      svc.submit_ratings(sid, 0, full_ratings(svc.screen_descriptor(sid, 0)));
    }
    const auto log = dir / "data" / "exp" / (sid + ".jsonl");
    auto text = slurp(log);
    text[text.find('\n') - 3] ^= 1;
    std::ofstream(log, std::ios::trunc) << text;
    ExperimentService svc({fx.config}, dir / "data");
    CHECK(svc.replay_warnings().size() == 1);
    CHECK(api_code([&] { svc.session_info(sid); }) == "unknown_session");
  }

  TEST_CASE("training screen") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 1, 2, 1, true);
    ExperimentService svc({fx.config}, dir / "data");
    const auto s = svc.create_session("p", "exp");
    const auto t = svc.training_descriptor(s.session_id);
    CHECK(t["training"] == true);
    CHECK(t["stimuli"].size() == 2);
    CHECK(fs::exists(svc.resolve_stimulus(s.session_id, t["stimuli"][0]["token"]).path));
  }
}

TEST_SUITE("http") {
  TEST_CASE("status mapping") {
    CHECK(http_status(Errc::not_found) == 404);
    CHECK(http_status(Errc::conflict) == 409);
    CHECK(http_status(Errc::frozen) == 409);
    CHECK(http_status(Errc::rejected) == 422);
    CHECK(http_status(Errc::schema) == 400);
    CHECK(http_status(Errc::io) == 500);
  }

  TEST_CASE("API round trip") {
    test::TempDir dir;
    auto fx = test::write_experiment(dir / "exp", "exp", 2, 2);
    ExperimentService svc({fx.config}, dir / "data");
    Server srv(svc);
    httplib::Client cli("127.0.0.1", srv.port);

    auto res = cli.Get("/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    res = cli.Get("/experiments");
    CHECK(json::parse(res->body)["experiments"][0] == "exp");
    res = cli.Get("/experiments/none");
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["code"] == "unknown_experiment");

    res = cli.Post("/sessions", R"({"participant_id": "p1", "experiment_id": "exp"})", "application/json");
    REQUIRE(res->status == 201);
    const auto created = json::parse(res->body);
    const std::string sid = created["session_id"];
    CHECK(created["screen_count"] == 2);
    res = cli.Post("/sessions", R"({"participant_id": "p1", "experiment_id": "exp"})", "application/json");
    CHECK(res->status == 409);
    res = cli.Post("/sessions", "{oops", "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["code"] == "malformed_json");

    res = cli.Get("/sessions/" + sid + "/screens/0");
    REQUIRE(res->status == 200);
    const auto d = json::parse(res->body);

    // Stimulus bytes, ranges and isolation.
    const std::string url = d["stimuli"][1]["url"];
    res = cli.Get(url);
    REQUIRE(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "audio/wav");
    const auto path = svc.resolve_stimulus(sid, d["stimuli"][1]["token"]).path;
    const auto file = slurp(path);
    CHECK(res->body == file);
    const std::size_t half = file.size() / 2;
    res = cli.Get(url, {{"Range", "bytes=" + std::to_string(half) + "-"}});
    CHECK(res->status == 206);
    CHECK(res->body == file.substr(half));
    res = cli.Get("/stimuli/" + d["stimuli"][1]["token"].get<std::string>());
    CHECK(res->status == 400);
    const auto other = json::parse(
        cli.Post("/sessions", R"({"participant_id": "p2", "experiment_id": "exp"})", "application/json")->body);
    res = cli.Get("/stimuli/" + d["stimuli"][1]["token"].get<std::string>() + "?session=" + other["session_id"].get<std::string>());
    CHECK(res->status == 404);

    // Ratings.
    auto body = full_ratings(d);
    auto bad = body;
    bad["ratings"].begin().value() = 101;
    res = cli.Post("/sessions/" + sid + "/screens/0/ratings", bad.dump(), "application/json");
    CHECK(res->status == 422);
    CHECK(json::parse(res->body)["status"] == "rejected");
    res = cli.Post("/sessions/" + sid + "/screens/0/ratings", body.dump(), "application/json");
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body)["status"] == "accepted");
    const auto d1 = json::parse(cli.Get("/sessions/" + sid + "/screens/1")->body);
    res = cli.Post("/sessions/" + sid + "/screens/1/ratings", full_ratings(d1).dump(), "application/json");
    CHECK(json::parse(res->body)["session_status"] == "complete");
    res = cli.Post("/sessions/" + sid + "/screens/1/ratings", full_ratings(d1).dump(), "application/json");
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["code"] == "session_frozen");

    res = cli.Get("/experiments/exp/export");
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type").find("text/csv") == 0);
    CHECK(parse_ratings_csv(res->body).size() == 6);
    res = cli.Get("/experiments/exp/export/metadata?partial=true");
    CHECK(json::parse(res->body)["partial"] == true);
    res = cli.Get("/sessions/" + sid + "/screens/7");
    CHECK(res->status == 404);
  }
}
