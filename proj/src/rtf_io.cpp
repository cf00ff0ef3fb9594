#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ovr/rtf.hpp"

namespace ovr {

namespace {

using nlohmann::json;

json complex_to_json(const ComplexVector& v) {
  json re = json::array(), im = json::array();
  for (const auto& c : v) {
    re.push_back(c.real());
    im.push_back(c.imag());
  }
  return json{{"re", std::move(re)}, {"im", std::move(im)}};
}

ComplexVector complex_from_json(const json& j, const std::string& where, std::size_t expected) {
  if (!j.is_object() || !j.contains("re") || !j.contains("im") || !j["re"].is_array() || !j["im"].is_array())
    fail(Errc::schema, where + ": expected {re:[...], im:[...]}");
  const auto& re = j["re"];
  const auto& im = j["im"];
  if (re.size() != expected || im.size() != expected)
    fail(Errc::schema, where + ": RTF vector has length " + std::to_string(re.size()) + "/" +
                           std::to_string(im.size()) + ", expected K = " + std::to_string(expected));
  ComplexVector out(expected);
  for (std::size_t k = 0; k < expected; ++k) {
    if (!re[k].is_number() || !im[k].is_number()) fail(Errc::schema, where + ": non-numeric RTF value");
    out[k] = {re[k].get<double>(), im[k].get<double>()};
  }
  return out;
}

std::size_t get_size(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_unsigned())
    fail(Errc::schema, where + ": missing or invalid '" + key + "'");
  return j[key].get<std::size_t>();
}

}  // namespace

std::string model_to_json(const TransferModel& model) {
  json stft{{"window", model.stft.window_length},
            {"window_type", std::string(window_name(model.stft.window))},
            {"hop", model.stft.hop},
            {"fft", model.stft.fft_size},
            {"rate", model.sample_rate}};
  json global = complex_to_json(model.global.rtf);
  global["frames"] = model.global.frames;
  json phonemes = json::object();
  for (const auto& [label, entry] : model.phonemes) {
    json e = complex_to_json(entry.rtf);
    e["frames"] = entry.frames;
    phonemes[label] = std::move(e);
  }
  json doc{{"version", kTransferModelVersion},
           {"talker_id", model.talker_id},
           {"min_frames", model.min_frames},
           {"stft", std::move(stft)},
           {"global", std::move(global)},
           {"phonemes", std::move(phonemes)}};
  return doc.dump(1);
}

TransferModel model_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::schema, std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_number_integer())
    fail(Errc::schema, "model file lacks an integer 'version'");
  const int version = doc["version"].get<int>();
  if (version != kTransferModelVersion)
    fail(Errc::version_mismatch, "unsupported model version " + std::to_string(version) + " (expected " +
                                     std::to_string(kTransferModelVersion) + ")");

  TransferModel model;
  if (!doc.contains("talker_id") || !doc["talker_id"].is_string()) fail(Errc::schema, "missing 'talker_id'");
  model.talker_id = doc["talker_id"].get<std::string>();
  if (doc.contains("min_frames")) model.min_frames = get_size(doc, "min_frames", "model");

  if (!doc.contains("stft") || !doc["stft"].is_object()) fail(Errc::schema, "missing 'stft' block");
  const auto& s = doc["stft"];
  model.stft.window_length = get_size(s, "window", "stft");
  model.stft.hop = get_size(s, "hop", "stft");
  model.stft.fft_size = get_size(s, "fft", "stft");
  model.sample_rate = static_cast<int>(get_size(s, "rate", "stft"));
  if (s.contains("window_type")) model.stft.window = parse_window(s["window_type"].get<std::string>());
  try {
    model.stft.validate();
  } catch (const Error& e) {
    fail(Errc::schema, std::string("stft: ") + e.what());
  }
  const std::size_t k = model.stft.bins();

  if (!doc.contains("global")) fail(Errc::schema, "missing 'global' RTF");
  model.global.rtf = complex_from_json(doc["global"], "global", k);
  if (doc["global"].contains("frames")) model.global.frames = get_size(doc["global"], "frames", "global");

  if (doc.contains("phonemes")) {
    if (!doc["phonemes"].is_object()) fail(Errc::schema, "'phonemes' must be an object");
    for (const auto& [label, entry] : doc["phonemes"].items()) {
      const std::string where = "phoneme '" + label + "'";
      RtfEntry e;
      e.rtf = complex_from_json(entry, where, k);
      e.frames = get_size(entry, "frames", where);
      model.phonemes.emplace(label, std::move(e));
    }
  }
  model.validate();
  return model;
}

void save_model(const TransferModel& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write model " + path.string());
  out << model_to_json(model) << '\n';
  if (!out) fail(Errc::io, "write failed for " + path.string());
}

TransferModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return model_from_json(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace ovr
