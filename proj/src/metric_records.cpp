#include "ovr/metric_records.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ovr/error.hpp"

namespace ovr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string canonical_metric_name(std::string_view name) {
  std::string out;
  for (char c : trim(name)) {
    if (c == ' ' || c == '-' || c == '.') {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

ScaleRegistry ScaleRegistry::defaults() {
  ScaleRegistry r;
  r.set("pesq", {0.5, 4.5, true});
  r.set("estoi", {0.0, 1.0, true});
  r.set("emobi_q", {0.0, 1.0, true});
  r.set("pemo_q_psm", {0.0, 1.0, true});
  r.set("dnsmos_sig", {1.0, 5.0, true});
  r.set("dnsmos_bak", {1.0, 5.0, true});
  r.set("dnsmos_ovrl", {1.0, 5.0, true});
  r.set("dnsmos_p808", {1.0, 5.0, true});
  r.set("scoreq_mos", {1.0, 5.0, true});
  r.set("scoreq_distance", {0.0, kInf, false});
  r.set("wv_mos", {1.0, 5.0, true});
  r.set("leap", {1.0, 13.0, false});
  return r;
}

ScaleRegistry ScaleRegistry::from_json(std::string_view text) {
  using nlohmann::json;
  ScaleRegistry r = defaults();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::schema, std::string("scale registry is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(Errc::schema, "scale registry must be a JSON object");
  for (const auto& [name, entry] : doc.items()) {
    MetricScale s;
    try {
      s.min = entry.at("min").get<double>();
      const auto& mx = entry.at("max");
      if (mx.is_null() || (mx.is_string() && (mx == "inf" || mx == "+inf")))
        s.max = kInf;
      else
        s.max = mx.get<double>();
      s.higher_is_better = entry.value("higher_is_better", true);
    } catch (const json::exception& e) {
      fail(Errc::schema, "scale '" + name + "': " + e.what());
    }
    require(s.min < s.max, Errc::schema, "scale '" + name + "' needs min < max");
    r.set(name, s);
  }
  return r;
}

ScaleRegistry ScaleRegistry::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open scale registry " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::optional<MetricScale> ScaleRegistry::find(std::string_view name) const {
  auto it = scales_.find(canonical_metric_name(name));
  if (it == scales_.end()) return std::nullopt;
  return it->second;
}

void ScaleRegistry::set(std::string_view name, MetricScale scale) { scales_[canonical_metric_name(name)] = scale; }

IngestResult parse_predictions(std::string_view csv, std::string_view metric_name, const MetricScale& scale) {
  require(scale.min < scale.max, Errc::invalid_argument, "metric scale needs min < max");
  IngestResult result;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 0, pos = 0;
  bool header_seen = false;
  while (pos < csv.size()) {
    auto next = csv.find('\n', pos);
    auto line = trim(csv.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    pos = next == std::string_view::npos ? csv.size() : next + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.remove_prefix(3);  // BOM
      if (line != "stimulus_id,value")
        fail(Errc::schema, "line " + std::to_string(line_no) + ": expected header 'stimulus_id,value'");
      header_seen = true;
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string_view::npos)
      fail(Errc::schema, "line " + std::to_string(line_no) + ": expected 'stimulus_id,value'");
    const auto id = trim(line.substr(0, comma));
    const auto text = trim(line.substr(comma + 1));
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (id.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
      fail(Errc::schema, "line " + std::to_string(line_no) + ": invalid value '" + std::string(text) + "'");

    MetricRecord rec{std::string(id), std::string(metric_name), value, scale, !scale.contains(value)};
    if (rec.out_of_scale)
      result.warnings.push_back("line " + std::to_string(line_no) + ": value " + std::string(text) +
                                " outside scale for stimulus '" + rec.stimulus_id + "'");
    auto it = index.find(rec.stimulus_id);
    if (it != index.end()) {
      result.warnings.push_back("line " + std::to_string(line_no) + ": duplicate stimulus_id '" + rec.stimulus_id +
                                "', keeping the last value");
      result.records[it->second] = std::move(rec);
    } else {
      index.emplace(rec.stimulus_id, result.records.size());
      result.records.push_back(std::move(rec));
    }
  }
  if (!header_seen) fail(Errc::schema, "empty prediction file (missing header)");
  return result;
}

IngestResult ingest_predictions(const std::filesystem::path& path, std::string_view metric_name,
                                const MetricScale& scale) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open predictions " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_predictions(ss.str(), metric_name, scale);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace ovr
