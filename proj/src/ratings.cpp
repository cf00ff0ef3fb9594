#include "ovr/ratings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "ovr/error.hpp"
#include "ovr/stats.hpp"

namespace ovr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string read_text(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, std::string("cannot open ") + what + " " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class T>
std::size_t index_of(std::vector<T>& items, const T& value) {
  auto it = std::find(items.begin(), items.end(), value);
  if (it != items.end()) return static_cast<std::size_t>(it - items.begin());
  items.push_back(value);
  return items.size() - 1;
}

}  // namespace

std::vector<RatingRecord> parse_ratings_csv(std::string_view text) {
  std::vector<RatingRecord> records;
  std::size_t pos = 0, line_no = 0;
  bool header = false;
  while (pos < text.size()) {
    auto next = text.find('\n', pos);
    auto line = trim(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    pos = next == std::string_view::npos ? text.size() : next + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "ratings line " + std::to_string(line_no) + ": ";
    if (!header) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.remove_prefix(3);
      require(line == "participant,screen_id,condition,rating", Errc::schema,
              where + "expected header 'participant,screen_id,condition,rating'");
      header = true;
      continue;
    }
    const auto fields = split(line, ',');
    require(fields.size() == 4, Errc::schema, where + "expected 4 fields");
    for (std::size_t i = 0; i < 3; ++i) require(!fields[i].empty(), Errc::schema, where + "empty field");
    double rating = 0.0;
    auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), rating);
    require(ec == std::errc() && ptr == fields[3].data() + fields[3].size() && std::isfinite(rating), Errc::schema,
            where + "invalid rating '" + std::string(fields[3]) + "'");
    require(rating >= 0.0 && rating <= 100.0, Errc::schema, where + "rating outside 0..100");
    records.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), rating});
  }
  require(header, Errc::schema, "ratings CSV is empty (missing header)");
  return records;
}

std::vector<RatingRecord> load_ratings_csv(const std::filesystem::path& path) {
  try {
    return parse_ratings_csv(read_text(path, "ratings"));
  } catch (const Error& e) {
    if (e.code() == Errc::io) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string ratings_to_csv(const std::vector<RatingRecord>& records) {
  std::ostringstream out;
  out << "participant,screen_id,condition,rating\n";
  for (const auto& r : records) {
    out << r.participant << ',' << r.screen_id << ',' << r.condition << ',';
    if (r.rating == std::floor(r.rating))
      out << static_cast<long long>(r.rating);
    else
      out << r.rating;
    out << '\n';
  }
  return out.str();
}

ScreenMetadata parse_screen_metadata(std::string_view json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(Errc::schema, std::string("screen metadata is not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("screens")) doc = doc["screens"];
  ScreenMetadata meta;
  if (doc.is_array()) {
    // [{screen_id, ...factors}]
    for (const auto& entry : doc) {
      require(entry.is_object() && entry.contains("screen_id"), Errc::schema, "screen metadata entry needs screen_id");
      auto& factors = meta[entry["screen_id"].get<std::string>()];
      for (const auto& [k, v] : entry.items()) {
        if (k == "screen_id" || v.is_object() || v.is_array()) continue;
        factors[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    return meta;
  }
  require(doc.is_object(), Errc::schema, "screen metadata must be a JSON object or array");
  for (const auto& [id, entry] : doc.items()) {
    require(entry.is_object(), Errc::schema, "screen metadata for '" + id + "' must be an object");
    auto& factors = meta[id];
    for (const auto& [k, v] : entry.items()) {
      if (v.is_object() || v.is_array()) continue;
      factors[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return meta;
}

ScreenMetadata load_screen_metadata(const std::filesystem::path& path) {
  return parse_screen_metadata(read_text(path, "screen metadata"));
}

Statistic parse_statistic(std::string_view name) {
  if (name == "mean") return Statistic::mean;
  if (name == "median") return Statistic::median;
  fail(Errc::invalid_argument, "unknown statistic '" + std::string(name) + "' (mean|median)");
}

std::vector<double> RatingMatrix::column(std::size_t condition) const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& row : values) out.push_back(row.at(condition));
  return out;
}

RatingMatrix aggregate_ratings(const std::vector<RatingRecord>& records, const ScreenMetadata& metadata,
                               const AggregateSpec& spec) {
  auto selected = [&](const std::string& screen) {
    if (spec.where.empty()) return true;
    auto it = metadata.find(screen);
    if (it == metadata.end()) return false;
    for (const auto& [factor, level] : spec.where) {
      auto f = it->second.find(factor);
      if (f == it->second.end() || f->second != level) return false;
    }
    return true;
  };

  RatingMatrix m;
  m.statistic = spec.statistic;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> cells;
  for (const auto& r : records) {
    if (spec.exclude_hidden_reference && r.condition == kHiddenReferenceLabel) continue;
    if (!selected(r.screen_id)) continue;
    const auto s = index_of(m.subjects, r.participant);
    const auto c = index_of(m.conditions, r.condition);
    const auto k = index_of(m.screens, r.screen_id);
    require(cells.emplace(std::tuple{s, c, k}, r.rating).second, Errc::schema,
            "duplicate rating for " + r.participant + "/" + r.screen_id + "/" + r.condition);
  }
  require(!cells.empty(), Errc::schema, "no ratings match the aggregation selection");

  std::vector<std::string> missing;
  m.values.assign(m.subjects.size(), std::vector<double>(m.conditions.size(), 0.0));
  for (std::size_t s = 0; s < m.subjects.size(); ++s) {
    for (std::size_t c = 0; c < m.conditions.size(); ++c) {
      std::vector<double> vals;
      for (std::size_t k = 0; k < m.screens.size(); ++k) {
        auto it = cells.find({s, c, k});
        if (it == cells.end())
          missing.push_back(m.subjects[s] + "/" + m.screens[k] + "/" + m.conditions[c]);
        else
          vals.push_back(it->second);
      }
      if (vals.size() == m.screens.size())
        m.values[s][c] = spec.statistic == Statistic::mean ? mean(vals) : median(vals);
    }
  }
  if (!missing.empty()) {
    std::string msg = "incomplete design, " + std::to_string(missing.size()) + " missing cell(s):";
    for (std::size_t i = 0; i < missing.size() && i < 50; ++i) msg += " " + missing[i];
    if (missing.size() > 50) msg += " ...";
    fail(Errc::schema, msg);
  }

  std::map<std::string, std::set<std::string>> levels;
  for (const auto& screen : m.screens) {
    auto it = metadata.find(screen);
    if (it == metadata.end()) continue;
    for (const auto& [factor, level] : it->second) levels[factor].insert(level);
  }
  for (auto& [factor, set] : levels)
    if (set.size() > 1) m.averaged_over[factor] = std::move(set);
  return m;
}

std::string stimulus_id(std::string_view screen_id, std::string_view condition) {
  std::string id(screen_id);
  id += '/';
  id += condition;
  return id;
}

std::map<std::string, double> stimulus_medians(const std::vector<RatingRecord>& records) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) groups[stimulus_id(r.screen_id, r.condition)].push_back(r.rating);
  std::map<std::string, double> out;
  for (auto& [id, vals] : groups) out[id] = median(std::move(vals));
  return out;
}

std::string_view screening_rule_name(ScreeningRule rule) {
  return rule == ScreeningRule::reference_min_90_all_screens ? "reference_min_90_all_screens"
                                                              : "reference_top_ranked";
}

ScreeningRule parse_screening_rule(std::string_view name) {
  if (name == "reference_min_90_all_screens") return ScreeningRule::reference_min_90_all_screens;
  if (name == "reference_top_ranked") return ScreeningRule::reference_top_ranked;
  fail(Errc::invalid_argument, "unknown screening rule '" + std::string(name) + "'");
}

ScreeningResult screen_participants(const std::vector<RatingRecord>& records, ScreeningRule rule) {
  struct ScreenScore {
    double reference = -1.0;
    double best_other = -1.0;
  };
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, ScreenScore>> scores;
  for (const auto& r : records) {
    index_of(order, r.participant);
    auto& s = scores[r.participant][r.screen_id];
    if (r.condition == kHiddenReferenceLabel)
      s.reference = r.rating;
    else
      s.best_other = std::max(s.best_other, r.rating);
  }

  ScreeningResult out;
  out.rule = rule;
  for (const auto& p : order) {
    std::string reason;
    for (const auto& [screen, s] : scores[p]) {
      if (s.reference < 0.0) continue;
      std::ostringstream why;
      // The rank rule is the threshold rule plus strict top ranking.
      if (s.reference < 90.0) {
        why << "hidden reference rated " << s.reference << " (< 90) on screen " << screen;
      } else if (rule == ScreeningRule::reference_top_ranked && s.best_other >= s.reference) {
        why << "hidden reference (" << s.reference << ") not strictly highest (" << s.best_other << ") on screen "
            << screen;
      } else {
        continue;
      }
      reason = why.str();
      break;
    }
    if (reason.empty())
      out.kept.push_back(p);
    else
      out.excluded[p] = reason;
  }
  return out;
}

std::vector<RatingRecord> filter_participants(const std::vector<RatingRecord>& records,
                                              const std::vector<std::string>& keep) {
  std::set<std::string> set(keep.begin(), keep.end());
  std::vector<RatingRecord> out;
  for (const auto& r : records)
    if (set.count(r.participant)) out.push_back(r);
  return out;
}

}  // namespace ovr
