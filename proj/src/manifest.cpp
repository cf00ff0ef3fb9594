#include "ovr/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ovr/error.hpp"
#include "ovr/random.hpp"

namespace ovr {

namespace {

using nlohmann::json;

json noise_to_json(const NoiseSpec& n) {
  return json{{"noise_paths", n.noise_paths}, {"directions", n.directions}, {"snr_db", n.snr_db}};
}

NoiseSpec noise_from_json(const json& j, const std::string& where) {
  NoiseSpec n;
  try {
    n.noise_paths = j.at("noise_paths").get<std::vector<std::string>>();
    n.directions = j.value("directions", std::vector<int>{});
    n.snr_db = j.at("snr_db").get<double>();
  } catch (const json::exception& e) {
    fail(Errc::schema, where + ": invalid noise_spec: " + e.what());
  }
  if (!n.directions.empty() && n.directions.size() != n.noise_paths.size())
    fail(Errc::schema, where + ": noise_spec needs one direction per noise path");
  return n;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename F>
void for_each_json_line(std::string_view text, F&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto next = text.find('\n', pos);
    auto line = text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    pos = next == std::string_view::npos ? text.size() : next + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(Errc::schema, "line " + std::to_string(line_no) + ": " + e.what());
    }
    fn(j, "line " + std::to_string(line_no));
  }
}

}  // namespace

std::string_view mode_name(AugmentationMode m) noexcept {
  return m == AugmentationMode::generic ? "generic" : "personalized";
}

AugmentationMode parse_mode(std::string_view s) {
  if (s == "generic") return AugmentationMode::generic;
  if (s == "personalized") return AugmentationMode::personalized;
  fail(Errc::invalid_argument, "unknown augmentation mode '" + std::string(s) + "'");
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(Errc::invalid_argument, "unknown split '" + std::string(s) + "'");
}

void DatasetManifest::validate() const {
  if (mode == AugmentationMode::personalized) {
    const auto ids = model_ids();
    require(ids.size() <= 1, Errc::mismatch,
            "personalized manifest references " + std::to_string(ids.size()) + " transfer models");
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    require(!rows[i].transfer_model_id.empty(), Errc::schema, "row " + std::to_string(i) + " has no transfer model");
}

std::vector<std::string> DatasetManifest::model_ids() const {
  std::set<std::string> ids;
  for (const auto& r : rows) ids.insert(r.transfer_model_id);
  return {ids.begin(), ids.end()};
}

std::string DatasetManifest::to_jsonl() const {
  std::string out;
  for (const auto& r : rows) {
    json j{{"utterance_path", r.utterance_path},
           {"annotation_path", r.annotation_path},
           {"transfer_model_id", r.transfer_model_id},
           {"split", std::string(split_name(r.split))},
           {"mode", std::string(mode_name(mode))},
           {"seed", seed}};
    if (r.noise) j["noise_spec"] = noise_to_json(*r.noise);
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest DatasetManifest::from_jsonl(std::string_view text) {
  DatasetManifest m;
  bool first = true;
  for_each_json_line(text, [&](const json& j, const std::string& where) {
    ManifestRow row;
    try {
      row.utterance_path = j.at("utterance_path").get<std::string>();
      row.annotation_path = j.value("annotation_path", std::string{});
      row.transfer_model_id = j.at("transfer_model_id").get<std::string>();
      row.split = parse_split(j.value("split", std::string("train")));
      const auto mode = parse_mode(j.value("mode", std::string("generic")));
      const auto seed = j.value("seed", std::uint64_t{0});
      if (first) {
        m.mode = mode;
        m.seed = seed;
        first = false;
      } else if (mode != m.mode || seed != m.seed) {
        fail(Errc::schema, where + ": mode/seed differ from the first row");
      }
    } catch (const json::exception& e) {
      fail(Errc::schema, where + ": " + e.what());
    }
    if (j.contains("noise_spec") && !j["noise_spec"].is_null()) row.noise = noise_from_json(j["noise_spec"], where);
    m.rows.push_back(std::move(row));
  });
  m.validate();
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write manifest " + path.string());
  out << to_jsonl();
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  try {
    return from_jsonl(read_text(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

DatasetManifest build_manifest(std::span<const CorpusEntry> corpus, std::span<const std::string> model_ids,
                               AugmentationMode mode, const std::optional<SplitSpec>& split_spec,
                               std::uint64_t seed) {
  require(!corpus.empty(), Errc::invalid_argument, "corpus index is empty");
  require(!model_ids.empty(), Errc::invalid_argument, "no transfer models given");
  if (mode == AugmentationMode::personalized)
    require(model_ids.size() == 1, Errc::invalid_argument,
            "personalized mode needs exactly one transfer model, got " + std::to_string(model_ids.size()));

  Rng rng(seed);
  std::vector<std::pair<std::size_t, Split>> picks;
  if (split_spec) {
    const std::size_t wanted = split_spec->train + split_spec->val + split_spec->test;
    require(wanted <= corpus.size(), Errc::invalid_argument,
            "split sizes (" + std::to_string(wanted) + ") exceed the corpus (" + std::to_string(corpus.size()) + ")");
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < wanted; ++i) {
      const Split s = i < split_spec->train ? Split::train
                      : i < split_spec->train + split_spec->val ? Split::val
                                                                 : Split::test;
      picks.emplace_back(order[i], s);
    }
  } else {
    for (std::size_t i = 0; i < corpus.size(); ++i) picks.emplace_back(i, corpus[i].split.value_or(Split::train));
  }

  DatasetManifest m;
  m.mode = mode;
  m.seed = seed;
  for (const auto& [index, split] : picks) {
    const auto& entry = corpus[index];
    ManifestRow row;
    row.utterance_path = entry.utterance_path;
    row.annotation_path = entry.annotation_path;
    row.split = split;
    row.noise = entry.noise;
    row.transfer_model_id = mode == AugmentationMode::personalized
                                ? model_ids.front()
                                : model_ids[static_cast<std::size_t>(rng.below(model_ids.size()))];
    m.rows.push_back(std::move(row));
  }
  m.validate();
  return m;
}

std::vector<CorpusEntry> load_corpus_index(const std::filesystem::path& path) {
  std::vector<CorpusEntry> out;
  const auto text = read_text(path);
  for_each_json_line(text, [&](const json& j, const std::string& where) {
    CorpusEntry e;
    try {
      e.utterance_path = j.at("utterance_path").get<std::string>();
      e.annotation_path = j.value("annotation_path", std::string{});
      if (j.contains("split")) e.split = parse_split(j["split"].get<std::string>());
    } catch (const json::exception& ex) {
      fail(Errc::schema, path.string() + " " + where + ": " + ex.what());
    }
    if (j.contains("noise_spec") && !j["noise_spec"].is_null()) e.noise = noise_from_json(j["noise_spec"], where);
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<RecordedUtterance> select_generic_finetune_subset(std::span<const RecordedUtterance> pool,
                                                              std::size_t count, std::uint64_t seed) {
  require(count <= pool.size(), Errc::invalid_argument,
          "requested " + std::to_string(count) + " utterances from a pool of " + std::to_string(pool.size()));
  std::vector<RecordedUtterance> out;
  out.reserve(count);
  for (std::size_t i : sample_without_replacement(pool.size(), count, seed)) out.push_back(pool[i]);
  return out;
}

std::vector<RecordedUtterance> select_personalized_finetune_subset(std::span<const RecordedUtterance> pool,
                                                                   std::string_view target_talker) {
  std::vector<RecordedUtterance> out;
  std::copy_if(pool.begin(), pool.end(), std::back_inserter(out),
               [&](const RecordedUtterance& u) { return u.talker_id == target_talker; });
  require(!out.empty(), Errc::not_found, "no recorded utterances for talker '" + std::string(target_talker) + "'");
  return out;
}

}  // namespace ovr
