#include "ovr/annotation.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ovr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  // std::from_chars for double is available in libstdc++ 11.
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find('\t', pos);
    fields.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return fields;
}

}  // namespace

PhonemeAnnotation::PhonemeAnnotation(std::vector<PhonemeInterval> intervals)
    : intervals_(std::move(intervals)) {
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    const auto& iv = intervals_[i];
    require(iv.start < iv.end, Errc::schema,
            "annotation interval " + std::to_string(i) + " has start >= end");
    require(!iv.label.empty(), Errc::schema, "annotation interval " + std::to_string(i) + " has no label");
    if (i > 0)
      require(intervals_[i - 1].end <= iv.start, Errc::schema,
              "annotation intervals overlap or are unsorted at index " + std::to_string(i));
  }
}

std::string_view PhonemeAnnotation::label_at(double seconds) const {
  auto it = std::upper_bound(intervals_.begin(), intervals_.end(), seconds,
                             [](double t, const PhonemeInterval& iv) { return t < iv.start; });
  if (it == intervals_.begin()) return kSilenceLabel;
  --it;
  return seconds < it->end ? std::string_view(it->label) : kSilenceLabel;
}

PhonemeAnnotation PhonemeAnnotation::parse_tsv(std::string_view text) {
  std::vector<PhonemeInterval> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find('\n', pos);
    std::string_view line = text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    pos = next == std::string_view::npos ? text.size() + 1 : next + 1;
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_tabs(line);
    double start = 0.0, end = 0.0;
    if (!parse_double(fields[0], start)) {
      if (out.empty() && line_no == 1) continue;  // header
      fail(Errc::schema, "annotation line " + std::to_string(line_no) + ": bad start time");
    }
    if (fields.size() < 3 || !parse_double(fields[1], end))
      fail(Errc::schema, "annotation line " + std::to_string(line_no) + ": expected start_s, end_s, phoneme");
    out.push_back({start, end, std::string(trim(fields[2]))});
  }
  return PhonemeAnnotation(std::move(out));
}

PhonemeAnnotation PhonemeAnnotation::load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open annotation " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_tsv(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string PhonemeAnnotation::to_tsv() const {
  std::ostringstream os;
  os.precision(17);
  os << "start_s\tend_s\tphoneme\n";
  for (const auto& iv : intervals_) os << iv.start << '\t' << iv.end << '\t' << iv.label << '\n';
  return os.str();
}

std::vector<std::string> frame_phoneme_sequence(const PhonemeAnnotation& annotation,
                                                const StftConfig& config, int sample_rate,
                                                std::size_t frame_count) {
  require(sample_rate > 0, Errc::invalid_argument, "sample rate must be positive");
  std::vector<std::string> labels;
  labels.reserve(frame_count);
  const double half = static_cast<double>(config.window_length) / 2.0;
  for (std::size_t l = 0; l < frame_count; ++l) {
    const double centre = (static_cast<double>(l * config.hop) + half) / sample_rate;
    labels.emplace_back(annotation.label_at(centre));
  }
  return labels;
}

}  // namespace ovr
