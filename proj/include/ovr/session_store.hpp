#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ovr {

// One line per record: {"crc32": <crc of data.dump()>, "data": {...}}.
std::string encode_record(const nlohmann::json& data);
// Returns false when the line is not a well-formed record or the checksum
// does not match.
bool decode_record(std::string_view line, nlohmann::json& data);

struct ReplayResult {
  std::vector<nlohmann::json> records;
  std::uint64_t valid_bytes = 0;  // length of the intact prefix
  bool torn_tail = false;         // an incomplete or corrupt final record was dropped
};

// Reads every intact record. A bad final record (torn write) is dropped; a
// bad record followed by intact ones is corruption and throws Errc::format.
ReplayResult replay_records(const std::filesystem::path& path);

// Append-only record file. Each append is written with a single write()
// and fsync'd before returning. Opening truncates a torn tail so later
// records start on a clean line.
class RecordLog {
 public:
  explicit RecordLog(std::filesystem::path path);
  ~RecordLog();
  RecordLog(const RecordLog&) = delete;
  RecordLog& operator=(const RecordLog&) = delete;

  void append(const nlohmann::json& data);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

// Flushes a directory entry (after creating files in it).
void sync_directory(const std::filesystem::path& dir);

}  // namespace ovr
