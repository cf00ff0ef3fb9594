#include "ovr/session_store.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include "ovr/error.hpp"
#include "ovr/wav.hpp"

namespace ovr {

namespace {

using nlohmann::json;

std::uint32_t crc_of(std::string_view text) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
}

std::string sys_error(const std::string& what, const std::filesystem::path& path) {
  return what + " " + path.string() + ": " + std::strerror(errno);
}

}  // namespace

std::string encode_record(const json& data) {
  const std::string payload = data.dump();
  json record = {{"crc32", crc_of(payload)}, {"data", data}};
  return record.dump() + "\n";
}

bool decode_record(std::string_view line, json& data) {
  json record = json::parse(line, nullptr, false);
  if (record.is_discarded() || !record.is_object()) return false;
  auto crc = record.find("crc32");
  auto body = record.find("data");
  if (crc == record.end() || body == record.end() || !crc->is_number_unsigned()) return false;
  if (crc->get<std::uint64_t>() != crc_of(body->dump())) return false;
  data = *body;
  return true;
}

ReplayResult replay_records(const std::filesystem::path& path) {
  ReplayResult out;
  if (!std::filesystem::exists(path)) return out;
  const auto bytes = read_file_bytes(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.torn_tail = true;  // final record never got its newline
      break;
    }
    json data;
    if (!decode_record(text.substr(pos, nl - pos), data)) {
      if (nl + 1 < text.size())
        fail(Errc::format, path.string() + ": corrupt record at byte " + std::to_string(pos) +
                               " followed by further records");
      out.torn_tail = true;
      break;
    }
    out.records.push_back(std::move(data));
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  return out;
}

RecordLog::RecordLog(std::filesystem::path path) : path_(std::move(path)) {
  const bool existed = std::filesystem::exists(path_);
  if (existed) {
    const auto replay = replay_records(path_);
    if (replay.torn_tail) std::filesystem::resize_file(path_, replay.valid_bytes);
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) fail(Errc::io, sys_error("cannot open record log", path_));
  if (!existed && path_.has_parent_path()) sync_directory(path_.parent_path());
}

RecordLog::~RecordLog() {
  if (fd_ >= 0) ::close(fd_);
}

void RecordLog::append(const json& data) {
  const std::string line = encode_record(data);
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(Errc::io, sys_error("write failed on", path_));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) fail(Errc::io, sys_error("fsync failed on", path_));
}

void sync_directory(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace ovr
