#include "ovr/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace ovr {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

bool tag_is(const std::uint8_t* p, const char* tag) { return std::memcmp(p, tag, 4) == 0; }

struct FormatChunk {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  std::uint16_t block_align = 0;
};

double decode_sample(const std::uint8_t* p, const FormatChunk& fmt) {
  if (fmt.tag == kFormatFloat) {
    float f = std::bit_cast<float>(read_u32(p));
    return static_cast<double>(f);
  }
  switch (fmt.bits) {
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default:
      fail(Errc::unsupported_format, "unsupported PCM bit depth " + std::to_string(fmt.bits));
  }
}

}  // namespace

SampleFormat parse_sample_format(std::string_view text) {
  if (text == "16") return SampleFormat::pcm16;
  if (text == "24") return SampleFormat::pcm24;
  if (text == "32") return SampleFormat::pcm32;
  if (text == "32f" || text == "float" || text == "float32") return SampleFormat::float32;
  fail(Errc::invalid_argument, "unknown sample format '" + std::string(text) + "'");
}

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE"))
    fail(Errc::format, "not a RIFF/WAVE file");

  FormatChunk fmt;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (tag_is(chunk, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) fail(Errc::format, "malformed fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      fmt.tag = read_u16(f);
      fmt.channels = read_u16(f + 2);
      fmt.rate = read_u32(f + 4);
      fmt.block_align = read_u16(f + 12);
      fmt.bits = read_u16(f + 14);
      if (fmt.tag == kFormatExtensible) {
        if (size < 40) fail(Errc::format, "malformed extensible fmt chunk");
        fmt.tag = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (tag_is(chunk, "data")) {
      data = bytes.data() + body;
      if (body + size > bytes.size()) {
        fail(Errc::truncated, "data chunk declares " + std::to_string(size) + " bytes but only " +
                                  std::to_string(bytes.size() - body) + " remain");
      }
      data_size = size;
      have_data = true;
      break;
    }
    pos = body + size + (size & 1);
  }

  if (!have_fmt) fail(Errc::format, "missing fmt chunk");
  if (!have_data) fail(Errc::format, "missing data chunk");
  if (fmt.channels == 0 || fmt.rate == 0) fail(Errc::format, "fmt chunk has zero channels or rate");
  if (fmt.tag == kFormatPcm) {
    if (fmt.bits != 16 && fmt.bits != 24 && fmt.bits != 32)
      fail(Errc::unsupported_format, "unsupported PCM bit depth " + std::to_string(fmt.bits));
  } else if (fmt.tag == kFormatFloat) {
    if (fmt.bits != 32)
      fail(Errc::unsupported_format, "only 32-bit float WAV is supported");
  } else {
    fail(Errc::unsupported_format, "unsupported WAV format tag " + std::to_string(fmt.tag));
  }

  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  if (fmt.block_align != 0 && fmt.block_align != frame_bytes)
    fail(Errc::format, "block_align inconsistent with channels and bit depth");
  const std::size_t frames = data_size / frame_bytes;

  Waveform w = Waveform::zeros(fmt.channels, frames, static_cast<int>(fmt.rate));
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* frame = data + i * frame_bytes;
    for (std::size_t c = 0; c < fmt.channels; ++c)
      w.channels[c][i] = decode_sample(frame + c * bytes_per_sample, fmt);
  }
  return w;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "write failed for " + path.string());
}

Waveform load_wav(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const Waveform& wave, SampleFormat format,
                                     WavWriteReport* report) {
  wave.validate();
  const std::uint16_t bits = format == SampleFormat::pcm16 ? 16 : format == SampleFormat::pcm24 ? 24 : 32;
  const std::uint16_t tag = format == SampleFormat::float32 ? kFormatFloat : kFormatPcm;
  const std::uint16_t channels = static_cast<std::uint16_t>(wave.channel_count());
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
  const std::size_t data_size = wave.frames() * block_align;

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_size));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, channels);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_size));

  WavWriteReport local;
  for (std::size_t i = 0; i < wave.frames(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      double x = wave.channels[c][i];
      if (x > 1.0 || x < -1.0 || std::isnan(x)) {
        ++local.clipped_samples;
        x = std::isnan(x) ? 0.0 : std::clamp(x, -1.0, 1.0);
      }
      switch (format) {
        case SampleFormat::pcm16: {
          auto v = static_cast<std::int32_t>(std::lround(x * 32768.0));
          put_u16(out, static_cast<std::uint16_t>(std::clamp(v, -32768, 32767)));
          break;
        }
        case SampleFormat::pcm24: {
          auto v = static_cast<std::int32_t>(std::lround(x * 8388608.0));
          v = std::clamp(v, -8388608, 8388607);
          out.push_back(static_cast<std::uint8_t>(v));
          out.push_back(static_cast<std::uint8_t>(v >> 8));
          out.push_back(static_cast<std::uint8_t>(v >> 16));
          break;
        }
        case SampleFormat::pcm32: {
          auto v = std::llround(x * 2147483648.0);
          v = std::clamp<long long>(v, -2147483648LL, 2147483647LL);
          put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
          break;
        }
        case SampleFormat::float32:
          put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
          break;
      }
    }
  }
  if (report) *report = local;
  return out;
}

WavWriteReport save_wav(const Waveform& wave, const std::filesystem::path& path,
                        SampleFormat format) {
  WavWriteReport report;
  auto bytes = encode_wav(wave, format, &report);
  write_file_bytes(path, bytes);
  return report;
}

}  // namespace ovr
