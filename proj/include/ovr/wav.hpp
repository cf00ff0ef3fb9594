#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ovr/waveform.hpp"

namespace ovr {

enum class SampleFormat { pcm16, pcm24, pcm32, float32 };

// Parses "16", "24", "32", "32f"/"float".
SampleFormat parse_sample_format(std::string_view text);

struct WavWriteReport {
  std::size_t clipped_samples = 0;
  bool clipped() const noexcept { return clipped_samples > 0; }
};

// Errors: Errc::format for a malformed RIFF/WAVE structure,
// Errc::unsupported_format for valid files with an encoding we do not read,
// Errc::truncated when the data chunk is shorter than declared.
Waveform decode_wav(std::span<const std::uint8_t> bytes);
Waveform load_wav(const std::filesystem::path& path);

// Samples outside [-1, 1] are clipped and counted in the report.
std::vector<std::uint8_t> encode_wav(const Waveform& wave, SampleFormat format,
                                     WavWriteReport* report = nullptr);
WavWriteReport save_wav(const Waveform& wave, const std::filesystem::path& path,
                        SampleFormat format = SampleFormat::float32);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ovr
