#include <algorithm>
#include <charconv>

#include "ovr/augmentation.hpp"
#include "ovr/fft.hpp"
#include "ovr/wav.hpp"

namespace ovr {

const Waveform& IrSet::at(int direction) const {
  auto it = responses.find(direction);
  if (it == responses.end())
    fail(Errc::not_found, "no impulse response for direction " + std::to_string(direction));
  return it->second;
}

void IrSet::validate() const {
  require(!responses.empty() && responses.size() <= 8, Errc::schema,
          "an IR set holds between 1 and 8 directions");
  for (const auto& [dir, ir] : responses) {
    ir.validate();
    require(ir.sample_rate == sample_rate, Errc::mismatch,
            "IR for direction " + std::to_string(dir) + " has a different sample rate");
    require(ir.channel_count() == 2, Errc::schema,
            "IR for direction " + std::to_string(dir) + " must have 2 channels (outer, in-ear)");
  }
}

IrSet IrSet::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(Errc::io, "IR directory not found: " + dir.string());
  IrSet set;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const std::string stem = file.stem().string();
    int azimuth = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), azimuth);
    if (ec != std::errc() || ptr != stem.data() + stem.size()) continue;
    Waveform ir = load_wav(file);
    if (set.responses.empty()) set.sample_rate = ir.sample_rate;
    set.responses.emplace(azimuth, std::move(ir));
  }
  set.validate();
  return set;
}

Waveform spatialize_noise(std::span<const Waveform> sources, const IrSet& irs, std::span<const int> directions) {
  require(!sources.empty(), Errc::invalid_argument, "no noise sources given");
  require(sources.size() == directions.size(), Errc::invalid_argument,
          "number of sources (" + std::to_string(sources.size()) + ") differs from number of directions (" +
              std::to_string(directions.size()) + ")");
  std::size_t max_source = 0, max_ir = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    sources[i].validate();
    require(sources[i].channel_count() == 1, Errc::invalid_argument, "noise sources must be single-channel");
    const Waveform& ir = irs.at(directions[i]);
    require(sources[i].sample_rate == ir.sample_rate, Errc::mismatch,
            "noise source " + std::to_string(i) + " sample rate differs from the IR set");
    max_source = std::max(max_source, sources[i].frames());
    max_ir = std::max(max_ir, ir.frames());
  }
  const std::size_t out_len = max_source + max_ir - 1;
  Waveform out = Waveform::zeros(2, out_len, sources.front().sample_rate);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const Waveform& ir = irs.at(directions[i]);
    for (std::size_t c = 0; c < 2; ++c) {
      const auto conv = fft_convolve(sources[i].channel(0), ir.channel(c));
      const std::size_t n = std::min(conv.size(), out_len);
      for (std::size_t t = 0; t < n; ++t) out.channels[c][t] += conv[t];
    }
  }
  return out;
}

}  // namespace ovr
