#include "ovr/rtf.hpp"

#include <algorithm>
#include <cmath>

namespace ovr {

const ComplexVector& TransferModel::lookup(std::string_view phoneme) const {
  auto it = phonemes.find(phoneme);
  return it != phonemes.end() ? it->second.rtf : global.rtf;
}

void TransferModel::validate() const {
  stft.validate();
  require(sample_rate > 0, Errc::schema, "model sample rate must be positive");
  const std::size_t k = stft.bins();
  require(global.rtf.size() == k, Errc::schema,
          "global RTF has length " + std::to_string(global.rtf.size()) + ", expected " + std::to_string(k));
  for (const auto& [label, entry] : phonemes) {
    require(entry.rtf.size() == k, Errc::schema,
            "RTF for phoneme '" + label + "' has length " + std::to_string(entry.rtf.size()) +
                ", expected " + std::to_string(k));
    require(entry.frames >= min_frames, Errc::schema,
            "phoneme '" + label + "' has " + std::to_string(entry.frames) + " frames, below min_frames");
  }
}

std::vector<bool> energy_activity_mask(const Spectrogram& outer, double range_db) {
  std::vector<double> energy(outer.num_frames, 0.0);
  for (std::size_t l = 0; l < outer.num_frames; ++l)
    for (const auto& v : outer.frame(l)) energy[l] += std::norm(v);
  std::vector<bool> active(outer.num_frames, false);
  if (energy.empty()) return active;
  const double peak = *std::max_element(energy.begin(), energy.end());
  if (peak <= 0.0) return active;
  const double gate = peak * std::pow(10.0, -range_db / 10.0);
  for (std::size_t l = 0; l < energy.size(); ++l) active[l] = energy[l] >= gate;
  return active;
}

RtfAccumulator::RtfAccumulator(const StftConfig& config, int sample_rate)
    : config_(config), sample_rate_(sample_rate) {
  config_.validate();
  global_.cross.assign(config_.bins(), {});
  global_.power.assign(config_.bins(), 0.0);
}

RtfAccumulator::Sums& RtfAccumulator::sums_for(const std::string& label) {
  auto it = by_label_.find(label);
  if (it == by_label_.end()) {
    Sums s;
    s.cross.assign(config_.bins(), {});
    s.power.assign(config_.bins(), 0.0);
    it = by_label_.emplace(label, std::move(s)).first;
  }
  return it->second;
}

std::size_t RtfAccumulator::frames_for(std::string_view label) const {
  auto it = by_label_.find(label);
  return it == by_label_.end() ? 0 : it->second.frames;
}

void RtfAccumulator::add(const Spectrogram& outer, const Spectrogram& inear,
                         const PhonemeAnnotation& annotation, const RtfOptions& options) {
  const auto labels = frame_phoneme_sequence(annotation, outer.config, outer.sample_rate, outer.num_frames);
  add_frames(outer, inear, labels, energy_activity_mask(outer, options.energy_range_db));
}

void RtfAccumulator::add_frames(const Spectrogram& outer, const Spectrogram& inear,
                                const std::vector<std::string>& labels, const std::vector<bool>& active) {
  require(outer.num_frames == inear.num_frames, Errc::mismatch,
          "outer and in-ear spectrograms differ in frame count (" + std::to_string(outer.num_frames) +
              " vs " + std::to_string(inear.num_frames) + ")");
  require(outer.config == config_ && inear.config == config_, Errc::mismatch,
          "spectrogram STFT configuration differs from the accumulator's");
  require(outer.sample_rate == sample_rate_ && inear.sample_rate == sample_rate_, Errc::mismatch,
          "spectrogram sample rate differs from the accumulator's");
  require(labels.size() == outer.num_frames && active.size() == outer.num_frames, Errc::mismatch,
          "label/activity sequences must cover every frame");

  const std::size_t bins = config_.bins();
  for (std::size_t l = 0; l < outer.num_frames; ++l) {
    if (!active[l]) continue;
    const auto so = outer.frame(l);
    const auto si = inear.frame(l);
    Sums* phoneme = labels[l] == kSilenceLabel ? nullptr : &sums_for(labels[l]);
    for (std::size_t k = 0; k < bins; ++k) {
      const auto cross = si[k] * std::conj(so[k]);
      const double power = std::norm(so[k]);
      global_.cross[k] += cross;
      global_.power[k] += power;
      if (phoneme) {
        phoneme->cross[k] += cross;
        phoneme->power[k] += power;
      }
    }
    ++global_.frames;
    if (phoneme) ++phoneme->frames;
  }
}

void RtfAccumulator::merge(const RtfAccumulator& other) {
  require(other.config_ == config_ && other.sample_rate_ == sample_rate_, Errc::mismatch,
          "cannot merge accumulators with different STFT settings");
  auto add_into = [](Sums& dst, const Sums& src) {
    for (std::size_t k = 0; k < dst.cross.size(); ++k) {
      dst.cross[k] += src.cross[k];
      dst.power[k] += src.power[k];
    }
    dst.frames += src.frames;
  };
  add_into(global_, other.global_);
  for (const auto& [label, sums] : other.by_label_) add_into(sums_for(label), sums);
}

RtfEntry RtfAccumulator::solve(const Sums& sums, double regularization) {
  const double peak = *std::max_element(sums.power.begin(), sums.power.end());
  const double eps = regularization * peak;
  RtfEntry entry;
  entry.frames = sums.frames;
  entry.rtf.resize(sums.cross.size());
  for (std::size_t k = 0; k < sums.cross.size(); ++k) {
    const double den = sums.power[k] + eps;
    entry.rtf[k] = den > 0.0 ? sums.cross[k] / den : std::complex<double>{};
  }
  return entry;
}

TransferModel RtfAccumulator::finalize(std::string talker_id, const RtfOptions& options) const {
  require(global_.frames > 0, Errc::numeric, "no speech-active frames were accumulated");
  TransferModel model;
  model.talker_id = std::move(talker_id);
  model.stft = config_;
  model.sample_rate = sample_rate_;
  model.min_frames = options.min_frames;
  model.global = solve(global_, options.regularization);
  for (const auto& [label, sums] : by_label_) {
    if (sums.frames >= options.min_frames && sums.frames > 0)
      model.phonemes.emplace(label, solve(sums, options.regularization));
  }
  return model;
}

TransferModel estimate_rtfs(const Spectrogram& outer, const Spectrogram& inear,
                            const PhonemeAnnotation& annotation, const RtfOptions& options,
                            std::string talker_id) {
  require(outer.num_frames == inear.num_frames, Errc::mismatch,
          "outer and in-ear spectrograms differ in frame count");
  RtfAccumulator acc(outer.config, outer.sample_rate);
  acc.add(outer, inear, annotation, options);
  return acc.finalize(std::move(talker_id), options);
}

}  // namespace ovr
