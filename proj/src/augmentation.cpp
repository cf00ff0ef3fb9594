#include "ovr/augmentation.hpp"

namespace ovr {

std::vector<ComplexVector> smooth_transfer(std::span<const ComplexVector* const> raw, double alpha) {
  require(alpha >= 0.0 && alpha < 1.0, Errc::invalid_argument, "smoothing constant must lie in [0, 1)");
  std::vector<ComplexVector> out;
  out.reserve(raw.size());
  for (std::size_t l = 0; l < raw.size(); ++l) {
    const ComplexVector& h = *raw[l];
    if (l == 0) {
      out.push_back(h);
      continue;
    }
    const ComplexVector& prev = out.back();
    require(h.size() == prev.size(), Errc::mismatch, "transfer vectors differ in length");
    ComplexVector next(h.size());
    for (std::size_t k = 0; k < h.size(); ++k) next[k] = alpha * prev[k] + (1.0 - alpha) * h[k];
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<ComplexVector> transfer_sequence(const TransferModel& model,
                                             const std::vector<std::string>& frame_labels,
                                             double alpha) {
  std::vector<const ComplexVector*> raw;
  raw.reserve(frame_labels.size());
  for (const auto& label : frame_labels) raw.push_back(&model.lookup(label));
  return smooth_transfer(raw, alpha);
}

Waveform simulate_inear(const Waveform& clean, const PhonemeAnnotation& annotation,
                        const TransferModel& model, double alpha) {
  clean.validate();
  require(clean.channel_count() == 1, Errc::invalid_argument, "clean speech must be single-channel");
  require(clean.sample_rate == model.sample_rate, Errc::mismatch,
          "clean speech is at " + std::to_string(clean.sample_rate) + " Hz but the model expects " +
              std::to_string(model.sample_rate) + " Hz");
  Spectrogram spec = stft(clean, model.stft);
  const auto labels = frame_phoneme_sequence(annotation, model.stft, clean.sample_rate, spec.num_frames);
  const auto gains = transfer_sequence(model, labels, alpha);
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    auto frame = spec.frame(l);
    for (std::size_t k = 0; k < frame.size(); ++k) frame[k] *= gains[l][k];
  }
  return istft(spec);
}

Waveform simulate_inear_personalized(const Waveform& clean, const PhonemeAnnotation& annotation,
                                     const TransferModel& model, std::string_view target_talker,
                                     double alpha) {
  require(model.talker_id == target_talker, Errc::mismatch,
          "personalized augmentation targets talker '" + std::string(target_talker) +
              "' but the model belongs to '" + model.talker_id + "'");
  return simulate_inear(clean, annotation, model, alpha);
}

}  // namespace ovr
