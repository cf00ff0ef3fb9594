#include "ovr/mwf.hpp"

#include <algorithm>
#include <cmath>

namespace ovr {

std::array<double, 2> hermitian_eigenvalues(const Mat2& h) {
  const double a = h.a00.real(), d = h.a11.real();
  const double mean = 0.5 * (a + d);
  const double half_diff = 0.5 * (a - d);
  const double r = std::sqrt(half_diff * half_diff + std::norm(h.a01));
  return {mean - r, mean + r};
}

Mat2 clamp_eigenvalues(const Mat2& h, double floor) {
  const auto [lo, hi] = hermitian_eigenvalues(h);
  if (lo >= floor) return h;
  const double spread = hi - lo;
  if (spread <= 1e-14 * std::max(std::abs(hi), 1e-300)) {
    // Numerically a multiple of the identity.
    const double v = std::max(0.5 * (lo + hi), floor);
    return Mat2{v, 0.0, 0.0, v};
  }
  // Spectral projector onto the larger eigenvalue's eigenspace.
  Mat2 p_hi = (h - Mat2{lo, 0.0, 0.0, lo}) * (1.0 / spread);
  Mat2 p_lo = Mat2::identity() - p_hi;
  return hermitian_part(p_lo * std::max(lo, floor) + p_hi * std::max(hi, floor));
}

InverseResult inverse_hermitian(const Mat2& h, double max_condition, double loading) {
  InverseResult result;
  const double tr = h.a00.real() + h.a11.real();
  if (!(tr > 0.0) || !std::isfinite(tr)) {
    result.singular = true;
    return result;
  }
  double a = h.a00.real(), d = h.a11.real();
  const Complex b = h.a01;
  const auto [lo, hi] = hermitian_eigenvalues(h);
  if (lo <= 0.0 || hi / lo > max_condition) {
    const double delta = loading * tr;
    a += delta;
    d += delta;
    result.loaded = true;
  }
  const double det = a * d - std::norm(b);
  if (!(det > 0.0)) {
    result.singular = true;
    return result;
  }
  const double s = 1.0 / det;
  result.inverse = Mat2{d * s, -b * s, -std::conj(b) * s, a * s};
  return result;
}

void MwfConfig::validate() const {
  require(lambda_y > 0.0 && lambda_y < 1.0, Errc::invalid_argument, "mwf.lambda_y must lie in (0, 1)");
  require(lambda_v > 0.0 && lambda_v < 1.0, Errc::invalid_argument, "mwf.lambda_v must lie in (0, 1)");
  require(q > 0.0 && q < 1.0, Errc::invalid_argument, "mwf.q must lie in (0, 1)");
  require(mu >= 0.0, Errc::invalid_argument, "mwf.mu must be non-negative");
  require(psd_floor >= 0.0, Errc::invalid_argument, "mwf.psd_floor must be non-negative");
}

Vec2 wiener_weights(const Mat2& phi_vv, const Mat2& phi_xx, double mu) {
  const auto inv = inverse_hermitian(phi_vv);
  if (inv.singular) return {0.0, 0.0};
  const Mat2 m = inv.inverse * phi_xx;
  const double denom = mu + m.trace().real();
  if (!(denom > 0.0)) return {0.0, 0.0};
  return {m.a00 / denom, m.a10 / denom};
}

double speech_presence(const Mat2& phi_vv_inverse, const Mat2& phi_xx, const Vec2& y, double q) {
  const Mat2 m = phi_vv_inverse * phi_xx;
  const double xi = std::max(0.0, m.trace().real());
  const Vec2 u = phi_vv_inverse * y;
  const double beta = std::max(0.0, dot(u, phi_xx * u).real());
  const double odds = (q / (1.0 - q)) * (1.0 + xi) * std::exp(-beta / (1.0 + xi));
  const double p = 1.0 / (1.0 + odds);
  return std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.0;
}

namespace {

void check_grids(const Spectrogram& outer, const Spectrogram& inear) {
  require(outer.same_grid(inear), Errc::mismatch, "outer and in-ear spectrograms are on different grids");
}

Complex apply(const Vec2& w, const Vec2& y) { return std::conj(w[0]) * y[0] + std::conj(w[1]) * y[1]; }

}  // namespace

MwfEnhancer::MwfEnhancer(MwfConfig config, bool record_trace)
    : config_(config), record_trace_(record_trace) {
  config_.validate();
}

Spectrogram MwfEnhancer::enhance(const Spectrogram& outer, const Spectrogram& inear) {
  check_grids(outer, inear);
  const std::size_t bins = outer.bins();
  const std::size_t frames = outer.num_frames;
  Spectrogram out(outer.config, outer.sample_rate, frames, outer.source_length);

  if (record_trace_) {
    trace_ = MwfTrace{bins, frames, std::vector<Vec2>(bins * frames), std::vector<double>(bins * frames)};
  } else {
    trace_.reset();
  }

  for (std::size_t k = 0; k < bins; ++k) {
    Mat2 phi_yy{}, phi_vv{};
    for (std::size_t l = 0; l < frames; ++l) {
      const Vec2 y{outer(k, l), inear(k, l)};
      const Mat2 yy = Mat2::outer(y);
      // Running mean until the recursion's own memory takes over, so the
      // first frames do not start from a zero matrix.
      const double warm = static_cast<double>(l) / static_cast<double>(l + 1);
      const double ly = std::min(config_.lambda_y, warm);
      const double lv = std::min(config_.lambda_v, warm);

      phi_yy = phi_yy * ly + yy * (1.0 - ly);
      const double floor = config_.psd_floor * 0.5 * phi_yy.trace().real();

      double p = 0.0;
      if (l >= config_.init_frames) {
        const auto inv = inverse_hermitian(phi_vv);
        const Mat2 phi_xx = clamp_eigenvalues(hermitian_part(phi_yy - phi_vv), floor);
        p = inv.singular ? 1.0 - config_.q : speech_presence(inv.inverse, phi_xx, y, config_.q);
      }

      phi_vv += (yy - phi_vv) * ((1.0 - p) * (1.0 - lv));
      phi_vv = hermitian_part(phi_vv);

      const Mat2 phi_xx = clamp_eigenvalues(hermitian_part(phi_yy - phi_vv), floor);
      const Vec2 w = wiener_weights(phi_vv, phi_xx, config_.mu);
      out(k, l) = apply(w, y);

      if (trace_) {
        trace_->weights[l * bins + k] = w;
        trace_->spp[l * bins + k] = p;
      }
    }
  }
  return out;
}

Spectrogram enhance(const Spectrogram& noisy_outer, const Spectrogram& noisy_inear, const MwfConfig& config) {
  MwfEnhancer e(config);
  return e.enhance(noisy_outer, noisy_inear);
}

Spectrogram enhance_with_oracle(const Spectrogram& outer, const Spectrogram& inear, std::span<const Mat2> phi_vv,
                                std::span<const Mat2> phi_xx, double mu, MwfTrace* trace) {
  check_grids(outer, inear);
  const std::size_t bins = outer.bins();
  require(phi_vv.size() == bins && phi_xx.size() == bins, Errc::invalid_argument,
          "oracle PSD matrices must be given for every frequency bin");
  Spectrogram out(outer.config, outer.sample_rate, outer.num_frames, outer.source_length);
  if (trace) *trace = MwfTrace{bins, outer.num_frames, std::vector<Vec2>(bins * outer.num_frames),
                               std::vector<double>(bins * outer.num_frames, 1.0)};
  for (std::size_t k = 0; k < bins; ++k) {
    const Vec2 w = wiener_weights(phi_vv[k], phi_xx[k], mu);
    for (std::size_t l = 0; l < outer.num_frames; ++l) {
      out(k, l) = apply(w, {outer(k, l), inear(k, l)});
      if (trace) trace->weights[l * bins + k] = w;
    }
  }
  return out;
}

Spectrogram apply_weights(const MwfTrace& trace, const Spectrogram& outer, const Spectrogram& inear) {
  check_grids(outer, inear);
  require(trace.bins == outer.bins() && trace.frames == outer.num_frames, Errc::mismatch,
          "filter trace does not match the spectrogram grid");
  Spectrogram out(outer.config, outer.sample_rate, outer.num_frames, outer.source_length);
  for (std::size_t l = 0; l < outer.num_frames; ++l)
    for (std::size_t k = 0; k < trace.bins; ++k) out(k, l) = apply(trace.weight(k, l), {outer(k, l), inear(k, l)});
  return out;
}

Waveform enhance_waveform(const Waveform& noisy_outer, const Waveform& noisy_inear, const MwfConfig& config,
                          const StftConfig& stft_config) {
  require(noisy_outer.sample_rate == noisy_inear.sample_rate, Errc::mismatch, "outer and in-ear sample rates differ");
  require(noisy_outer.frames() == noisy_inear.frames(), Errc::mismatch, "outer and in-ear lengths differ");
  const auto so = stft(noisy_outer, stft_config);
  const auto si = stft(noisy_inear, stft_config);
  return istft(enhance(so, si, config));
}

}  // namespace ovr
