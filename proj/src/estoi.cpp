#include "ovr/estoi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ovr/fft.hpp"
#include "ovr/level.hpp"
#include "ovr/resample.hpp"

namespace ovr {

namespace {

// Symmetric Hann of length n without its zero end points.
std::vector<double> inner_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return w;
}

// Mean-subtract and scale to unit norm; all-constant input becomes zeros.
void normalize(std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double& x : v) {
    x -= mean;
    ss += x * x;
  }
  const double norm = std::sqrt(ss);
  for (double& x : v) x = norm > 0.0 ? x / norm : 0.0;
}

// Band envelope matrix [band][frame].
std::vector<std::vector<double>> band_envelopes(std::span<const double> x, const EstoiConfig& c,
                                                const std::vector<std::vector<double>>& bands) {
  const auto window = inner_hann(c.frame_length);
  RealFft fft(c.fft_size);
  std::vector<double> buffer(c.fft_size);
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<std::vector<double>> env(c.num_bands);
  for (std::size_t start = 0; start + c.frame_length < x.size(); start += c.hop) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (std::size_t n = 0; n < c.frame_length; ++n) buffer[n] = x[start + n] * window[n];
    fft.forward(buffer, spec);
    for (std::size_t b = 0; b < c.num_bands; ++b) {
      double power = 0.0;
      for (std::size_t k = 0; k < spec.size(); ++k)
        if (bands[b][k] != 0.0) power += std::norm(spec[k]);
      env[b].push_back(std::sqrt(power));
    }
  }
  return env;
}

}  // namespace

std::vector<std::vector<double>> third_octave_bands(const EstoiConfig& c) {
  const std::size_t bins = c.fft_size / 2 + 1;
  std::vector<double> freqs(bins);
  for (std::size_t k = 0; k < bins; ++k)
    freqs[k] = static_cast<double>(k) * c.sample_rate / static_cast<double>(c.fft_size);
  auto nearest = [&](double f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < bins; ++k)
      if (std::abs(freqs[k] - f) < std::abs(freqs[best] - f)) best = k;
    return best;
  };
  std::vector<std::vector<double>> obm(c.num_bands, std::vector<double>(bins, 0.0));
  for (std::size_t b = 0; b < c.num_bands; ++b) {
    const double kb = static_cast<double>(b);
    const double lo = c.min_frequency * std::pow(2.0, (2.0 * kb - 1.0) / 6.0);
    const double hi = c.min_frequency * std::pow(2.0, (2.0 * kb + 1.0) / 6.0);
    const std::size_t lo_bin = nearest(lo), hi_bin = nearest(hi);
    for (std::size_t k = lo_bin; k < hi_bin; ++k)
      if (freqs[k] <= 0.5 * c.sample_rate) obm[b][k] = 1.0;
  }
  return obm;
}

SilenceRemoved remove_silent_frames(std::span<const double> reference, std::span<const double> test,
                                    const EstoiConfig& c) {
  require(reference.size() == test.size(), Errc::mismatch, "reference and test lengths differ");
  const auto window = inner_hann(c.frame_length);
  std::vector<std::size_t> starts;
  std::vector<double> energy_db;
  for (std::size_t start = 0; start + c.frame_length <= reference.size(); start += c.hop) {
    double ss = 0.0;
    for (std::size_t n = 0; n < c.frame_length; ++n) {
      const double v = window[n] * reference[start + n];
      ss += v * v;
    }
    starts.push_back(start);
    energy_db.push_back(ss > 0.0 ? 10.0 * std::log10(ss) : -std::numeric_limits<double>::infinity());
  }
  SilenceRemoved out;
  out.kept_frames.assign(starts.size(), false);
  if (starts.empty()) return out;
  const double peak = *std::max_element(energy_db.begin(), energy_db.end());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    out.kept_frames[i] = std::isfinite(peak) && energy_db[i] > peak - c.dynamic_range_db;
    if (out.kept_frames[i]) ++kept;
  }
  if (kept == 0) return out;
  const std::size_t len = (kept - 1) * c.hop + c.frame_length;
  out.reference.assign(len, 0.0);
  out.test.assign(len, 0.0);
  std::size_t slot = 0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (!out.kept_frames[i]) continue;
    const std::size_t dst = slot++ * c.hop;
    for (std::size_t n = 0; n < c.frame_length; ++n) {
      out.reference[dst + n] += window[n] * reference[starts[i] + n];
      out.test[dst + n] += window[n] * test[starts[i] + n];
    }
  }
  return out;
}

double estoi(std::span<const double> reference, std::span<const double> test, int sample_rate,
             const EstoiConfig& c) {
  require(sample_rate > 0, Errc::invalid_argument, "sample rate must be positive");
  const std::size_t len = std::min(reference.size(), test.size());
  const auto ref = resample(reference.first(len), sample_rate, c.sample_rate);
  const auto tst = resample(test.first(len), sample_rate, c.sample_rate);

  const auto trimmed = remove_silent_frames(ref, tst, c);
  const auto bands = third_octave_bands(c);
  const auto x = band_envelopes(trimmed.reference, c, bands);
  const auto y = band_envelopes(trimmed.test, c, bands);
  const std::size_t frames = x.empty() ? 0 : x.front().size();
  const std::size_t n = c.segment_frames;
  if (frames < n)
    fail(Errc::too_short, "signal too short for ESTOI: " + std::to_string(frames) + " active frames, need " +
                              std::to_string(n));

  const std::size_t nb = c.num_bands;
  double total = 0.0;
  std::size_t segments = 0;
  std::vector<std::vector<double>> xs(nb, std::vector<double>(n)), ys(nb, std::vector<double>(n));
  std::vector<double> xc(nb), yc(nb);
  for (std::size_t end = n; end <= frames; ++end) {
    // Rows: each band's envelope over the segment, normalised over time.
    for (std::size_t b = 0; b < nb; ++b) {
      std::copy_n(x[b].begin() + static_cast<std::ptrdiff_t>(end - n), n, xs[b].begin());
      std::copy_n(y[b].begin() + static_cast<std::ptrdiff_t>(end - n), n, ys[b].begin());
      normalize(xs[b]);
      normalize(ys[b]);
    }
    // Columns: each frame's spectral profile, normalised over bands.
    double seg = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      for (std::size_t b = 0; b < nb; ++b) {
        xc[b] = xs[b][m];
        yc[b] = ys[b][m];
      }
      normalize(xc);
      normalize(yc);
      for (std::size_t b = 0; b < nb; ++b) seg += xc[b] * yc[b];
    }
    total += seg / static_cast<double>(n);
    ++segments;
  }
  return std::clamp(total / static_cast<double>(segments), -1.0, 1.0);
}

double estoi(const Waveform& reference, const Waveform& test, const EstoiConfig& config) {
  reference.validate();
  test.validate();
  require(reference.sample_rate == test.sample_rate, Errc::mismatch, "reference and test sample rates differ");
  return estoi(reference.channel(0), test.channel(0), reference.sample_rate, config);
}

double estoi_improvement(const Waveform& reference, const Waveform& noisy, const Waveform& processed,
                         const EstoiConfig& config) {
  return estoi(reference, processed, config) - estoi(reference, noisy, config);
}

double snr_db(std::span<const double> signal, std::span<const double> noise) {
  double s = 0.0, v = 0.0;
  for (double x : signal) s += x * x;
  for (double x : noise) v += x * x;
  if (v <= 0.0) return std::numeric_limits<double>::infinity();
  if (s <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(s / v);
}

}  // namespace ovr
