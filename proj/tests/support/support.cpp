#include "support.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "ovr/random.hpp"
#include "ovr/wav.hpp"

namespace ovr::test {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& prefix) {
  std::string tmpl = (fs::temp_directory_path() / (prefix + "-XXXXXX")).string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double sigma) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = sigma * rng.gaussian();
  return x;
}

std::vector<double> speech_like(std::size_t n, int sample_rate, std::uint64_t seed) {
  Rng rng(seed);
  const double fs = sample_rate;
  const double f0_base = 100.0 + 80.0 * rng.uniform();
  const double glide = 0.5 + rng.uniform();
  std::vector<double> phases(40);
  for (auto& p : phases) p = 2.0 * std::numbers::pi * rng.uniform();

  // Syllables of 120..280 ms with 40..120 ms pauses.
  std::vector<std::pair<std::size_t, std::size_t>> syllables;
  // Leading pause long enough for noise-tracking initialisation.
  std::size_t t = static_cast<std::size_t>(0.25 * fs);
  while (t < n) {
    const auto len = static_cast<std::size_t>((0.12 + 0.16 * rng.uniform()) * fs);
    syllables.emplace_back(t, std::min(n, t + len));
    t += len + static_cast<std::size_t>((0.04 + 0.08 * rng.uniform()) * fs);
  }

  std::vector<double> env(n, 0.0);
  for (const auto& [a, b] : syllables) {
    const double len = static_cast<double>(b - a);
    const double gain = 0.6 + 0.4 * rng.uniform();
    for (std::size_t i = a; i < b; ++i)
      env[i] = gain * std::pow(std::sin(std::numbers::pi * static_cast<double>(i - a) / len), 2.0);
  }

  std::vector<double> x(n, 0.0);
  double phase = 0.0;
  const double nyquist = 0.45 * fs;
  for (std::size_t i = 0; i < n; ++i) {
    const double time = static_cast<double>(i) / fs;
    const double f0 = f0_base * (1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * glide * time));
    phase += 2.0 * std::numbers::pi * f0 / fs;
    double s = 0.0;
    for (std::size_t h = 1; h <= phases.size(); ++h) {
      if (h * f0 > nyquist) break;
      // Two broad formant bumps over a 1/h tilt.
      const double f = h * f0;
      const double formant = 1.0 + 2.0 * std::exp(-std::pow((f - 500.0) / 250.0, 2)) +
                             1.5 * std::exp(-std::pow((f - 1500.0) / 400.0, 2));
      s += formant / h * std::sin(h * phase + phases[h - 1]);
    }
    x[i] = 0.12 * env[i] * s;
  }
  return x;
}

std::vector<std::complex<double>> direct_dft(std::span<const double> x, std::size_t n) {
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < std::min(n, x.size()); ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n));
    out[k] = acc;
  }
  return out;
}

std::complex<double> fir_response(std::span<const double> g, std::size_t k, std::size_t n) {
  std::complex<double> acc = 0.0;
  for (std::size_t m = 0; m < g.size(); ++m)
    acc += g[m] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * m % n) / static_cast<double>(n));
  return acc;
}

std::vector<double> fir_filter(std::span<const double> x, std::span<const double> g) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t m = 0; m < g.size() && m <= t; ++m) y[t] += g[m] * x[t - m];
  return y;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b, std::size_t from, std::size_t to) {
  double m = 0.0;
  for (std::size_t i = from; i < to; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

TwoChannelScene make_scene(std::size_t n, int sample_rate, std::uint64_t seed) {
  const auto outer = speech_like(n, sample_rate, seed);
  const std::vector<double> body{0.5, 0.4, 0.25, 0.1, 0.05};
  TwoChannelScene scene;
  scene.speech = Waveform({outer, fir_filter(outer, body)}, sample_rate);
  auto inear_noise = white_noise(n, seed + 2, 0.1);
  const auto outer_noise = white_noise(n, seed + 1, 0.1);
  // Partly coherent leakage through the earplug.
  for (std::size_t i = 0; i < n; ++i) inear_noise[i] = 0.15 * outer_noise[i] + 0.05 * inear_noise[i];
  scene.noise = Waveform({outer_noise, inear_noise}, sample_rate);
  return scene;
}

ExperimentFixture write_experiment(const fs::path& dir, const std::string& experiment_id, std::size_t screens,
                                   std::size_t conditions, std::size_t talkers, bool with_training) {
  fs::create_directories(dir / "audio");
  const int rate = 16000;
  const std::size_t frames = 1600;
  auto write = [&](const std::string& name, const std::vector<double>& x) {
    save_wav(Waveform::mono(x, rate), dir / "audio" / name, SampleFormat::pcm16);
    return "audio/" + name;
  };

  auto make_screen = [&](const std::string& id, std::size_t index) {
    nlohmann::json s;
    s["screen_id"] = id;
    const auto ref = speech_like(frames, rate, 1000 + index);
    s["reference_stimulus"] = write(id + "_reference.wav", ref);
    nlohmann::json stimuli = nlohmann::json::array();
    stimuli.push_back({{"condition_label", "ref"}, {"path", write(id + "_ref.wav", ref)}});
    for (std::size_t c = 0; c < conditions; ++c) {
      auto x = ref;
      const auto n = white_noise(frames, 50 * index + c, 0.02 * static_cast<double>(c + 1));
      for (std::size_t i = 0; i < frames; ++i) x[i] += n[i];
      const std::string label = "C" + std::to_string(c + 1);
      stimuli.push_back({{"condition_label", label}, {"path", write(id + "_" + label + ".wav", x)}});
    }
    s["stimuli"] = stimuli;
    s["metadata"] = {{"talker", "T" + std::to_string(index % talkers + 1)}, {"sentence", std::to_string(index)}};
    return s;
  };

  nlohmann::json doc;
  doc["experiment_id"] = experiment_id;
  doc["seed"] = 20240611;
  doc["seed_policy"] = "per_participant";
  doc["ui_options"] = {{"require_full_scale_use", false}, {"loop_playback", true}};
  doc["screens"] = nlohmann::json::array();
  for (std::size_t i = 0; i < screens; ++i) doc["screens"].push_back(make_screen("s" + std::to_string(i + 1), i));
  if (with_training) {
    auto t = make_screen("training", 999);
    t["hidden_reference_included"] = false;
    t["stimuli"].erase(0);
    doc["training_screen"] = t;
  }

  const auto path = dir / "config.json";
  std::ofstream(path) << doc.dump(2);
  return {path, ExperimentConfig::load(path)};
}

}  // namespace ovr::test
