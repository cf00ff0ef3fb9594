#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "ovr/analysis_report.hpp"
#include "ovr/annotation.hpp"
#include "ovr/augmentation.hpp"
#include "ovr/error.hpp"
#include "ovr/estoi.hpp"
#include "ovr/experiment_service.hpp"
#include "ovr/http_routes.hpp"
#include "ovr/manifest.hpp"
#include "ovr/mwf.hpp"
#include "ovr/rtf.hpp"
#include "ovr/stft.hpp"
#include "ovr/wav.hpp"

namespace ovr::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config-file values fill every option not given on the command line;
// the merged values are kept for provenance in reports.
class Settings {
 public:
  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open config file " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) fail(Errc::schema, "config file " + path + " is not a JSON object");
    file_ = std::move(doc);
  }

  // owner: the subcommand the option belongs to (nullptr for globals).
  template <class T>
  void bind(CLI::App* owner, CLI::Option* opt, std::string section, std::string key, T& var) {
    steps_.push_back([this, owner, opt, section, key, &var] {
      if (owner && !owner->parsed()) return;
      const json* scope = section.empty() ? &file_ : (file_.contains(section) ? &file_[section] : nullptr);
      if (opt->count() == 0 && scope && scope->is_object() && scope->contains(key)) {
        try {
          var = (*scope)[key].template get<T>();
        } catch (const json::exception& e) {
          throw UsageError("config key " + (section.empty() ? key : section + "." + key) + ": " + e.what());
        }
      }
      json& target = section.empty() ? resolved_ : resolved_[section];
      target[key] = var;
    });
  }

  void resolve() {
    for (auto& step : steps_) step();
  }
  const json& resolved() const noexcept { return resolved_; }

 private:
  json file_ = json::object();
  json resolved_ = json::object();
  std::vector<std::function<void()>> steps_;
};

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool quiet = false;
};

struct StftOptions {
  std::size_t window_length = 512;
  std::size_t hop = 256;
  std::size_t fft_size = 512;
  std::string window = "sqrt_hann";

  void add(CLI::App* app, Settings& s) {
    s.bind(app, app->add_option("--window-length", window_length, "STFT window length (samples)"), "stft",
           "window_length", window_length);
    s.bind(app, app->add_option("--hop", hop, "STFT hop (samples)"), "stft", "hop", hop);
    s.bind(app, app->add_option("--fft-size", fft_size, "FFT size (samples)"), "stft", "fft_size", fft_size);
    s.bind(app, app->add_option("--window", window, "sqrt_hann | hann"), "stft", "window", window);
  }
  StftConfig config() const {
    StftConfig c{window_length, hop, fft_size, parse_window(window)};
    c.validate();
    return c;
  }
};

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

Waveform load_mono(const fs::path& path) {
  auto w = load_wav(path);
  require(!w.channels.empty(), Errc::format, path.string() + ": no audio channels");
  return w.channel_count() == 1 ? w : select_channel(w, 0);
}

json base_report(const char* command, const Settings& settings) {
  return {{"schema_version", kReportSchemaVersion}, {"command", command}, {"config", settings.resolved()}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(Errc::io, "write failed on " + path.string());
}

// Runs fn(i) for i in [0, n) on up to jobs threads; returns per-item
// exceptions in index order.
std::vector<std::exception_ptr> parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
    return errors;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return errors;
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string error_text(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError("invalid number '" + text + "' for " + what);
  }
}

void require_set(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

// ---------------------------------------------------------------- estimate-rtf

struct EstimateRtf {
  std::vector<std::string> outer, inear, annotations;
  std::string talker, out;
  std::size_t min_frames = 10;
  double energy_range_db = 40.0;
  double regularization = 1e-10;
  StftOptions stft;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("estimate-rtf", "Estimate a phoneme-specific transfer model from paired recordings");
    s.bind(app, app->add_option("--outer", outer, "Outer-microphone WAV files"), "estimate-rtf", "outer", outer);
    s.bind(app, app->add_option("--inear", inear, "In-ear WAV files (same order)"), "estimate-rtf", "inear", inear);
    s.bind(app, app->add_option("--annotations", annotations, "Phoneme TSV files (same order; omit for global only)"),
           "estimate-rtf", "annotations", annotations);
    s.bind(app, app->add_option("--talker", talker, "Talker id"), "estimate-rtf", "talker", talker);
    s.bind(app, app->add_option("--out", out, "Output model JSON"), "estimate-rtf", "out", out);
    s.bind(app, app->add_option("--min-frames", min_frames), "rtf", "min_frames", min_frames);
    s.bind(app, app->add_option("--energy-range-db", energy_range_db), "rtf", "energy_range_db", energy_range_db);
    s.bind(app, app->add_option("--regularization", regularization), "rtf", "regularization", regularization);
    stft.add(app, s);
  }

  int run(const Globals&, const Settings& settings, std::ostream& os) const {
    require_set(talker, "--talker");
    require_set(out, "--out");
    if (outer.empty()) throw UsageError("--outer needs at least one file");
    if (outer.size() != inear.size())
      throw UsageError("--outer has " + std::to_string(outer.size()) + " files but --inear has " +
                       std::to_string(inear.size()));
    if (!annotations.empty() && annotations.size() != outer.size())
      throw UsageError("--annotations must list one file per utterance (or none)");
    const RtfOptions opts{min_frames, energy_range_db, regularization};
    const auto cfg = stft.config();

    std::optional<RtfAccumulator> acc;
    for (std::size_t i = 0; i < outer.size(); ++i) {
      const auto o = load_mono(outer[i]);
      const auto n = load_mono(inear[i]);
      require(o.sample_rate == n.sample_rate, Errc::mismatch, "sample rates differ: " + outer[i] + " vs " + inear[i]);
      require(o.frames() == n.frames(), Errc::mismatch, "lengths differ: " + outer[i] + " vs " + inear[i]);
      if (!acc) acc.emplace(cfg, o.sample_rate);
      const auto ann = annotations.empty() ? PhonemeAnnotation{} : PhonemeAnnotation::load_tsv(annotations[i]);
      acc->add(ovr::stft(o, cfg), ovr::stft(n, cfg), ann, opts);
    }
    const auto model = acc->finalize(talker, opts);
    save_model(model, out);

    auto report = base_report("estimate-rtf", settings);
    json phonemes = json::object();
    for (const auto& [label, entry] : model.phonemes) phonemes[label] = entry.frames;
    report["talker_id"] = talker;
    report["utterances"] = outer.size();
    report["active_frames"] = model.global.frames;
    report["phonemes"] = phonemes;
    report["model"] = out;
    os << report.dump(2) << '\n';
    return ok;
  }
};

// ---------------------------------------------------------------- simulate

struct Simulate {
  std::string manifest, models, out, personalized, layout = "inear", format = "32f";
  double alpha = kDefaultSmoothing;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("simulate", "Simulate in-ear own voice for every manifest row");
    s.bind(app, app->add_option("--manifest", manifest, "Dataset manifest (JSON lines)"), "simulate", "manifest", manifest);
    s.bind(app, app->add_option("--models", models, "Directory of <model_id>.json transfer models"), "simulate",
           "models", models);
    s.bind(app, app->add_option("--out", out, "Output directory"), "simulate", "out", out);
    s.bind(app, app->add_option("--personalized", personalized, "Target talker; requires a single-model manifest"),
           "simulate", "personalized", personalized);
    s.bind(app, app->add_option("--alpha", alpha, "Transfer smoothing constant in [0, 1)"), "simulate", "alpha", alpha);
    s.bind(app, app->add_option("--layout", layout, "inear (mono) | pair (ch0 clean outer, ch1 simulated in-ear)"),
           "simulate", "layout", layout);
    s.bind(app, app->add_option("--format", format, "16 | 24 | 32 | 32f"), "simulate", "format", format);
  }

  int run(const Globals& g, const Settings& settings, std::ostream& os) const {
    require_set(manifest, "--manifest");
    require_set(models, "--models");
    require_set(out, "--out");
    if (layout != "inear" && layout != "pair") throw UsageError("--layout must be inear or pair");
    const auto sample_format = parse_sample_format(format);
    const auto m = DatasetManifest::load(manifest);
    m.validate();
    const auto ids = m.model_ids();
    const bool single_target = !personalized.empty() || m.mode == AugmentationMode::personalized;
    if (single_target && ids.size() != 1)
      fail(Errc::mismatch, "personalized simulation needs a single-model manifest, found " + std::to_string(ids.size()) +
                               " model ids");

    std::map<std::string, TransferModel> loaded;
    for (const auto& id : ids) {
      const fs::path path = fs::path(models) / (id + ".json");
      if (!fs::exists(path)) fail(Errc::not_found, "missing model id '" + id + "' (expected " + path.string() + ")");
      loaded.emplace(id, load_model(path));
    }

    const fs::path base = fs::path(manifest).parent_path();
    fs::create_directories(out);
    std::vector<json> rows(m.rows.size());
    auto errors = parallel_for(m.rows.size(), g.jobs, [&](std::size_t i) {
      const auto& row = m.rows[i];
      const auto clean = load_mono(resolve_path(base, row.utterance_path));
      const auto ann = PhonemeAnnotation::load_tsv(resolve_path(base, row.annotation_path));
      const auto& model = loaded.at(row.transfer_model_id);
      const auto sim = personalized.empty() ? simulate_inear(clean, ann, model, alpha)
                                            : simulate_inear_personalized(clean, ann, model, personalized, alpha);
      char name[32];
      std::snprintf(name, sizeof name, "%05zu_", i);
      const fs::path dest = fs::path(out) / (name + fs::path(row.utterance_path).stem().string() + ".wav");
      const auto report = save_wav(layout == "pair" ? stack_channels(clean, sim) : sim, dest, sample_format);
      rows[i] = {{"index", i},
                 {"utterance", row.utterance_path},
                 {"model", row.transfer_model_id},
                 {"split", split_name(row.split)},
                 {"output", dest.string()},
                 {"clipped_samples", report.clipped_samples}};
    });
    rethrow_first(errors);

    auto report = base_report("simulate", settings);
    report["mode"] = mode_name(m.mode);
    report["rows"] = rows;
    write_text(fs::path(out) / "simulate_report.json", report.dump(2) + "\n");
    os << report.dump(2) << '\n';
    return ok;
  }
};

// ---------------------------------------------------------------- mix

struct Mix {
  std::string speech, noise, out, noise_out, snr, format = "32f";

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("mix", "Mix noise into own voice at a target outer-microphone SNR");
    s.bind(app, app->add_option("--speech", speech, "Own-voice WAV (ch0 outer, ch1 in-ear)"), "mix", "speech", speech);
    s.bind(app, app->add_option("--noise", noise, "Noise WAV with the same channel layout"), "mix", "noise", noise);
    s.bind(app, app->add_option("--snr", snr, "Target SNR in dB")->allow_extra_args(false), "mix", "snr", snr);
    s.bind(app, app->add_option("--out", out, "Output mixture WAV"), "mix", "out", out);
    s.bind(app, app->add_option("--noise-out", noise_out, "Optional output of the scaled noise"), "mix", "noise_out",
           noise_out);
    s.bind(app, app->add_option("--format", format, "16 | 24 | 32 | 32f"), "mix", "format", format);
  }

  int run(const Globals& g, const Settings& settings, std::ostream& os) const {
    require_set(speech, "--speech");
    require_set(noise, "--noise");
    require_set(out, "--out");
    require_set(snr, "--snr");
    const double snr_db = parse_double(snr, "--snr");
    const auto sample_format = parse_sample_format(format);
    const auto own = load_wav(speech);
    const auto n = load_wav(noise);
    require(own.channel_count() == n.channel_count(), Errc::mismatch, "speech and noise channel counts differ");
    const auto result = mix_at_snr(own, n, snr_db, g.seed);
    const auto written = save_wav(result.mixture, out, sample_format);
    if (!noise_out.empty()) save_wav(result.scaled_noise, noise_out, sample_format);

    auto report = base_report("mix", settings);
    report["target_snr_db"] = snr_db;
    report["achieved_snr_db"] = result.achieved_snr_db;
    report["gain"] = result.gain;
    report["speech_level_db"] = result.speech_level_db;
    report["noise_level_db"] = result.noise_level_db;
    report["clipped_samples"] = written.clipped_samples;
    report["output"] = out;
    os << report.dump(2) << '\n';
    return ok;
  }
};

// ---------------------------------------------------------------- spatialize

struct Spatialize {
  std::string irs, out, format = "32f";
  std::vector<std::string> sources;
  std::vector<int> directions;
  double diffuse_shift = 0.0;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("spatialize", "Render noise sources through two-channel impulse responses");
    s.bind(app, app->add_option("--irs", irs, "Directory of <azimuth>.wav impulse responses"), "spatialize", "irs", irs);
    s.bind(app, app->add_option("--sources", sources, "Source WAV files, one per direction (or one for all)"),
           "spatialize", "sources", sources);
    s.bind(app, app->add_option("--directions", directions, "Azimuths in degrees"), "spatialize", "directions",
           directions);
    s.bind(app, app->add_option("--diffuse-shift", diffuse_shift,
                                "With one source and several directions: circular shift per direction (s)"),
           "spatialize", "diffuse_shift", diffuse_shift);
    s.bind(app, app->add_option("--out", out, "Output two-channel WAV"), "spatialize", "out", out);
    s.bind(app, app->add_option("--format", format, "16 | 24 | 32 | 32f"), "spatialize", "format", format);
  }

  int run(const Globals&, const Settings& settings, std::ostream& os) const {
    require_set(irs, "--irs");
    require_set(out, "--out");
    if (sources.empty() || directions.empty()) throw UsageError("--sources and --directions are required");
    if (sources.size() != directions.size() && sources.size() != 1)
      throw UsageError("--sources and --directions differ in count");
    const auto ir_set = IrSet::load_directory(irs);
    std::vector<Waveform> waves;
    if (sources.size() == 1 && directions.size() > 1) {
      const auto src = load_mono(sources.front());
      const std::size_t len = src.frames();
      for (std::size_t d = 0; d < directions.size(); ++d) {
        const auto shift =
            len ? static_cast<std::size_t>(std::llround(diffuse_shift * src.sample_rate * static_cast<double>(d))) % len
                : 0;
        std::vector<double> shifted(len);
        for (std::size_t t = 0; t < len; ++t) shifted[t] = src.channels[0][(t + shift) % len];
        waves.push_back(Waveform::mono(std::move(shifted), src.sample_rate));
      }
    } else {
      for (const auto& path : sources) waves.push_back(load_mono(path));
    }
    const auto rendered = spatialize_noise(waves, ir_set, directions);
    const auto written = save_wav(rendered, out, parse_sample_format(format));

    auto report = base_report("spatialize", settings);
    report["directions"] = directions;
    report["frames"] = rendered.frames();
    report["clipped_samples"] = written.clipped_samples;
    report["output"] = out;
    os << report.dump(2) << '\n';
    return ok;
  }
};

// ---------------------------------------------------------------- build-manifest

struct BuildManifest {
  std::string corpus, models_dir, mode = "generic", split, out;
  std::vector<std::string> models;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("build-manifest", "Assign transfer models and splits to a clean corpus");
    s.bind(app, app->add_option("--corpus", corpus, "Corpus index (JSON lines)"), "build-manifest", "corpus", corpus);
    s.bind(app, app->add_option("--models", models, "Transfer model ids"), "build-manifest", "models", models);
    s.bind(app, app->add_option("--models-dir", models_dir, "Directory whose *.json stems are model ids"),
           "build-manifest", "models_dir", models_dir);
    s.bind(app, app->add_option("--mode", mode, "generic | personalized"), "build-manifest", "mode", mode);
    s.bind(app, app->add_option("--split", split, "train,val,test sizes, e.g. 206,50,50"), "build-manifest", "split",
           split);
    s.bind(app, app->add_option("--out", out, "Output manifest (JSON lines)"), "build-manifest", "out", out);
  }

  int run(const Globals& g, const Settings& settings, std::ostream& os) const {
    require_set(corpus, "--corpus");
    require_set(out, "--out");
    std::vector<std::string> ids = models;
    if (!models_dir.empty()) {
      require(fs::is_directory(models_dir), Errc::io, "models directory not found: " + models_dir);
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(models_dir))
        if (e.path().extension() == ".json") found.push_back(e.path().stem().string());
      std::sort(found.begin(), found.end());
      ids.insert(ids.end(), found.begin(), found.end());
    }
    if (ids.empty()) throw UsageError("no transfer models given (--models or --models-dir)");
    std::optional<SplitSpec> spec;
    if (!split.empty()) {
      const auto parts = split_list(split);
      if (parts.size() != 3) throw UsageError("--split needs three sizes: train,val,test");
      std::array<std::size_t, 3> v{};
      for (std::size_t i = 0; i < 3; ++i) {
        const double d = parse_double(parts[i], "--split");
        if (d < 0 || d != std::floor(d)) throw UsageError("--split sizes must be non-negative integers");
        v[i] = static_cast<std::size_t>(d);
      }
      spec = SplitSpec{v[0], v[1], v[2]};
    }
    auto entries = load_corpus_index(corpus);
    const fs::path base = fs::absolute(corpus).parent_path();
    for (auto& e : entries) {
      e.utterance_path = resolve_path(base, e.utterance_path).lexically_normal().string();
      e.annotation_path = resolve_path(base, e.annotation_path).lexically_normal().string();
    }
    const auto m = build_manifest(entries, ids, parse_mode(mode), spec, g.seed);
    m.save(out);

    std::map<std::string, std::size_t> per_split, per_model;
    for (const auto& row : m.rows) {
      ++per_split[std::string(split_name(row.split))];
      ++per_model[row.transfer_model_id];
    }
    auto report = base_report("build-manifest", settings);
    report["rows"] = m.rows.size();
    report["splits"] = per_split;
    report["models"] = per_model;
    report["manifest"] = out;
    os << report.dump(2) << '\n';
    return ok;
  }
};

// ---------------------------------------------------------------- enhance-mwf

struct EnhanceMwf {
  std::string input, outer, inear, out, format = "32f";
  MwfConfig mwf;
  StftOptions stft;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("enhance-mwf", "Multichannel Wiener filter baseline");
    s.bind(app, app->add_option("--input", input, "Noisy two-channel WAV (ch0 outer, ch1 in-ear)"), "enhance-mwf",
           "input", input);
    s.bind(app, app->add_option("--outer", outer, "Noisy outer WAV (instead of --input)"), "enhance-mwf", "outer", outer);
    s.bind(app, app->add_option("--inear", inear, "Noisy in-ear WAV (instead of --input)"), "enhance-mwf", "inear", inear);
    s.bind(app, app->add_option("--out", out, "Enhanced output WAV"), "enhance-mwf", "out", out);
    s.bind(app, app->add_option("--format", format, "16 | 24 | 32 | 32f"), "enhance-mwf", "format", format);
    s.bind(app, app->add_option("--lambda-y", mwf.lambda_y), "mwf", "lambda_y", mwf.lambda_y);
    s.bind(app, app->add_option("--lambda-v", mwf.lambda_v), "mwf", "lambda_v", mwf.lambda_v);
    s.bind(app, app->add_option("--q", mwf.q, "A-priori speech absence probability"), "mwf", "q", mwf.q);
    s.bind(app, app->add_option("--mu", mwf.mu, "Speech distortion trade-off"), "mwf", "mu", mwf.mu);
    s.bind(app, app->add_option("--init-frames", mwf.init_frames), "mwf", "init_frames", mwf.init_frames);
    s.bind(app, app->add_option("--psd-floor", mwf.psd_floor), "mwf", "psd_floor", mwf.psd_floor);
    stft.add(app, s);
  }

  int run(const Globals&, const Settings& settings, std::ostream& os) const {
    require_set(out, "--out");
    Waveform o, n;
    if (!input.empty()) {
      if (!outer.empty() || !inear.empty()) throw UsageError("use either --input or --outer/--inear");
      const auto w = load_wav(input);
      require(w.channel_count() >= 2, Errc::format, input + ": expected two channels (outer, in-ear)");
      o = select_channel(w, 0);
      n = select_channel(w, 1);
    } else {
      if (outer.empty() || inear.empty()) throw UsageError("--input or both --outer and --inear are required");
      o = load_mono(outer);
      n = load_mono(inear);
    }
    require(o.sample_rate == n.sample_rate && o.frames() == n.frames(), Errc::mismatch,
            "outer and in-ear signals differ in rate or length");
    mwf.validate();
    const auto enhanced = enhance_waveform(o, n, mwf, stft.config());
    const auto written = save_wav(enhanced, out, parse_sample_format(format));

    auto report = base_report("enhance-mwf", settings);
    report["frames"] = enhanced.frames();
    report["clipped_samples"] = written.clipped_samples;
    report["output"] = out;
    os << report.dump(2) << '\n';
    return ok;
  }
};

// ---------------------------------------------------------------- evaluate

struct Evaluate {
  std::string pairs, snrs = "-10,-5,0,5,10", metric = "estoi", out;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("evaluate", "Delta-metric report over an SNR sweep");
    s.bind(app, app->add_option("--pairs", pairs, "CSV: reference,noisy,processed[,snr_db]"), "evaluate", "pairs", pairs);
    s.bind(app, app->add_option("--snrs", snrs, "Comma-separated SNRs in dB"), "evaluate", "snrs", snrs);
    s.bind(app, app->add_option("--metric", metric, "estoi"), "evaluate", "metric", metric);
    s.bind(app, app->add_option("--out", out, "Report JSON"), "evaluate", "out", out);
  }

  struct Row {
    fs::path reference, noisy, processed;
    double snr = 0.0;
    std::size_t line = 0;
  };

  std::vector<Row> read_pairs(std::vector<double>& sweep, std::vector<std::string>& warnings) const {
    std::ifstream in(pairs);
    if (!in) fail(Errc::io, "cannot open pairs file " + pairs);
    const fs::path base = fs::path(pairs).parent_path();
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> col;
    std::vector<Row> rows;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, ',')) fields.push_back(f);
      if (col.empty()) {
        for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
        for (const char* need : {"reference", "noisy", "processed"})
          if (!col.count(need)) fail(Errc::schema, pairs + ": header lacks column '" + need + "'");
        if (!col.count("snr_db") && sweep.size() != 1)
          throw UsageError("pairs CSV needs an snr_db column for a multi-SNR sweep");
        continue;
      }
      if (fields.size() < col.size())
        fail(Errc::schema, pairs + " line " + std::to_string(line_no) + ": expected " + std::to_string(col.size()) +
                               " fields");
      Row r;
      r.line = line_no;
      r.reference = resolve_path(base, fields[col["reference"]]);
      r.noisy = resolve_path(base, fields[col["noisy"]]);
      r.processed = resolve_path(base, fields[col["processed"]]);
      if (col.count("snr_db")) {
        try {
          r.snr = parse_double(fields[col["snr_db"]], "snr_db");
        } catch (const UsageError&) {
          fail(Errc::schema, pairs + " line " + std::to_string(line_no) + ": invalid snr_db");
        }
      } else {
        r.snr = sweep.front();
      }
      if (std::find(sweep.begin(), sweep.end(), r.snr) == sweep.end()) {
        std::ostringstream w;
        w << "line " << line_no << ": SNR " << r.snr << " dB not in the sweep, skipped";
        warnings.push_back(w.str());
        continue;
      }
      rows.push_back(std::move(r));
    }
    if (col.empty()) fail(Errc::schema, pairs + ": empty pairs file");
    return rows;
  }

  int run(const Globals& g, const Settings& settings, std::ostream& os) const {
    require_set(pairs, "--pairs");
    require_set(out, "--out");
    if (metric != "estoi") throw UsageError("unsupported metric '" + metric + "' (native metrics: estoi)");
    std::vector<double> sweep;
    for (const auto& s : split_list(snrs)) sweep.push_back(parse_double(s, "--snrs"));
    if (sweep.empty()) throw UsageError("--snrs is empty");

    std::vector<std::string> warnings;
    const auto rows = read_pairs(sweep, warnings);

    std::vector<std::string> missing;
    std::vector<bool> usable(rows.size(), true);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (const auto* p : {&rows[i].reference, &rows[i].noisy, &rows[i].processed})
        if (!fs::exists(*p)) {
          missing.push_back(p->string());
          usable[i] = false;
        }

    struct Score {
      double baseline = 0.0, processed = 0.0;
    };
    std::vector<Score> scores(rows.size());
    auto errors = parallel_for(rows.size(), g.jobs, [&](std::size_t i) {
      if (!usable[i]) return;
      const auto ref = load_mono(rows[i].reference);
      const auto noisy = load_mono(rows[i].noisy);
      const auto proc = load_mono(rows[i].processed);
      scores[i].baseline = estoi(ref, noisy);
      scores[i].processed = estoi(ref, proc);
    });

    json row_json = json::array();
    json failures = json::array();
    std::map<double, std::vector<std::size_t>> by_snr;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      json r = {{"line", rows[i].line},
                {"reference", rows[i].reference.string()},
                {"noisy", rows[i].noisy.string()},
                {"processed", rows[i].processed.string()},
                {"snr_db", rows[i].snr}};
      if (!usable[i]) {
        r["status"] = "missing_files";
      } else if (errors[i]) {
        r["status"] = "error";
        r["error"] = error_text(errors[i]);
        failures.push_back({{"line", rows[i].line}, {"error", error_text(errors[i])}});
      } else {
        r["status"] = "ok";
        r["baseline"] = scores[i].baseline;
        r["processed_score"] = scores[i].processed;
        r["delta"] = scores[i].processed - scores[i].baseline;
        by_snr[rows[i].snr].push_back(i);
      }
      row_json.push_back(std::move(r));
    }

    json per_snr = json::array();
    double sum_delta = 0.0;
    std::size_t covered = 0;
    bool partial = !missing.empty() || !failures.empty();
    for (double snr : sweep) {
      const auto it = by_snr.find(snr);
      if (it == by_snr.end()) {
        per_snr.push_back({{"snr_db", snr}, {"count", 0}, {"mean_delta", nullptr}});
        partial = true;
        continue;
      }
      double b = 0.0, p = 0.0;
      for (auto i : it->second) {
        b += scores[i].baseline;
        p += scores[i].processed;
      }
      const double n = static_cast<double>(it->second.size());
      per_snr.push_back({{"snr_db", snr},
                         {"count", it->second.size()},
                         {"mean_baseline", b / n},
                         {"mean_processed", p / n},
                         {"mean_delta", (p - b) / n}});
      sum_delta += (p - b) / n;
      ++covered;
    }

    auto report = base_report("evaluate", settings);
    report["metric"] = metric;
    report["per_snr"] = per_snr;
    report["mean_delta"] = covered ? json(sum_delta / static_cast<double>(covered)) : json(nullptr);
    report["partial"] = partial;
    report["missing_files"] = missing;
    report["failures"] = failures;
    report["warnings"] = warnings;
    report["rows"] = row_json;
    write_text(out, report.dump(2) + "\n");
    os << report.dump(2) << '\n';
    return partial ? data_error : ok;
  }
};

// ---------------------------------------------------------------- analyze

struct Analyze {
  std::string ratings, predictions, metadata, out, text, rule = "reference_min_90_all_screens", group_by = "talker",
                                                          statistic = "mean", scales;
  double alpha = 0.05;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("analyze", "Listening-test statistics and metric prediction performance");
    s.bind(app, app->add_option("--ratings", ratings, "CSV: participant,screen_id,condition,rating"), "analyze",
           "ratings", ratings);
    s.bind(app, app->add_option("--predictions", predictions, "Directory of <metric>.csv prediction files"),
           "analyze", "predictions", predictions);
    s.bind(app, app->add_option("--metadata", metadata, "Screen metadata JSON (e.g. the service's export metadata)"),
           "analyze", "metadata", metadata);
    s.bind(app, app->add_option("--out", out, "Report JSON"), "analyze", "out", out);
    s.bind(app, app->add_option("--text", text, "Plain-text tables (default: <out> with .txt)"), "analyze", "text", text);
    s.bind(app, app->add_option("--screening-rule", rule, "reference_min_90_all_screens | reference_top_ranked"),
           "analyze", "screening_rule", rule);
    s.bind(app, app->add_option("--group-by", group_by, "Screen factor with one Friedman test per level"), "analyze",
           "group_by", group_by);
    s.bind(app, app->add_option("--statistic", statistic, "mean | median over screens"), "analyze", "statistic",
           statistic);
    s.bind(app, app->add_option("--scales", scales, "Metric scale registry JSON"), "analyze", "scales", scales);
    s.bind(app, app->add_option("--alpha", alpha, "Significance level"), "analyze", "alpha", alpha);
  }

  int run(const Globals& g, const Settings& settings, std::ostream& os) const {
    require_set(ratings, "--ratings");
    require_set(out, "--out");
    AnalysisOptions options;
    options.rule = parse_screening_rule(rule);
    options.group_factor = group_by;
    options.statistic = parse_statistic(statistic);
    options.alpha = alpha;

    const auto records = load_ratings_csv(ratings);
    const auto meta = metadata.empty() ? ScreenMetadata{} : load_screen_metadata(metadata);
    const auto registry = scales.empty() ? ScaleRegistry::defaults() : ScaleRegistry::load_json(scales);
    std::vector<std::string> ingest_warnings;
    std::vector<MetricPredictions> preds;
    if (!predictions.empty()) preds = load_prediction_dir(predictions, registry, &ingest_warnings);

    auto report = run_analysis(records, meta, preds, options);
    report.warnings.insert(report.warnings.begin(), ingest_warnings.begin(), ingest_warnings.end());
    auto j = report_to_json(report);
    j["command"] = "analyze";
    j["config"] = settings.resolved();
    write_text(out, j.dump(2) + "\n");
    const fs::path text_path = text.empty() ? fs::path(out).replace_extension(".txt") : fs::path(text);
    const auto rendered = render_report_text(report);
    write_text(text_path, rendered);
    if (!g.quiet) os << rendered;
    return ok;
  }
};

// ---------------------------------------------------------------- serve

struct Serve {
  std::vector<std::string> experiments;
  std::string data_dir, host = "127.0.0.1", static_dir;
  int port = 8080;

  void add(CLI::App& root, Settings& s) {
    auto* app = root.add_subcommand("serve", "Run the listening-experiment HTTP service");
    s.bind(app, app->add_option("--experiment", experiments, "Experiment config JSON (repeatable)"), "serve",
           "experiment", experiments);
    s.bind(app, app->add_option("--data-dir", data_dir, "Session record directory"), "serve", "data_dir", data_dir);
    s.bind(app, app->add_option("--port", port, "TCP port (0 picks a free one)"), "serve", "port", port);
    s.bind(app, app->add_option("--host", host, "Bind address"), "serve", "host", host);
    s.bind(app, app->add_option("--static-dir", static_dir, "Optional directory served under /ui"), "serve",
           "static_dir", static_dir);
  }

  int run(const Globals&, const Settings&, std::ostream& os, std::ostream& err) const {
    if (experiments.empty()) throw UsageError("--experiment is required");
    require_set(data_dir, "--data-dir");
    std::vector<ExperimentConfig> configs;
    for (const auto& path : experiments) configs.push_back(ExperimentConfig::load(path));
    ExperimentService service(std::move(configs), data_dir);
    for (const auto& w : service.replay_warnings()) err << "warning: " << w << '\n';

    httplib::Server server;
    register_routes(server, service);
    if (!static_dir.empty() && !server.set_mount_point("/ui", static_dir))
      fail(Errc::io, "static directory not found: " + static_dir);

    int bound = port;
    if (port == 0)
      bound = server.bind_to_any_port(host);
    else if (!server.bind_to_port(host, port))
      bound = -1;
    if (bound < 0) fail(Errc::io, "cannot bind " + host + ":" + std::to_string(port));

    // SIGINT/SIGTERM stop the server from a watcher thread.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::thread([&server, set] {
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
    }).detach();

    os << json{{"listening", "http://" + host + ":" + std::to_string(bound)}, {"port", bound}}.dump() << std::endl;
    server.listen_after_bind();
    return ok;
  }
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return usage;
    case Errc::numeric: return numeric_failure;
    default: return data_error;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ovr: own-voice reconstruction toolkit", "ovr"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "ovr 0.3.0");

  Settings settings;
  Globals g;
  app.add_option("--config", g.config, "JSON config; command-line flags take precedence");
  settings.bind(nullptr, app.add_option("--seed", g.seed, "Random seed"), "", "seed", g.seed);
  settings.bind(nullptr, app.add_option("--jobs", g.jobs, "Worker threads for batch commands"), "", "jobs", g.jobs);
  app.add_flag("--quiet", g.quiet, "Suppress report output on stdout");

  EstimateRtf estimate;
  Simulate simulate;
  Mix mix;
  Spatialize spatialize;
  BuildManifest build;
  EnhanceMwf enhance;
  Evaluate evaluate;
  Analyze analyze;
  Serve serve;
  estimate.add(app, settings);
  simulate.add(app, settings);
  mix.add(app, settings);
  spatialize.add(app, settings);
  build.add(app, settings);
  enhance.add(app, settings);
  evaluate.add(app, settings);
  analyze.add(app, settings);
  serve.add(app, settings);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return usage;
  }

  std::ostringstream sink;
  std::ostream& report_out = g.quiet ? static_cast<std::ostream&>(sink) : out;
  try {
    if (!g.config.empty()) settings.load(g.config);
    settings.resolve();
    if (g.jobs == 0) g.jobs = std::max(1u, std::thread::hardware_concurrency());
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "estimate-rtf") return estimate.run(g, settings, report_out);
    if (name == "simulate") return simulate.run(g, settings, report_out);
    if (name == "mix") return mix.run(g, settings, report_out);
    if (name == "spatialize") return spatialize.run(g, settings, report_out);
    if (name == "build-manifest") return build.run(g, settings, report_out);
    if (name == "enhance-mwf") return enhance.run(g, settings, report_out);
    if (name == "evaluate") return evaluate.run(g, settings, report_out);
    if (name == "analyze") return analyze.run(g, settings, out);
    if (name == "serve") return serve.run(g, settings, out, err);
    err << "error: unknown command " << name << '\n';
    return usage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return usage;
  } catch (const Error& e) {
    err << "error (" << errc_name(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return data_error;
  }
}

int run(const std::vector<std::string>& args) { return run(args, std::cout, std::cerr); }

}  // namespace ovr::cli
