#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "ovr/analysis_report.hpp"
#include "ovr/annotation.hpp"
#include "ovr/augmentation.hpp"
#include "ovr/estoi.hpp"
#include "ovr/level.hpp"
#include "ovr/mwf.hpp"
#include "ovr/resample.hpp"
#include "ovr/rtf.hpp"
#include "ovr/stats.hpp"
#include "ovr/stft.hpp"
#include "ovr/wav.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return std::vector<double>(a.data(), a.data() + a.size());
}

Array from_vector(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// 1-D -> mono, 2-D -> (channels, frames).
ovr::Waveform to_waveform(const Array& a, int rate) {
  ovr::Waveform w;
  w.sample_rate = rate;
  if (a.ndim() == 1) {
    w.channels.push_back(to_vector(a));
  } else if (a.ndim() == 2) {
    const auto frames = static_cast<std::size_t>(a.shape(1));
    for (py::ssize_t c = 0; c < a.shape(0); ++c)
      w.channels.emplace_back(a.data(c, 0), a.data(c, 0) + frames);
  } else {
    throw std::invalid_argument("expected a 1-D or (channels, frames) array");
  }
  w.validate();
  return w;
}

Array from_waveform(const ovr::Waveform& w) {
  Array out({static_cast<py::ssize_t>(w.channel_count()), static_cast<py::ssize_t>(w.frames())});
  for (std::size_t c = 0; c < w.channel_count(); ++c)
    std::copy(w.channels[c].begin(), w.channels[c].end(), out.mutable_data(static_cast<py::ssize_t>(c), 0));
  return out;
}

ovr::StftConfig make_stft(std::size_t window_length, std::size_t hop, std::size_t fft_size, const std::string& window) {
  ovr::StftConfig c{window_length, hop, fft_size, ovr::parse_window(window)};
  c.validate();
  return c;
}

ComplexArray spectrogram_values(const ovr::Spectrogram& s) {
  ComplexArray out({static_cast<py::ssize_t>(s.num_frames), static_cast<py::ssize_t>(s.bins())});
  std::copy(s.values.begin(), s.values.end(), out.mutable_data());
  return out;
}

ovr::PhonemeAnnotation to_annotation(const std::vector<std::tuple<double, double, std::string>>& intervals) {
  std::vector<ovr::PhonemeInterval> v;
  for (const auto& [start, end, label] : intervals) v.push_back({start, end, label});
  return ovr::PhonemeAnnotation(std::move(v));
}

ComplexArray complex_array(const ovr::ComplexVector& v) {
  ComplexArray out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<std::vector<double>> to_rows(const Array& m) {
  if (m.ndim() != 2) throw std::invalid_argument("expected a (subjects, conditions) array");
  std::vector<std::vector<double>> rows;
  for (py::ssize_t i = 0; i < m.shape(0); ++i) rows.emplace_back(m.data(i, 0), m.data(i, 0) + m.shape(1));
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Own-voice reconstruction toolkit: signal processing, augmentation, MWF, ESTOI and statistics";

  static py::exception<ovr::Error> ovr_error(m, "OvrError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ovr::Error& e) {
      py::set_error(ovr_error, (std::string(ovr::errc_name(e.code())) + ": " + e.what()).c_str());
    }
  });

  // signal core
  m.def(
      "load_wav",
      [](const std::filesystem::path& path) {
        const auto w = ovr::load_wav(path);
        return py::make_tuple(from_waveform(w), w.sample_rate);
      },
      py::arg("path"), "Returns ((channels, frames) float64 array, sample_rate).");
  m.def(
      "save_wav",
      [](const std::filesystem::path& path, const Array& samples, int rate, const std::string& format) {
        return ovr::save_wav(to_waveform(samples, rate), path, ovr::parse_sample_format(format)).clipped_samples;
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"), py::arg("format") = "32f",
      "Writes a WAV file; returns the number of clipped samples.");
  m.def(
      "resample", [](const Array& x, int src, int dst) { return from_vector(ovr::resample(to_vector(x), src, dst)); },
      py::arg("signal"), py::arg("source_rate"), py::arg("target_rate"));
  m.def(
      "stft",
      [](const Array& x, int rate, std::size_t window_length, std::size_t hop, std::size_t fft_size,
         const std::string& window) {
        const auto v = to_vector(x);
        return spectrogram_values(ovr::stft(v, rate, make_stft(window_length, hop, fft_size, window)));
      },
      py::arg("signal"), py::arg("sample_rate"), py::arg("window_length") = 512, py::arg("hop") = 256,
      py::arg("fft_size") = 512, py::arg("window") = "sqrt_hann", "Complex (frames, bins) STFT.");
  m.def(
      "istft",
      [](const ComplexArray& values, int rate, std::size_t length, std::size_t window_length, std::size_t hop,
         std::size_t fft_size, const std::string& window) {
        const auto cfg = make_stft(window_length, hop, fft_size, window);
        if (values.ndim() != 2 || static_cast<std::size_t>(values.shape(1)) != cfg.bins())
          throw std::invalid_argument("expected a (frames, fft_size/2+1) array");
        ovr::Spectrogram s(cfg, rate, static_cast<std::size_t>(values.shape(0)), length);
        std::copy(values.data(), values.data() + values.size(), s.values.begin());
        return from_vector(ovr::istft_samples(s));
      },
      py::arg("values"), py::arg("sample_rate"), py::arg("length"), py::arg("window_length") = 512,
      py::arg("hop") = 256, py::arg("fft_size") = 512, py::arg("window") = "sqrt_hann");
  m.def(
      "active_level_db", [](const Array& x, int rate) { return ovr::active_level_db(to_vector(x), rate); },
      py::arg("signal"), py::arg("sample_rate"));

  // rtf model
  py::class_<ovr::TransferModel>(m, "TransferModel")
      .def_readonly("talker_id", &ovr::TransferModel::talker_id)
      .def_readonly("sample_rate", &ovr::TransferModel::sample_rate)
      .def_property_readonly("global_rtf", [](const ovr::TransferModel& t) { return complex_array(t.global.rtf); })
      .def_property_readonly("phonemes",
                             [](const ovr::TransferModel& t) {
                               py::dict d;
                               for (const auto& [label, e] : t.phonemes)
                                 d[py::str(label)] = py::make_tuple(complex_array(e.rtf), e.frames);
                               return d;
                             })
      .def("lookup", [](const ovr::TransferModel& t, const std::string& p) { return complex_array(t.lookup(p)); })
      .def("to_json", &ovr::model_to_json)
      .def_static("from_json", [](const std::string& text) { return ovr::model_from_json(text); })
      .def("save", [](const ovr::TransferModel& t, const std::filesystem::path& p) { ovr::save_model(t, p); })
      .def_static("load", [](const std::filesystem::path& p) { return ovr::load_model(p); });

  m.def(
      "estimate_rtfs",
      [](const Array& outer, const Array& inear, int rate, const std::vector<std::tuple<double, double, std::string>>& ann,
         const std::string& talker, std::size_t min_frames, std::size_t window_length, std::size_t hop,
         std::size_t fft_size, const std::string& window) {
        const auto cfg = make_stft(window_length, hop, fft_size, window);
        const auto o = to_vector(outer), i = to_vector(inear);
        ovr::RtfOptions opts;
        opts.min_frames = min_frames;
        return ovr::estimate_rtfs(ovr::stft(o, rate, cfg), ovr::stft(i, rate, cfg), to_annotation(ann), opts, talker);
      },
      py::arg("outer"), py::arg("inear"), py::arg("sample_rate"), py::arg("annotation"), py::arg("talker_id") = "",
      py::arg("min_frames") = 10, py::arg("window_length") = 512, py::arg("hop") = 256, py::arg("fft_size") = 512,
      py::arg("window") = "sqrt_hann", "annotation: list of (start_s, end_s, label).");

  // augmentation
  m.def(
      "simulate_inear",
      [](const Array& clean, int rate, const std::vector<std::tuple<double, double, std::string>>& ann,
         const ovr::TransferModel& model, double alpha) {
        return from_vector(ovr::simulate_inear(to_waveform(clean, rate), to_annotation(ann), model, alpha).channels[0]);
      },
      py::arg("clean"), py::arg("sample_rate"), py::arg("annotation"), py::arg("model"),
      py::arg("alpha") = ovr::kDefaultSmoothing);
  m.def(
      "mix_at_snr",
      [](const Array& own, const Array& noise, int rate, double snr_db, std::uint64_t seed) {
        const auto r = ovr::mix_at_snr(to_waveform(own, rate), to_waveform(noise, rate), snr_db, seed);
        py::dict d;
        d["mixture"] = from_waveform(r.mixture);
        d["scaled_noise"] = from_waveform(r.scaled_noise);
        d["gain"] = r.gain;
        d["speech_level_db"] = r.speech_level_db;
        d["noise_level_db"] = r.noise_level_db;
        d["achieved_snr_db"] = r.achieved_snr_db;
        return d;
      },
      py::arg("own"), py::arg("noise"), py::arg("sample_rate"), py::arg("snr_db"), py::arg("seed") = 0);

  // mwf
  m.def(
      "mwf_enhance",
      [](const Array& outer, const Array& inear, int rate, double lambda_y, double lambda_v, double q, double mu) {
        ovr::MwfConfig cfg;
        cfg.lambda_y = lambda_y;
        cfg.lambda_v = lambda_v;
        cfg.q = q;
        cfg.mu = mu;
        return from_vector(
            ovr::enhance_waveform(to_waveform(outer, rate), to_waveform(inear, rate), cfg).channels[0]);
      },
      py::arg("outer"), py::arg("inear"), py::arg("sample_rate"), py::arg("lambda_y") = 0.92,
      py::arg("lambda_v") = 0.95, py::arg("q") = 0.5, py::arg("mu") = 1.0);

  // metrics
  m.def(
      "estoi", [](const Array& ref, const Array& test, int rate) { return ovr::estoi(to_vector(ref), to_vector(test), rate); },
      py::arg("reference"), py::arg("test"), py::arg("sample_rate"));
  m.def(
      "estoi_improvement",
      [](const Array& ref, const Array& noisy, const Array& processed, int rate) {
        return ovr::estoi_improvement(to_waveform(ref, rate), to_waveform(noisy, rate), to_waveform(processed, rate));
      },
      py::arg("reference"), py::arg("noisy"), py::arg("processed"), py::arg("sample_rate"));

  // analysis
  m.def(
      "friedman_test",
      [](const Array& matrix) {
        const auto r = ovr::friedman_test(to_rows(matrix));
        py::dict d;
        d["chi2"] = r.chi2;
        d["df"] = r.df;
        d["p"] = r.p;
        return d;
      },
      py::arg("matrix"), "matrix: (subjects, conditions).");
  m.def(
      "wilcoxon_signed_rank",
      [](const Array& a, const Array& b) {
        const auto r = ovr::wilcoxon_signed_rank(to_vector(a), to_vector(b));
        py::dict d;
        d["w_plus"] = r.w_plus;
        d["p"] = r.p;
        d["exact"] = r.exact;
        d["nonzero"] = r.nonzero;
        return d;
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "bonferroni", [](const std::vector<double>& p, std::size_t count) { return ovr::bonferroni(p, count); },
      py::arg("pvalues"), py::arg("comparisons"));
  m.def("format_pvalue", &ovr::format_pvalue, py::arg("p"));
  m.def(
      "pearson", [](const Array& x, const Array& y) { return ovr::pearson(to_vector(x), to_vector(y)); }, py::arg("x"),
      py::arg("y"));
  m.def(
      "spearman", [](const Array& x, const Array& y) { return ovr::spearman(to_vector(x), to_vector(y)); },
      py::arg("x"), py::arg("y"));
  m.def(
      "rmse_scaled",
      [](const Array& pred, const Array& ratings, double lo, double hi, bool higher_is_better) {
        return ovr::rmse_scaled(to_vector(pred), to_vector(ratings), {lo, hi, higher_is_better}).rmse;
      },
      py::arg("predictions"), py::arg("ratings"), py::arg("scale_min"), py::arg("scale_max"),
      py::arg("higher_is_better") = true);
  m.def(
      "rmse_poly3", [](const Array& pred, const Array& ratings) { return ovr::rmse_poly3(to_vector(pred), to_vector(ratings)); },
      py::arg("predictions"), py::arg("ratings"));
  m.def(
      "fit_cubic", [](const Array& x, const Array& y) { return ovr::fit_cubic(to_vector(x), to_vector(y)); },
      py::arg("x"), py::arg("y"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return ovr::cli::run(args);
      },
      py::arg("args"), "Runs the ovr command line; returns its exit code.");
}
