#include "ovr/analysis_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "ovr/error.hpp"

namespace ovr {

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = true) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

std::string condition_of(const std::string& stimulus) {
  auto pos = stimulus.rfind('/');
  return pos == std::string::npos ? std::string() : stimulus.substr(pos + 1);
}

GroupAnalysis analyze_group(const std::string& label, const std::vector<RatingRecord>& records,
                            const ScreenMetadata& metadata, const AggregateSpec& spec, const AnalysisOptions& options) {
  GroupAnalysis g;
  g.label = label;
  g.matrix = aggregate_ratings(records, metadata, spec);
  const std::size_t n = g.matrix.subjects.size(), c = g.matrix.conditions.size();

  if (n >= 2 && c >= 3)
    g.friedman = friedman_test(g.matrix.values);
  else
    g.notes.push_back("Friedman test skipped: needs at least 2 subjects and 3 conditions (have " +
                      std::to_string(n) + " x " + std::to_string(c) + ")");

  if (n < 5) {
    g.notes.push_back("pairwise Wilcoxon tests skipped: needs at least 5 subjects (have " + std::to_string(n) + ")");
    return g;
  }
  std::vector<double> raw;
  for (std::size_t i = 1; i < c; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const auto a = g.matrix.column(i), b = g.matrix.column(j);
      const auto w = wilcoxon_signed_rank(a, b, Alternative::two_sided, options.exact_limit);
      PairwiseComparison pc;
      pc.a = g.matrix.conditions[i];
      pc.b = g.matrix.conditions[j];
      pc.w_plus = w.w_plus;
      pc.p_raw = w.p;
      pc.exact = w.exact;
      g.pairwise.push_back(pc);
      raw.push_back(w.p);
    }
  }
  const auto adjusted = bonferroni(raw, raw.size());
  for (std::size_t k = 0; k < adjusted.size(); ++k) {
    g.pairwise[k].p_adjusted = adjusted[k];
    g.pairwise[k].significant = adjusted[k] < options.alpha;
  }
  return g;
}

json matrix_json(const RatingMatrix& m) {
  json averaged = json::object();
  for (const auto& [factor, levels] : m.averaged_over) averaged[factor] = levels;
  return {{"subjects", m.subjects},
          {"conditions", m.conditions},
          {"values", m.values},
          {"screens", m.screens},
          {"averaged_over", averaged},
          {"statistic", m.statistic == Statistic::mean ? "mean" : "median"}};
}

}  // namespace

std::vector<MetricPredictions> load_prediction_dir(const std::filesystem::path& dir, const ScaleRegistry& scales,
                                                   std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), Errc::io, "predictions directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<MetricPredictions> out;
  for (const auto& file : files) {
    const std::string name = canonical_metric_name(file.stem().string());
    const auto scale = scales.find(name);
    require(scale.has_value(), Errc::schema,
            "no scale registered for metric '" + name + "' (" + file.string() + "); add it to the scale registry");
    auto ingested = ingest_predictions(file, name, *scale);
    if (warnings)
      for (auto& w : ingested.warnings) warnings->push_back(file.filename().string() + ": " + w);
    out.push_back({name, *scale, std::move(ingested.records)});
  }
  return out;
}

MetricAnalysis analyze_metric(const MetricPredictions& predictions, const std::map<std::string, double>& medians) {
  MetricAnalysis m;
  m.metric = predictions.metric;
  m.scale = predictions.scale;
  std::vector<double> x, y;
  std::vector<std::string> ids;
  for (const auto& rec : predictions.records) {
    if (condition_of(rec.stimulus_id) == kHiddenReferenceLabel) continue;
    auto it = medians.find(rec.stimulus_id);
    if (it == medians.end()) {
      m.unmatched.push_back(rec.stimulus_id);
      continue;
    }
    x.push_back(rec.value);
    y.push_back(it->second);
    ids.push_back(rec.stimulus_id);
  }
  m.pairs = x.size();
  auto attempt = [&](const char* what, auto&& fn) {
    try {
      return std::optional<double>(fn());
    } catch (const Error& e) {
      m.notes.push_back(std::string(what) + ": " + e.what());
      return std::optional<double>();
    }
  };
  m.r = attempt("pearson", [&] { return pearson(x, y); });
  m.rho = attempt("spearman", [&] { return spearman(x, y); });
  if (m.scale.finite()) {
    m.rmse = attempt("rmse", [&] {
      const auto s = rmse_scaled(x, y, m.scale);
      for (auto i : s.clipped) m.clipped.push_back(ids[i]);
      return s.rmse;
    });
  } else {
    m.notes.push_back("rmse: no finite scale for an open-ended metric");
  }
  m.rmse3 = attempt("rmse3", [&] { return rmse_poly3(x, y); });
  return m;
}

AnalysisReport run_analysis(const std::vector<RatingRecord>& records, const ScreenMetadata& metadata,
                            const std::vector<MetricPredictions>& predictions, const AnalysisOptions& options) {
  AnalysisReport report;
  report.options = options;
  report.screening = screen_participants(records, options.rule);
  require(!report.screening.kept.empty(), Errc::schema, "every participant was excluded by screening rule " +
                                                            std::string(screening_rule_name(options.rule)));
  const auto kept = filter_participants(records, report.screening.kept);

  std::set<std::string> levels;
  if (!options.group_factor.empty()) {
    std::set<std::string> rated;
    for (const auto& r : kept) rated.insert(r.screen_id);
    for (const auto& screen : rated) {
      auto it = metadata.find(screen);
      if (it == metadata.end()) continue;
      auto f = it->second.find(options.group_factor);
      if (f != it->second.end()) levels.insert(f->second);
    }
    if (levels.empty())
      report.warnings.push_back("grouping factor '" + options.group_factor +
                                "' not present in screen metadata; analysing all screens as one group");
  }

  if (levels.empty()) {
    AggregateSpec spec;
    spec.statistic = options.statistic;
    report.groups.push_back(analyze_group("all", kept, metadata, spec, options));
  } else {
    for (const auto& level : levels) {
      AggregateSpec spec;
      spec.statistic = options.statistic;
      spec.where[options.group_factor] = level;
      report.groups.push_back(analyze_group(options.group_factor + "=" + level, kept, metadata, spec, options));
    }
  }

  const auto medians = stimulus_medians(kept);
  for (const auto& p : predictions) report.metrics.push_back(analyze_metric(p, medians));
  return report;
}

json report_to_json(const AnalysisReport& report) {
  json screening = {{"rule", screening_rule_name(report.screening.rule)},
                    {"kept", report.screening.kept},
                    {"excluded", report.screening.excluded}};
  json groups = json::array();
  for (const auto& g : report.groups) {
    json pairwise = json::array();
    for (const auto& pc : g.pairwise)
      pairwise.push_back({{"a", pc.a},
                          {"b", pc.b},
                          {"w_plus", pc.w_plus},
                          {"p_raw", pc.p_raw},
                          {"p_adjusted", pc.p_adjusted},
                          {"p_rendered", format_pvalue(pc.p_adjusted)},
                          {"exact", pc.exact},
                          {"significant", pc.significant}});
    json friedman = nullptr;
    if (g.friedman)
      friedman = {{"chi2", g.friedman->chi2},
                  {"df", g.friedman->df},
                  {"p", g.friedman->p},
                  {"p_rendered", format_pvalue(g.friedman->p)},
                  {"subjects", g.friedman->subjects},
                  {"conditions", g.friedman->conditions}};
    groups.push_back({{"label", g.label},
                      {"matrix", matrix_json(g.matrix)},
                      {"friedman", friedman},
                      {"pairwise", pairwise},
                      {"comparisons", g.pairwise.size()},
                      {"notes", g.notes}});
  }
  json metrics = json::array();
  for (const auto& m : report.metrics) {
    metrics.push_back({{"metric", m.metric},
                       {"scale",
                        {{"min", m.scale.min},
                         {"max", m.scale.finite() ? json(m.scale.max) : json(nullptr)},
                         {"higher_is_better", m.scale.higher_is_better}}},
                       {"pairs", m.pairs},
                       {"r", optional_number(m.r)},
                       {"rho_s", optional_number(m.rho)},
                       {"rmse", optional_number(m.rmse)},
                       {"rmse3", optional_number(m.rmse3)},
                       {"clipped", m.clipped},
                       {"unmatched", m.unmatched},
                       {"notes", m.notes}});
  }
  return {{"schema_version", kAnalysisSchemaVersion},
          {"options",
           {{"screening_rule", screening_rule_name(report.options.rule)},
            {"group_factor", report.options.group_factor},
            {"statistic", report.options.statistic == Statistic::mean ? "mean" : "median"},
            {"alpha", report.options.alpha},
            {"exact_limit", report.options.exact_limit}}},
          {"screening", screening},
          {"groups", groups},
          {"metrics", metrics},
          {"warnings", report.warnings}};
}

std::string render_pvalue_table(const GroupAnalysis& group, double alpha) {
  const auto& conds = group.matrix.conditions;
  const std::size_t c = conds.size();
  std::size_t label_w = 0, cell_w = 8;
  for (const auto& name : conds) {
    label_w = std::max(label_w, name.size());
    cell_w = std::max(cell_w, name.size());
  }
  std::map<std::pair<std::string, std::string>, const PairwiseComparison*> lookup;
  for (const auto& pc : group.pairwise) lookup[{pc.a, pc.b}] = &pc;

  std::ostringstream out;
  out << pad("", label_w);
  for (std::size_t j = 0; j + 1 < c; ++j) out << "  " << pad(conds[j], cell_w);
  out << '\n';
  for (std::size_t i = 1; i < c; ++i) {
    out << pad(conds[i], label_w);
    for (std::size_t j = 0; j + 1 < c; ++j) {
      std::string cell = "-";
      if (j < i) {
        auto it = lookup.find({conds[i], conds[j]});
        if (it != lookup.end()) {
          cell = format_pvalue(it->second->p_adjusted);
          if (it->second->p_adjusted < alpha) cell += '*';
        }
      }
      out << "  " << pad(cell, cell_w);
    }
    out << '\n';
  }
  return out.str();
}

std::string render_metric_table(const std::vector<MetricAnalysis>& metrics) {
  std::size_t w = 6;
  for (const auto& m : metrics) w = std::max(w, m.metric.size());
  auto cell = [](const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : std::string("-"); };
  std::ostringstream out;
  out << pad("Metric", w) << "  " << pad("r", 6, false) << "  " << pad("rho_S", 6, false) << "  "
      << pad("RMSE", 6, false) << "  " << pad("RMSE3", 6, false) << '\n';
  for (const auto& m : metrics)
    out << pad(m.metric, w) << "  " << pad(cell(m.r, 2), 6, false) << "  " << pad(cell(m.rho, 2), 6, false) << "  "
        << pad(cell(m.rmse, 1), 6, false) << "  " << pad(cell(m.rmse3, 1), 6, false) << '\n';
  return out.str();
}

std::string render_report_text(const AnalysisReport& report) {
  std::ostringstream out;
  out << "Screening (" << screening_rule_name(report.screening.rule) << "): " << report.screening.kept.size()
      << " kept, " << report.screening.excluded.size() << " excluded\n";
  for (const auto& [p, why] : report.screening.excluded) out << "  excluded " << p << ": " << why << '\n';
  for (const auto& g : report.groups) {
    out << "\n[" << g.label << "] " << g.matrix.subjects.size() << " subjects x " << g.matrix.conditions.size()
        << " conditions over " << g.matrix.screens.size() << " screen(s)\n";
    if (g.friedman)
      out << "Friedman chi2(" << g.friedman->df << ") = " << fixed(g.friedman->chi2, 2)
          << ", p = " << format_pvalue(g.friedman->p) << '\n';
    for (const auto& note : g.notes) out << "note: " << note << '\n';
    if (!g.pairwise.empty()) {
      out << "Wilcoxon signed-rank, Bonferroni-corrected (" << g.pairwise.size() << " comparisons):\n";
      out << render_pvalue_table(g, report.options.alpha);
    }
  }
  if (!report.metrics.empty()) out << '\n' << render_metric_table(report.metrics);
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  return out.str();
}

}  // namespace ovr
