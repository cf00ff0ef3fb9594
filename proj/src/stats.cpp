#include "ovr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "ovr/error.hpp"

namespace ovr {

namespace {

void require_paired(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* what) {
  require(a.size() == b.size(), Errc::invalid_argument, std::string(what) + ": inputs differ in length");
  require(a.size() >= min_n, Errc::invalid_argument,
          std::string(what) + ": needs at least " + std::to_string(min_n) + " pairs");
}

// Sum over tie groups of (t^3 - t).
double tie_term(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const double t = static_cast<double>(j - i);
    sum += t * t * t - t;
    i = j;
  }
  return sum;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double chi2_sf(double x, double df) {
  require(df > 0, Errc::invalid_argument, "chi-square needs df > 0");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

FriedmanResult friedman_test(std::span<const std::vector<double>> rows) {
  const std::size_t n = rows.size();
  require(n >= 2, Errc::invalid_argument, "Friedman test needs at least 2 subjects");
  const std::size_t c = rows.front().size();
  require(c >= 3, Errc::invalid_argument, "Friedman test needs at least 3 conditions");

  std::vector<double> rank_sums(c, 0.0);
  double ties = 0.0;
  for (const auto& row : rows) {
    require(row.size() == c, Errc::invalid_argument, "Friedman test: ragged rating matrix");
    for (double v : row) require(std::isfinite(v), Errc::invalid_argument, "Friedman test: non-finite value");
    const auto r = midranks(row);
    for (std::size_t j = 0; j < c; ++j) rank_sums[j] += r[j];
    ties += tie_term(row);
  }

  const double nd = static_cast<double>(n), cd = static_cast<double>(c);
  FriedmanResult out;
  out.subjects = n;
  out.conditions = c;
  out.df = static_cast<int>(c - 1);
  const double denom = 1.0 - ties / (nd * cd * (cd * cd - 1.0));
  if (denom <= 1e-12) return out;  // every row fully tied

  double sum_sq = 0.0;
  for (double r : rank_sums) sum_sq += r * r;
  const double chi2 = 12.0 / (nd * cd * (cd + 1.0)) * sum_sq - 3.0 * nd * (cd + 1.0);
  out.chi2 = std::max(0.0, chi2 / denom);
  out.p = chi2_sf(out.chi2, out.df);
  return out;
}

std::vector<std::uint64_t> signed_rank_counts(std::span<const int> doubled_ranks) {
  const int total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0);
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(total) + 1, 0);
  counts[0] = 1;
  int reach = 0;
  for (int r : doubled_ranks) {
    for (int s = reach; s >= 0; --s)
      if (counts[s]) counts[s + r] += counts[s];
    reach += r;
  }
  return counts;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, Alternative alternative,
                                    std::size_t exact_limit) {
  require_paired(a, b, 5, "Wilcoxon test");
  require(exact_limit <= 60, Errc::invalid_argument, "exact Wilcoxon limited to 60 differences");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    require(std::isfinite(d), Errc::invalid_argument, "Wilcoxon test: non-finite value");
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult out;
  out.nonzero = diffs.size();
  if (diffs.empty()) return out;

  std::vector<double> abs_d(diffs.size());
  std::transform(diffs.begin(), diffs.end(), abs_d.begin(), [](double d) { return std::fabs(d); });
  const auto ranks = midranks(abs_d);
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0) out.w_plus += ranks[i];

  const std::size_t m = diffs.size();
  if (m <= exact_limit) {
    std::vector<int> doubled(m);
    for (std::size_t i = 0; i < m; ++i) doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
    const auto counts = signed_rank_counts(doubled);
    const auto w2 = static_cast<std::size_t>(std::lround(2.0 * out.w_plus));
    std::uint64_t upper = 0, lower = 0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      if (s >= w2) upper += counts[s];
      if (s <= w2) lower += counts[s];
    }
    const double total = std::ldexp(1.0, static_cast<int>(m));
    const double p_upper = static_cast<double>(upper) / total;
    const double p_lower = static_cast<double>(lower) / total;
    switch (alternative) {
      case Alternative::greater: out.p = p_upper; break;
      case Alternative::less: out.p = p_lower; break;
      case Alternative::two_sided: out.p = std::min(1.0, 2.0 * std::min(p_upper, p_lower)); break;
    }
    return out;
  }

  out.exact = false;
  const double md = static_cast<double>(m);
  const double mu = md * (md + 1.0) / 4.0;
  const double var = md * (md + 1.0) * (2.0 * md + 1.0) / 24.0 - tie_term(abs_d) / 48.0;
  const double sd = std::sqrt(var);
  const double dev = out.w_plus - mu;
  switch (alternative) {
    case Alternative::greater: out.p = normal_sf((dev - 0.5) / sd); break;
    case Alternative::less: out.p = normal_sf((-dev - 0.5) / sd); break;
    case Alternative::two_sided:
      out.p = std::min(1.0, 2.0 * normal_sf(std::max(0.0, std::fabs(dev) - 0.5) / sd));
      break;
  }
  return out;
}

std::vector<double> bonferroni(std::span<const double> pvals, std::size_t m) {
  require(m >= pvals.size(), Errc::invalid_argument, "Bonferroni: m smaller than the number of p-values");
  std::vector<double> out(pvals.size());
  for (std::size_t i = 0; i < pvals.size(); ++i) {
    require(pvals[i] >= 0.0 && pvals[i] <= 1.0, Errc::invalid_argument, "Bonferroni: p-value outside [0, 1]");
    out[i] = std::min(1.0, static_cast<double>(m) * pvals[i]);
  }
  return out;
}

std::string format_pvalue(double p) {
  if (p >= 0.9995) return ">0.999";
  if (p < 0.001) return "<0.001";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.3f", p);
  return buf;
}

double mean(std::span<const double> values) {
  require(!values.empty(), Errc::invalid_argument, "mean of an empty set");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double median(std::vector<double> values) {
  require(!values.empty(), Errc::invalid_argument, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y, 3, "correlation");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(sxx > 0.0 && syy > 0.0, Errc::numeric, "correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y, 3, "correlation");
  const auto rx = midranks(x), ry = midranks(y);
  return pearson(rx, ry);
}

double scale_to_mushra(double value, const MetricScale& scale) {
  require(scale.finite(), Errc::invalid_argument, "no finite scale for an open-ended metric");
  require(scale.min < scale.max, Errc::invalid_argument, "metric scale needs min < max");
  const double t = scale.higher_is_better ? (value - scale.min) : (scale.max - value);
  return std::clamp(100.0 * t / (scale.max - scale.min), 0.0, 100.0);
}

ScaledRmse rmse_scaled(std::span<const double> predictions, std::span<const double> ratings,
                       const MetricScale& scale) {
  require_paired(predictions, ratings, 1, "scaled RMSE");
  require(scale.finite(), Errc::invalid_argument, "no finite scale for an open-ended metric");
  ScaledRmse out;
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!scale.contains(predictions[i])) out.clipped.push_back(i);
    const double e = scale_to_mushra(predictions[i], scale) - ratings[i];
    sum += e * e;
  }
  out.rmse = std::sqrt(sum / static_cast<double>(predictions.size()));
  return out;
}

std::array<double, 4> fit_cubic(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y, 5, "cubic fit");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = x[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0;
    design(i, 1) = v;
    design(i, 2) = v * v;
    design(i, 3) = v * v * v;
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  Eigen::Vector4d norms;
  for (int j = 0; j < 4; ++j) {
    norms(j) = design.col(j).norm();
    require(norms(j) > 0.0, Errc::numeric, "cubic fit: rank-deficient design");
    design.col(j) /= norms(j);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-12);
  require(qr.rank() == 4, Errc::numeric, "cubic fit: rank-deficient design (fewer than 4 distinct predictions)");
  const Eigen::VectorXd scaled = qr.solve(rhs);
  std::array<double, 4> coeffs{};
  for (int j = 0; j < 4; ++j) coeffs[static_cast<std::size_t>(j)] = scaled(j) / norms(j);
  return coeffs;
}

double rmse_poly3(std::span<const double> predictions, std::span<const double> ratings) {
  const auto c = fit_cubic(predictions, ratings);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double v = predictions[i];
    const double e = c[0] + v * (c[1] + v * (c[2] + v * c[3])) - ratings[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

}  // namespace ovr
