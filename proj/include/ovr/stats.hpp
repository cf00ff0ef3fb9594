#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ovr/metric_records.hpp"

namespace ovr {

// Ranks 1..n with ties sharing the mean of their positions.
std::vector<double> midranks(std::span<const double> values);

struct FriedmanResult {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
  std::size_t subjects = 0;
  std::size_t conditions = 0;
};

// rows: one vector per subject, one value per condition. Needs at least two
// subjects and three conditions. An all-tied matrix yields chi2 = 0, p = 1.
FriedmanResult friedman_test(std::span<const std::vector<double>> rows);

// Upper tail of the chi-square distribution.
double chi2_sf(double x, double df);

enum class Alternative { two_sided, greater, less };

struct WilcoxonResult {
  double w_plus = 0.0;       // sum of ranks of positive differences (a - b)
  std::size_t nonzero = 0;   // differences left after dropping zeros
  double p = 1.0;
  bool exact = true;
};

// Paired signed-rank test on a - b (n >= 5). Zero differences are dropped, tied |d|
// share midranks. Exact null distribution (respecting ties) for up to
// exact_limit nonzero differences, otherwise normal approximation with
// tie-corrected variance and continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative = Alternative::two_sided,
                                    std::size_t exact_limit = 25);

// Number of sign assignments whose positive doubled-rank sum equals s, for
// s = 0..sum(doubled_ranks). Doubled midranks are always integers.
std::vector<std::uint64_t> signed_rank_counts(std::span<const int> doubled_ranks);

// p' = min(1, m p). m must be at least the number of p-values.
std::vector<double> bonferroni(std::span<const double> pvals, std::size_t m);
// ">0.999", "<0.001" or three decimals.
std::string format_pvalue(double p);

// Both need n >= 3; constant input throws Errc::numeric.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

// Maps a prediction onto 0..100: 100 at the "best" end of the scale (max
// for higher-is-better metrics, min otherwise), clipped to [0, 100].
// Throws Errc::invalid_argument for open-ended scales.
double scale_to_mushra(double value, const MetricScale& scale);

struct ScaledRmse {
  double rmse = 0.0;
  std::vector<std::size_t> clipped;  // indices whose value fell outside the scale
};
ScaledRmse rmse_scaled(std::span<const double> predictions, std::span<const double> ratings,
                       const MetricScale& scale);

// Ordinary least-squares y ~ c0 + c1 x + c2 x^2 + c3 x^3. Needs n >= 5 and
// at least four distinct x values (Errc::numeric otherwise).
std::array<double, 4> fit_cubic(std::span<const double> x, std::span<const double> y);
double rmse_poly3(std::span<const double> predictions, std::span<const double> ratings);

double median(std::vector<double> values);
double mean(std::span<const double> values);

}  // namespace ovr
