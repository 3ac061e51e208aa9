#pragma once

// Rank correlation between automatic metrics and human scores, plus the
// error bars and permutation tests used to compare models.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evil/text_metrics.hpp"

namespace evil {

/// Fractional ranks (1-based; tied values share their average rank).
std::vector<double> fractional_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman's rho as Pearson correlation of fractional ranks. Returns nullopt
/// when either ranked vector has zero variance. Throws DataError on a length
/// mismatch or fewer than 3 points.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct PValue {
  double value = 1.0;
  // |rho| == 1 under the t approximation; value is reported as 0.
  bool saturated = false;
};

/// Two-sided p-value from t = rho sqrt((n-2)/(1-rho^2)) with n-2 degrees of
/// freedom. Requires n >= 4.
PValue spearman_pvalue_t(double rho, std::size_t n);

/// Two-sided permutation p-value: y is shuffled k times with a generator
/// seeded by `seed`; p = (1 + #{|rho_perm| >= |rho_obs|}) / (k + 1).
/// Throws DataError("k must be positive") when k == 0.
PValue spearman_pvalue_permutation(std::span<const double> x, std::span<const double> y,
                                   std::size_t k, std::uint64_t seed);

struct CorrelationCell {
  std::string metric;
  std::string group;  // dataset id or "all"
  std::optional<double> rho;
  double p_value = 1.0;
  std::size_t n = 0;

  /// Not significant at p < 0.001 (italicised in the published table).
  bool weak() const { return !rho || p_value >= 0.001; }
};

struct CorrelationReport {
  std::vector<CorrelationCell> cells;

  const CorrelationCell* find(std::string_view metric, std::string_view group) const;
};

inline constexpr std::string_view kPooledGroup = "all";

struct HumanScore {
  std::string dataset_id;
  double score = 0.0;
};

struct PValueMethod {
  enum Kind { kTApprox, kPermutation } kind = kTApprox;
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
};

/// One cell per metric per dataset, plus one per metric over all datasets
/// pooled. Only explanations with both a human score and the metric enter a
/// cell. Throws DataError when a group has fewer than 3 explanations.
CorrelationReport correlate(const std::map<std::string, MetricVector>& metrics,
                            const std::map<std::string, HumanScore>& human,
                            std::span<const std::string> metric_names,
                            const PValueMethod& method = {});

/// Metrics as rows, groups as columns; weak cells are wrapped in *...*.
std::string format_correlation_table(const CorrelationReport& report,
                                     std::span<const std::string> metric_names,
                                     std::span<const std::string> groups);

/// Sample standard deviation over sqrt(n). Throws DataError when n < 2.
double standard_error(std::span<const double> scores);

/// Two-sided permutation test on the mean difference. When both maps have
/// the same keys the test is paired (random sign flips of per-key
/// differences); otherwise the pooled values are relabelled.
double pairwise_test(const std::map<std::string, double>& a, const std::map<std::string, double>& b,
                     std::size_t k, std::uint64_t seed);

/// Unpaired label-shuffle permutation test.
double permutation_test_unpaired(std::span<const double> a, std::span<const double> b,
                                 std::size_t k, std::uint64_t seed);

/// Paired sign-flip permutation test on a[i] - b[i].
double permutation_test_paired(std::span<const double> a, std::span<const double> b,
                               std::size_t k, std::uint64_t seed);

}  // namespace evil
