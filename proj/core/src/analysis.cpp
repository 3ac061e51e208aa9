#include "evil/analysis.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "evil/random.hpp"

namespace evil {

namespace {

constexpr double kTieTolerance = 1e-12;

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("correlation inputs differ in length");
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> pearson_or_none(std::span<const double> x, std::span<const double> y) {
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  if (x.size() < 2) throw DataError("pearson needs at least 2 points");
  auto r = pearson_or_none(x, y);
  if (!r) throw DataError("pearson undefined for zero variance");
  return *r;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  if (x.size() < 3) throw DataError("spearman needs at least 3 points");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson_or_none(rx, ry);
}

PValue spearman_pvalue_t(double rho, std::size_t n) {
  if (n < 4) throw DataError("t approximation needs n >= 4");
  if (!(std::abs(rho) <= 1.0)) throw DataError("rho outside [-1, 1]");
  if (std::abs(rho) >= 1.0) return {0.0, true};
  const double df = static_cast<double>(n - 2);
  const double t = std::abs(rho) * std::sqrt(df / (1.0 - rho * rho));
  const boost::math::students_t_distribution<double> dist(df);
  return {std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t))), false};
}

PValue spearman_pvalue_permutation(std::span<const double> x, std::span<const double> y,
                                   std::size_t k, std::uint64_t seed) {
  if (k == 0) throw DataError("k must be positive");
  const auto observed = spearman(x, y);
  if (!observed) throw DataError("spearman undefined for zero variance");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  std::vector<double> shuffled(ry.begin(), ry.end());
  std::size_t extreme = 0;
  for (std::size_t rep = 0; rep < k; ++rep) {
    std::copy(ry.begin(), ry.end(), shuffled.begin());
    SeededRng rng(mix_seed(seed, rep));
    rng.shuffle(std::span<double>(shuffled));
    const auto rho = pearson_or_none(rx, shuffled);
    if (rho && std::abs(*rho) >= std::abs(*observed) - kTieTolerance) ++extreme;
  }
  return {static_cast<double>(extreme + 1) / static_cast<double>(k + 1), false};
}

const CorrelationCell* CorrelationReport::find(std::string_view metric,
                                               std::string_view group) const {
  for (const auto& c : cells) {
    if (c.metric == metric && c.group == group) return &c;
  }
  return nullptr;
}

CorrelationReport correlate(const std::map<std::string, MetricVector>& metrics,
                            const std::map<std::string, HumanScore>& human,
                            std::span<const std::string> metric_names,
                            const PValueMethod& method) {
  std::set<std::string> datasets;
  for (const auto& [key, h] : human) datasets.insert(h.dataset_id);
  std::vector<std::string> groups(datasets.begin(), datasets.end());
  groups.emplace_back(kPooledGroup);

  CorrelationReport report;
  for (const auto& name : metric_names) {
    for (const auto& group : groups) {
      std::vector<double> xs;
      std::vector<double> ys;
      for (const auto& [key, h] : human) {
        if (group != kPooledGroup && h.dataset_id != group) continue;
        auto mit = metrics.find(key);
        if (mit == metrics.end()) continue;
        auto sit = mit->second.scores.find(name);
        if (sit == mit->second.scores.end()) continue;
        xs.push_back(sit->second);
        ys.push_back(h.score);
      }
      if (xs.size() < 3) {
        throw DataError("correlation group '" + group + "' has " + std::to_string(xs.size()) +
                        " explanations with metric '" + name + "' (need >= 3)");
      }
      CorrelationCell cell;
      cell.metric = name;
      cell.group = group;
      cell.n = xs.size();
      cell.rho = spearman(xs, ys);
      if (cell.rho && method.kind == PValueMethod::kPermutation) {
        cell.p_value = spearman_pvalue_permutation(xs, ys, method.permutations, method.seed).value;
      } else if (cell.rho && cell.n >= 4) {
        cell.p_value = spearman_pvalue_t(*cell.rho, cell.n).value;
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::string format_correlation_table(const CorrelationReport& report,
                                     std::span<const std::string> metric_names,
                                     std::span<const std::string> groups) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "Metric";
  for (const auto& g : groups) out << std::right << std::setw(14) << (g == kPooledGroup ? "All datasets" : g);
  out << '\n';
  for (const auto& m : metric_names) {
    out << std::left << std::setw(14) << m;
    for (const auto& g : groups) {
      const auto* cell = report.find(m, g);
      std::string text = "-";
      if (cell != nullptr && cell->rho) {
        std::ostringstream v;
        v << std::fixed << std::setprecision(3) << *cell->rho;
        text = cell->weak() ? "*" + v.str() + "*" : v.str();
      } else if (cell != nullptr) {
        text = "undef";
      }
      out << std::right << std::setw(14) << text;
    }
    out << '\n';
  }
  return out.str();
}

double standard_error(std::span<const double> scores) {
  if (scores.size() < 2) throw DataError("standard error needs n >= 2");
  // Shifted by the first value so constant input gives exactly 0.
  const double shift = scores.front();
  double m = 0.0;
  for (double s : scores) m += s - shift;
  const auto n = static_cast<double>(scores.size());
  m /= n;
  double ss = 0.0;
  for (double s : scores) ss += (s - shift - m) * (s - shift - m);
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

double permutation_test_unpaired(std::span<const double> a, std::span<const double> b,
                                 std::size_t k, std::uint64_t seed) {
  if (k == 0) throw DataError("k must be positive");
  if (a.empty() || b.empty()) throw DataError("permutation test needs two non-empty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double observed = std::abs(mean_of(a) - mean_of(b));
  std::vector<double> work(pooled.size());
  std::size_t extreme = 0;
  for (std::size_t rep = 0; rep < k; ++rep) {
    std::copy(pooled.begin(), pooled.end(), work.begin());
    SeededRng rng(mix_seed(seed, rep));
    rng.shuffle(std::span<double>(work));
    const std::span<const double> all(work);
    const double d = std::abs(mean_of(all.first(a.size())) - mean_of(all.subspan(a.size())));
    if (d >= observed - kTieTolerance) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(k + 1);
}

double permutation_test_paired(std::span<const double> a, std::span<const double> b,
                               std::size_t k, std::uint64_t seed) {
  if (k == 0) throw DataError("k must be positive");
  if (a.size() != b.size() || a.empty()) throw DataError("paired test needs equal non-empty samples");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double observed = std::abs(mean_of(diff));
  std::size_t extreme = 0;
  for (std::size_t rep = 0; rep < k; ++rep) {
    SeededRng rng(mix_seed(seed, rep));
    double sum = 0.0;
    for (double d : diff) sum += (rng.next() & 1u) ? d : -d;
    if (std::abs(sum / static_cast<double>(diff.size())) >= observed - kTieTolerance) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(k + 1);
}

double pairwise_test(const std::map<std::string, double>& a, const std::map<std::string, double>& b,
                     std::size_t k, std::uint64_t seed) {
  const bool paired = a.size() == b.size() &&
                      std::equal(a.begin(), a.end(), b.begin(),
                                 [](const auto& x, const auto& y) { return x.first == y.first; });
  std::vector<double> va;
  std::vector<double> vb;
  for (const auto& [key, v] : a) va.push_back(v);
  for (const auto& [key, v] : b) vb.push_back(v);
  return paired ? permutation_test_paired(va, vb, k, seed)
                : permutation_test_unpaired(va, vb, k, seed);
}

}  // namespace evil
