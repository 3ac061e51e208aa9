#pragma once

// Construction filters for visual-entailment data: false-neutral removal via
// caption NLI evidence, keyword, uncertainty and premise/hypothesis
// similarity filters, applied as an ordered pipeline with per-stage counts.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evil/corpus.hpp"

namespace evil {

enum class FilterKind { kFalseNeutral, kKeyword, kUncertainty, kSimilarity };
std::string_view to_string(FilterKind kind);
FilterKind parse_filter_kind(std::string_view text);

inline constexpr std::string_view kEntailment = "entailment";
inline constexpr std::string_view kNeutral = "neutral";
inline constexpr std::string_view kContradiction = "contradiction";

struct FilterDecision {
  std::string instance_id;
  FilterKind filter = FilterKind::kKeyword;
  bool flagged = false;
  // Threshold filters carry the statistic; the keyword filter the phrase.
  std::variant<double, std::string> evidence;
};

inline constexpr double kFalseNeutralThreshold = 2.0;
inline constexpr double kSimilarityThreshold = 0.57;

/// Flags a neutral instance when the caption-summed entailment or
/// contradiction probability strictly exceeds `threshold`. Evidence is the
/// larger of the two sums. Other labels are never flagged.
FilterDecision false_neutral_filter(const VlInstance& instance, const NliEvidence* evidence,
                                    double threshold = kFalseNeutralThreshold);

const std::vector<std::string>& default_keywords();

/// Case-insensitive raw substring match; evidence is the first keyword (in
/// list order) that occurs.
FilterDecision keyword_filter(std::string_view explanation,
                              std::span<const std::string> keywords = default_keywords());

/// Flags when ROUGE-1 F1 of premise vs hypothesis strictly exceeds threshold.
FilterDecision similarity_filter(std::string_view premise, std::string_view hypothesis,
                                 double threshold = kSimilarityThreshold);

enum class UncertaintyStatistic { kMeanClassStddev };

/// Mean over the three classes of the sample standard deviation of the
/// per-caption probabilities.
double caption_uncertainty(const NliEvidence& evidence,
                           UncertaintyStatistic statistic = UncertaintyStatistic::kMeanClassStddev);

/// Flags a contradiction instance whose caption uncertainty exceeds
/// `threshold`. Other labels are never flagged.
FilterDecision uncertainty_filter(const VlInstance& instance, const NliEvidence* evidence,
                                  double threshold,
                                  UncertaintyStatistic statistic = UncertaintyStatistic::kMeanClassStddev);

struct FilterConfig {
  // Enabled stages; run in the fixed order false_neutral, keyword,
  // uncertainty, similarity regardless of listing order.
  std::set<FilterKind> stages;
  double false_neutral_threshold = kFalseNeutralThreshold;
  double similarity_threshold = kSimilarityThreshold;
  std::optional<double> uncertainty_threshold;
  UncertaintyStatistic uncertainty_statistic = UncertaintyStatistic::kMeanClassStddev;
  std::vector<std::string> keywords = default_keywords();
  // Empty means every label.
  std::set<std::string> similarity_labels;
  // instance_id -> replacement label, applied before any stage.
  std::map<std::string, std::string> replacement_labels;
};

/// Parses a JSON filter config file. Throws ConfigError.
FilterConfig load_filter_config(const std::filesystem::path& path);
FilterConfig parse_filter_config(std::string_view json_text);
std::string to_json(const FilterConfig& config);

/// instance_id -> label; one {"instance_id", "label"} object per line.
std::map<std::string, std::string> load_replacement_labels(const std::filesystem::path& path);

struct StageCounts {
  std::string stage;
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;

  std::size_t total() const { return train + dev + test; }
  bool operator==(const StageCounts&) const = default;
};

struct StageReport {
  std::vector<StageCounts> rows;  // "raw" first, then one per stage
};

/// Table with Stage / Train Set / Val Set / Test Set columns.
std::string format_stage_report(const StageReport& report);

struct PipelineResult {
  std::vector<VlInstance> kept;
  StageReport report;
  std::vector<FilterDecision> removed;
};

/// Applies the enabled stages in order, removing flagged instances after
/// each. Output preserves input order. Throws DataError when a stage needs
/// captions, evidence or a premise that an in-scope instance lacks, and
/// ConfigError when the uncertainty stage has no threshold.
PipelineResult apply_pipeline(std::span<const VlInstance> instances,
                              const std::map<std::string, NliEvidence>& evidence,
                              const FilterConfig& config);

}  // namespace evil
