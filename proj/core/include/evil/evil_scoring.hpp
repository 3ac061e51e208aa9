#pragma once

// e-ViL scores: task score S_T, explanation score S_E from pooled human
// ratings, overall score S_O = S_T * S_E, and shortcoming frequencies.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evil/corpus.hpp"

namespace evil {

enum class Rating : std::uint8_t { kNo = 0, kWeakNo = 1, kWeakYes = 2, kYes = 3 };

/// {No, WeakNo, WeakYes, Yes} -> {0, 1/3, 2/3, 1}.
double numeric_value(Rating rating);
int ordinal(Rating rating);
Rating rating_from_ordinal(int ordinal);
std::string_view to_string(Rating rating);
Rating parse_rating(std::string_view text);

enum class Shortcoming : std::uint8_t { kUntrueToImage = 0, kLackOfJustification = 1, kNonsensical = 2 };

inline constexpr std::size_t kShortcomingCount = 3;
std::string_view to_string(Shortcoming s);
Shortcoming parse_shortcoming(std::string_view text);

/// Subset of the three shortcomings.
class ShortcomingSet {
 public:
  ShortcomingSet() = default;
  ShortcomingSet(std::initializer_list<Shortcoming> items) {
    for (auto s : items) insert(s);
  }

  void insert(Shortcoming s) { bits_ |= bit(s); }
  bool contains(Shortcoming s) const { return (bits_ & bit(s)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::vector<Shortcoming> items() const;
  std::uint8_t bits() const { return bits_; }

  bool operator==(const ShortcomingSet&) const = default;

 private:
  static std::uint8_t bit(Shortcoming s) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(s)); }
  std::uint8_t bits_ = 0;
};

namespace rule {
/// No / Weak No with no shortcoming selected.
inline constexpr std::string_view kInsufficientWithoutShortcomings = "insufficient-without-shortcomings";
/// Yes with a shortcoming selected.
inline constexpr std::string_view kOptimalWithShortcomings = "optimal-with-shortcomings";
}  // namespace rule

/// A rating/shortcoming combination that can never be recorded.
class ValidityError : public std::invalid_argument {
 public:
  explicit ValidityError(std::string_view rule_name);
  const std::string& rule() const { return rule_; }

 private:
  std::string rule_;
};

/// Name of the violated rule, or nullopt when the combination is valid.
std::optional<std::string_view> check_rating(Rating rating, const ShortcomingSet& shortcomings);

inline constexpr std::string_view kGroundTruthModel = "ground_truth";

/// Which explanation an annotation is about.
struct Target {
  bool ground_truth = false;
  std::string model_id;  // empty for ground truth

  static Target generated(std::string model) { return {false, std::move(model)}; }
  static Target gold() { return {true, {}}; }
  /// model_id, or "ground_truth".
  std::string label() const;

  auto operator<=>(const Target&) const = default;
};

/// One annotator's evaluation of one explanation. The rating/shortcoming
/// validity rule is enforced at construction.
class AnnotationRecord {
 public:
  AnnotationRecord(std::string annotator_id, std::string instance_id, std::string dataset_id,
                   Target target, std::string task_answer_given, bool task_correct, Rating rating,
                   ShortcomingSet shortcomings, int presentation_slot);

  const std::string& annotator_id() const { return annotator_id_; }
  const std::string& instance_id() const { return instance_id_; }
  const std::string& dataset_id() const { return dataset_id_; }
  const Target& target() const { return target_; }
  const std::string& task_answer_given() const { return task_answer_given_; }
  bool task_correct() const { return task_correct_; }
  Rating rating() const { return rating_; }
  const ShortcomingSet& shortcomings() const { return shortcomings_; }
  int presentation_slot() const { return presentation_slot_; }

  bool operator==(const AnnotationRecord&) const = default;

 private:
  std::string annotator_id_;
  std::string instance_id_;
  std::string dataset_id_;
  Target target_;
  std::string task_answer_given_;
  bool task_correct_;
  Rating rating_;
  ShortcomingSet shortcomings_;
  int presentation_slot_;
};

std::string to_record_line(const AnnotationRecord& record);
AnnotationRecord annotation_from_line(std::string_view line);
LoadResult<AnnotationRecord> load_annotations(const std::filesystem::path& path);

// ---- task score -------------------------------------------------------------

/// Whether `answer` is correct for the instance under its task-kind rule.
bool answer_matches(const VlInstance& instance, std::string_view answer);

/// Per-instance task score: exact match for classification and multiple
/// choice; min(1, count/3) for multi_answer with counts, exact match against
/// the answer set otherwise.
double instance_task_score(const VlInstance& instance, std::string_view answer);

struct TaskScore {
  double s_t = 0.0;
  std::map<std::string, double> per_instance;
  // true iff the predicted answer matched a gold answer.
  std::map<std::string, bool> correct;
};

/// S_T over the given predictions of one model. Throws DataError on an
/// unknown instance, mixed model ids, or an empty prediction list.
TaskScore task_score(std::span<const ModelPrediction> predictions,
                     std::span<const VlInstance> instances);

// ---- gating and pooling -----------------------------------------------------

/// Identifies one explanation: an instance seen through one target.
struct ExplanationKey {
  std::string dataset_id;
  std::string instance_id;
  Target target;

  auto operator<=>(const ExplanationKey&) const = default;
};

ExplanationKey explanation_key(const AnnotationRecord& record);

struct GateResult {
  std::vector<AnnotationRecord> valid;
  std::map<ExplanationKey, std::size_t> survivors;
  // Explanations whose every annotator answered the task incorrectly.
  std::vector<ExplanationKey> excluded;
};

/// Keeps records with a correct task answer.
GateResult gate_annotations(std::span<const AnnotationRecord> records);

/// Mean of numeric-mapped ratings. Throws on empty input.
double pool_numeric(std::span<const Rating> ratings);

/// Median of ordinal indices; an even split floors to the lower index.
Rating pool_median(std::span<const Rating> ratings);

/// 1 iff the generated explanation is rated at least as well as the ground
/// truth by the same annotator.
int comparative_score(Rating generated, Rating ground_truth);
/// Same, checking both records come from one annotator on one instance.
int comparative_score(const AnnotationRecord& generated, const AnnotationRecord& ground_truth);
/// Median of binaries with an even split flooring to 0.
int pool_comparative(std::span<const int> binaries);

/// pool_numeric over the (already gated) records of one explanation.
double explanation_score(std::span<const AnnotationRecord> records);

/// Mean of per-explanation scores. Throws DataError when empty.
double compute_s_e(std::span<const double> explanation_scores);

/// S_T * S_E; throws DataError if either is outside [0, 1].
double compute_s_o(double s_t, double s_e);

using ShortcomingFrequencies = std::map<Shortcoming, double>;

/// Share of annotations selecting each shortcoming.
ShortcomingFrequencies shortcoming_frequencies(std::span<const AnnotationRecord> records);

// ---- reports ----------------------------------------------------------------

enum class Pooling { kNumeric, kMedian, kComparative };
std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view text);

struct EvilReport {
  std::string model_id;
  std::string dataset_id;
  Pooling pooling = Pooling::kNumeric;
  double s_t = 0.0;
  double s_e = 0.0;
  double s_o = 0.0;
  std::size_t n_explanations = 0;
  ShortcomingFrequencies shortcoming_frequencies;
  double standard_error = 0.0;
  // Explanations dropped because no annotator answered the task correctly.
  std::size_t excluded_all_incorrect = 0;
  // Explanations dropped because the model's predicted answer was wrong.
  std::size_t excluded_incorrect_prediction = 0;
  // Pooled-median rating distribution (median pooling only), shares in [0,1].
  std::map<Rating, double> median_distribution;

  bool operator==(const EvilReport&) const = default;
};

struct ScoringInput {
  std::string model_id;  // or kGroundTruthModel
  std::string dataset_id;
  std::span<const VlInstance> instances;
  // Predictions of `model_id`; ignored for the ground-truth pseudo-model,
  // whose S_T is 1.
  std::span<const ModelPrediction> predictions;
  // Annotation records; may contain other models and datasets.
  std::span<const AnnotationRecord> records;
};

/// Gates, pools and scores one (model, dataset) pair. Throws DataError when
/// no explanation survives gating.
EvilReport score_model(const ScoringInput& input, Pooling pooling);

std::string to_record_line(const EvilReport& report);
EvilReport report_from_line(std::string_view line);

/// Human-readable table, scores x100 with one decimal.
std::string format_report_table(std::span<const EvilReport> reports);

// ---- human scores for correlation ---------------------------------------------

enum class HumanScoreNormalization { kMean, kAnnotatorZScore };

/// Per generated explanation: mean numeric rating over valid annotators
/// (optionally z-scored within annotator first). Keys are
/// "<model>/<instance>"; ground-truth records are ignored.
std::map<std::string, double> human_scores(std::span<const AnnotationRecord> records,
                                           std::string_view dataset_id,
                                           HumanScoreNormalization normalization);

}  // namespace evil
