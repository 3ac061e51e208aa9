#pragma once

// Canonical data model for vision-language NLE benchmarks and line-delimited
// record I/O. Every record file holds one JSON object per line; field names
// are listed in docs/FORMATS.md.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evil {

/// Bad input data (malformed file, invariant violation, unknown reference).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration (unknown option value, missing required setting).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskKind { kClassification, kMultiAnswer, kMultipleChoice };
enum class Split { kTrain, kDev, kTest };

std::string_view to_string(TaskKind kind);
std::string_view to_string(Split split);
TaskKind parse_task_kind(std::string_view text);
Split parse_split(std::string_view text);

struct GoldAnswer {
  std::string answer;
  // Number of human annotators who gave this answer (multi_answer only).
  std::optional<int> count;

  bool operator==(const GoldAnswer&) const = default;
};

struct VlInstance {
  std::string instance_id;
  std::string image_id;
  std::string image_uri;
  TaskKind task_kind = TaskKind::kClassification;
  std::string input_text;
  std::vector<GoldAnswer> gold_answers;
  std::vector<std::string> choices;
  std::vector<std::string> gold_explanations;
  std::vector<std::string> captions;
  std::optional<std::string> group_tag;
  // Textual premise; only present on construction-time records.
  std::optional<std::string> premise;
  Split split = Split::kTest;

  /// Majority gold answer (highest count, first on ties). For classification
  /// tasks this is the label.
  const std::string& label() const;

  bool operator==(const VlInstance&) const = default;
};

/// Returns the reason the instance is invalid, or nullopt.
std::optional<std::string> validate(const VlInstance& instance);

struct ModelPrediction {
  std::string instance_id;
  std::string model_id;
  std::string predicted_answer;
  std::string generated_explanation;

  bool operator==(const ModelPrediction&) const = default;
};

struct NliTriple {
  double entailment = 0.0;
  double neutral = 0.0;
  double contradiction = 0.0;

  bool operator==(const NliTriple&) const = default;
};

inline constexpr std::size_t kCaptionsPerImage = 5;

struct NliEvidence {
  std::string instance_id;
  std::array<NliTriple, kCaptionsPerImage> per_caption{};

  bool operator==(const NliEvidence&) const = default;
};

std::optional<std::string> validate(const NliEvidence& evidence);

struct TokenVector {
  std::string token;
  std::vector<double> vector;

  bool operator==(const TokenVector&) const = default;
};

struct EmbeddingSet {
  std::string explanation_key;
  std::vector<TokenVector> tokens;

  std::size_t dimension() const { return tokens.empty() ? 0 : tokens.front().vector.size(); }

  bool operator==(const EmbeddingSet&) const = default;
};

std::optional<std::string> validate(const EmbeddingSet& embeddings);

struct RejectedLine {
  std::size_t line_number = 0;  // 1-based
  std::string reason;
};

template <typename Record>
struct LoadResult {
  std::vector<Record> records;
  std::vector<RejectedLine> rejects;
};

inline constexpr std::string_view kInstanceSchemaV1 = "evil.instance.v1";

/// Loads a dataset file. Malformed or invalid lines are collected in
/// `rejects`; throws DataError if the file is unreadable, the schema id is
/// unknown, or every non-blank line was rejected.
LoadResult<VlInstance> load_dataset(const std::filesystem::path& path,
                                    std::string_view schema = kInstanceSchemaV1);
LoadResult<ModelPrediction> load_predictions(const std::filesystem::path& path);
LoadResult<NliEvidence> load_nli_evidence(const std::filesystem::path& path);
LoadResult<EmbeddingSet> load_embeddings(const std::filesystem::path& path);

// Canonical single-line encodings (sorted keys, absent optionals omitted).
std::string to_record_line(const VlInstance& instance);
std::string to_record_line(const ModelPrediction& prediction);
std::string to_record_line(const NliEvidence& evidence);
std::string to_record_line(const EmbeddingSet& embeddings);

VlInstance instance_from_line(std::string_view line);
ModelPrediction prediction_from_line(std::string_view line);
NliEvidence evidence_from_line(std::string_view line);
EmbeddingSet embeddings_from_line(std::string_view line);

void write_dataset(const std::filesystem::path& path, std::span<const VlInstance> instances);

struct LengthStats {
  double mean = 0.0;
  double median = 0.0;
};

struct DatasetStats {
  std::size_t instances = 0;
  std::size_t images = 0;
  std::map<Split, std::size_t> per_split;
  std::map<std::string, std::size_t> label_counts;
  // Percentages, summing to 100.
  std::map<std::string, double> label_distribution;
  LengthStats input_length;
  LengthStats explanation_length;
};

/// Whitespace token count after lowercasing.
std::size_t whitespace_length(std::string_view text);

/// Summary counts and length statistics. Labels listed in `label_universe`
/// appear in the distribution even when absent. Throws DataError on an empty
/// collection.
DatasetStats dataset_stats(std::span<const VlInstance> instances,
                           std::span<const std::string> label_universe = {});

/// Lowercased, whitespace-trimmed answer string used for answer matching.
std::string normalize_answer(std::string_view answer);

}  // namespace evil
