#pragma once

// Automatic NLG metrics: BLEU, ROUGE-1, ROUGE-L, METEOR, CIDEr-D and
// BERTScore over precomputed embeddings, plus the harmonic-mean model
// selection score.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evil/corpus.hpp"
#include "evil/tokenize.hpp"

namespace evil {

// ---- metric registry ------------------------------------------------------

namespace metric {
inline constexpr std::string_view kBleu1 = "bleu1";
inline constexpr std::string_view kBleu2 = "bleu2";
inline constexpr std::string_view kBleu3 = "bleu3";
inline constexpr std::string_view kBleu4 = "bleu4";
inline constexpr std::string_view kRouge1 = "rouge1";
inline constexpr std::string_view kRougeL = "rougeL";
inline constexpr std::string_view kMeteor = "meteor";
inline constexpr std::string_view kCiderD = "ciderD";
inline constexpr std::string_view kBertScoreF1 = "bertscore_f1";
// Externally computed; ingested from a sidecar file.
inline constexpr std::string_view kSpice = "spice";
inline constexpr std::string_view kBleurt = "bleurt";
// Derived.
inline constexpr std::string_view kSelection = "selection";
}  // namespace metric

/// All registry names in canonical table order.
std::span<const std::string_view> metric_registry();
bool is_registered_metric(std::string_view name);
bool is_external_metric(std::string_view name);

// ---- BLEU -----------------------------------------------------------------

enum class BleuSmoothing { kNone, kEpsilon };
inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr int kMaxBleuOrder = 4;

/// Sentence BLEU up to order n (1..4) with clipped counts and the
/// closest-reference brevity penalty.
double bleu_n(const TokenSequence& candidate, std::span<const TokenSequence> references, int n,
              BleuSmoothing smoothing = BleuSmoothing::kNone);

/// Corpus BLEU: clipped counts and lengths pooled over all segments before
/// taking precisions.
class CorpusBleu {
 public:
  void add(const TokenSequence& candidate, std::span<const TokenSequence> references);
  double score(int n) const;
  std::size_t segments() const { return segments_; }

 private:
  std::array<double, kMaxBleuOrder> matched_{};
  std::array<double, kMaxBleuOrder> total_{};
  double candidate_length_ = 0.0;
  double reference_length_ = 0.0;
  std::size_t segments_ = 0;
};

// ---- ROUGE ----------------------------------------------------------------

struct OverlapScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  // Set when an input was empty and the score is 0 by convention.
  bool degenerate = false;
};

/// Unigram-overlap F1 with multiset clipping. `a` is treated as the
/// candidate for precision.
OverlapScore rouge_1(const TokenSequence& a, const TokenSequence& b);

inline constexpr double kRougeLBeta = 1.2;

/// LCS-based F-measure, F = (1+b^2)RP / (R + b^2 P).
OverlapScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

/// Multi-reference ROUGE-L: max precision and max recall over references are
/// combined into one F.
OverlapScore rouge_l(const TokenSequence& candidate, std::span<const TokenSequence> references);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

// ---- METEOR ---------------------------------------------------------------

struct MeteorAlignment {
  // (candidate position, reference position), sorted by candidate position.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t exact_matches = 0;
  std::size_t stem_matches = 0;

  std::size_t matches() const { return pairs.size(); }
  std::size_t chunks() const;
};

struct MeteorScore {
  double precision = 0.0;
  double recall = 0.0;
  double f_mean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Exact-then-Porter-stem alignment. Each stage takes a maximum matching of
/// the still-unaligned words; among those, the alignment with the fewest
/// chunks is chosen.
MeteorAlignment meteor_align(const TokenSequence& candidate, const TokenSequence& reference);

/// F_mean = 10PR/(R+9P), penalty = 0.5 (chunks/matches)^3.
MeteorScore meteor_detail(const TokenSequence& candidate, const TokenSequence& reference);
double meteor(const TokenSequence& candidate, const TokenSequence& reference);
/// Max over references.
double meteor(const TokenSequence& candidate, std::span<const TokenSequence> references);

// ---- CIDEr-D ----------------------------------------------------------------

inline constexpr double kCiderSigma = 6.0;
inline constexpr int kCiderMaxN = 4;

using ReferenceCorpus = std::map<std::string, std::vector<TokenSequence>>;

/// CIDEr-D with document frequencies from a fixed reference corpus. Build
/// once, then `score` is const and safe to call concurrently.
class CiderD {
 public:
  /// Throws DataError("idf undefined") unless the corpus has >= 2 instances.
  explicit CiderD(const ReferenceCorpus& references, double sigma = kCiderSigma);

  /// Score in [0, 10]. Throws DataError if `references` is empty.
  double score(const TokenSequence& candidate, std::span<const TokenSequence> references) const;

  std::size_t corpus_size() const { return corpus_size_; }
  /// log(N / max(1, df(ngram))), ngram given as space-joined tokens.
  double idf(const std::string& ngram) const;

 private:
  std::map<std::string, std::size_t> document_frequency_;
  std::size_t corpus_size_ = 0;
  double log_corpus_size_ = 0.0;
  double sigma_;
};

/// Scores every candidate against its references within the same corpus.
std::map<std::string, double> cider_d(const std::map<std::string, TokenSequence>& candidates,
                                      const ReferenceCorpus& references);

// ---- BERTScore --------------------------------------------------------------

struct BertScoreOptions {
  // Token -> importance weight; tokens absent from the map weigh 1.
  const std::map<std::string, double>* idf_weights = nullptr;
  // When set, each of P, R, F is rescaled as (x - b) / (1 - b).
  std::optional<double> baseline;
};

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Greedy cosine matching. Throws DataError on an empty side or on a
/// dimension mismatch.
BertScore bertscore(const EmbeddingSet& candidate, const EmbeddingSet& reference,
                    const BertScoreOptions& options = {});
double bertscore_f1(const EmbeddingSet& candidate, const EmbeddingSet& reference,
                    const BertScoreOptions& options = {});

// ---- aggregation ------------------------------------------------------------

/// n / sum(1/v); 0 if any value is 0. Throws on empty input or negatives.
double harmonic_mean(std::span<const double> values);

struct MetricVector {
  std::string explanation_key;
  std::map<std::string, double, std::less<>> scores;

  bool operator==(const MetricVector&) const = default;
};

/// Reason the vector is invalid (non-finite or out-of-range computed score).
std::optional<std::string> validate(const MetricVector& metrics);

/// {rougeL, spice, ciderD, meteor}.
std::vector<std::string> default_ngram_set();

/// HM(bertscore_f1, HM(ngram metrics)). Throws DataError naming the first
/// missing metric.
double selection_score(const MetricVector& metrics, std::span<const std::string> ngram_set);
double selection_score(const MetricVector& metrics);

std::string to_record_line(const MetricVector& metrics);
MetricVector metric_vector_from_line(std::string_view line);

/// Sidecar of externally computed scores: one {"explanation_key", "metric",
/// "value"} object per line. Returns key -> metric -> value.
std::map<std::string, std::map<std::string, double>> load_metric_sidecar(
    const std::filesystem::path& path);

}  // namespace evil
