#include "evil/text_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <unordered_map>

#include "evil/porter_stemmer.hpp"
#include "json.hpp"
#include "record_io.hpp"

namespace evil {

namespace {

constexpr std::array<std::string_view, 11> kRegistry = {
    metric::kBleu1, metric::kBleu2,  metric::kBleu3,       metric::kBleu4,
    metric::kRouge1, metric::kRougeL, metric::kMeteor,     metric::kCiderD,
    metric::kSpice, metric::kBertScoreF1, metric::kBleurt};

using NgramCounts = std::unordered_map<std::string, int>;

NgramCounts ngram_counts(const TokenSequence& seq, int n) {
  NgramCounts counts;
  const auto& toks = seq.tokens();
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) {
      key.push_back(' ');
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

// Clipped matches and candidate n-gram total at order n.
std::pair<double, double> clipped_counts(const TokenSequence& candidate,
                                         std::span<const TokenSequence> references, int n) {
  const NgramCounts cand = ngram_counts(candidate, n);
  NgramCounts max_ref;
  for (const auto& ref : references) {
    for (const auto& [gram, count] : ngram_counts(ref, n)) {
      auto& slot = max_ref[gram];
      slot = std::max(slot, count);
    }
  }
  double matched = 0.0;
  double total = 0.0;
  for (const auto& [gram, count] : cand) {
    total += count;
    auto it = max_ref.find(gram);
    if (it != max_ref.end()) matched += std::min(count, it->second);
  }
  return {matched, total};
}

// Reference length closest to the candidate length; ties go to the shorter.
std::size_t closest_reference_length(std::size_t candidate_length,
                                     std::span<const TokenSequence> references) {
  std::size_t best = references.front().size();
  auto distance = [&](std::size_t len) {
    return len > candidate_length ? len - candidate_length : candidate_length - len;
  };
  for (const auto& ref : references) {
    const std::size_t len = ref.size();
    if (distance(len) < distance(best) || (distance(len) == distance(best) && len < best)) {
      best = len;
    }
  }
  return best;
}

double brevity_penalty(double candidate_length, double reference_length) {
  if (candidate_length <= 0.0) return 0.0;
  if (candidate_length > reference_length) return 1.0;
  return std::exp(1.0 - reference_length / candidate_length);
}

void check_order(int n) {
  if (n < 1 || n > kMaxBleuOrder) throw DataError("BLEU order must be in 1..4");
}

}  // namespace

std::span<const std::string_view> metric_registry() { return kRegistry; }

bool is_registered_metric(std::string_view name) {
  return std::find(kRegistry.begin(), kRegistry.end(), name) != kRegistry.end() ||
         name == metric::kSelection;
}

bool is_external_metric(std::string_view name) {
  return name == metric::kSpice || name == metric::kBleurt;
}

// ---- BLEU -----------------------------------------------------------------

double bleu_n(const TokenSequence& candidate, std::span<const TokenSequence> references, int n,
              BleuSmoothing smoothing) {
  check_order(n);
  if (references.empty()) throw DataError("BLEU needs at least one reference");
  if (candidate.empty()) return 0.0;
  // Orders longer than the candidate have no n-grams and are left out of the
  // geometric mean.
  const int effective = std::min<int>(n, static_cast<int>(candidate.size()));
  double log_sum = 0.0;
  for (int i = 1; i <= effective; ++i) {
    auto [matched, total] = clipped_counts(candidate, references, i);
    double precision = matched / total;
    if (matched == 0.0) {
      if (smoothing == BleuSmoothing::kNone) return 0.0;
      precision = kBleuEpsilon;
    }
    log_sum += std::log(precision);
  }
  const double bp = brevity_penalty(static_cast<double>(candidate.size()),
                                    static_cast<double>(closest_reference_length(candidate.size(), references)));
  return bp * std::exp(log_sum / effective);
}

void CorpusBleu::add(const TokenSequence& candidate, std::span<const TokenSequence> references) {
  if (references.empty()) throw DataError("BLEU needs at least one reference");
  for (int i = 1; i <= kMaxBleuOrder; ++i) {
    auto [matched, total] = clipped_counts(candidate, references, i);
    matched_[i - 1] += matched;
    total_[i - 1] += total;
  }
  candidate_length_ += static_cast<double>(candidate.size());
  reference_length_ += static_cast<double>(closest_reference_length(candidate.size(), references));
  ++segments_;
}

double CorpusBleu::score(int n) const {
  check_order(n);
  if (candidate_length_ == 0.0) return 0.0;
  double log_sum = 0.0;
  int used = 0;
  for (int i = 0; i < n; ++i) {
    if (total_[i] == 0.0) continue;
    if (matched_[i] == 0.0) return 0.0;
    log_sum += std::log(matched_[i] / total_[i]);
    ++used;
  }
  return brevity_penalty(candidate_length_, reference_length_) * std::exp(log_sum / used);
}

// ---- ROUGE ----------------------------------------------------------------

OverlapScore rouge_1(const TokenSequence& a, const TokenSequence& b) {
  OverlapScore s;
  if (a.empty() || b.empty()) {
    s.degenerate = true;
    return s;
  }
  std::unordered_map<std::string, int> counts_b;
  for (const auto& t : b) ++counts_b[t];
  double overlap = 0.0;
  for (const auto& t : a) {
    auto it = counts_b.find(t);
    if (it != counts_b.end() && it->second > 0) {
      --it->second;
      overlap += 1.0;
    }
  }
  s.precision = overlap / static_cast<double>(a.size());
  s.recall = overlap / static_cast<double>(b.size());
  // Single rounding, so exact-ratio scores compare exactly against thresholds.
  if (overlap > 0.0) s.f = 2.0 * overlap / static_cast<double>(a.size() + b.size());
  return s;
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

double rouge_l_f(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  constexpr double beta2 = kRougeLBeta * kRougeLBeta;
  return (1.0 + beta2) * recall * precision / (recall + beta2 * precision);
}

}  // namespace

OverlapScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  return rouge_l(candidate, std::span<const TokenSequence>(&reference, 1));
}

OverlapScore rouge_l(const TokenSequence& candidate, std::span<const TokenSequence> references) {
  OverlapScore s;
  if (candidate.empty() || references.empty()) {
    s.degenerate = true;
    return s;
  }
  bool any_nonempty = false;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    any_nonempty = true;
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    s.precision = std::max(s.precision, lcs / static_cast<double>(candidate.size()));
    s.recall = std::max(s.recall, lcs / static_cast<double>(ref.size()));
  }
  s.degenerate = !any_nonempty;
  s.f = rouge_l_f(s.precision, s.recall);
  return s;
}

// ---- METEOR ---------------------------------------------------------------

std::size_t MeteorAlignment::chunks() const {
  if (pairs.empty()) return 0;
  std::size_t chunks = 1;
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].first != pairs[i - 1].first + 1 || pairs[i].second != pairs[i - 1].second + 1) {
      ++chunks;
    }
  }
  return chunks;
}

namespace {

using Pair = std::pair<std::size_t, std::size_t>;

// Stage combinations beyond this fall back to in-order pairing.
constexpr std::size_t kMaxStageCombinations = 512;

// All maximum-cardinality injective pairings between equal-key occurrences.
void enumerate_pairings(const std::vector<std::size_t>& cand, const std::vector<std::size_t>& ref,
                        std::vector<std::vector<Pair>>& out) {
  const bool cand_small = cand.size() <= ref.size();
  const auto& small = cand_small ? cand : ref;
  const auto& large = cand_small ? ref : cand;
  std::vector<bool> used(large.size(), false);
  std::vector<Pair> current;
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == small.size()) {
      out.push_back(current);
      return;
    }
    for (std::size_t j = 0; j < large.size(); ++j) {
      if (used[j]) continue;
      used[j] = true;
      current.push_back(cand_small ? Pair{small[i], large[j]} : Pair{large[j], small[i]});
      self(self, i + 1);
      current.pop_back();
      used[j] = false;
    }
  };
  rec(rec, 0);
}

std::size_t permutation_count(std::size_t large, std::size_t small) {
  std::size_t count = 1;
  for (std::size_t i = 0; i < small; ++i) {
    count *= large - i;
    if (count > kMaxStageCombinations) return kMaxStageCombinations + 1;
  }
  return count;
}

class MeteorSearch {
 public:
  MeteorSearch(const TokenSequence& candidate, const TokenSequence& reference)
      : cand_(candidate), ref_(reference) {
    for (const auto& t : candidate) cand_stems_.push_back(porter_stem(t));
    for (const auto& t : reference) ref_stems_.push_back(porter_stem(t));
  }

  MeteorAlignment run() {
    std::vector<bool> used_c(cand_.size(), false);
    std::vector<bool> used_r(ref_.size(), false);
    std::vector<Pair> pairs;
    search(0, pairs, used_c, used_r, 0);
    return best_;
  }

 private:
  const std::string& key(int stage, bool candidate, std::size_t pos) const {
    if (stage == 0) return candidate ? cand_[pos] : ref_[pos];
    return candidate ? cand_stems_[pos] : ref_stems_[pos];
  }

  void search(int stage, std::vector<Pair>& pairs, std::vector<bool>& used_c,
              std::vector<bool>& used_r, std::size_t exact) {
    if (stage == 2) {
      MeteorAlignment a;
      a.pairs = pairs;
      std::sort(a.pairs.begin(), a.pairs.end());
      a.exact_matches = exact;
      a.stem_matches = pairs.size() - exact;
      if (!have_best_ || a.chunks() < best_.chunks()) {
        best_ = std::move(a);
        have_best_ = true;
      }
      return;
    }
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
    for (std::size_t i = 0; i < cand_.size(); ++i) {
      if (!used_c[i]) groups[key(stage, true, i)].first.push_back(i);
    }
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      if (!used_r[j]) {
        auto it = groups.find(key(stage, false, j));
        if (it != groups.end()) it->second.second.push_back(j);
      }
    }
    std::vector<std::vector<std::vector<Pair>>> options;
    std::size_t combinations = 1;
    for (auto& [k, g] : groups) {
      if (g.second.empty()) continue;
      const std::size_t lo = std::min(g.first.size(), g.second.size());
      const std::size_t hi = std::max(g.first.size(), g.second.size());
      combinations *= permutation_count(hi, lo);
      combinations = std::min(combinations, kMaxStageCombinations + 1);
      options.emplace_back();
    }
    std::size_t gi = 0;
    for (auto& [k, g] : groups) {
      if (g.second.empty()) continue;
      auto& opts = options[gi++];
      if (combinations <= kMaxStageCombinations) {
        enumerate_pairings(g.first, g.second, opts);
      } else {
        std::vector<Pair> in_order;
        for (std::size_t i = 0; i < std::min(g.first.size(), g.second.size()); ++i) {
          in_order.emplace_back(g.first[i], g.second[i]);
        }
        opts.push_back(std::move(in_order));
      }
    }
    const std::size_t stage_exact = stage == 0 ? 1 : 0;
    auto rec = [&](auto&& self, std::size_t g) -> void {
      if (g == options.size()) {
        search(stage + 1, pairs, used_c, used_r,
               stage_exact ? pairs.size() : exact);
        return;
      }
      for (const auto& option : options[g]) {
        for (auto [c, r] : option) {
          used_c[c] = true;
          used_r[r] = true;
          pairs.emplace_back(c, r);
        }
        self(self, g + 1);
        for (auto [c, r] : option) {
          used_c[c] = false;
          used_r[r] = false;
          pairs.pop_back();
        }
      }
    };
    rec(rec, 0);
  }

  const TokenSequence& cand_;
  const TokenSequence& ref_;
  std::vector<std::string> cand_stems_;
  std::vector<std::string> ref_stems_;
  MeteorAlignment best_;
  bool have_best_ = false;
};

}  // namespace

MeteorAlignment meteor_align(const TokenSequence& candidate, const TokenSequence& reference) {
  return MeteorSearch(candidate, reference).run();
}

MeteorScore meteor_detail(const TokenSequence& candidate, const TokenSequence& reference) {
  MeteorScore s;
  if (candidate.empty() || reference.empty()) return s;
  const MeteorAlignment a = meteor_align(candidate, reference);
  s.matches = a.matches();
  s.chunks = a.chunks();
  if (s.matches == 0) return s;
  const auto m = static_cast<double>(s.matches);
  s.precision = m / static_cast<double>(candidate.size());
  s.recall = m / static_cast<double>(reference.size());
  s.f_mean = 10.0 * s.precision * s.recall / (s.recall + 9.0 * s.precision);
  s.penalty = 0.5 * std::pow(static_cast<double>(s.chunks) / m, 3.0);
  s.score = s.f_mean * (1.0 - s.penalty);
  return s;
}

double meteor(const TokenSequence& candidate, const TokenSequence& reference) {
  return meteor_detail(candidate, reference).score;
}

double meteor(const TokenSequence& candidate, std::span<const TokenSequence> references) {
  double best = 0.0;
  for (const auto& ref : references) best = std::max(best, meteor(candidate, ref));
  return best;
}

// ---- CIDEr-D ----------------------------------------------------------------

namespace {

struct TfIdfVector {
  std::array<std::unordered_map<std::string, double>, kCiderMaxN> weights;
  std::array<double, kCiderMaxN> norm{};
  double length = 0.0;
};

}  // namespace

CiderD::CiderD(const ReferenceCorpus& references, double sigma) : sigma_(sigma) {
  corpus_size_ = references.size();
  if (corpus_size_ < 2) throw DataError("idf undefined: CIDEr-D needs at least 2 instances");
  for (const auto& [id, refs] : references) {
    std::set<std::string> seen;
    for (const auto& ref : refs) {
      for (int n = 1; n <= kCiderMaxN; ++n) {
        for (const auto& [gram, count] : ngram_counts(ref, n)) seen.insert(gram);
      }
    }
    for (const auto& gram : seen) ++document_frequency_[gram];
  }
  log_corpus_size_ = std::log(static_cast<double>(corpus_size_));
}

double CiderD::idf(const std::string& ngram) const {
  auto it = document_frequency_.find(ngram);
  const double df = it == document_frequency_.end() ? 0.0 : static_cast<double>(it->second);
  return log_corpus_size_ - std::log(std::max(1.0, df));
}

double CiderD::score(const TokenSequence& candidate,
                     std::span<const TokenSequence> references) const {
  if (references.empty()) throw DataError("CIDEr-D needs at least one reference per candidate");
  auto vectorize = [&](const TokenSequence& seq) {
    TfIdfVector v;
    for (int n = 1; n <= kCiderMaxN; ++n) {
      double sq = 0.0;
      for (const auto& [gram, tf] : ngram_counts(seq, n)) {
        const double w = static_cast<double>(tf) * idf(gram);
        v.weights[n - 1][gram] = w;
        sq += w * w;
      }
      v.norm[n - 1] = std::sqrt(sq);
    }
    v.length = static_cast<double>(seq.size());
    return v;
  };
  const TfIdfVector cand = vectorize(candidate);
  std::array<double, kCiderMaxN> sum{};
  for (const auto& ref_seq : references) {
    const TfIdfVector ref = vectorize(ref_seq);
    const double delta = cand.length - ref.length;
    const double penalty = std::exp(-(delta * delta) / (2.0 * sigma_ * sigma_));
    for (int n = 0; n < kCiderMaxN; ++n) {
      if (cand.norm[n] == 0.0 || ref.norm[n] == 0.0) continue;
      double dot = 0.0;
      for (const auto& [gram, wc] : cand.weights[n]) {
        auto it = ref.weights[n].find(gram);
        if (it == ref.weights[n].end()) continue;
        dot += std::min(wc, it->second) * it->second;
      }
      sum[n] += dot / (cand.norm[n] * ref.norm[n]) * penalty;
    }
  }
  double mean = 0.0;
  for (double s : sum) mean += s;
  mean /= kCiderMaxN;
  return 10.0 * mean / static_cast<double>(references.size());
}

std::map<std::string, double> cider_d(const std::map<std::string, TokenSequence>& candidates,
                                      const ReferenceCorpus& references) {
  const CiderD scorer(references);
  std::map<std::string, double> out;
  for (const auto& [id, cand] : candidates) {
    auto it = references.find(id);
    if (it == references.end()) throw DataError("no references for instance '" + id + "'");
    out[id] = scorer.score(cand, it->second);
  }
  return out;
}

// ---- BERTScore --------------------------------------------------------------

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double greedy_side(const EmbeddingSet& from, const EmbeddingSet& to,
                   const std::map<std::string, double>* weights) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& tv : from.tokens) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& other : to.tokens) best = std::max(best, cosine(tv.vector, other.vector));
    double w = 1.0;
    if (weights != nullptr) {
      auto it = weights->find(tv.token);
      if (it != weights->end()) w = it->second;
    }
    num += w * best;
    den += w;
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace

BertScore bertscore(const EmbeddingSet& candidate, const EmbeddingSet& reference,
                    const BertScoreOptions& options) {
  if (candidate.tokens.empty() || reference.tokens.empty()) {
    throw DataError("BERTScore needs non-empty token lists");
  }
  if (candidate.dimension() != reference.dimension()) {
    throw DataError("BERTScore embedding dimension mismatch");
  }
  BertScore s;
  s.precision = greedy_side(candidate, reference, options.idf_weights);
  s.recall = greedy_side(reference, candidate, options.idf_weights);
  if (options.baseline) {
    const double b = *options.baseline;
    if (b >= 1.0) throw DataError("BERTScore baseline must be < 1");
    s.precision = (s.precision - b) / (1.0 - b);
    s.recall = (s.recall - b) / (1.0 - b);
  }
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double bertscore_f1(const EmbeddingSet& candidate, const EmbeddingSet& reference,
                    const BertScoreOptions& options) {
  return bertscore(candidate, reference, options).f1;
}

// ---- aggregation ------------------------------------------------------------

double harmonic_mean(std::span<const double> values) {
  if (values.empty()) throw DataError("harmonic mean of an empty list");
  double inv = 0.0;
  for (double v : values) {
    if (!(v >= 0.0)) throw DataError("harmonic mean needs non-negative values");
    if (v == 0.0) return 0.0;
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

std::optional<std::string> validate(const MetricVector& metrics) {
  for (const auto& [name, value] : metrics.scores) {
    if (!std::isfinite(value)) return "non-finite score for " + name;
    if (is_external_metric(name) || name == metric::kSelection) continue;
    if (!is_registered_metric(name)) continue;
    const double hi = name == metric::kCiderD ? 10.0 : 1.0;
    if (value < 0.0 || value > hi + 1e-12) return "score out of range for " + name;
  }
  return std::nullopt;
}

std::vector<std::string> default_ngram_set() {
  return {std::string(metric::kRougeL), std::string(metric::kSpice), std::string(metric::kCiderD),
          std::string(metric::kMeteor)};
}

double selection_score(const MetricVector& metrics, std::span<const std::string> ngram_set) {
  auto get = [&](std::string_view name) {
    auto it = metrics.scores.find(name);
    if (it == metrics.scores.end()) {
      throw DataError("selection score: missing metric '" + std::string(name) + "'");
    }
    return it->second;
  };
  const double bert = get(metric::kBertScoreF1);
  std::vector<double> ngram;
  for (const auto& name : ngram_set) ngram.push_back(get(name));
  const std::array<double, 2> top = {bert, harmonic_mean(ngram)};
  return harmonic_mean(top);
}

double selection_score(const MetricVector& metrics) {
  const auto names = default_ngram_set();
  return selection_score(metrics, names);
}

std::string to_record_line(const MetricVector& metrics) {
  nlohmann::json scores = nlohmann::json::object();
  for (const auto& [k, v] : metrics.scores) scores[k] = v;
  return nlohmann::json{{"explanation_key", metrics.explanation_key}, {"scores", std::move(scores)}}
      .dump();
}

MetricVector metric_vector_from_line(std::string_view line) {
  const auto j = detail::parse_line(line);
  MetricVector m;
  m.explanation_key = detail::require<std::string>(j, "explanation_key");
  if (!j.contains("scores") || !j.at("scores").is_object()) throw DataError("missing scores object");
  for (const auto& [k, v] : j.at("scores").items()) m.scores[k] = v.get<double>();
  return m;
}

std::map<std::string, std::map<std::string, double>> load_metric_sidecar(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::map<std::string, std::map<std::string, double>> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (detail::is_blank(line)) continue;
    const std::string where = path.string() + ":" + std::to_string(line_number) + ": ";
    try {
      const auto j = detail::parse_line(line);
      if (detail::is_meta(j)) continue;
      auto key = detail::require<std::string>(j, "explanation_key");
      auto name = detail::require<std::string>(j, "metric");
      const auto value = detail::require<double>(j, "value");
      if (!is_registered_metric(name)) throw DataError("unknown metric '" + name + "'");
      if (!std::isfinite(value)) throw DataError("non-finite value");
      if (!out[key].emplace(name, value).second) throw DataError("duplicate score for " + key + "/" + name);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

}  // namespace evil
