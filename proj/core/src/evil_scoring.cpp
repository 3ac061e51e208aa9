#include "evil/evil_scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "evil/analysis.hpp"
#include "json.hpp"
#include "record_io.hpp"

namespace evil {

using nlohmann::json;

double numeric_value(Rating rating) {
  switch (rating) {
    case Rating::kNo: return 0.0;
    case Rating::kWeakNo: return 1.0 / 3.0;
    case Rating::kWeakYes: return 2.0 / 3.0;
    case Rating::kYes: return 1.0;
  }
  return 0.0;
}

int ordinal(Rating rating) { return static_cast<int>(rating); }

Rating rating_from_ordinal(int value) {
  if (value < 0 || value > 3) throw DataError("rating ordinal out of range");
  return static_cast<Rating>(value);
}

std::string_view to_string(Rating rating) {
  switch (rating) {
    case Rating::kNo: return "no";
    case Rating::kWeakNo: return "weak_no";
    case Rating::kWeakYes: return "weak_yes";
    case Rating::kYes: return "yes";
  }
  return "no";
}

Rating parse_rating(std::string_view text) {
  if (text == "no") return Rating::kNo;
  if (text == "weak_no") return Rating::kWeakNo;
  if (text == "weak_yes") return Rating::kWeakYes;
  if (text == "yes") return Rating::kYes;
  throw DataError("unknown rating '" + std::string(text) + "'");
}

std::string_view to_string(Shortcoming s) {
  switch (s) {
    case Shortcoming::kUntrueToImage: return "untrue_to_image";
    case Shortcoming::kLackOfJustification: return "lack_of_justification";
    case Shortcoming::kNonsensical: return "nonsensical";
  }
  return "nonsensical";
}

Shortcoming parse_shortcoming(std::string_view text) {
  if (text == "untrue_to_image") return Shortcoming::kUntrueToImage;
  if (text == "lack_of_justification") return Shortcoming::kLackOfJustification;
  if (text == "nonsensical") return Shortcoming::kNonsensical;
  throw DataError("unknown shortcoming '" + std::string(text) + "'");
}

std::size_t ShortcomingSet::size() const {
  std::size_t n = 0;
  for (unsigned b = bits_; b != 0; b &= b - 1) ++n;
  return n;
}

std::vector<Shortcoming> ShortcomingSet::items() const {
  std::vector<Shortcoming> out;
  for (std::size_t i = 0; i < kShortcomingCount; ++i) {
    const auto s = static_cast<Shortcoming>(i);
    if (contains(s)) out.push_back(s);
  }
  return out;
}

ValidityError::ValidityError(std::string_view rule_name)
    : std::invalid_argument("validity rule violated: " + std::string(rule_name)), rule_(rule_name) {}

std::optional<std::string_view> check_rating(Rating rating, const ShortcomingSet& shortcomings) {
  if ((rating == Rating::kNo || rating == Rating::kWeakNo) && shortcomings.empty()) {
    return rule::kInsufficientWithoutShortcomings;
  }
  if (rating == Rating::kYes && !shortcomings.empty()) return rule::kOptimalWithShortcomings;
  return std::nullopt;
}

std::string Target::label() const {
  return ground_truth ? std::string(kGroundTruthModel) : model_id;
}

AnnotationRecord::AnnotationRecord(std::string annotator_id, std::string instance_id,
                                   std::string dataset_id, Target target,
                                   std::string task_answer_given, bool task_correct,
                                   Rating rating, ShortcomingSet shortcomings,
                                   int presentation_slot)
    : annotator_id_(std::move(annotator_id)),
      instance_id_(std::move(instance_id)),
      dataset_id_(std::move(dataset_id)),
      target_(std::move(target)),
      task_answer_given_(std::move(task_answer_given)),
      task_correct_(task_correct),
      rating_(rating),
      shortcomings_(shortcomings),
      presentation_slot_(presentation_slot) {
  if (auto violated = check_rating(rating_, shortcomings_)) throw ValidityError(*violated);
  if (!target_.ground_truth && (target_.model_id.empty() || target_.model_id == kGroundTruthModel)) {
    throw DataError("generated target needs a model id other than 'ground_truth'");
  }
}

std::string to_record_line(const AnnotationRecord& r) {
  json shortcomings = json::array();
  for (auto s : r.shortcomings().items()) shortcomings.push_back(to_string(s));
  json j{{"annotator_id", r.annotator_id()},
         {"instance_id", r.instance_id()},
         {"dataset_id", r.dataset_id()},
         {"target", r.target().ground_truth ? "ground_truth" : "generated"},
         {"task_answer", r.task_answer_given()},
         {"task_correct", r.task_correct()},
         {"rating", to_string(r.rating())},
         {"shortcomings", std::move(shortcomings)},
         {"presentation_slot", r.presentation_slot()}};
  if (!r.target().ground_truth) j["model_id"] = r.target().model_id;
  return j.dump();
}

namespace {

AnnotationRecord annotation_from_json(const json& j) {
  const auto kind = detail::require<std::string>(j, "target");
  Target target;
  if (kind == "ground_truth") {
    target = Target::gold();
  } else if (kind == "generated") {
    target = Target::generated(detail::require<std::string>(j, "model_id"));
  } else {
    throw DataError("unknown target '" + kind + "'");
  }
  ShortcomingSet shortcomings;
  for (const auto& s : detail::require_array(j, "shortcomings")) {
    shortcomings.insert(parse_shortcoming(s.get<std::string>()));
  }
  return AnnotationRecord(detail::require<std::string>(j, "annotator_id"),
                          detail::require<std::string>(j, "instance_id"),
                          detail::require<std::string>(j, "dataset_id"), std::move(target),
                          detail::require<std::string>(j, "task_answer"),
                          detail::require<bool>(j, "task_correct"),
                          parse_rating(detail::require<std::string>(j, "rating")), shortcomings,
                          j.value("presentation_slot", 0));
}

}  // namespace

AnnotationRecord annotation_from_line(std::string_view line) {
  return annotation_from_json(detail::parse_line(line));
}

LoadResult<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  LoadResult<AnnotationRecord> result;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (detail::is_blank(line)) continue;
    try {
      const auto j = detail::parse_line(line);
      if (detail::is_meta(j)) continue;
      result.records.push_back(annotation_from_json(j));
    } catch (const std::exception& e) {
      result.rejects.push_back({line_number, e.what()});
    }
  }
  return result;
}

// ---- task score -------------------------------------------------------------

bool answer_matches(const VlInstance& instance, std::string_view answer) {
  return instance_task_score(instance, answer) > 0.0;
}

double instance_task_score(const VlInstance& instance, std::string_view answer) {
  const std::string given = normalize_answer(answer);
  if (instance.task_kind == TaskKind::kMultiAnswer) {
    const bool have_counts = std::any_of(instance.gold_answers.begin(), instance.gold_answers.end(),
                                         [](const GoldAnswer& g) { return g.count.has_value(); });
    if (have_counts) {
      int count = 0;
      for (const auto& g : instance.gold_answers) {
        if (normalize_answer(g.answer) == given) count += g.count.value_or(0);
      }
      return std::min(1.0, static_cast<double>(count) / 3.0);
    }
  }
  for (const auto& g : instance.gold_answers) {
    if (normalize_answer(g.answer) == given) return 1.0;
  }
  return 0.0;
}

TaskScore task_score(std::span<const ModelPrediction> predictions,
                     std::span<const VlInstance> instances) {
  if (predictions.empty()) throw DataError("task_score: no predictions");
  std::map<std::string_view, const VlInstance*> by_id;
  for (const auto& inst : instances) by_id[inst.instance_id] = &inst;
  TaskScore out;
  double sum = 0.0;
  const std::string& model = predictions.front().model_id;
  for (const auto& p : predictions) {
    if (p.model_id != model) throw DataError("task_score: predictions from several models");
    auto it = by_id.find(p.instance_id);
    if (it == by_id.end()) throw DataError("prediction references unknown instance '" + p.instance_id + "'");
    const double s = instance_task_score(*it->second, p.predicted_answer);
    out.per_instance[p.instance_id] = s;
    out.correct[p.instance_id] = s > 0.0;
    sum += s;
  }
  out.s_t = sum / static_cast<double>(predictions.size());
  return out;
}

// ---- gating and pooling -----------------------------------------------------

ExplanationKey explanation_key(const AnnotationRecord& record) {
  return {record.dataset_id(), record.instance_id(), record.target()};
}

GateResult gate_annotations(std::span<const AnnotationRecord> records) {
  GateResult out;
  std::set<ExplanationKey> seen;
  for (const auto& r : records) {
    auto key = explanation_key(r);
    seen.insert(key);
    if (r.task_correct()) {
      out.valid.push_back(r);
      ++out.survivors[key];
    }
  }
  for (const auto& key : seen) {
    if (!out.survivors.contains(key)) {
      out.survivors[key] = 0;
      out.excluded.push_back(key);
    }
  }
  return out;
}

double pool_numeric(std::span<const Rating> ratings) {
  if (ratings.empty()) throw DataError("pool_numeric: no ratings");
  double sum = 0.0;
  for (auto r : ratings) sum += numeric_value(r);
  return sum / static_cast<double>(ratings.size());
}

namespace {

// Median of small integers; even counts floor the midpoint.
int floored_median(std::vector<int> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2;
}

}  // namespace

Rating pool_median(std::span<const Rating> ratings) {
  if (ratings.empty()) throw DataError("pool_median: no ratings");
  std::vector<int> ords;
  for (auto r : ratings) ords.push_back(ordinal(r));
  return rating_from_ordinal(floored_median(std::move(ords)));
}

int comparative_score(Rating generated, Rating ground_truth) {
  return ordinal(generated) >= ordinal(ground_truth) ? 1 : 0;
}

int comparative_score(const AnnotationRecord& generated, const AnnotationRecord& ground_truth) {
  if (generated.annotator_id() != ground_truth.annotator_id() ||
      generated.instance_id() != ground_truth.instance_id() ||
      generated.dataset_id() != ground_truth.dataset_id()) {
    throw DataError("comparative score needs one annotator on one instance");
  }
  if (generated.target().ground_truth || !ground_truth.target().ground_truth) {
    throw DataError("comparative score needs a generated and a ground-truth record");
  }
  return comparative_score(generated.rating(), ground_truth.rating());
}

int pool_comparative(std::span<const int> binaries) {
  if (binaries.empty()) throw DataError("pool_comparative: no scores");
  std::vector<int> values(binaries.begin(), binaries.end());
  for (int v : values) {
    if (v != 0 && v != 1) throw DataError("comparative scores must be 0 or 1");
  }
  return floored_median(std::move(values));
}

double explanation_score(std::span<const AnnotationRecord> records) {
  std::vector<Rating> ratings;
  for (const auto& r : records) ratings.push_back(r.rating());
  return pool_numeric(ratings);
}

double compute_s_e(std::span<const double> explanation_scores) {
  if (explanation_scores.empty()) throw DataError("S_E: no included explanations");
  double sum = 0.0;
  for (double s : explanation_scores) sum += s;
  return sum / static_cast<double>(explanation_scores.size());
}

double compute_s_o(double s_t, double s_e) {
  if (!(s_t >= 0.0 && s_t <= 1.0) || !(s_e >= 0.0 && s_e <= 1.0)) {
    throw DataError("S_O: scores must lie in [0, 1]");
  }
  return s_t * s_e;
}

ShortcomingFrequencies shortcoming_frequencies(std::span<const AnnotationRecord> records) {
  ShortcomingFrequencies out;
  for (std::size_t i = 0; i < kShortcomingCount; ++i) out[static_cast<Shortcoming>(i)] = 0.0;
  if (records.empty()) return out;
  for (const auto& r : records) {
    for (auto s : r.shortcomings().items()) out[s] += 1.0;
  }
  for (auto& [s, v] : out) v /= static_cast<double>(records.size());
  return out;
}

// ---- reports ----------------------------------------------------------------

std::string_view to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::kNumeric: return "numeric";
    case Pooling::kMedian: return "median";
    case Pooling::kComparative: return "comparative";
  }
  return "numeric";
}

Pooling parse_pooling(std::string_view text) {
  if (text == "numeric") return Pooling::kNumeric;
  if (text == "median") return Pooling::kMedian;
  if (text == "comparative") return Pooling::kComparative;
  throw ConfigError("unknown pooling scheme '" + std::string(text) + "'");
}

EvilReport score_model(const ScoringInput& input, Pooling pooling) {
  const bool gt = input.model_id == kGroundTruthModel;
  if (gt && pooling == Pooling::kComparative) {
    throw DataError("comparative pooling is undefined for the ground-truth pseudo-model");
  }
  EvilReport report;
  report.model_id = input.model_id;
  report.dataset_id = input.dataset_id;
  report.pooling = pooling;

  std::map<std::string, bool> correct;
  if (gt) {
    report.s_t = 1.0;
  } else {
    std::vector<ModelPrediction> own;
    for (const auto& p : input.predictions) {
      if (p.model_id == input.model_id) own.push_back(p);
    }
    const TaskScore ts = task_score(own, input.instances);
    report.s_t = ts.s_t;
    correct = ts.correct;
  }

  const Target target = gt ? Target::gold() : Target::generated(input.model_id);
  std::vector<AnnotationRecord> mine;
  // (annotator, instance) -> ground-truth rating, for comparative pooling.
  std::map<std::pair<std::string, std::string>, Rating> gt_ratings;
  for (const auto& r : input.records) {
    if (r.dataset_id() != input.dataset_id) continue;
    if (r.target() == target) mine.push_back(r);
    if (r.target().ground_truth && r.task_correct()) {
      gt_ratings[{r.annotator_id(), r.instance_id()}] = r.rating();
    }
  }

  const GateResult gated = gate_annotations(mine);
  std::map<std::string, std::vector<const AnnotationRecord*>> by_instance;
  for (const auto& r : gated.valid) by_instance[r.instance_id()].push_back(&r);

  std::set<std::string> annotated;
  for (const auto& r : mine) annotated.insert(r.instance_id());

  std::vector<double> scores;
  std::vector<AnnotationRecord> included_records;
  std::map<Rating, double> distribution;
  for (const auto& instance_id : annotated) {
    if (!gt) {
      auto it = correct.find(instance_id);
      if (it == correct.end() || !it->second) {
        ++report.excluded_incorrect_prediction;
        continue;
      }
    }
    auto vit = by_instance.find(instance_id);
    if (vit == by_instance.end()) {
      ++report.excluded_all_incorrect;
      continue;
    }
    const auto& recs = vit->second;
    std::vector<Rating> ratings;
    for (const auto* r : recs) ratings.push_back(r->rating());
    double score = 0.0;
    switch (pooling) {
      case Pooling::kNumeric:
        score = pool_numeric(ratings);
        break;
      case Pooling::kMedian: {
        const Rating median = pool_median(ratings);
        distribution[median] += 1.0;
        score = numeric_value(median);
        break;
      }
      case Pooling::kComparative: {
        std::vector<int> binaries;
        for (const auto* r : recs) {
          auto git = gt_ratings.find({r->annotator_id(), r->instance_id()});
          if (git == gt_ratings.end()) {
            throw DataError("comparative pooling: annotator '" + r->annotator_id() +
                            "' has no ground-truth rating for '" + r->instance_id() + "'");
          }
          binaries.push_back(comparative_score(r->rating(), git->second));
        }
        score = static_cast<double>(pool_comparative(binaries));
        break;
      }
    }
    scores.push_back(score);
    for (const auto* r : recs) included_records.push_back(*r);
  }

  report.n_explanations = scores.size();
  report.s_e = compute_s_e(scores);
  report.s_o = compute_s_o(report.s_t, report.s_e);
  report.shortcoming_frequencies = shortcoming_frequencies(included_records);
  report.standard_error = scores.size() >= 2 ? standard_error(scores) : 0.0;
  if (pooling == Pooling::kMedian) {
    for (int o = 0; o < 4; ++o) {
      const Rating r = rating_from_ordinal(o);
      report.median_distribution[r] = distribution[r] / static_cast<double>(scores.size());
    }
  }
  return report;
}

std::string to_record_line(const EvilReport& r) {
  json freq = json::object();
  for (const auto& [s, v] : r.shortcoming_frequencies) freq[std::string(to_string(s))] = v;
  json j{{"model_id", r.model_id},
         {"dataset_id", r.dataset_id},
         {"pooling", to_string(r.pooling)},
         {"s_t", r.s_t},
         {"s_e", r.s_e},
         {"s_o", r.s_o},
         {"n_explanations", r.n_explanations},
         {"shortcoming_frequencies", std::move(freq)},
         {"standard_error", r.standard_error},
         {"excluded_all_incorrect", r.excluded_all_incorrect},
         {"excluded_incorrect_prediction", r.excluded_incorrect_prediction}};
  if (!r.median_distribution.empty()) {
    json dist = json::object();
    for (const auto& [rating, v] : r.median_distribution) dist[std::string(to_string(rating))] = v;
    j["median_distribution"] = std::move(dist);
  }
  return j.dump();
}

EvilReport report_from_line(std::string_view line) {
  const auto j = detail::parse_line(line);
  EvilReport r;
  r.model_id = detail::require<std::string>(j, "model_id");
  r.dataset_id = detail::require<std::string>(j, "dataset_id");
  r.pooling = parse_pooling(detail::require<std::string>(j, "pooling"));
  r.s_t = detail::require<double>(j, "s_t");
  r.s_e = detail::require<double>(j, "s_e");
  r.s_o = detail::require<double>(j, "s_o");
  r.n_explanations = detail::require<std::size_t>(j, "n_explanations");
  for (const auto& [k, v] : j.at("shortcoming_frequencies").items()) {
    r.shortcoming_frequencies[parse_shortcoming(k)] = v.get<double>();
  }
  r.standard_error = detail::require<double>(j, "standard_error");
  r.excluded_all_incorrect = j.value("excluded_all_incorrect", std::size_t{0});
  r.excluded_incorrect_prediction = j.value("excluded_incorrect_prediction", std::size_t{0});
  if (j.contains("median_distribution")) {
    for (const auto& [k, v] : j.at("median_distribution").items()) {
      r.median_distribution[parse_rating(k)] = v.get<double>();
    }
  }
  return r;
}

std::string format_report_table(std::span<const EvilReport> reports) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  out << std::left << std::setw(16) << "Model" << std::setw(14) << "Dataset" << std::setw(12)
      << "Pooling" << std::right << std::setw(7) << "S_O" << std::setw(7) << "S_T" << std::setw(7)
      << "S_E" << std::setw(8) << "+-2SE" << std::setw(6) << "n" << std::setw(8) << "Untrue"
      << std::setw(8) << "Justif" << std::setw(8) << "Nonsns" << std::setw(7) << "Excl" << '\n';
  for (const auto& r : reports) {
    auto freq = [&](Shortcoming s) {
      auto it = r.shortcoming_frequencies.find(s);
      return it == r.shortcoming_frequencies.end() ? 0.0 : 100.0 * it->second;
    };
    out << std::left << std::setw(16) << r.model_id << std::setw(14) << r.dataset_id
        << std::setw(12) << to_string(r.pooling) << std::right << std::setw(7) << 100.0 * r.s_o
        << std::setw(7) << 100.0 * r.s_t << std::setw(7) << 100.0 * r.s_e << std::setw(8)
        << 200.0 * r.standard_error << std::setw(6) << r.n_explanations << std::setw(8)
        << freq(Shortcoming::kUntrueToImage) << std::setw(8)
        << freq(Shortcoming::kLackOfJustification) << std::setw(8)
        << freq(Shortcoming::kNonsensical) << std::setw(7) << r.excluded_all_incorrect << '\n';
  }
  return out.str();
}

// ---- human scores -------------------------------------------------------------

std::map<std::string, double> human_scores(std::span<const AnnotationRecord> records,
                                           std::string_view dataset_id,
                                           HumanScoreNormalization normalization) {
  std::vector<const AnnotationRecord*> valid;
  for (const auto& r : records) {
    if (r.dataset_id() != dataset_id || r.target().ground_truth || !r.task_correct()) continue;
    valid.push_back(&r);
  }
  std::map<std::string, std::pair<double, double>> annotator_stats;  // mean, sd
  if (normalization == HumanScoreNormalization::kAnnotatorZScore) {
    std::map<std::string, std::vector<double>> per_annotator;
    for (const auto* r : valid) per_annotator[r->annotator_id()].push_back(numeric_value(r->rating()));
    for (auto& [a, values] : per_annotator) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
      annotator_stats[a] = {mean, sd};
    }
  }
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto* r : valid) {
    double v = numeric_value(r->rating());
    if (normalization == HumanScoreNormalization::kAnnotatorZScore) {
      const auto [mean, sd] = annotator_stats[r->annotator_id()];
      v = sd > 0.0 ? (v - mean) / sd : 0.0;
    }
    auto& slot = acc[r->target().model_id + "/" + r->instance_id()];
    slot.first += v;
    ++slot.second;
  }
  std::map<std::string, double> out;
  for (const auto& [k, s] : acc) out[k] = s.first / static_cast<double>(s.second);
  return out;
}

}  // namespace evil
