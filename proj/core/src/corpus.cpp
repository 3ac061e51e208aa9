#include "evil/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "record_io.hpp"

namespace evil {

using nlohmann::json;

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kClassification: return "classification";
    case TaskKind::kMultiAnswer: return "multi_answer";
    case TaskKind::kMultipleChoice: return "multiple_choice";
  }
  return "classification";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "test";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "classification") return TaskKind::kClassification;
  if (text == "multi_answer") return TaskKind::kMultiAnswer;
  if (text == "multiple_choice") return TaskKind::kMultipleChoice;
  throw DataError("unknown task_kind '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "dev" || text == "val") return Split::kDev;
  if (text == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(text) + "'");
}

const std::string& VlInstance::label() const {
  static const std::string kEmpty;
  if (gold_answers.empty()) return kEmpty;
  const GoldAnswer* best = &gold_answers.front();
  for (const auto& answer : gold_answers) {
    if (answer.count.value_or(0) > best->count.value_or(0)) best = &answer;
  }
  return best->answer;
}

std::string normalize_answer(std::string_view answer) {
  std::size_t begin = 0;
  std::size_t end = answer.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(answer[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(answer[end - 1]))) --end;
  std::string out(answer.substr(begin, end - begin));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<std::string> validate(const VlInstance& instance) {
  if (instance.instance_id.empty()) return "empty instance_id";
  if (instance.gold_explanations.empty()) return "empty explanations";
  if (instance.gold_answers.empty()) return "empty gold answers";
  if (instance.task_kind == TaskKind::kMultipleChoice) {
    if (instance.choices.empty()) return "multiple_choice without choices";
    for (const auto& gold : instance.gold_answers) {
      if (std::find(instance.choices.begin(), instance.choices.end(), gold.answer) ==
          instance.choices.end()) {
        return "gold answer '" + gold.answer + "' not among choices";
      }
    }
  }
  for (const auto& gold : instance.gold_answers) {
    if (!gold.count) continue;
    if (*gold.count < 0) return "negative answer count";
    if (instance.task_kind == TaskKind::kMultiAnswer && *gold.count < 1) {
      return "multi_answer count below 1";
    }
  }
  if (!instance.captions.empty() && instance.captions.size() != kCaptionsPerImage) {
    return "captions must have exactly 5 entries";
  }
  return std::nullopt;
}

std::optional<std::string> validate(const NliEvidence& evidence) {
  if (evidence.instance_id.empty()) return "empty instance_id";
  for (const auto& t : evidence.per_caption) {
    for (double p : {t.entailment, t.neutral, t.contradiction}) {
      if (!(p >= 0.0 && p <= 1.0)) return "probability outside [0,1]";
    }
    if (std::abs(t.entailment + t.neutral + t.contradiction - 1.0) > 1e-6) {
      return "triple does not sum to 1";
    }
  }
  return std::nullopt;
}

std::optional<std::string> validate(const EmbeddingSet& embeddings) {
  if (embeddings.explanation_key.empty()) return "empty explanation_key";
  const std::size_t d = embeddings.dimension();
  for (const auto& tv : embeddings.tokens) {
    if (tv.vector.empty()) return "zero-dimensional vector";
    if (tv.vector.size() != d) return "inconsistent vector dimension";
    for (double x : tv.vector) {
      if (!std::isfinite(x)) return "non-finite vector component";
    }
  }
  return std::nullopt;
}

// ---- JSON mapping ---------------------------------------------------------

namespace {

json to_json(const VlInstance& inst) {
  json j;
  j["instance_id"] = inst.instance_id;
  j["image_id"] = inst.image_id;
  j["image_uri"] = inst.image_uri;
  j["task_kind"] = to_string(inst.task_kind);
  j["input_text"] = inst.input_text;
  json answers = json::array();
  for (const auto& a : inst.gold_answers) {
    json ja{{"answer", a.answer}};
    if (a.count) ja["count"] = *a.count;
    answers.push_back(std::move(ja));
  }
  j["gold_answers"] = std::move(answers);
  if (!inst.choices.empty()) j["choices"] = inst.choices;
  j["gold_explanations"] = inst.gold_explanations;
  if (!inst.captions.empty()) j["captions"] = inst.captions;
  if (inst.group_tag) j["group_tag"] = *inst.group_tag;
  if (inst.premise) j["premise"] = *inst.premise;
  j["split"] = to_string(inst.split);
  return j;
}

VlInstance instance_from_json(const json& j) {
  VlInstance inst;
  inst.instance_id = detail::require<std::string>(j, "instance_id");
  inst.image_id = detail::require<std::string>(j, "image_id");
  inst.image_uri = j.value("image_uri", std::string{});
  inst.task_kind = parse_task_kind(detail::require<std::string>(j, "task_kind"));
  inst.input_text = detail::require<std::string>(j, "input_text");
  for (const auto& ja : detail::require_array(j, "gold_answers")) {
    GoldAnswer a;
    if (ja.is_string()) {
      a.answer = ja.get<std::string>();
    } else {
      a.answer = detail::require<std::string>(ja, "answer");
      if (ja.contains("count")) a.count = ja.at("count").get<int>();
    }
    inst.gold_answers.push_back(std::move(a));
  }
  if (j.contains("choices")) inst.choices = j.at("choices").get<std::vector<std::string>>();
  inst.gold_explanations = j.value("gold_explanations", std::vector<std::string>{});
  if (j.contains("captions")) inst.captions = j.at("captions").get<std::vector<std::string>>();
  if (j.contains("group_tag")) inst.group_tag = j.at("group_tag").get<std::string>();
  if (j.contains("premise")) inst.premise = j.at("premise").get<std::string>();
  inst.split = parse_split(j.value("split", std::string{"test"}));
  return inst;
}

json to_json(const ModelPrediction& p) {
  return json{{"instance_id", p.instance_id},
              {"model_id", p.model_id},
              {"predicted_answer", p.predicted_answer},
              {"generated_explanation", p.generated_explanation}};
}

ModelPrediction prediction_from_json(const json& j) {
  ModelPrediction p;
  p.instance_id = detail::require<std::string>(j, "instance_id");
  p.model_id = detail::require<std::string>(j, "model_id");
  p.predicted_answer = detail::require<std::string>(j, "predicted_answer");
  p.generated_explanation = detail::require<std::string>(j, "generated_explanation");
  if (p.instance_id.empty() || p.model_id.empty()) throw DataError("empty identifier");
  return p;
}

json to_json(const NliEvidence& e) {
  json scores = json::array();
  for (const auto& t : e.per_caption) {
    scores.push_back(json::array({t.entailment, t.neutral, t.contradiction}));
  }
  return json{{"instance_id", e.instance_id}, {"per_caption_scores", std::move(scores)}};
}

NliEvidence evidence_from_json(const json& j) {
  NliEvidence e;
  e.instance_id = detail::require<std::string>(j, "instance_id");
  const auto& scores = detail::require_array(j, "per_caption_scores");
  if (scores.size() != kCaptionsPerImage) throw DataError("expected 5 caption score triples");
  for (std::size_t c = 0; c < kCaptionsPerImage; ++c) {
    const auto& t = scores[c];
    if (!t.is_array() || t.size() != 3) throw DataError("score triple must have 3 entries");
    e.per_caption[c] = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  }
  return e;
}

json to_json(const EmbeddingSet& s) {
  json tokens = json::array();
  for (const auto& tv : s.tokens) tokens.push_back(json::array({tv.token, tv.vector}));
  return json{{"explanation_key", s.explanation_key}, {"tokens", std::move(tokens)}};
}

EmbeddingSet embeddings_from_json(const json& j) {
  EmbeddingSet s;
  s.explanation_key = detail::require<std::string>(j, "explanation_key");
  for (const auto& t : detail::require_array(j, "tokens")) {
    if (!t.is_array() || t.size() != 2) throw DataError("token entry must be [token, vector]");
    s.tokens.push_back({t[0].get<std::string>(), t[1].get<std::vector<double>>()});
  }
  return s;
}

template <typename Record, typename Parse, typename Check>
LoadResult<Record> load_lines(const std::filesystem::path& path, Parse parse, Check check) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  LoadResult<Record> result;
  std::string line;
  std::size_t line_number = 0;
  std::size_t candidates = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (detail::is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      ++candidates;
      result.rejects.push_back({line_number, std::string("malformed record: ") + e.what()});
      continue;
    }
    if (detail::is_meta(j)) continue;
    ++candidates;
    try {
      Record r = parse(j);
      if (auto reason = check(r)) {
        result.rejects.push_back({line_number, *reason});
        continue;
      }
      result.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      result.rejects.push_back({line_number, e.what()});
    }
  }
  if (candidates > 0 && result.records.empty()) {
    throw DataError("all " + std::to_string(candidates) + " records in " + path.string() +
                    " were rejected; first: line " +
                    std::to_string(result.rejects.front().line_number) + ": " +
                    result.rejects.front().reason);
  }
  return result;
}

}  // namespace

LoadResult<VlInstance> load_dataset(const std::filesystem::path& path, std::string_view schema) {
  if (schema != kInstanceSchemaV1) throw DataError("unknown dataset schema '" + std::string(schema) + "'");
  auto result = load_lines<VlInstance>(
      path, instance_from_json, [](const VlInstance& i) { return validate(i); });
  std::set<std::string> seen;
  std::vector<VlInstance> unique;
  for (auto& inst : result.records) {
    if (!seen.insert(inst.instance_id).second) {
      result.rejects.push_back({0, "duplicate instance_id '" + inst.instance_id + "'"});
      continue;
    }
    unique.push_back(std::move(inst));
  }
  result.records = std::move(unique);
  return result;
}

LoadResult<ModelPrediction> load_predictions(const std::filesystem::path& path) {
  auto result = load_lines<ModelPrediction>(
      path, prediction_from_json, [](const ModelPrediction&) { return std::optional<std::string>{}; });
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<ModelPrediction> unique;
  for (auto& p : result.records) {
    if (!seen.emplace(p.model_id, p.instance_id).second) {
      result.rejects.push_back({0, "duplicate prediction for (" + p.model_id + ", " + p.instance_id + ")"});
      continue;
    }
    unique.push_back(std::move(p));
  }
  result.records = std::move(unique);
  return result;
}

LoadResult<NliEvidence> load_nli_evidence(const std::filesystem::path& path) {
  return load_lines<NliEvidence>(path, evidence_from_json,
                                 [](const NliEvidence& e) { return validate(e); });
}

LoadResult<EmbeddingSet> load_embeddings(const std::filesystem::path& path) {
  return load_lines<EmbeddingSet>(path, embeddings_from_json,
                                  [](const EmbeddingSet& e) { return validate(e); });
}

std::string to_record_line(const VlInstance& instance) { return to_json(instance).dump(); }
std::string to_record_line(const ModelPrediction& prediction) { return to_json(prediction).dump(); }
std::string to_record_line(const NliEvidence& evidence) { return to_json(evidence).dump(); }
std::string to_record_line(const EmbeddingSet& embeddings) { return to_json(embeddings).dump(); }

VlInstance instance_from_line(std::string_view line) {
  return instance_from_json(detail::parse_line(line));
}
ModelPrediction prediction_from_line(std::string_view line) {
  return prediction_from_json(detail::parse_line(line));
}
NliEvidence evidence_from_line(std::string_view line) {
  return evidence_from_json(detail::parse_line(line));
}
EmbeddingSet embeddings_from_line(std::string_view line) {
  return embeddings_from_json(detail::parse_line(line));
}

void write_dataset(const std::filesystem::path& path, std::span<const VlInstance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& inst : instances) out << to_record_line(inst) << '\n';
}

// ---- statistics -----------------------------------------------------------

std::size_t whitespace_length(std::string_view text) {
  // Lowercasing does not change whitespace boundaries, so count directly.
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

namespace {

LengthStats length_stats(std::vector<std::size_t> lengths) {
  LengthStats s;
  if (lengths.empty()) return s;
  std::sort(lengths.begin(), lengths.end());
  double sum = 0.0;
  for (auto l : lengths) sum += static_cast<double>(l);
  s.mean = sum / static_cast<double>(lengths.size());
  const std::size_t n = lengths.size();
  s.median = n % 2 == 1 ? static_cast<double>(lengths[n / 2])
                        : 0.5 * static_cast<double>(lengths[n / 2 - 1] + lengths[n / 2]);
  return s;
}

}  // namespace

DatasetStats dataset_stats(std::span<const VlInstance> instances,
                           std::span<const std::string> label_universe) {
  if (instances.empty()) throw DataError("dataset_stats: empty collection");
  DatasetStats stats;
  stats.instances = instances.size();
  std::set<std::string> images;
  std::vector<std::size_t> input_lengths;
  std::vector<std::size_t> explanation_lengths;
  for (const auto& label : label_universe) stats.label_counts[label] = 0;
  for (const auto& inst : instances) {
    images.insert(inst.image_id);
    ++stats.per_split[inst.split];
    ++stats.label_counts[inst.label()];
    input_lengths.push_back(whitespace_length(inst.input_text));
    for (const auto& e : inst.gold_explanations) explanation_lengths.push_back(whitespace_length(e));
  }
  stats.images = images.size();
  for (const auto& [label, count] : stats.label_counts) {
    stats.label_distribution[label] =
        100.0 * static_cast<double>(count) / static_cast<double>(stats.instances);
  }
  stats.input_length = length_stats(std::move(input_lengths));
  stats.explanation_length = length_stats(std::move(explanation_lengths));
  return stats;
}

}  // namespace evil
