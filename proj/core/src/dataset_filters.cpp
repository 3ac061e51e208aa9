#include "evil/dataset_filters.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "evil/text_metrics.hpp"
#include "evil/tokenize.hpp"
#include "json.hpp"
#include "record_io.hpp"

namespace evil {

using nlohmann::json;

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kFalseNeutral: return "false_neutral";
    case FilterKind::kKeyword: return "keyword";
    case FilterKind::kUncertainty: return "uncertainty";
    case FilterKind::kSimilarity: return "similarity";
  }
  return "keyword";
}

FilterKind parse_filter_kind(std::string_view text) {
  if (text == "false_neutral") return FilterKind::kFalseNeutral;
  if (text == "keyword") return FilterKind::kKeyword;
  if (text == "uncertainty") return FilterKind::kUncertainty;
  if (text == "similarity") return FilterKind::kSimilarity;
  throw ConfigError("unknown filter stage '" + std::string(text) + "'");
}

namespace {

const NliEvidence& require_evidence(const VlInstance& instance, const NliEvidence* evidence,
                                    std::string_view filter) {
  if (instance.captions.size() != kCaptionsPerImage) {
    throw DataError(std::string(filter) + ": instance '" + instance.instance_id + "' has no captions");
  }
  if (evidence == nullptr || evidence->instance_id != instance.instance_id) {
    throw DataError(std::string(filter) + ": no NLI evidence for '" + instance.instance_id + "'");
  }
  return *evidence;
}

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

FilterDecision false_neutral_filter(const VlInstance& instance, const NliEvidence* evidence,
                                    double threshold) {
  FilterDecision d{instance.instance_id, FilterKind::kFalseNeutral, false, 0.0};
  if (instance.label() != kNeutral) return d;
  const auto& ev = require_evidence(instance, evidence, "false_neutral");
  double entailment = 0.0;
  double contradiction = 0.0;
  for (const auto& t : ev.per_caption) {
    entailment += t.entailment;
    contradiction += t.contradiction;
  }
  d.evidence = std::max(entailment, contradiction);
  d.flagged = entailment > threshold || contradiction > threshold;
  return d;
}

const std::vector<std::string>& default_keywords() {
  static const std::vector<std::string> kKeywords = {
      "synonym", "mention", "rephrasing", "sentence", "way to say", "another word for"};
  return kKeywords;
}

FilterDecision keyword_filter(std::string_view explanation, std::span<const std::string> keywords) {
  FilterDecision d{{}, FilterKind::kKeyword, false, std::string{}};
  const std::string text = lowercase(explanation);
  for (const auto& kw : keywords) {
    if (text.find(lowercase(kw)) != std::string::npos) {
      d.flagged = true;
      d.evidence = kw;
      break;
    }
  }
  return d;
}

FilterDecision similarity_filter(std::string_view premise, std::string_view hypothesis,
                                 double threshold) {
  const double score = rouge_1(tokenize(premise), tokenize(hypothesis)).f;
  return {{}, FilterKind::kSimilarity, score > threshold, score};
}

double caption_uncertainty(const NliEvidence& evidence, UncertaintyStatistic statistic) {
  switch (statistic) {
    case UncertaintyStatistic::kMeanClassStddev: {
      double total = 0.0;
      for (int cls = 0; cls < 3; ++cls) {
        std::array<double, kCaptionsPerImage> v{};
        for (std::size_t c = 0; c < kCaptionsPerImage; ++c) {
          const auto& t = evidence.per_caption[c];
          v[c] = cls == 0 ? t.entailment : cls == 1 ? t.neutral : t.contradiction;
        }
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        total += std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
      return total / 3.0;
    }
  }
  return 0.0;
}

FilterDecision uncertainty_filter(const VlInstance& instance, const NliEvidence* evidence,
                                  double threshold, UncertaintyStatistic statistic) {
  FilterDecision d{instance.instance_id, FilterKind::kUncertainty, false, 0.0};
  if (instance.label() != kContradiction) return d;
  const auto& ev = require_evidence(instance, evidence, "uncertainty");
  const double u = caption_uncertainty(ev, statistic);
  d.evidence = u;
  d.flagged = u > threshold;
  return d;
}

// ---- configuration ------------------------------------------------------------

FilterConfig parse_filter_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("filter config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("filter config must be a JSON object");
  FilterConfig cfg;
  try {
    for (const auto& s : j.value("stages", json::array())) cfg.stages.insert(parse_filter_kind(s.get<std::string>()));
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      cfg.false_neutral_threshold = t.value("false_neutral", kFalseNeutralThreshold);
      cfg.similarity_threshold = t.value("similarity", kSimilarityThreshold);
      if (t.contains("uncertainty")) cfg.uncertainty_threshold = t.at("uncertainty").get<double>();
    }
    if (j.contains("uncertainty_statistic") &&
        j.at("uncertainty_statistic").get<std::string>() != "mean_class_stddev") {
      throw ConfigError("unknown uncertainty statistic");
    }
    if (j.contains("keywords")) cfg.keywords = j.at("keywords").get<std::vector<std::string>>();
    if (j.contains("similarity_labels")) {
      for (const auto& l : j.at("similarity_labels")) cfg.similarity_labels.insert(l.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("filter config: ") + e.what());
  }
  return cfg;
}

FilterConfig load_filter_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read filter config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_filter_config(buf.str());
}

std::string to_json(const FilterConfig& cfg) {
  json stages = json::array();
  for (auto s : cfg.stages) stages.push_back(to_string(s));
  json thresholds{{"false_neutral", cfg.false_neutral_threshold},
                  {"similarity", cfg.similarity_threshold}};
  if (cfg.uncertainty_threshold) thresholds["uncertainty"] = *cfg.uncertainty_threshold;
  return json{{"stages", stages},
              {"thresholds", thresholds},
              {"uncertainty_statistic", "mean_class_stddev"},
              {"keywords", cfg.keywords},
              {"similarity_labels", cfg.similarity_labels},
              {"replacement_labels", cfg.replacement_labels}}
      .dump();
}

std::map<std::string, std::string> load_replacement_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::is_blank(line)) continue;
    const auto j = detail::parse_line(line);
    if (detail::is_meta(j)) continue;
    out[detail::require<std::string>(j, "instance_id")] = detail::require<std::string>(j, "label");
  }
  return out;
}

// ---- pipeline -----------------------------------------------------------------

std::string format_stage_report(const StageReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "Stage" << std::right << std::setw(12) << "Train Set"
      << std::setw(12) << "Val Set" << std::setw(12) << "Test Set" << '\n';
  for (const auto& row : report.rows) {
    out << std::left << std::setw(16) << row.stage << std::right << std::setw(12) << row.train
        << std::setw(12) << row.dev << std::setw(12) << row.test << '\n';
  }
  return out.str();
}

namespace {

StageCounts count_splits(std::string stage, std::span<const VlInstance> instances) {
  StageCounts c{std::move(stage)};
  for (const auto& inst : instances) {
    switch (inst.split) {
      case Split::kTrain: ++c.train; break;
      case Split::kDev: ++c.dev; break;
      case Split::kTest: ++c.test; break;
    }
  }
  return c;
}

void relabel(VlInstance& inst, const std::string& label) {
  if (inst.gold_answers.empty()) {
    inst.gold_answers.push_back({label, std::nullopt});
    return;
  }
  inst.gold_answers = {{label, std::nullopt}};
}

}  // namespace

PipelineResult apply_pipeline(std::span<const VlInstance> instances,
                              const std::map<std::string, NliEvidence>& evidence,
                              const FilterConfig& config) {
  if (config.stages.contains(FilterKind::kUncertainty) && !config.uncertainty_threshold) {
    throw ConfigError("uncertainty stage enabled without a threshold");
  }
  PipelineResult result;
  std::vector<VlInstance> current(instances.begin(), instances.end());
  for (auto& inst : current) {
    auto it = config.replacement_labels.find(inst.instance_id);
    if (it != config.replacement_labels.end()) relabel(inst, it->second);
  }
  result.report.rows.push_back(count_splits("raw", current));

  auto lookup = [&](const std::string& id) -> const NliEvidence* {
    auto it = evidence.find(id);
    return it == evidence.end() ? nullptr : &it->second;
  };

  static constexpr std::array<FilterKind, 4> kOrder = {
      FilterKind::kFalseNeutral, FilterKind::kKeyword, FilterKind::kUncertainty,
      FilterKind::kSimilarity};
  for (FilterKind stage : kOrder) {
    if (!config.stages.contains(stage)) continue;
    std::vector<VlInstance> kept;
    for (auto& inst : current) {
      FilterDecision d;
      switch (stage) {
        case FilterKind::kFalseNeutral:
          d = false_neutral_filter(inst, lookup(inst.instance_id), config.false_neutral_threshold);
          break;
        case FilterKind::kKeyword:
          for (const auto& e : inst.gold_explanations) {
            d = keyword_filter(e, config.keywords);
            if (d.flagged) break;
          }
          d.instance_id = inst.instance_id;
          break;
        case FilterKind::kUncertainty:
          d = uncertainty_filter(inst, lookup(inst.instance_id), *config.uncertainty_threshold,
                                 config.uncertainty_statistic);
          break;
        case FilterKind::kSimilarity:
          if (!config.similarity_labels.empty() && !config.similarity_labels.contains(inst.label())) {
            d = {inst.instance_id, FilterKind::kSimilarity, false, 0.0};
            break;
          }
          if (!inst.premise) {
            throw DataError("similarity: instance '" + inst.instance_id + "' has no premise");
          }
          d = similarity_filter(*inst.premise, inst.input_text, config.similarity_threshold);
          d.instance_id = inst.instance_id;
          break;
      }
      if (d.flagged) {
        result.removed.push_back(std::move(d));
      } else {
        kept.push_back(std::move(inst));
      }
    }
    current = std::move(kept);
    result.report.rows.push_back(count_splits(std::string(to_string(stage)), current));
  }
  result.kept = std::move(current);
  return result;
}

}  // namespace evil
