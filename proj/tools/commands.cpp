#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "evil/analysis.hpp"
#include "evil/corpus.hpp"
#include "evil/dataset_filters.hpp"
#include "evil/digest.hpp"
#include "evil/evil_scoring.hpp"
#include "evil/random.hpp"
#include "evil/sampling.hpp"
#include "evil/service.hpp"
#include "evil/text_metrics.hpp"
#include "evil/tokenize.hpp"
#include "json.hpp"

namespace evil::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "0.3.0";

fs::path resolve(const std::string& raw) {
  fs::path path(raw);
  if (path.is_relative()) {
    if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') {
      path = fs::path(root) / path;
    }
  }
  if (!fs::exists(path)) throw ConfigError("no such file: " + path.string());
  return path;
}

std::string dataset_id_for(const std::string& given, const fs::path& path) {
  return given.empty() ? path.stem().string() : given;
}

template <typename T>
std::vector<T> take(LoadResult<T> result, const fs::path& path, std::ostream& err) {
  for (const auto& r : result.rejects) {
    err << "warning: " << path.string() << ":" << r.line_number << ": skipped: " << r.reason << '\n';
  }
  return std::move(result.records);
}

std::vector<VlInstance> load_split(const fs::path& path, const std::string& split, std::ostream& err) {
  auto all = take(load_dataset(path), path, err);
  if (split == "all") return all;
  const Split wanted = parse_split(split);
  std::vector<VlInstance> out;
  for (auto& inst : all) {
    if (inst.split == wanted) out.push_back(std::move(inst));
  }
  if (out.empty()) throw DataError(path.string() + " has no instances in split '" + split + "'");
  return out;
}

// Predictions restricted to the given instances, in file order.
std::vector<ModelPrediction> load_all_predictions(const std::vector<std::string>& files,
                                                  std::span<const VlInstance> instances,
                                                  std::ostream& err) {
  std::set<std::string> ids;
  for (const auto& inst : instances) ids.insert(inst.instance_id);
  std::vector<ModelPrediction> out;
  for (const auto& f : files) {
    const auto path = resolve(f);
    for (auto& p : take(load_predictions(path), path, err)) {
      if (ids.contains(p.instance_id)) out.push_back(std::move(p));
    }
  }
  return out;
}

std::map<std::string, std::vector<ModelPrediction>> by_model(std::span<const ModelPrediction> predictions) {
  std::map<std::string, std::vector<ModelPrediction>> out;
  for (const auto& p : predictions) out[p.model_id].push_back(p);
  return out;
}

std::vector<AnnotationRecord> load_all_annotations(const std::vector<std::string>& files, std::ostream& err) {
  std::vector<AnnotationRecord> out;
  for (const auto& f : files) {
    const auto path = resolve(f);
    auto records = take(load_annotations(path), path, err);
    out.insert(out.end(), records.begin(), records.end());
  }
  return out;
}

// Every output file starts with a _meta line (or a comment line for text
// tables) carrying the digest of the canonical run configuration.
class Output {
 public:
  Output(const std::string& dir, const std::string& command, const json& config)
      : dir_(dir), command_(command), digest_(sha256_hex(json{{"command", command}, {"config", config}}.dump())) {
    if (dir.empty()) throw ConfigError("--out is required");
    fs::create_directories(dir_);
  }

  const std::string& digest() const { return digest_; }

  void records(const std::string& name, const std::vector<std::string>& lines, json extra = json::object()) const {
    json meta{{"command", command_}, {"config_digest", digest_}, {"tool_version", kToolVersion}};
    meta.update(extra);
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    out << json{{"_meta", meta}}.dump() << '\n';
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw DataError("cannot write " + (dir_ / name).string());
  }

  void text(const std::string& name, const std::string& body) const {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    out << "# " << command_ << " config_digest " << digest_ << '\n' << body;
    if (!out) throw DataError("cannot write " + (dir_ / name).string());
  }

 private:
  fs::path dir_;
  std::string command_;
  std::string digest_;
};

std::string fmt100(std::optional<double> v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * *v;
  return s.str();
}

// ---- metrics ----------------------------------------------------------------------

struct MetricsOptions {
  std::string dataset;
  std::string dataset_id;
  std::vector<std::string> predictions;
  std::vector<std::string> metrics = {"bleu1", "bleu2", "bleu3", "bleu4", "rouge1", "rougeL", "meteor", "ciderD"};
  std::string embeddings;
  std::string sidecar;
  std::vector<std::string> selection_set;
  std::string split = "test";
  std::string out;
};

int cmd_metrics(const MetricsOptions& o, std::ostream& out, std::ostream& err) {
  for (const auto& m : o.metrics) {
    if (!is_registered_metric(m) || m == metric::kSelection) throw ConfigError("unknown metric '" + m + "'");
  }
  auto wants = [&](std::string_view m) { return std::find(o.metrics.begin(), o.metrics.end(), m) != o.metrics.end(); };
  const bool want_bert = wants(metric::kBertScoreF1);
  const bool want_external = std::any_of(o.metrics.begin(), o.metrics.end(), [](const std::string& m) {
    return is_external_metric(m);
  });
  if (want_bert && o.embeddings.empty()) throw ConfigError("bertscore_f1 requested without --embeddings");
  if (want_external && o.sidecar.empty()) throw ConfigError("spice/bleurt requested without --sidecar");
  const std::vector<std::string> selection_set = o.selection_set.empty() ? default_ngram_set() : o.selection_set;

  const auto dataset_path = resolve(o.dataset);
  const std::string dataset_id = dataset_id_for(o.dataset_id, dataset_path);
  const auto instances = load_split(dataset_path, o.split, err);
  const auto predictions = load_all_predictions(o.predictions, instances, err);

  std::map<std::string, const VlInstance*> by_id;
  ReferenceCorpus corpus;
  for (const auto& inst : instances) {
    by_id[inst.instance_id] = &inst;
    auto& refs = corpus[inst.instance_id];
    for (const auto& e : inst.gold_explanations) refs.push_back(tokenize(e));
  }
  const CiderD cider(corpus);

  std::map<std::string, EmbeddingSet> embeddings;
  if (want_bert) {
    const auto path = resolve(o.embeddings);
    for (auto& e : take(load_embeddings(path), path, err)) embeddings[e.explanation_key] = std::move(e);
  }
  auto embedding = [&](const std::string& key) -> const EmbeddingSet& {
    auto it = embeddings.find(key);
    if (it == embeddings.end()) throw DataError("no embeddings for '" + key + "'");
    return it->second;
  };
  std::map<std::string, std::map<std::string, double>> sidecar;
  if (want_external) sidecar = load_metric_sidecar(resolve(o.sidecar));

  std::vector<std::string> lines;
  std::ostringstream table;
  const std::vector<std::pair<std::string, std::string>> columns = {
      {"S_O", ""}, {"S_T", ""}, {"S_E", ""}, {"B1", "bleu1"}, {"B2", "bleu2"}, {"B3", "bleu3"},
      {"B4", "bleu4"}, {"R-L", "rougeL"}, {"MET.", "meteor"}, {"CIDEr", "ciderD"}, {"SPICE", "spice"},
      {"BERTScore", "bertscore_f1"}};
  table << std::left << std::setw(16) << "Model";
  for (const auto& [head, key] : columns) table << std::right << std::setw(key == "bertscore_f1" ? 11 : 7) << head;
  table << '\n';

  json config{{"dataset", o.dataset}, {"dataset_id", dataset_id}, {"predictions", o.predictions},
              {"metrics", o.metrics}, {"embeddings", o.embeddings}, {"sidecar", o.sidecar},
              {"selection_set", selection_set}, {"split", o.split}};

  for (const auto& [model, preds] : by_model(predictions)) {
    const TaskScore ts = task_score(preds, instances);
    CorpusBleu corpus_bleu;
    std::map<std::string, std::pair<double, std::size_t>> sums;
    std::vector<const ModelPrediction*> scored;
    for (const auto& p : preds) {
      if (ts.correct.at(p.instance_id)) scored.push_back(&p);
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto* a, const auto* b) { return a->instance_id < b->instance_id; });
    for (const auto* p : scored) {
      const auto& refs = corpus.at(p->instance_id);
      const TokenSequence cand = tokenize(p->generated_explanation);
      MetricVector mv{model + "/" + p->instance_id, {}};
      for (int n = 1; n <= kMaxBleuOrder; ++n) {
        const std::string name = "bleu" + std::to_string(n);
        if (wants(name)) mv.scores[name] = bleu_n(cand, refs, n, BleuSmoothing::kEpsilon);
      }
      corpus_bleu.add(cand, refs);
      if (wants(metric::kRouge1)) {
        double best = 0.0;
        for (const auto& r : refs) best = std::max(best, rouge_1(cand, r).f);
        mv.scores[std::string(metric::kRouge1)] = best;
      }
      if (wants(metric::kRougeL)) mv.scores[std::string(metric::kRougeL)] = rouge_l(cand, refs).f;
      if (wants(metric::kMeteor)) mv.scores[std::string(metric::kMeteor)] = meteor(cand, refs);
      if (wants(metric::kCiderD)) mv.scores[std::string(metric::kCiderD)] = cider.score(cand, refs);
      if (want_bert) {
        const auto& c = embedding(mv.explanation_key);
        double best = 0.0;
        for (std::size_t k = 0; k < refs.size(); ++k) {
          best = std::max(best, bertscore_f1(c, embedding("ref/" + p->instance_id + "/" + std::to_string(k))));
        }
        mv.scores[std::string(metric::kBertScoreF1)] = best;
      }
      for (const auto& m : o.metrics) {
        if (!is_external_metric(m)) continue;
        auto sit = sidecar.find(mv.explanation_key);
        if (sit == sidecar.end() || !sit->second.contains(m)) {
          throw DataError("sidecar has no " + m + " for '" + mv.explanation_key + "'");
        }
        mv.scores[m] = sit->second.at(m);
      }
      const bool selectable = mv.scores.contains(metric::kBertScoreF1) &&
                              std::all_of(selection_set.begin(), selection_set.end(),
                                          [&](const std::string& m) { return mv.scores.contains(m); });
      if (selectable) mv.scores[std::string(metric::kSelection)] = selection_score(mv, selection_set);
      if (auto problem = validate(mv)) throw DataError(mv.explanation_key + ": " + *problem);
      for (const auto& [name, v] : mv.scores) {
        sums[name].first += v;
        ++sums[name].second;
      }
      lines.push_back(to_record_line(mv));
    }

    if (scored.empty()) err << "warning: model '" << model << "' has no correctly answered instance\n";
    MetricVector corpus_level{model, {}};
    for (const auto& [name, acc] : sums) corpus_level.scores[name] = acc.first / static_cast<double>(acc.second);
    if (!scored.empty()) {
      for (int n = 1; n <= kMaxBleuOrder; ++n) {
        const std::string name = "bleu" + std::to_string(n);
        if (wants(name)) corpus_level.scores[name] = corpus_bleu.score(n);
      }
    }
    corpus_level.scores.erase(std::string(metric::kSelection));
    std::optional<double> s_e;
    if (corpus_level.scores.contains(metric::kBertScoreF1) &&
        std::all_of(selection_set.begin(), selection_set.end(),
                    [&](const std::string& m) { return corpus_level.scores.contains(m); })) {
      s_e = selection_score(corpus_level, selection_set);
    }
    auto value = [&](const std::string& key) -> std::optional<double> {
      auto it = corpus_level.scores.find(key);
      if (it == corpus_level.scores.end()) return std::nullopt;
      return it->second;
    };
    table << std::left << std::setw(16) << model;
    for (const auto& [head, key] : columns) {
      std::optional<double> v;
      if (head == "S_O") v = s_e ? std::optional<double>(ts.s_t * *s_e) : std::nullopt;
      else if (head == "S_T") v = ts.s_t;
      else if (head == "S_E") v = s_e;
      else v = value(key);
      table << std::right << std::setw(key == "bertscore_f1" ? 11 : 7) << fmt100(v);
    }
    table << '\n';
  }

  Output output(o.out, "metrics", config);
  output.records("metrics.jsonl", lines, json{{"dataset_id", dataset_id}});
  output.text("metrics_table.txt", table.str());
  out << table.str();
  return kExitOk;
}

// ---- filter -----------------------------------------------------------------------

struct FilterOptions {
  std::string dataset;
  std::string thresholds;
  std::string nli;
  std::string relabel;
  std::string out;
};

int cmd_filter(const FilterOptions& o, std::ostream& out, std::ostream& err) {
  FilterConfig config;
  if (!o.thresholds.empty()) config = load_filter_config(resolve(o.thresholds));
  if (!o.relabel.empty()) config.replacement_labels = load_replacement_labels(resolve(o.relabel));
  const auto dataset_path = resolve(o.dataset);
  const auto instances = take(load_dataset(dataset_path), dataset_path, err);
  std::map<std::string, NliEvidence> evidence;
  if (!o.nli.empty()) {
    const auto path = resolve(o.nli);
    for (auto& e : take(load_nli_evidence(path), path, err)) evidence[e.instance_id] = std::move(e);
  }
  const PipelineResult result = apply_pipeline(instances, evidence, config);

  std::vector<std::string> kept;
  for (const auto& inst : result.kept) kept.push_back(to_record_line(inst));
  std::vector<std::string> removed;
  for (const auto& d : result.removed) {
    json j{{"instance_id", d.instance_id}, {"filter", to_string(d.filter)}};
    std::visit([&](const auto& v) { j["evidence"] = v; }, d.evidence);
    removed.push_back(j.dump());
  }
  const json cfg{{"dataset", o.dataset}, {"nli", o.nli}, {"filter", json::parse(to_json(config))}};
  Output output(o.out, "filter", cfg);
  output.records("filtered.jsonl", kept);
  output.records("removed.jsonl", removed);
  const std::string table = format_stage_report(result.report);
  output.text("stage_report.txt", table);
  out << table;
  return kExitOk;
}

// ---- score ------------------------------------------------------------------------

struct ScoreOptions {
  std::string dataset;
  std::string dataset_id;
  std::vector<std::string> predictions;
  std::vector<std::string> annotations;
  std::vector<std::string> pooling = {"numeric"};
  std::vector<std::string> models;
  std::string split = "test";
  std::string out;
};

int cmd_score(const ScoreOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<Pooling> poolings;
  for (const auto& p : o.pooling) poolings.push_back(parse_pooling(p));
  const auto dataset_path = resolve(o.dataset);
  const std::string dataset_id = dataset_id_for(o.dataset_id, dataset_path);
  const auto instances = load_split(dataset_path, o.split, err);
  const auto predictions = load_all_predictions(o.predictions, instances, err);
  const auto records = load_all_annotations(o.annotations, err);

  std::vector<std::string> models = o.models;
  if (models.empty()) {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (r.dataset_id() == dataset_id) seen.insert(r.target().ground_truth ? std::string(kGroundTruthModel) : r.target().model_id);
    }
    models.assign(seen.begin(), seen.end());
  }

  std::vector<EvilReport> reports;
  for (const auto& model : models) {
    const Target target = model == kGroundTruthModel ? Target::gold() : Target::generated(model);
    const bool any = std::any_of(records.begin(), records.end(), [&](const AnnotationRecord& r) {
      return r.dataset_id() == dataset_id && r.target() == target;
    });
    if (!any) {
      err << "warning: no annotations for model '" << model << "' on '" << dataset_id << "'\n";
      continue;
    }
    for (Pooling pooling : poolings) {
      if (model == kGroundTruthModel && pooling == Pooling::kComparative) continue;
      reports.push_back(score_model({model, dataset_id, instances, predictions, records}, pooling));
    }
  }
  if (reports.empty()) throw DataError("no annotations to score for dataset '" + dataset_id + "'");

  std::vector<std::string> lines;
  for (const auto& r : reports) lines.push_back(to_record_line(r));
  const json cfg{{"dataset", o.dataset}, {"dataset_id", dataset_id}, {"predictions", o.predictions},
                 {"annotations", o.annotations}, {"pooling", o.pooling}, {"models", models}, {"split", o.split}};
  Output output(o.out, "score", cfg);
  output.records("reports.jsonl", lines);
  const std::string table = format_report_table(reports);
  output.text("report_table.txt", table);
  out << table;
  return kExitOk;
}

// ---- sample -----------------------------------------------------------------------

struct SampleOptions {
  std::string dataset;
  std::string dataset_id;
  std::vector<std::string> predictions;
  std::optional<std::uint64_t> seed;
  std::size_t sample_size = kDefaultSampleSize;
  std::size_t batch_size = kDefaultBatchSize;
  std::size_t annotators = kDefaultAnnotatorsPerInstance;
  std::string trusted;
  std::vector<std::string> models;
  std::string split = "test";
  std::string out;
};

std::vector<TrustedItem> load_trusted(const fs::path& path, const std::set<std::string>& known) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<TrustedItem> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      if (j.contains("_meta")) continue;
      TrustedItem t{j.at("instance_id").get<std::string>(), j.at("known_answer").get<std::string>()};
      if (!known.contains(t.instance_id)) throw DataError("unknown instance '" + t.instance_id + "'");
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

int cmd_sample(const SampleOptions& o, std::ostream& out, std::ostream& err) {
  if (!o.seed) throw ConfigError("--seed is required");
  const auto dataset_path = resolve(o.dataset);
  const std::string dataset_id = dataset_id_for(o.dataset_id, dataset_path);
  const auto instances = load_split(dataset_path, o.split, err);
  const auto predictions = load_all_predictions(o.predictions, instances, err);
  std::set<std::string> known;
  for (const auto& inst : instances) known.insert(inst.instance_id);
  std::vector<TrustedItem> trusted;
  if (!o.trusted.empty()) trusted = load_trusted(resolve(o.trusted), known);

  const auto grouped = by_model(predictions);
  std::vector<std::string> models = o.models;
  if (models.empty()) {
    for (const auto& [m, p] : grouped) models.push_back(m);
  }
  std::vector<std::string> sample_lines;
  std::vector<std::string> assignment_lines;
  std::ostringstream summary;
  for (const auto& model : models) {
    auto git = grouped.find(model);
    if (git == grouped.end()) throw DataError("no predictions for model '" + model + "'");
    const TaskScore ts = task_score(git->second, instances);
    const SampleResult result = build_eval_sample(instances, ts.correct, model, dataset_id, *o.seed, o.sample_size);
    if (result.warning) err << "warning: " << *result.warning << '\n';
    const CoverageReport coverage = check_group_coverage(result.sample, instances);
    if (!coverage.complete()) {
      err << "warning: " << model << " sample misses " << coverage.missing.size() << " group(s):";
      for (const auto& g : coverage.missing) err << ' ' << g;
      err << '\n';
    }
    sample_lines.push_back(to_record_line(result.sample));
    summary << model << ": " << result.sample.instance_ids.size() << " instances";
    if (!o.trusted.empty()) {
      const auto assignments = build_assignments(result.sample, trusted, {o.annotators, o.batch_size, *o.seed});
      for (const auto& a : assignments) assignment_lines.push_back(to_record_line(a));
      summary << ", " << assignments.size() << " assignments";
    }
    summary << '\n';
  }

  const json cfg{{"dataset", o.dataset}, {"dataset_id", dataset_id}, {"predictions", o.predictions},
                 {"seed", *o.seed}, {"sample_size", o.sample_size}, {"batch_size", o.batch_size},
                 {"annotators", o.annotators}, {"trusted", o.trusted}, {"models", models}, {"split", o.split}};
  Output output(o.out, "sample", cfg);
  output.records("samples.jsonl", sample_lines, json{{"seed", *o.seed}, {"shuffle", kShuffleAlgorithm}});
  if (!o.trusted.empty()) output.records("assignments.jsonl", assignment_lines, json{{"seed", *o.seed}});
  out << summary.str();
  return kExitOk;
}

// ---- correlate --------------------------------------------------------------------

struct CorrelateOptions {
  std::vector<std::string> metric_files;
  std::vector<std::string> annotations;
  std::vector<std::string> metrics;
  std::string normalization = "mean";
  std::string pvalue = "t";
  std::size_t permutations = 10000;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_correlate(const CorrelateOptions& o, std::ostream& out, std::ostream& err) {
  HumanScoreNormalization norm;
  if (o.normalization == "mean") norm = HumanScoreNormalization::kMean;
  else if (o.normalization == "zscore") norm = HumanScoreNormalization::kAnnotatorZScore;
  else throw ConfigError("unknown normalization '" + o.normalization + "'");
  PValueMethod method;
  if (o.pvalue == "permutation") {
    if (!o.seed) throw ConfigError("--seed is required for permutation p-values");
    method = {PValueMethod::kPermutation, o.permutations, *o.seed};
  } else if (o.pvalue != "t") {
    throw ConfigError("unknown p-value method '" + o.pvalue + "'");
  }

  std::map<std::string, MetricVector> metrics;
  std::set<std::string> datasets;
  std::set<std::string> present;
  for (const auto& f : o.metric_files) {
    const auto path = resolve(f);
    std::ifstream in(path);
    std::string line;
    std::optional<std::string> dataset_id;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      if (line.rfind("{\"_meta\"", 0) == 0) {
        const auto meta = json::parse(line).at("_meta");
        if (meta.contains("dataset_id")) dataset_id = meta.at("dataset_id").get<std::string>();
        continue;
      }
      if (!dataset_id) throw DataError(path.string() + ": metric file lacks a dataset_id _meta line");
      MetricVector mv = metric_vector_from_line(line);
      for (const auto& [name, v] : mv.scores) present.insert(name);
      mv.explanation_key = *dataset_id + "/" + mv.explanation_key;
      metrics[mv.explanation_key] = std::move(mv);
    }
    if (dataset_id) datasets.insert(*dataset_id);
  }
  const auto records = load_all_annotations(o.annotations, err);
  std::map<std::string, HumanScore> human;
  for (const auto& ds : datasets) {
    for (const auto& [key, v] : human_scores(records, ds, norm)) human[ds + "/" + key] = {ds, v};
  }

  std::vector<std::string> names = o.metrics;
  if (names.empty()) {
    for (auto m : metric_registry()) {
      if (present.contains(std::string(m))) names.emplace_back(m);
    }
  }
  const CorrelationReport report = correlate(metrics, human, names, method);
  std::vector<std::string> groups(datasets.begin(), datasets.end());
  groups.emplace_back(kPooledGroup);

  std::vector<std::string> lines;
  for (const auto& c : report.cells) {
    json j{{"metric", c.metric}, {"group", c.group}, {"n", c.n}, {"p_value", c.p_value}};
    j["rho"] = c.rho ? json(*c.rho) : json(nullptr);
    lines.push_back(j.dump());
  }
  const json cfg{{"metric_files", o.metric_files}, {"annotations", o.annotations}, {"metrics", names},
                 {"normalization", o.normalization}, {"pvalue", o.pvalue}, {"permutations", o.permutations},
                 {"seed", o.seed ? json(*o.seed) : json(nullptr)}};
  Output output(o.out, "correlate", cfg);
  output.records("correlation.jsonl", lines);
  const std::string table = format_correlation_table(report, names, groups);
  output.text("correlation_table.txt", table);
  out << table;
  return kExitOk;
}

// ---- serve ------------------------------------------------------------------------

struct ServeOptions {
  std::string dataset;
  std::string dataset_id;
  std::vector<std::string> predictions;
  std::string assignments;
  std::optional<std::uint64_t> seed;
  std::string policy = "reject";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string split = "test";
  std::string out;
};

int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err) {
  if (!o.seed) throw ConfigError("--seed is required");
  const auto dataset_path = resolve(o.dataset);
  const std::string dataset_id = dataset_id_for(o.dataset_id, dataset_path);
  ServiceConfig config;
  config.datasets[dataset_id] = load_split(dataset_path, o.split, err);
  config.predictions[dataset_id] = load_all_predictions(o.predictions, config.datasets[dataset_id], err);
  config.assignments = load_assignments(resolve(o.assignments));
  config.seed = *o.seed;
  config.policy = parse_trusted_failure_policy(o.policy);
  config.log_dir = o.out;

  const json cfg{{"dataset", o.dataset}, {"dataset_id", dataset_id}, {"predictions", o.predictions},
                 {"assignments", o.assignments}, {"seed", *o.seed}, {"policy", o.policy}, {"split", o.split}};
  Output output(o.out, "serve", cfg);
  output.records("service.jsonl", {});

  AnnotationService service(std::move(config));
  HttpServer server(service);
  const int port = server.bind(o.host, o.port);
  out << "listening on http://" << o.host << ":" << port << std::endl;
  server.listen();
  return kExitOk;
}

// ---- stats ------------------------------------------------------------------------

int cmd_stats(const std::string& dataset, const std::vector<std::string>& labels, std::ostream& out,
              std::ostream& err) {
  const auto path = resolve(dataset);
  const auto instances = take(load_dataset(path), path, err);
  const DatasetStats s = dataset_stats(instances, labels);
  out << std::fixed << std::setprecision(2);
  out << "instances " << s.instances << "\nimages " << s.images << '\n';
  for (const auto& [split, n] : s.per_split) out << "split " << to_string(split) << ' ' << n << '\n';
  for (const auto& [label, pct] : s.label_distribution) {
    out << "label " << label << ' ' << s.label_counts.at(label) << " (" << pct << "%)\n";
  }
  out << "input_length mean " << s.input_length.mean << " median " << s.input_length.median << '\n';
  out << "explanation_length mean " << s.explanation_length.mean << " median " << s.explanation_length.median
      << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"e-ViL benchmark tool", args.empty() ? "evil" : args.front()};
  app.require_subcommand(1);

  MetricsOptions metrics;
  auto* m = app.add_subcommand("metrics", "Automatic NLG metrics over correctly answered instances");
  m->add_option("--dataset", metrics.dataset)->required();
  m->add_option("--dataset-id", metrics.dataset_id);
  m->add_option("--predictions", metrics.predictions)->required();
  m->add_option("--metrics", metrics.metrics)->delimiter(',');
  m->add_option("--embeddings", metrics.embeddings);
  m->add_option("--sidecar", metrics.sidecar);
  m->add_option("--selection-set", metrics.selection_set)->delimiter(',');
  m->add_option("--split", metrics.split);
  m->add_option("--out", metrics.out)->required();

  FilterOptions filter;
  auto* f = app.add_subcommand("filter", "Run the dataset filter pipeline");
  f->add_option("--dataset", filter.dataset)->required();
  f->add_option("--thresholds", filter.thresholds, "Filter config (JSON)");
  f->add_option("--nli", filter.nli);
  f->add_option("--relabel", filter.relabel);
  f->add_option("--out", filter.out)->required();

  ScoreOptions score;
  auto* s = app.add_subcommand("score", "e-ViL scores from human annotations");
  s->add_option("--dataset", score.dataset)->required();
  s->add_option("--dataset-id", score.dataset_id);
  s->add_option("--predictions", score.predictions);
  s->add_option("--annotations", score.annotations)->required();
  s->add_option("--pooling", score.pooling)->delimiter(',');
  s->add_option("--models", score.models)->delimiter(',');
  s->add_option("--split", score.split);
  s->add_option("--out", score.out)->required();

  SampleOptions sample;
  auto* sa = app.add_subcommand("sample", "Build evaluation samples and annotator assignments");
  sa->add_option("--dataset", sample.dataset)->required();
  sa->add_option("--dataset-id", sample.dataset_id);
  sa->add_option("--predictions", sample.predictions)->required();
  sa->add_option("--seed", sample.seed);
  sa->add_option("--sample-size", sample.sample_size);
  sa->add_option("--batch-size", sample.batch_size);
  sa->add_option("--annotators", sample.annotators);
  sa->add_option("--trusted", sample.trusted);
  sa->add_option("--models", sample.models)->delimiter(',');
  sa->add_option("--split", sample.split);
  sa->add_option("--out", sample.out)->required();

  CorrelateOptions corr;
  auto* c = app.add_subcommand("correlate", "Spearman correlation of metrics with human scores");
  c->add_option("--metrics-file", corr.metric_files)->required();
  c->add_option("--annotations", corr.annotations)->required();
  c->add_option("--metrics", corr.metrics)->delimiter(',');
  c->add_option("--normalization", corr.normalization);
  c->add_option("--pvalue", corr.pvalue);
  c->add_option("--permutations", corr.permutations);
  c->add_option("--seed", corr.seed);
  c->add_option("--out", corr.out)->required();

  ServeOptions serve;
  auto* sv = app.add_subcommand("serve", "Run the annotation service");
  sv->add_option("--dataset", serve.dataset)->required();
  sv->add_option("--dataset-id", serve.dataset_id);
  sv->add_option("--predictions", serve.predictions)->required();
  sv->add_option("--assignments", serve.assignments)->required();
  sv->add_option("--seed", serve.seed);
  sv->add_option("--policy", serve.policy);
  sv->add_option("--host", serve.host);
  sv->add_option("--port", serve.port);
  sv->add_option("--split", serve.split);
  sv->add_option("--out", serve.out)->required();

  std::string stats_dataset;
  std::vector<std::string> stats_labels;
  auto* st = app.add_subcommand("stats", "Dataset statistics");
  st->add_option("--dataset", stats_dataset)->required();
  st->add_option("--labels", stats_labels)->delimiter(',');

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (m->parsed()) return cmd_metrics(metrics, out, err);
    if (f->parsed()) return cmd_filter(filter, out, err);
    if (s->parsed()) return cmd_score(score, out, err);
    if (sa->parsed()) return cmd_sample(sample, out, err);
    if (c->parsed()) return cmd_correlate(corr, out, err);
    if (sv->parsed()) return cmd_serve(serve, out, err);
    if (st->parsed()) return cmd_stats(stats_dataset, stats_labels, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace evil::cli
