#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "builders.hpp"
#include "evil/dataset_filters.hpp"

namespace evil {
namespace {

using test::make_instance;

NliEvidence evidence_of(std::string id, std::array<NliTriple, 5> triples) {
  NliEvidence e;
  e.instance_id = std::move(id);
  e.per_caption = triples;
  return e;
}

VlInstance with_captions(VlInstance inst) {
  inst.captions = {"c1", "c2", "c3", "c4", "c5"};
  return inst;
}

// Sample standard deviation, one class at a time.
double oracle_uncertainty(const NliEvidence& e) {
  double total = 0;
  for (int cls = 0; cls < 3; ++cls) {
    std::vector<double> v;
    for (const auto& t : e.per_caption) v.push_back(cls == 0 ? t.entailment : cls == 1 ? t.neutral : t.contradiction);
    double mean = 0;
    for (double x : v) mean += x / 5.0;
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    total += std::sqrt(ss / 4.0);
  }
  return total / 3.0;
}

NliEvidence ent_sums(std::string id, std::array<double, 5> ent) {
  std::array<NliTriple, 5> t{};
  for (int i = 0; i < 5; ++i) t[i] = {ent[i], 1.0 - ent[i], 0.0};
  return evidence_of(std::move(id), t);
}

TEST(FalseNeutral, Examples) {
  const auto n = with_captions(make_instance("i", "g", "neutral"));
  const auto e = ent_sums("i", {0.5, 0.5, 0.4, 0.4, 0.3});
  const auto d = false_neutral_filter(n, &e);
  EXPECT_TRUE(d.flagged);
  EXPECT_NEAR(std::get<double>(d.evidence), 2.1, 1e-12);

  const auto exact = ent_sums("i", {0.5, 0.5, 0.5, 0.25, 0.25});
  EXPECT_FALSE(false_neutral_filter(n, &exact).flagged);

  const auto c = with_captions(make_instance("i", "g", "contradiction"));
  const auto big = ent_sums("i", {1, 1, 1, 1, 1});
  EXPECT_FALSE(false_neutral_filter(c, &big).flagged);
}

TEST(FalseNeutral, ContradictionSumAlsoFlags) {
  const auto n = with_captions(make_instance("i", "g", "neutral"));
  std::array<NliTriple, 5> t{};
  for (auto& x : t) x = {0.0, 0.5, 0.5};
  t[0] = {0.0, 0.0, 1.0};
  const auto e = evidence_of("i", t);
  EXPECT_TRUE(false_neutral_filter(n, &e).flagged);
}

TEST(FalseNeutral, MissingInputsAreErrors) {
  const auto n = make_instance("i", "g", "neutral");
  const auto e = ent_sums("i", {0, 0, 0, 0, 0});
  EXPECT_THROW(false_neutral_filter(n, &e), DataError);
  EXPECT_THROW(false_neutral_filter(with_captions(n), nullptr), DataError);
}

TEST(Keyword, Examples) {
  const auto a = keyword_filter("a dog is a synonym for puppy");
  EXPECT_TRUE(a.flagged);
  EXPECT_EQ(std::get<std::string>(a.evidence), "synonym");
  EXPECT_FALSE(keyword_filter("two dogs are playing outside").flagged);
  const auto b = keyword_filter("That is another word for happy");
  EXPECT_TRUE(b.flagged);
  EXPECT_EQ(std::get<std::string>(b.evidence), "another word for");
  EXPECT_TRUE(keyword_filter("these sentences match").flagged);
  EXPECT_EQ(default_keywords().size(), 6u);
}

TEST(Similarity, Examples) {
  EXPECT_TRUE(similarity_filter("a man sleeps", "a man sleeps").flagged);
  const auto d = similarity_filter("a man is sleeping", "a man is sleeping outside");
  EXPECT_TRUE(d.flagged);
  EXPECT_NEAR(std::get<double>(d.evidence), 8.0 / 9.0, 1e-12);
  EXPECT_FALSE(similarity_filter("a cat", "two dogs").flagged);
}

TEST(Uncertainty, IdenticalCaptionsNeverFlagged) {
  const auto c = with_captions(make_instance("i", "g", "contradiction"));
  std::array<NliTriple, 5> t{};
  for (auto& x : t) x = {0.2, 0.3, 0.5};
  const auto e = evidence_of("i", t);
  EXPECT_NEAR(caption_uncertainty(e), 0.0, 1e-12);
  EXPECT_FALSE(uncertainty_filter(c, &e, 1e-9).flagged);
}

TEST(Uncertainty, SplitCaptionsFlagged) {
  const auto c = with_captions(make_instance("i", "g", "contradiction"));
  const auto e = evidence_of("i", {NliTriple{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_NEAR(caption_uncertainty(e), oracle_uncertainty(e), 1e-12);
  EXPECT_NEAR(caption_uncertainty(e), (std::sqrt(0.2) + 2 * std::sqrt(0.3)) / 3, 1e-12);
  EXPECT_TRUE(uncertainty_filter(c, &e, 0.3).flagged);

  // One caption entailing, four contradicting: below 0.3.
  const auto f = evidence_of("i", {NliTriple{1, 0, 0}, {0, 0, 1}, {0, 0, 1}, {0, 0, 1}, {0, 0, 1}});
  EXPECT_NEAR(caption_uncertainty(f), oracle_uncertainty(f), 1e-12);
  EXPECT_FALSE(uncertainty_filter(c, &f, 0.3).flagged);

  const auto ent = with_captions(make_instance("i", "g", "entailment"));
  EXPECT_FALSE(uncertainty_filter(ent, &e, 0.0).flagged);
  EXPECT_THROW(uncertainty_filter(c, nullptr, 0.3), DataError);
}

std::array<NliTriple, 5> random_triples(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<NliTriple, 5> t{};
  for (auto& x : t) {
    const double a = u(gen);
    const double b = u(gen) * (1 - a);
    x = {a, b, 1 - a - b};
  }
  return t;
}

TEST(Filters, ScopeMonotonicityAndIdempotence) {
  std::mt19937_64 gen(3);
  const std::vector<std::string> labels = {"entailment", "neutral", "contradiction"};
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = with_captions(make_instance("i", "g", labels[gen() % 3]));
    const auto e = evidence_of("i", random_triples(gen));
    EXPECT_NEAR(caption_uncertainty(e), oracle_uncertainty(e), 1e-12);
    bool prev_fn = true;
    bool prev_u = true;
    for (double th = 0.0; th <= 3.0; th += 0.25) {
      const bool fn = false_neutral_filter(inst, &e, th).flagged;
      const bool un = uncertainty_filter(inst, &e, th / 5).flagged;
      if (inst.label() != "neutral") EXPECT_FALSE(fn);
      if (inst.label() != "contradiction") EXPECT_FALSE(un);
      EXPECT_TRUE(prev_fn || !fn);
      EXPECT_TRUE(prev_u || !un);
      prev_fn = fn;
      prev_u = un;
    }
  }
}

std::vector<VlInstance> planted_set() {
  std::vector<VlInstance> out;
  const std::vector<std::string> labels = {"entailment", "neutral", "contradiction"};
  for (int i = 0; i < 10; ++i) {
    auto inst = with_captions(make_instance("i" + std::to_string(i), "g" + std::to_string(i / 2), labels[i % 3],
                                            {"plain explanation " + std::to_string(i)},
                                            static_cast<Split>(i % 3)));
    inst.premise = "premise number " + std::to_string(i);
    out.push_back(inst);
  }
  out[1].gold_explanations = {"it is a rephrasing"};
  out[4].gold_explanations = {"ok", "the same sentence again"};
  out[8].gold_explanations = {"Just Another Word For it"};
  return out;
}

TEST(Pipeline, EmptyConfigIsIdentity) {
  const auto in = planted_set();
  const auto r = apply_pipeline(in, {}, FilterConfig{});
  EXPECT_EQ(r.kept, in);
  ASSERT_EQ(r.report.rows.size(), 1u);
  EXPECT_EQ(r.report.rows[0].total(), 10u);
}

TEST(Pipeline, PlantedKeywordsRemoved) {
  const auto in = planted_set();
  FilterConfig cfg;
  cfg.stages = {FilterKind::kKeyword};
  const auto r = apply_pipeline(in, {}, cfg);
  EXPECT_EQ(r.kept.size(), 7u);
  ASSERT_EQ(r.report.rows.size(), 2u);
  EXPECT_EQ(r.report.rows[0].total() - r.report.rows[1].total(), 3u);
  std::set<std::string> removed;
  for (const auto& d : r.removed) removed.insert(d.instance_id);
  EXPECT_EQ(removed, (std::set<std::string>{"i1", "i4", "i8"}));
}

TEST(Pipeline, FullStagesNonIncreasingAndOrderIndependent) {
  std::mt19937_64 gen(5);
  auto in = planted_set();
  std::map<std::string, NliEvidence> ev;
  for (const auto& inst : in) ev[inst.instance_id] = evidence_of(inst.instance_id, random_triples(gen));
  in[2].premise = in[2].input_text;
  FilterConfig cfg;
  cfg.stages = {FilterKind::kSimilarity, FilterKind::kUncertainty, FilterKind::kKeyword, FilterKind::kFalseNeutral};
  cfg.uncertainty_threshold = 0.25;
  const auto r = apply_pipeline(in, ev, cfg);
  ASSERT_EQ(r.report.rows.size(), 5u);
  const std::vector<std::string> names = {"raw", "false_neutral", "keyword", "uncertainty", "similarity"};
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(r.report.rows[i].stage, names[i]);
  for (std::size_t i = 1; i < r.report.rows.size(); ++i) {
    EXPECT_LE(r.report.rows[i].train, r.report.rows[i - 1].train);
    EXPECT_LE(r.report.rows[i].dev, r.report.rows[i - 1].dev);
    EXPECT_LE(r.report.rows[i].test, r.report.rows[i - 1].test);
  }
  EXPECT_EQ(r.kept.size() + r.removed.size(), in.size());

  auto shuffled = in;
  for (int k = 0; k < 5; ++k) {
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto s = apply_pipeline(shuffled, ev, cfg);
    std::set<std::string> a;
    std::set<std::string> b;
    for (const auto& x : r.kept) a.insert(x.instance_id);
    for (const auto& x : s.kept) b.insert(x.instance_id);
    EXPECT_EQ(a, b);
    EXPECT_EQ(s.report.rows, r.report.rows);
  }

  // Running the pipeline on its own output removes nothing more.
  const auto again = apply_pipeline(r.kept, ev, cfg);
  EXPECT_EQ(again.kept, r.kept);
  EXPECT_NE(format_stage_report(r.report).find("Train Set"), std::string::npos);
}

TEST(Pipeline, ConfigErrorsAndMissingInputs) {
  const auto in = planted_set();
  FilterConfig cfg;
  cfg.stages = {FilterKind::kUncertainty};
  EXPECT_THROW(apply_pipeline(in, {}, cfg), ConfigError);
  cfg.uncertainty_threshold = 0.3;
  EXPECT_THROW(apply_pipeline(in, {}, cfg), DataError);
  auto no_premise = in;
  no_premise[0].premise.reset();
  FilterConfig sim;
  sim.stages = {FilterKind::kSimilarity};
  EXPECT_THROW(apply_pipeline(no_premise, {}, sim), DataError);
  sim.similarity_labels = {"neutral"};
  EXPECT_NO_THROW(apply_pipeline(no_premise, {}, sim));
}

TEST(Pipeline, ReplacementLabelsApplyFirst) {
  auto in = planted_set();
  FilterConfig cfg;
  cfg.stages = {FilterKind::kFalseNeutral};
  std::map<std::string, NliEvidence> ev;
  for (const auto& inst : in) ev[inst.instance_id] = ent_sums(inst.instance_id, {1, 1, 1, 1, 1});
  const auto before = apply_pipeline(in, ev, cfg);
  cfg.replacement_labels = {{"i1", "entailment"}};
  const auto after = apply_pipeline(in, ev, cfg);
  EXPECT_EQ(after.kept.size(), before.kept.size() + 1);
}

TEST(FilterConfig, ParseAndRoundTrip) {
  const auto cfg = parse_filter_config(
      R"({"stages":["keyword","uncertainty"],"thresholds":{"uncertainty":0.4,"similarity":0.6},"similarity_labels":["entailment"]})");
  EXPECT_EQ(cfg.stages, (std::set<FilterKind>{FilterKind::kKeyword, FilterKind::kUncertainty}));
  EXPECT_DOUBLE_EQ(*cfg.uncertainty_threshold, 0.4);
  EXPECT_DOUBLE_EQ(cfg.similarity_threshold, 0.6);
  EXPECT_DOUBLE_EQ(cfg.false_neutral_threshold, 2.0);
  const auto back = parse_filter_config(to_json(cfg));
  EXPECT_EQ(back.stages, cfg.stages);
  EXPECT_EQ(back.similarity_labels, cfg.similarity_labels);
  EXPECT_THROW(parse_filter_config("{"), ConfigError);
  EXPECT_THROW(parse_filter_config(R"({"stages":["bogus"]})"), ConfigError);
  EXPECT_THROW(parse_filter_config(R"({"uncertainty_statistic":"entropy"})"), ConfigError);
}

}  // namespace
}  // namespace evil
