#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "builders.hpp"
#include "evil/corpus.hpp"

namespace evil {
namespace {

using test::make_instance;

TEST(Corpus, LoadsValidLines) {
  const auto dir = test::temp_dir("corpus");
  std::vector<VlInstance> in = {make_instance("i1", "img1", "entailment"), make_instance("i2", "img1", "neutral"),
                                make_instance("i3", "img2", "contradiction")};
  write_dataset(dir / "d.jsonl", in);
  const auto r = load_dataset(dir / "d.jsonl");
  EXPECT_EQ(r.records, in);
  EXPECT_TRUE(r.rejects.empty());
}

TEST(Corpus, EmptyExplanationsRejectedWithLineNumber) {
  const auto dir = test::temp_dir("corpus");
  auto bad = make_instance("i2", "img1", "neutral");
  bad.gold_explanations.clear();
  test::write_lines(dir / "d.jsonl", {to_record_line(make_instance("i1", "img1", "entailment")), "",
                                      to_record_line(bad), "{not json"});
  const auto r = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.rejects.size(), 2u);
  EXPECT_EQ(r.rejects[0].line_number, 3u);
  EXPECT_EQ(r.rejects[0].reason, "empty explanations");
  EXPECT_EQ(r.rejects[1].line_number, 4u);
}

TEST(Corpus, AllRejectedIsFatal) {
  const auto dir = test::temp_dir("corpus");
  test::write_lines(dir / "d.jsonl", {"{}", "[1]"});
  EXPECT_THROW(load_dataset(dir / "d.jsonl"), DataError);
  EXPECT_THROW(load_dataset(dir / "missing.jsonl"), DataError);
  test::write_lines(dir / "ok.jsonl", {to_record_line(make_instance("i1", "img1", "entailment"))});
  EXPECT_THROW(load_dataset(dir / "ok.jsonl", "other.schema"), DataError);
}

TEST(Corpus, DuplicateIdsRejected) {
  const auto dir = test::temp_dir("corpus");
  test::write_lines(dir / "d.jsonl", {to_record_line(make_instance("i1", "img1", "entailment")),
                                      to_record_line(make_instance("i1", "img2", "neutral"))});
  const auto r = load_dataset(dir / "d.jsonl");
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.rejects.size(), 1u);
}

TEST(Corpus, InstanceInvariants) {
  auto mc = make_instance("i", "g", "b");
  mc.task_kind = TaskKind::kMultipleChoice;
  EXPECT_TRUE(validate(mc).has_value());
  mc.choices = {"a", "b"};
  EXPECT_FALSE(validate(mc).has_value());
  mc.gold_answers = {{"c", std::nullopt}};
  EXPECT_TRUE(validate(mc).has_value());

  auto ma = make_instance("i", "g", "red");
  ma.task_kind = TaskKind::kMultiAnswer;
  ma.gold_answers = {{"red", 3}, {"blue", 0}};
  EXPECT_TRUE(validate(ma).has_value());
  ma.gold_answers = {{"red", 3}, {"blue", 1}};
  EXPECT_FALSE(validate(ma).has_value());

  auto cap = make_instance("i", "g", "x");
  cap.captions = {"1", "2", "3"};
  EXPECT_TRUE(validate(cap).has_value());
  cap.captions = {"1", "2", "3", "4", "5"};
  EXPECT_FALSE(validate(cap).has_value());
}

TEST(Corpus, MajorityLabel) {
  auto ma = make_instance("i", "g", "red");
  ma.task_kind = TaskKind::kMultiAnswer;
  ma.gold_answers = {{"red", 2}, {"blue", 5}, {"green", 5}};
  EXPECT_EQ(ma.label(), "blue");
}

TEST(Corpus, RoundTripIsByteIdentical) {
  auto a = make_instance("i1", "img1", "b", {"one", "two"}, Split::kDev);
  a.task_kind = TaskKind::kMultipleChoice;
  a.choices = {"a", "b", "c", "d"};
  a.group_tag = "movie_7";
  auto b = make_instance("i2", "img2", "yes");
  b.task_kind = TaskKind::kMultiAnswer;
  b.gold_answers = {{"yes", 9}, {"no", 1}};
  b.captions = {"c1", "c2", "c3", "c4", "c5"};
  b.premise = "a premise";
  const std::vector<VlInstance> in = {a, b};
  const auto dir = test::temp_dir("corpus");
  write_dataset(dir / "x.jsonl", in);
  const auto loaded = load_dataset(dir / "x.jsonl").records;
  write_dataset(dir / "y.jsonl", loaded);
  EXPECT_EQ(test::read_file(dir / "x.jsonl"), test::read_file(dir / "y.jsonl"));
  EXPECT_EQ(loaded, in);
}

TEST(Corpus, PredictionsDeduplicatePerModel) {
  const auto dir = test::temp_dir("corpus");
  test::write_lines(dir / "p.jsonl",
                    {R"({"_meta":{"model":"m"}})", to_record_line(test::make_prediction("i1", "m", "yes")),
                     to_record_line(test::make_prediction("i1", "n", "yes")),
                     to_record_line(test::make_prediction("i1", "m", "no"))});
  const auto r = load_predictions(dir / "p.jsonl");
  EXPECT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.rejects.size(), 1u);
}

TEST(Corpus, NliEvidenceValidation) {
  NliEvidence e;
  e.instance_id = "i1";
  for (auto& t : e.per_caption) t = {0.2, 0.3, 0.5};
  EXPECT_FALSE(validate(e).has_value());
  EXPECT_EQ(evidence_from_line(to_record_line(e)), e);
  e.per_caption[2] = {0.2, 0.3, 0.6};
  EXPECT_TRUE(validate(e).has_value());
  e.per_caption[2] = {1.2, -0.2, 0.0};
  EXPECT_TRUE(validate(e).has_value());
  EXPECT_THROW(evidence_from_line(R"({"instance_id":"i","per_caption_scores":[[1,0,0]]})"), DataError);
}

TEST(Corpus, EmbeddingValidation) {
  EmbeddingSet s;
  s.explanation_key = "m/i1";
  s.tokens = {{"a", {1.0, 0.0}}, {"b", {0.0, 1.0}}};
  EXPECT_FALSE(validate(s).has_value());
  EXPECT_EQ(embeddings_from_line(to_record_line(s)), s);
  s.tokens.push_back({"c", {1.0}});
  EXPECT_TRUE(validate(s).has_value());
  s.tokens = {{"a", {}}};
  EXPECT_TRUE(validate(s).has_value());
}

TEST(DatasetStats, LabelDistribution) {
  const std::vector<VlInstance> in = {make_instance("i1", "g1", "entailment"),
                                      make_instance("i2", "g2", "contradiction")};
  const std::vector<std::string> labels = {"entailment", "neutral", "contradiction"};
  const auto s = dataset_stats(in, labels);
  EXPECT_DOUBLE_EQ(s.label_distribution.at("entailment"), 50.0);
  EXPECT_DOUBLE_EQ(s.label_distribution.at("neutral"), 0.0);
  EXPECT_DOUBLE_EQ(s.label_distribution.at("contradiction"), 50.0);
  EXPECT_EQ(s.images, 2u);
}

TEST(DatasetStats, ExplanationLengths) {
  const std::vector<VlInstance> in = {
      make_instance("i1", "g", "x", {"w w w w w w w w w w"}),
      make_instance("i2", "g", "x", {"w w w w w w w w w w w w w w"})};
  const auto s = dataset_stats(in);
  EXPECT_DOUBLE_EQ(s.explanation_length.mean, 12.0);
  EXPECT_DOUBLE_EQ(s.explanation_length.median, 12.0);
  EXPECT_EQ(s.images, 1u);
}

TEST(DatasetStats, EmptyIsError) { EXPECT_THROW(dataset_stats({}), DataError); }

TEST(DatasetStats, CountsSumAndPermutationInvariant) {
  std::mt19937_64 gen(7);
  const std::vector<std::string> labels = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<VlInstance> in;
    const int n = 1 + static_cast<int>(gen() % 40);
    for (int i = 0; i < n; ++i) {
      std::string text;
      for (std::uint64_t k = 0, len = 1 + gen() % 9; k < len; ++k) text += "w ";
      auto inst = make_instance("i" + std::to_string(i), "g" + std::to_string(gen() % 10), labels[gen() % 4],
                                {text}, static_cast<Split>(gen() % 3));
      inst.input_text = text + text;
      in.push_back(inst);
    }
    const auto s = dataset_stats(in, labels);
    std::size_t label_total = 0;
    double pct = 0;
    for (const auto& [l, c] : s.label_counts) label_total += c;
    for (const auto& [l, p] : s.label_distribution) pct += p;
    std::size_t split_total = 0;
    for (const auto& [sp, c] : s.per_split) split_total += c;
    EXPECT_EQ(label_total, in.size());
    EXPECT_EQ(split_total, in.size());
    EXPECT_NEAR(pct, 100.0, 0.1);

    std::shuffle(in.begin(), in.end(), gen);
    const auto t = dataset_stats(in, labels);
    EXPECT_EQ(t.label_counts, s.label_counts);
    EXPECT_EQ(t.images, s.images);
    EXPECT_DOUBLE_EQ(t.input_length.mean, s.input_length.mean);
    EXPECT_DOUBLE_EQ(t.input_length.median, s.input_length.median);
    EXPECT_DOUBLE_EQ(t.explanation_length.median, s.explanation_length.median);
  }
}

TEST(Corpus, NormalizeAnswer) {
  EXPECT_EQ(normalize_answer("  Yes \n"), "yes");
  EXPECT_EQ(whitespace_length("  a  b\tc "), 3u);
}

}  // namespace
}  // namespace evil
