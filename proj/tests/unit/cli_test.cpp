#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "builders.hpp"
#include "commands.hpp"
#include "evil/dataset_filters.hpp"
#include "evil/sampling.hpp"
#include "evil/service.hpp"
#include "evil/text_metrics.hpp"
#include "json.hpp"

namespace evil {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "evil");
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> data_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(test::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("{\"_meta\"", 0) != 0) out.push_back(line);
  }
  return out;
}

// Ten test instances; model "good" answers all but i3 correctly and copies
// the gold explanation, model "weak" answers i0..i4 correctly.
class CliFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = test::temp_dir("cli");
    std::vector<std::string> good;
    std::vector<std::string> weak;
    for (int i = 0; i < 10; ++i) {
      const std::string id = "i" + std::to_string(i);
      const std::string gold = "the man in the picture is holding a red umbrella number " + std::to_string(i);
      instances_.push_back(test::make_instance(id, "img" + std::to_string(i), "yes", {gold}));
      good.push_back(to_record_line(test::make_prediction(id, "good", i == 3 ? "no" : "yes", gold)));
      weak.push_back(to_record_line(test::make_prediction(id, "weak", i < 5 ? "yes" : "no", "a person stands outside")));
    }
    write_dataset(dir_ / "vqa.jsonl", instances_);
    test::write_lines(dir_ / "good.jsonl", good);
    test::write_lines(dir_ / "weak.jsonl", weak);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::vector<VlInstance> instances_;
};

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run_cli({}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"metrics", "--bogus"}).code, cli::kExitConfig);
  EXPECT_EQ(run_cli({"stats", "--dataset", "/nonexistent/file.jsonl"}).code, cli::kExitConfig);
  const auto dir = test::temp_dir("cli_exit");
  test::write_lines(dir / "bad.jsonl", {"not json", "{\"instance_id\":1}"});
  const auto bad = run_cli({"stats", "--dataset", (dir / "bad.jsonl").string()});
  EXPECT_EQ(bad.code, cli::kExitData);
  EXPECT_NE(bad.err.find("data error"), std::string::npos);
}

TEST_F(CliFixture, MetricsScoreOnlyCorrectlyAnsweredInstances) {
  const auto r = run_cli({"metrics", "--dataset", path("vqa.jsonl"), "--predictions", path("good.jsonl"),
                          path("weak.jsonl"), "--out", path("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = data_lines(dir_ / "m" / "metrics.jsonl");
  EXPECT_EQ(lines.size(), 9u + 5u);
  for (const auto& l : lines) {
    const auto mv = metric_vector_from_line(l);
    EXPECT_NE(mv.explanation_key, "good/i3");
    if (mv.explanation_key.rfind("good/", 0) == 0) {
      for (const auto* name : {"bleu1", "bleu2", "bleu3", "bleu4", "rouge1", "rougeL"}) {
        EXPECT_NEAR(mv.scores.at(name), 1.0, 1e-12) << name;
      }
    }
  }
  const auto meta = json::parse(test::read_file(dir_ / "m" / "metrics.jsonl").substr(0, test::read_file(dir_ / "m" / "metrics.jsonl").find('\n')));
  EXPECT_EQ(meta["_meta"]["dataset_id"], "vqa");
  EXPECT_EQ(meta["_meta"]["config_digest"].get<std::string>().size(), 64u);

  // Table columns follow the benchmark's layout.
  const std::string header = r.out.substr(0, r.out.find('\n'));
  std::istringstream cols(header);
  std::vector<std::string> names;
  for (std::string c; cols >> c;) names.push_back(c);
  EXPECT_EQ(names, (std::vector<std::string>{"Model", "S_O", "S_T", "S_E", "B1", "B2", "B3", "B4", "R-L", "MET.",
                                             "CIDEr", "SPICE", "BERTScore"}));
  EXPECT_NE(r.out.find("good"), std::string::npos);
}

TEST_F(CliFixture, SameConfigGivesByteIdenticalOutputs) {
  const std::vector<std::string> metrics = {"metrics", "--dataset", path("vqa.jsonl"), "--predictions",
                                            path("good.jsonl"), path("weak.jsonl"), "--out"};
  auto a = metrics;
  a.push_back(path("a"));
  auto b = metrics;
  b.push_back(path("b"));
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);
  EXPECT_EQ(test::read_file(dir_ / "a" / "metrics.jsonl"), test::read_file(dir_ / "b" / "metrics.jsonl"));
  EXPECT_EQ(test::read_file(dir_ / "a" / "metrics_table.txt"), test::read_file(dir_ / "b" / "metrics_table.txt"));

  for (const auto* out : {"s1", "s2"}) {
    ASSERT_EQ(run_cli({"sample", "--dataset", path("vqa.jsonl"), "--predictions", path("good.jsonl"), "--seed",
                       "11", "--sample-size", "6", "--out", path(out)})
                  .code,
              0);
  }
  EXPECT_EQ(test::read_file(dir_ / "s1" / "samples.jsonl"), test::read_file(dir_ / "s2" / "samples.jsonl"));
  const auto sample = sample_from_line(data_lines(dir_ / "s1" / "samples.jsonl").at(0));
  EXPECT_EQ(sample.instance_ids.size(), 6u);
  // Seeds are never defaulted.
  EXPECT_EQ(run_cli({"sample", "--dataset", path("vqa.jsonl"), "--predictions", path("good.jsonl"), "--out",
                     path("s3")})
                .code,
            cli::kExitConfig);
}

TEST_F(CliFixture, SampleWritesAssignmentsWithTrustedItems) {
  std::vector<VlInstance> with_trusted = instances_;
  with_trusted.push_back(test::make_instance("t0", "timg", "no", {"trusted"}));
  write_dataset(dir_ / "vqa.jsonl", with_trusted);
  test::write_lines(dir_ / "trusted.jsonl", {R"({"instance_id":"t0","known_answer":"no"})"});
  const auto r = run_cli({"sample", "--dataset", path("vqa.jsonl"), "--predictions", path("good.jsonl"),
                          "--seed", "3", "--trusted", path("trusted.jsonl"), "--batch-size", "5", "--out",
                          path("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto assignments = load_assignments(dir_ / "s" / "assignments.jsonl");
  // 9 correct instances, 3 annotators, batches of 5.
  EXPECT_EQ(assignments.size(), 6u);
}

TEST_F(CliFixture, FilterReportsOneRowPerStagePlusRaw) {
  std::vector<VlInstance> ve;
  std::set<std::string> planted;
  const auto& keywords = default_keywords();
  for (int i = 0; i < 12; ++i) {
    const std::string id = "v" + std::to_string(i);
    std::string expl = "the dog runs on the beach";
    if (i % 4 == 1) {
      expl = "the dog " + keywords[static_cast<std::size_t>(i) % keywords.size()] + " runs";
      planted.insert(id);
    }
    auto inst = test::make_instance(id, "im" + std::to_string(i), "entailment", {expl},
                                    i % 3 == 0 ? Split::kTrain : Split::kTest);
    inst.premise = "premise " + id;
    ve.push_back(inst);
  }
  write_dataset(dir_ / "ve.jsonl", ve);

  test::write_lines(dir_ / "noop.json", {R"({"stages":[]})"});
  auto r = run_cli({"filter", "--dataset", path("ve.jsonl"), "--thresholds", path("noop.json"), "--out", path("f0")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(data_lines(dir_ / "f0" / "filtered.jsonl"), data_lines(dir_ / "ve.jsonl"));
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);

  test::write_lines(dir_ / "kw.json", {R"({"stages":["keyword"]})"});
  r = run_cli({"filter", "--dataset", path("ve.jsonl"), "--thresholds", path("kw.json"), "--out", path("f1")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
  std::set<std::string> removed;
  for (const auto& l : data_lines(dir_ / "f1" / "removed.jsonl")) removed.insert(json::parse(l)["instance_id"]);
  EXPECT_EQ(removed, planted);
  EXPECT_EQ(data_lines(dir_ / "f1" / "filtered.jsonl").size(), 12u - planted.size());

  test::write_lines(dir_ / "bad.json", {R"({"stages":["sparkle"]})"});
  EXPECT_EQ(run_cli({"filter", "--dataset", path("ve.jsonl"), "--thresholds", path("bad.json"), "--out", path("f2")})
                .code,
            cli::kExitConfig);
}

TEST_F(CliFixture, ServiceExportScoresIdenticallyOffline) {
  ServiceConfig cfg;
  cfg.datasets["vqa"] = instances_;
  cfg.datasets["vqa"].push_back(test::make_instance("t0", "timg", "no", {"trusted"}));
  for (const auto& inst : instances_) {
    cfg.predictions["vqa"].push_back(test::make_prediction(inst.instance_id, "good",
                                                           inst.instance_id == "i3" ? "no" : "yes", "gen"));
  }
  EvalSample s{"good", "vqa", 1, {}};
  for (const auto& inst : instances_) s.instance_ids.push_back(inst.instance_id);
  const std::vector<TrustedItem> pool = {{"t0", "no"}};
  cfg.assignments = build_assignments(s, pool, {3, 10, 1});
  cfg.seed = 1;
  cfg.log_dir = dir_ / "svc";
  AnnotationService svc(cfg);
  const std::vector<std::string> ratings = {"yes", "weak_yes", "weak_no"};
  for (int w = 0; w < 3; ++w) {
    const std::string who = "w" + std::to_string(w);
    const auto v = svc.next_assignment(who);
    ASSERT_TRUE(v);
    Submission sub{v->assignment_id, who, {}, "1"};
    for (const auto& item : v->items) {
      ItemPayload p{item.instance_id, item.instance_id == "t0" ? "no" : (w == 2 && item.instance_id == "i5" ? "no" : "yes"), {}};
      for (int slot = 0; slot < 2; ++slot) {
        const std::string rating = ratings[static_cast<std::size_t>(w + slot) % 3];
        p.slots.push_back({slot, rating, rating == "weak_no" ? std::vector<std::string>{"untrue_to_image"}
                                                             : std::vector<std::string>{}});
      }
      sub.items.push_back(p);
    }
    ASSERT_EQ(svc.submit(sub).status, SubmitStatus::kAccepted);
  }
  std::vector<VlInstance> all = cfg.datasets["vqa"];
  write_dataset(dir_ / "vqa.jsonl", all);
  {
    std::ofstream out(dir_ / "export.jsonl");
    out << svc.export_annotations();
  }
  std::vector<std::string> preds;
  for (const auto& p : cfg.predictions["vqa"]) preds.push_back(to_record_line(p));
  test::write_lines(dir_ / "preds.jsonl", preds);

  const auto r = run_cli({"score", "--dataset", path("vqa.jsonl"), "--predictions", path("preds.jsonl"),
                          "--annotations", path("export.jsonl"), "--pooling", "numeric,median", "--models",
                          "good", "--out", path("score")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = data_lines(dir_ / "score" / "reports.jsonl");
  ASSERT_EQ(lines.size(), 2u);
  const auto numeric = report_from_line(lines[0]);
  const auto median = report_from_line(lines[1]);
  EXPECT_EQ(numeric, svc.report("good", "vqa", Pooling::kNumeric));
  EXPECT_EQ(median, svc.report("good", "vqa", Pooling::kMedian));
  EXPECT_EQ(numeric.n_explanations, median.n_explanations);
  EXPECT_EQ(numeric.n_explanations, 9u);

  // The service's own record log is the same file.
  EXPECT_EQ(test::read_file(dir_ / "svc" / "annotations.jsonl"), svc.export_annotations());
  EXPECT_EQ(run_cli({"score", "--dataset", path("vqa.jsonl"), "--annotations", path("export.jsonl"), "--pooling",
                     "loudest", "--out", path("score2")})
                .code,
            cli::kExitConfig);
}

TEST_F(CliFixture, CorrelateAndDataRoot) {
  ASSERT_EQ(run_cli({"metrics", "--dataset", path("vqa.jsonl"), "--predictions", path("good.jsonl"),
                     path("weak.jsonl"), "--out", path("m")})
                .code,
            0);
  std::vector<std::string> ann;
  const std::vector<Rating> cycle = {Rating::kYes, Rating::kWeakNo, Rating::kWeakYes, Rating::kNo};
  for (int i = 0; i < 5; ++i) {
    for (const auto* model : {"good", "weak"}) {
      const std::string id = "i" + std::to_string(i);
      ann.push_back(to_record_line(test::make_record("a", id, Target::generated(model), true,
                                                     cycle[static_cast<std::size_t>(i + (model[0] == 'w')) % 4],
                                                     {}, "vqa")));
    }
  }
  test::write_lines(dir_ / "ann.jsonl", ann);
  setenv(cli::kDataRootEnv, dir_.c_str(), 1);
  const auto r = run_cli({"correlate", "--metrics-file", "m/metrics.jsonl", "--annotations", "ann.jsonl",
                          "--metrics", "bleu1,rougeL", "--pvalue", "permutation", "--seed", "4", "--permutations",
                          "200", "--out", path("c")});
  unsetenv(cli::kDataRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = data_lines(dir_ / "c" / "correlation.jsonl");
  EXPECT_EQ(lines.size(), 4u);
  EXPECT_EQ(run_cli({"correlate", "--metrics-file", path("m/metrics.jsonl"), "--annotations", path("ann.jsonl"),
                     "--pvalue", "permutation", "--out", path("c2")})
                .code,
            cli::kExitConfig);
}

TEST_F(CliFixture, StatsAndServeErrors) {
  const auto r = run_cli({"stats", "--dataset", path("vqa.jsonl"), "--labels", "yes,no"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("instances 10"), std::string::npos);
  EXPECT_NE(r.out.find("label yes 10 (100.00%)"), std::string::npos);
  EXPECT_EQ(run_cli({"serve", "--dataset", path("vqa.jsonl"), "--predictions", path("good.jsonl"),
                     "--assignments", path("good.jsonl"), "--out", path("sv")})
                .code,
            cli::kExitConfig);
}

}  // namespace
}  // namespace evil
