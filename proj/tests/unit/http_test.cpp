#include <gtest/gtest.h>

#include <thread>

#include "builders.hpp"
#include "evil/service.hpp"
#include "httplib.h"
#include "json.hpp"

namespace evil {
namespace {

using nlohmann::json;

ServiceConfig small_config() {
  ServiceConfig cfg;
  auto& instances = cfg.datasets["ds"];
  EvalSample s{"m", "ds", 5, {}};
  for (int i = 0; i < 10; ++i) {
    const std::string id = "i" + std::to_string(i);
    instances.push_back(test::make_instance(id, "img" + std::to_string(i), "yes", {"gold " + id}));
    cfg.predictions["ds"].push_back(test::make_prediction(id, "m", "yes", "gen " + id));
    s.instance_ids.push_back(id);
  }
  instances.push_back(test::make_instance("t1", "timg", "no", {"tg"}));
  const std::vector<TrustedItem> pool = {{"t1", "no"}};
  cfg.assignments = build_assignments(s, pool, {1, 10, 5});
  cfg.seed = 5;
  return cfg;
}

// A submission that passes every check, built from the wire view.
json valid_submission(const json& view, const std::string& annotator, const std::string& rating = "yes") {
  json items = json::array();
  for (const auto& item : view["items"]) {
    const std::string id = item["instance_id"];
    items.push_back({{"instance_id", id},
                     {"task_answer", id == "t1" ? "no" : "yes"},
                     {"slots",
                      {{{"slot", 0}, {"rating", rating}, {"shortcomings", json::array()}},
                       {{"slot", 1}, {"rating", rating}, {"shortcomings", json::array()}}}}});
  }
  return {{"assignment_id", view["assignment_id"]},
          {"annotator_id", annotator},
          {"client_checks_version", "1"},
          {"items", items}};
}

TEST(HandleRequest, Routes) {
  AnnotationService svc(small_config());
  EXPECT_EQ(handle_request(svc, "GET", "/assignments/next", {}, "").status, 400);
  const auto next = handle_request(svc, "GET", "/assignments/next", {{"annotator", "a"}}, "");
  ASSERT_EQ(next.status, 200);
  const json view = json::parse(next.body)["assignment"];
  ASSERT_FALSE(view.is_null());
  EXPECT_EQ(view["items"].size(), 11u);
  for (const auto& item : view["items"]) {
    EXPECT_EQ(item["explanations"].size(), 2u);
    EXPECT_FALSE(item.contains("trusted"));
  }
  // Only one assignment exists.
  EXPECT_TRUE(json::parse(handle_request(svc, "GET", "/assignments/next", {{"annotator", "b"}}, "").body)["assignment"]
                  .is_null());

  EXPECT_EQ(handle_request(svc, "POST", "/submissions", {}, "{not json").status, 400);
  auto bad = valid_submission(view, "a");
  bad["items"][0]["slots"][0]["shortcomings"] = {"nonsensical"};
  const auto invalid = handle_request(svc, "POST", "/submissions", {}, bad.dump());
  EXPECT_EQ(invalid.status, 422);
  EXPECT_EQ(json::parse(invalid.body)["rule"], "optimal-with-shortcomings");
  EXPECT_EQ(json::parse(invalid.body)["item"], 0);
  EXPECT_EQ(handle_request(svc, "POST", "/submissions", {}, valid_submission(view, "b").dump()).status, 409);
  auto mismatch = valid_submission(view, "a");
  mismatch["items"].erase(mismatch["items"].begin());
  EXPECT_EQ(handle_request(svc, "POST", "/submissions", {}, mismatch.dump()).status, 400);

  EXPECT_EQ(handle_request(svc, "GET", "/reports/m/ds", {}, "").status, 404);
  const auto ok = handle_request(svc, "POST", "/submissions", {}, valid_submission(view, "a").dump());
  EXPECT_EQ(ok.status, 200);
  EXPECT_EQ(json::parse(ok.body)["status"], "accepted");
  EXPECT_EQ(json::parse(ok.body)["records"], 20);

  const auto report = handle_request(svc, "GET", "/reports/m/ds", {{"pooling", "median"}}, "");
  ASSERT_EQ(report.status, 200);
  EXPECT_EQ(report_from_line(report.body), svc.report("m", "ds", Pooling::kMedian));
  EXPECT_EQ(handle_request(svc, "GET", "/reports/m/ds", {{"pooling", "loud"}}, "").status, 400);
  const auto exported = handle_request(svc, "GET", "/export/annotations", {}, "");
  EXPECT_EQ(exported.content_type, "application/x-ndjson");
  EXPECT_EQ(exported.body, svc.export_annotations());
  EXPECT_EQ(handle_request(svc, "DELETE", "/export/annotations", {}, "").status, 404);
  EXPECT_EQ(handle_request(svc, "GET", "/nowhere", {}, "").status, 404);
}

TEST(HttpServer, ServesOverLoopback) {
  AnnotationService svc(small_config());
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  httplib::Result next;
  for (int attempt = 0; attempt < 50 && !next; ++attempt) {
    next = client.Get("/assignments/next?annotator=alice");
    if (!next) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_TRUE(next);
  EXPECT_EQ(next->status, 200);
  const json view = json::parse(next->body)["assignment"];
  const auto body = valid_submission(view, "alice", "weak_yes").dump();
  const auto posted = client.Post("/submissions", body, "application/json");
  ASSERT_TRUE(posted);
  EXPECT_EQ(posted->status, 200);
  const auto again = client.Post("/submissions", body, "application/json");
  EXPECT_EQ(again->body, posted->body);
  const auto report = client.Get("/reports/m/ds?pooling=numeric");
  ASSERT_TRUE(report);
  EXPECT_EQ(report->status, 200);
  EXPECT_NEAR(report_from_line(report->body).s_e, 2.0 / 3.0, 1e-12);
  const auto exported = client.Get("/export/annotations");
  EXPECT_EQ(exported->get_header_value("Content-Type"), "application/x-ndjson");
  EXPECT_EQ(client.Get("/reports/zz/ds")->status, 404);

  server.stop();
  t.join();
}

}  // namespace
}  // namespace evil
