#include <regex>

#include "evil/service.hpp"
#include "httplib.h"
#include "json.hpp"

namespace evil {

using nlohmann::json;

namespace {

HttpReply error_reply(int status, std::string_view message) {
  return {status, "application/json", json{{"error", message}}.dump()};
}

int http_status(SubmitStatus status) {
  switch (status) {
    case SubmitStatus::kAccepted:
    case SubmitStatus::kRejected: return 200;
    case SubmitStatus::kInvalid: return 422;
    case SubmitStatus::kMalformed: return 400;
    case SubmitStatus::kConflict: return 409;
  }
  return 500;
}

}  // namespace

HttpReply handle_request(AnnotationService& service, std::string_view method, std::string_view path,
                         const std::map<std::string, std::string>& query, std::string_view body) {
  static const std::regex kReportPath(R"(^/reports/([^/]+)/([^/]+)$)");
  const std::string p(path);
  try {
    if (method == "GET" && p == "/assignments/next") {
      auto it = query.find("annotator");
      if (it == query.end() || it->second.empty()) return error_reply(400, "missing annotator");
      const auto view = service.next_assignment(it->second);
      json j{{"assignment", view ? json::parse(to_json(*view)) : json(nullptr)}};
      return {200, "application/json", j.dump()};
    }
    if (method == "POST" && p == "/submissions") {
      Submission s;
      try {
        s = parse_submission(body);
      } catch (const DataError& e) {
        return error_reply(400, e.what());
      }
      const SubmitResult r = service.submit(s);
      return {http_status(r.status), "application/json", to_json(r)};
    }
    std::smatch m;
    if (method == "GET" && std::regex_match(p, m, kReportPath)) {
      Pooling pooling = Pooling::kNumeric;
      if (auto it = query.find("pooling"); it != query.end()) {
        try {
          pooling = parse_pooling(it->second);
        } catch (const ConfigError& e) {
          return error_reply(400, e.what());
        }
      }
      try {
        return {200, "application/json", to_record_line(service.report(m[1], m[2], pooling))};
      } catch (const DataError& e) {
        return error_reply(404, e.what());
      }
    }
    if (method == "GET" && p == "/export/annotations") {
      return {200, "application/x-ndjson", service.export_annotations()};
    }
    return error_reply(404, "no route for " + std::string(method) + " " + p);
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

struct HttpServer::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      std::map<std::string, std::string> query;
      for (const auto& [k, v] : req.params) query.emplace(k, v);
      const HttpReply reply = handle_request(service, req.method, req.path, query, req.body);
      res.status = reply.status;
      res.set_content(reply.body, reply.content_type);
    };
    server.Get(R"(/.*)", handler);
    server.Post(R"(/.*)", handler);
  }
};

HttpServer::HttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw ConfigError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace evil
