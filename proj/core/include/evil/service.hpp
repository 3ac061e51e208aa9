#pragma once

// Annotation service: hands out assignments, validates and persists
// annotations, and scores the persisted log. All state changes go through one
// lock, so claims and submissions are linearizable.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "evil/corpus.hpp"
#include "evil/evil_scoring.hpp"
#include "evil/sampling.hpp"

namespace evil {

enum class TrustedFailurePolicy {
  kReject,   // reject the whole assignment and reissue it
  kSalvage,  // keep the non-trusted items
};
std::string_view to_string(TrustedFailurePolicy policy);
TrustedFailurePolicy parse_trusted_failure_policy(std::string_view text);

struct ServiceConfig {
  // dataset_id -> instances
  std::map<std::string, std::vector<VlInstance>> datasets;
  // dataset_id -> predictions of every model on that dataset
  std::map<std::string, std::vector<ModelPrediction>> predictions;
  std::vector<Assignment> assignments;
  // Keys the blinding hash.
  std::uint64_t seed = 0;
  TrustedFailurePolicy policy = TrustedFailurePolicy::kReject;
  // Empty keeps everything in memory.
  std::filesystem::path log_dir;
};

struct ItemView {
  std::size_t index = 0;
  std::string instance_id;
  std::string image_uri;
  std::string input_text;
  TaskKind task_kind = TaskKind::kClassification;
  std::vector<std::string> choices;
  // Blinded: the client is never told which slot holds the ground truth.
  std::array<std::string, 2> explanations;
};

struct AssignmentView {
  std::string assignment_id;
  std::vector<ItemView> items;
};

struct SlotPayload {
  int slot = 0;
  std::string rating;
  std::vector<std::string> shortcomings;
};

struct ItemPayload {
  std::string instance_id;
  std::string task_answer;
  std::vector<SlotPayload> slots;
};

struct Submission {
  std::string assignment_id;
  std::string annotator_id;
  std::vector<ItemPayload> items;
  std::string client_checks_version;
};

enum class SubmitStatus {
  kAccepted,
  kRejected,   // trusted item failed under the reject policy
  kInvalid,    // validity rule violated (HTTP 422)
  kMalformed,  // payload does not match the assignment (HTTP 400)
  kConflict,   // not claimed by this annotator (HTTP 409)
};
std::string_view to_string(SubmitStatus status);

struct SubmitResult {
  SubmitStatus status = SubmitStatus::kAccepted;
  std::string message;
  std::optional<std::size_t> item;
  std::string rule;
  std::size_t records_persisted = 0;
  bool trusted_passed = true;
  std::optional<std::string> reissued_as;

  bool operator==(const SubmitResult&) const = default;
};

std::string to_json(const SubmitResult& result);
SubmitResult submit_result_from_json(std::string_view text);
std::string to_json(const AssignmentView& view);
Submission parse_submission(std::string_view json_text);
std::string to_json(const Submission& submission);

/// Which slot (0 or 1) shows the ground-truth explanation of an instance.
int ground_truth_slot(std::uint64_t seed, std::string_view instance_id);

class AnnotationService {
 public:
  /// Replays `log_dir` (if set and present) on construction.
  explicit AnnotationService(ServiceConfig config);

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// The annotator's current claim, or the lowest-id open assignment sharing
  /// no instance with anything they claimed before. nullopt if none.
  std::optional<AssignmentView> next_assignment(const std::string& annotator_id);

  SubmitResult submit(const Submission& submission);

  /// Throws DataError when no record exists for the pair.
  EvilReport report(const std::string& model_id, const std::string& dataset_id, Pooling pooling) const;

  /// Persisted records as JSONL, in persistence order.
  std::string export_annotations() const;
  std::vector<AnnotationRecord> records() const;
  std::vector<Assignment> assignments() const;

 private:
  struct AnnotatorState {
    std::optional<std::string> current;
    std::set<std::string> seen;  // "<model>\x1f<dataset>\x1f<instance>"
  };

  const VlInstance& instance(const std::string& dataset_id, const std::string& instance_id) const;
  const ModelPrediction* prediction(const std::string& dataset_id, const std::string& model_id,
                                    const std::string& instance_id) const;
  AssignmentView view_of(const Assignment& a) const;
  bool eligible(const AnnotatorState& state, const Assignment& a) const;
  void apply_claim(const std::string& assignment_id, const std::string& annotator_id);
  std::string reissue(Assignment& a);
  void append_event(const std::string& line);
  void append_records(std::span<const AnnotationRecord> records);
  void replay();

  ServiceConfig config_;
  std::map<std::pair<std::string, std::string>, const VlInstance*> instance_index_;
  // (dataset, model, instance)
  std::map<std::tuple<std::string, std::string, std::string>, const ModelPrediction*> prediction_index_;
  mutable std::mutex mutex_;
  std::map<std::string, Assignment> assignments_;
  std::map<std::string, AnnotatorState> annotators_;
  // (assignment_id, annotator_id) -> final result, for idempotent replays.
  std::map<std::pair<std::string, std::string>, SubmitResult> results_;
  std::vector<AnnotationRecord> records_;
  std::map<std::string, std::size_t> reissue_count_;
  bool replaying_ = false;
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Routes one request; used by the HTTP server and directly by tests.
HttpReply handle_request(AnnotationService& service, std::string_view method, std::string_view path,
                         const std::map<std::string, std::string>& query, std::string_view body);

class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();

  /// Binds to host:port (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace evil
