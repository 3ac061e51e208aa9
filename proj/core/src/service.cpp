#include "evil/service.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "evil/digest.hpp"
#include "json.hpp"
#include "record_io.hpp"

namespace evil {

using nlohmann::json;

std::string_view to_string(TrustedFailurePolicy policy) {
  return policy == TrustedFailurePolicy::kReject ? "reject" : "salvage";
}

TrustedFailurePolicy parse_trusted_failure_policy(std::string_view text) {
  if (text == "reject") return TrustedFailurePolicy::kReject;
  if (text == "salvage") return TrustedFailurePolicy::kSalvage;
  throw ConfigError("unknown trusted-item policy '" + std::string(text) + "'");
}

std::string_view to_string(SubmitStatus status) {
  switch (status) {
    case SubmitStatus::kAccepted: return "accepted";
    case SubmitStatus::kRejected: return "rejected";
    case SubmitStatus::kInvalid: return "invalid";
    case SubmitStatus::kMalformed: return "malformed";
    case SubmitStatus::kConflict: return "conflict";
  }
  return "malformed";
}

namespace {

SubmitStatus parse_submit_status(std::string_view text) {
  for (auto s : {SubmitStatus::kAccepted, SubmitStatus::kRejected, SubmitStatus::kInvalid,
                 SubmitStatus::kMalformed, SubmitStatus::kConflict}) {
    if (to_string(s) == text) return s;
  }
  throw DataError("unknown submit status '" + std::string(text) + "'");
}

std::string seen_key(const std::string& model, const std::string& dataset, const std::string& instance) {
  return model + '\x1f' + dataset + '\x1f' + instance;
}

SubmitResult failure(SubmitStatus status, std::string message) {
  SubmitResult r;
  r.status = status;
  r.message = std::move(message);
  return r;
}

}  // namespace

std::string to_json(const SubmitResult& r) {
  json j{{"status", to_string(r.status)},
         {"message", r.message},
         {"records", r.records_persisted},
         {"trusted_passed", r.trusted_passed}};
  if (r.item) j["item"] = *r.item;
  if (!r.rule.empty()) j["rule"] = r.rule;
  if (r.reissued_as) j["reissued_as"] = *r.reissued_as;
  return j.dump();
}

SubmitResult submit_result_from_json(std::string_view text) {
  const auto j = detail::parse_line(text);
  SubmitResult r;
  r.status = parse_submit_status(detail::require<std::string>(j, "status"));
  r.message = j.value("message", std::string{});
  r.records_persisted = j.value("records", std::size_t{0});
  r.trusted_passed = j.value("trusted_passed", true);
  if (j.contains("item")) r.item = j.at("item").get<std::size_t>();
  r.rule = j.value("rule", std::string{});
  if (j.contains("reissued_as")) r.reissued_as = j.at("reissued_as").get<std::string>();
  return r;
}

std::string to_json(const AssignmentView& view) {
  json items = json::array();
  for (const auto& item : view.items) {
    items.push_back(json{{"index", item.index},
                         {"instance_id", item.instance_id},
                         {"image_uri", item.image_uri},
                         {"input_text", item.input_text},
                         {"task_kind", to_string(item.task_kind)},
                         {"choices", item.choices},
                         {"explanations", item.explanations}});
  }
  return json{{"assignment_id", view.assignment_id}, {"items", std::move(items)}}.dump();
}

Submission parse_submission(std::string_view text) {
  const auto j = detail::parse_line(text);
  Submission s;
  s.assignment_id = detail::require<std::string>(j, "assignment_id");
  s.annotator_id = detail::require<std::string>(j, "annotator_id");
  s.client_checks_version = j.value("client_checks_version", std::string{});
  for (const auto& item : detail::require_array(j, "items")) {
    ItemPayload p;
    p.instance_id = detail::require<std::string>(item, "instance_id");
    p.task_answer = detail::require<std::string>(item, "task_answer");
    for (const auto& slot : detail::require_array(item, "slots")) {
      SlotPayload sp;
      sp.slot = detail::require<int>(slot, "slot");
      sp.rating = detail::require<std::string>(slot, "rating");
      if (slot.contains("shortcomings")) {
        sp.shortcomings = detail::require<std::vector<std::string>>(slot, "shortcomings");
      }
      p.slots.push_back(std::move(sp));
    }
    s.items.push_back(std::move(p));
  }
  return s;
}

std::string to_json(const Submission& s) {
  json items = json::array();
  for (const auto& item : s.items) {
    json slots = json::array();
    for (const auto& sp : item.slots) {
      slots.push_back(json{{"slot", sp.slot}, {"rating", sp.rating}, {"shortcomings", sp.shortcomings}});
    }
    items.push_back(json{{"instance_id", item.instance_id},
                         {"task_answer", item.task_answer},
                         {"slots", std::move(slots)}});
  }
  return json{{"assignment_id", s.assignment_id},
              {"annotator_id", s.annotator_id},
              {"client_checks_version", s.client_checks_version},
              {"items", std::move(items)}}
      .dump();
}

int ground_truth_slot(std::uint64_t seed, std::string_view instance_id) {
  return static_cast<int>(keyed_hash64(std::to_string(seed), instance_id) & 1u);
}

// ---- service ------------------------------------------------------------------

AnnotationService::AnnotationService(ServiceConfig config) : config_(std::move(config)) {
  for (const auto& [dataset_id, instances] : config_.datasets) {
    for (const auto& inst : instances) instance_index_[{dataset_id, inst.instance_id}] = &inst;
  }
  for (const auto& [dataset_id, preds] : config_.predictions) {
    for (const auto& p : preds) prediction_index_[{dataset_id, p.model_id, p.instance_id}] = &p;
  }
  for (auto& a : config_.assignments) {
    if (!config_.datasets.contains(a.dataset_id)) {
      throw DataError("assignment '" + a.assignment_id + "' refers to unknown dataset '" + a.dataset_id + "'");
    }
    for (const auto& item : a.items) {
      const VlInstance& inst = instance(a.dataset_id, item.instance_id);
      if (inst.gold_explanations.empty()) {
        throw DataError("instance '" + item.instance_id + "' has no gold explanation");
      }
      if (!item.trusted && prediction(a.dataset_id, a.model_id, item.instance_id) == nullptr) {
        throw DataError("no prediction of '" + a.model_id + "' for '" + item.instance_id + "'");
      }
    }
    a.status = AssignmentStatus::kOpen;
    a.annotator_id.reset();
    if (!assignments_.emplace(a.assignment_id, a).second) {
      throw DataError("duplicate assignment id '" + a.assignment_id + "'");
    }
  }
  replay();
}

const VlInstance& AnnotationService::instance(const std::string& dataset_id,
                                              const std::string& instance_id) const {
  auto it = instance_index_.find({dataset_id, instance_id});
  if (it != instance_index_.end()) return *it->second;
  throw DataError("unknown instance '" + instance_id + "' in dataset '" + dataset_id + "'");
}

const ModelPrediction* AnnotationService::prediction(const std::string& dataset_id,
                                                     const std::string& model_id,
                                                     const std::string& instance_id) const {
  auto it = prediction_index_.find({dataset_id, model_id, instance_id});
  return it == prediction_index_.end() ? nullptr : it->second;
}

AssignmentView AnnotationService::view_of(const Assignment& a) const {
  AssignmentView view{a.assignment_id, {}};
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    const auto& item = a.items[i];
    const VlInstance& inst = instance(a.dataset_id, item.instance_id);
    ItemView v;
    v.index = i;
    v.instance_id = inst.instance_id;
    v.image_uri = inst.image_uri;
    v.input_text = inst.input_text;
    v.task_kind = inst.task_kind;
    v.choices = inst.choices;
    const std::string& gold = inst.gold_explanations.front();
    std::string generated;
    if (const auto* p = prediction(a.dataset_id, a.model_id, inst.instance_id)) {
      generated = p->generated_explanation;
    } else {
      generated = inst.gold_explanations.back();
    }
    const int gt = ground_truth_slot(config_.seed, inst.instance_id);
    v.explanations[static_cast<std::size_t>(gt)] = gold;
    v.explanations[static_cast<std::size_t>(1 - gt)] = generated;
    view.items.push_back(std::move(v));
  }
  return view;
}

bool AnnotationService::eligible(const AnnotatorState& state, const Assignment& a) const {
  for (const auto& item : a.items) {
    if (item.trusted) continue;
    if (state.seen.contains(seen_key(a.model_id, a.dataset_id, item.instance_id))) return false;
  }
  return true;
}

void AnnotationService::apply_claim(const std::string& assignment_id, const std::string& annotator_id) {
  Assignment& a = assignments_.at(assignment_id);
  a.status = AssignmentStatus::kClaimed;
  a.annotator_id = annotator_id;
  AnnotatorState& state = annotators_[annotator_id];
  state.current = assignment_id;
  for (const auto& item : a.items) {
    if (!item.trusted) state.seen.insert(seen_key(a.model_id, a.dataset_id, item.instance_id));
  }
}

std::optional<AssignmentView> AnnotationService::next_assignment(const std::string& annotator_id) {
  std::lock_guard lock(mutex_);
  AnnotatorState& state = annotators_[annotator_id];
  if (state.current) return view_of(assignments_.at(*state.current));
  for (auto& [id, a] : assignments_) {
    if (a.status != AssignmentStatus::kOpen || !eligible(state, a)) continue;
    apply_claim(id, annotator_id);
    append_event(json{{"event", "claim"}, {"assignment_id", id}, {"annotator_id", annotator_id}}.dump());
    return view_of(a);
  }
  return std::nullopt;
}

std::string AnnotationService::reissue(Assignment& a) {
  const std::string base = a.assignment_id.substr(0, a.assignment_id.find('~'));
  const std::size_t n = ++reissue_count_[base];
  Assignment copy = a;
  copy.assignment_id = base + "~" + std::to_string(n);
  copy.status = AssignmentStatus::kOpen;
  copy.annotator_id.reset();
  const std::string id = copy.assignment_id;
  assignments_.emplace(id, std::move(copy));
  return id;
}

SubmitResult AnnotationService::submit(const Submission& s) {
  std::lock_guard lock(mutex_);
  auto ait = assignments_.find(s.assignment_id);
  if (ait == assignments_.end()) {
    return failure(SubmitStatus::kConflict, "unknown assignment '" + s.assignment_id + "'");
  }
  if (auto cached = results_.find({s.assignment_id, s.annotator_id}); cached != results_.end()) {
    return cached->second;
  }
  Assignment& a = ait->second;
  if (a.status != AssignmentStatus::kClaimed || a.annotator_id != s.annotator_id) {
    return failure(SubmitStatus::kConflict, "assignment '" + a.assignment_id + "' is not claimed by '" +
                                                s.annotator_id + "'");
  }
  if (s.items.size() != a.items.size()) {
    return failure(SubmitStatus::kMalformed, "expected " + std::to_string(a.items.size()) + " items, got " +
                                                 std::to_string(s.items.size()));
  }

  struct Parsed {
    std::array<Rating, 2> rating{};
    std::array<ShortcomingSet, 2> shortcomings;
  };
  std::vector<Parsed> parsed(s.items.size());
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    const auto& item = s.items[i];
    auto bad = [&](SubmitStatus status, std::string message) {
      SubmitResult r = failure(status, std::move(message));
      r.item = i;
      return r;
    };
    if (item.instance_id != a.items[i].instance_id) {
      return bad(SubmitStatus::kMalformed, "item " + std::to_string(i) + " is not '" + a.items[i].instance_id + "'");
    }
    if (normalize_answer(item.task_answer).empty()) {
      return bad(SubmitStatus::kMalformed, "item " + std::to_string(i) + " has no task answer");
    }
    if (item.slots.size() != 2 || item.slots[0].slot == item.slots[1].slot) {
      return bad(SubmitStatus::kMalformed, "item " + std::to_string(i) + " must rate slots 0 and 1");
    }
    for (const auto& sp : item.slots) {
      if (sp.slot != 0 && sp.slot != 1) return bad(SubmitStatus::kMalformed, "slot must be 0 or 1");
      auto& out = parsed[i];
      const auto slot = static_cast<std::size_t>(sp.slot);
      try {
        out.rating[slot] = parse_rating(sp.rating);
        for (const auto& name : sp.shortcomings) out.shortcomings[slot].insert(parse_shortcoming(name));
      } catch (const DataError& e) {
        return bad(SubmitStatus::kMalformed, e.what());
      }
    }
  }
  // Validity rules are checked after the structure so a violation always
  // names the first offending item.
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    for (std::size_t slot = 0; slot < 2; ++slot) {
      if (auto rule = check_rating(parsed[i].rating[slot], parsed[i].shortcomings[slot])) {
        SubmitResult r = failure(SubmitStatus::kInvalid, "item " + std::to_string(i) + " slot " +
                                                             std::to_string(slot) + " violates " + std::string(*rule));
        r.item = i;
        r.rule = std::string(*rule);
        return r;
      }
    }
  }

  if (!replaying_) append_event(json{{"event", "submit"}, {"submission", json::parse(to_json(s))}}.dump());

  SubmitResult result;
  result.trusted_passed =
      normalize_answer(s.items[a.trusted_slot].task_answer) == normalize_answer(a.trusted_answer);
  AnnotatorState& state = annotators_[s.annotator_id];
  state.current.reset();
  if (!result.trusted_passed && config_.policy == TrustedFailurePolicy::kReject) {
    a.status = AssignmentStatus::kRejected;
    result.status = SubmitStatus::kRejected;
    result.message = "trusted item answered incorrectly";
    result.reissued_as = reissue(a);
    results_[{s.assignment_id, s.annotator_id}] = result;
    return result;
  }

  std::vector<AnnotationRecord> fresh;
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    if (a.items[i].trusted) continue;
    const VlInstance& inst = instance(a.dataset_id, a.items[i].instance_id);
    const bool correct = answer_matches(inst, s.items[i].task_answer);
    const int gt = ground_truth_slot(config_.seed, inst.instance_id);
    for (int slot = 0; slot < 2; ++slot) {
      const Target target = slot == gt ? Target::gold() : Target::generated(a.model_id);
      const auto idx = static_cast<std::size_t>(slot);
      fresh.emplace_back(s.annotator_id, inst.instance_id, a.dataset_id, target, s.items[i].task_answer, correct,
                         parsed[i].rating[idx], parsed[i].shortcomings[idx], slot);
    }
  }
  a.status = AssignmentStatus::kSubmitted;
  result.status = SubmitStatus::kAccepted;
  result.message = result.trusted_passed ? "accepted" : "accepted; trusted item answered incorrectly";
  result.records_persisted = fresh.size();
  if (!replaying_) append_records(fresh);
  records_.insert(records_.end(), fresh.begin(), fresh.end());
  results_[{s.assignment_id, s.annotator_id}] = result;
  return result;
}

EvilReport AnnotationService::report(const std::string& model_id, const std::string& dataset_id,
                                     Pooling pooling) const {
  std::lock_guard lock(mutex_);
  auto dit = config_.datasets.find(dataset_id);
  if (dit == config_.datasets.end()) throw DataError("unknown dataset '" + dataset_id + "'");
  const Target target = model_id == kGroundTruthModel ? Target::gold() : Target::generated(model_id);
  const bool any = std::any_of(records_.begin(), records_.end(), [&](const AnnotationRecord& r) {
    return r.dataset_id() == dataset_id && r.target() == target;
  });
  if (!any) throw DataError("no records for model '" + model_id + "' on '" + dataset_id + "'");
  static const std::vector<ModelPrediction> kNone;
  auto pit = config_.predictions.find(dataset_id);
  const auto& preds = pit == config_.predictions.end() ? kNone : pit->second;
  return score_model({model_id, dataset_id, dit->second, preds, records_}, pooling);
}

std::string AnnotationService::export_annotations() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& r : records_) {
    out += to_record_line(r);
    out += '\n';
  }
  return out;
}

std::vector<AnnotationRecord> AnnotationService::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::vector<Assignment> AnnotationService::assignments() const {
  std::lock_guard lock(mutex_);
  std::vector<Assignment> out;
  for (const auto& [id, a] : assignments_) out.push_back(a);
  return out;
}

// ---- persistence ----------------------------------------------------------------
//
// events.jsonl is the source of truth: claims and every submission that reached
// a final result, replayed through the same code on start-up. annotations.jsonl
// is the append-only record log that offline scoring reads.

void AnnotationService::append_event(const std::string& line) {
  if (replaying_ || config_.log_dir.empty()) return;
  std::ofstream out(config_.log_dir / "events.jsonl", std::ios::app);
  out << line << '\n';
  out.flush();
  if (!out) throw DataError("cannot append to " + (config_.log_dir / "events.jsonl").string());
}

void AnnotationService::append_records(std::span<const AnnotationRecord> records) {
  if (config_.log_dir.empty()) return;
  std::ofstream out(config_.log_dir / "annotations.jsonl", std::ios::app);
  for (const auto& r : records) out << to_record_line(r) << '\n';
  out.flush();
  if (!out) throw DataError("cannot append to " + (config_.log_dir / "annotations.jsonl").string());
}

void AnnotationService::replay() {
  if (config_.log_dir.empty()) return;
  std::filesystem::create_directories(config_.log_dir);
  const auto events_path = config_.log_dir / "events.jsonl";
  replaying_ = true;
  if (std::ifstream in(events_path); in) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (detail::is_blank(line)) continue;
      const auto j = detail::parse_line(line);
      const auto kind = detail::require<std::string>(j, "event");
      if (kind == "claim") {
        const auto id = detail::require<std::string>(j, "assignment_id");
        if (!assignments_.contains(id)) throw DataError(events_path.string() + ":" + std::to_string(n) + ": unknown assignment");
        apply_claim(id, detail::require<std::string>(j, "annotator_id"));
      } else if (kind == "submit") {
        submit(parse_submission(j.at("submission").dump()));
      } else {
        throw DataError(events_path.string() + ":" + std::to_string(n) + ": unknown event '" + kind + "'");
      }
    }
  }
  replaying_ = false;

  // Bring the record log in line with the replayed state; it may lag by the
  // records of a submission interrupted mid-write.
  const auto records_path = config_.log_dir / "annotations.jsonl";
  std::vector<std::string> on_disk;
  if (std::ifstream in(records_path); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (!detail::is_blank(line)) on_disk.push_back(line);
    }
  }
  if (on_disk.size() > records_.size()) throw DataError(records_path.string() + " has records missing from the event log");
  for (std::size_t i = 0; i < on_disk.size(); ++i) {
    if (on_disk[i] != to_record_line(records_[i])) {
      throw DataError(records_path.string() + ":" + std::to_string(i + 1) + ": disagrees with the event log");
    }
  }
  append_records(std::span<const AnnotationRecord>(records_).subspan(on_disk.size()));
}

}  // namespace evil
