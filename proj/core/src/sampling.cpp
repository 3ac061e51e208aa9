#include "evil/sampling.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "evil/random.hpp"
#include "json.hpp"
#include "record_io.hpp"

namespace evil {

using nlohmann::json;

std::vector<std::string> shared_order(std::span<const VlInstance> instances, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(instances.size());
  for (const auto& inst : instances) ids.push_back(inst.instance_id);
  std::sort(ids.begin(), ids.end());
  SeededRng rng(seed);
  rng.shuffle(std::span<std::string>(ids));
  return ids;
}

SampleResult build_eval_sample(std::span<const VlInstance> instances,
                               const std::map<std::string, bool>& correct, std::string model_id,
                               std::string dataset_id, std::uint64_t seed,
                               std::size_t sample_size) {
  std::map<std::string_view, const VlInstance*> by_id;
  for (const auto& inst : instances) by_id[inst.instance_id] = &inst;

  SampleResult result;
  result.sample.model_id = std::move(model_id);
  result.sample.dataset_id = std::move(dataset_id);
  result.sample.seed = seed;
  std::set<std::string> images;
  for (const auto& id : shared_order(instances, seed)) {
    if (result.sample.instance_ids.size() >= sample_size) break;
    auto it = correct.find(id);
    if (it == correct.end() || !it->second) continue;
    const VlInstance& inst = *by_id.at(id);
    if (!images.insert(inst.image_id).second) continue;
    result.sample.instance_ids.push_back(id);
  }
  if (result.sample.instance_ids.size() < sample_size) {
    result.warning = "only " + std::to_string(result.sample.instance_ids.size()) +
                     " eligible instances for model '" + result.sample.model_id + "' (wanted " +
                     std::to_string(sample_size) + ")";
  }
  return result;
}

std::string_view to_string(AssignmentStatus status) {
  switch (status) {
    case AssignmentStatus::kOpen: return "open";
    case AssignmentStatus::kClaimed: return "claimed";
    case AssignmentStatus::kSubmitted: return "submitted";
    case AssignmentStatus::kRejected: return "rejected";
  }
  return "open";
}

AssignmentStatus parse_assignment_status(std::string_view text) {
  if (text == "open") return AssignmentStatus::kOpen;
  if (text == "claimed") return AssignmentStatus::kClaimed;
  if (text == "submitted") return AssignmentStatus::kSubmitted;
  if (text == "rejected") return AssignmentStatus::kRejected;
  throw DataError("unknown assignment status '" + std::string(text) + "'");
}

std::vector<Assignment> build_assignments(const EvalSample& sample,
                                          std::span<const TrustedItem> trusted_pool,
                                          const AssignmentOptions& options) {
  if (trusted_pool.empty()) throw DataError("trusted pool is empty");
  if (options.batch_size == 0 || options.annotators_per_instance == 0) {
    throw ConfigError("batch size and annotators per instance must be positive");
  }
  std::vector<Assignment> out;
  const auto& ids = sample.instance_ids;
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < ids.size(); begin += options.batch_size, ++batch_index) {
    const std::size_t end = std::min(ids.size(), begin + options.batch_size);
    const std::set<std::string> in_batch(ids.begin() + static_cast<std::ptrdiff_t>(begin),
                                         ids.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<const TrustedItem*> eligible;
    for (const auto& t : trusted_pool) {
      if (!in_batch.contains(t.instance_id)) eligible.push_back(&t);
    }
    if (eligible.empty()) throw DataError("every trusted item is already in batch " + std::to_string(batch_index));

    for (std::size_t replica = 0; replica < options.annotators_per_instance; ++replica) {
      SeededRng rng(mix_seed(options.seed, batch_index * options.annotators_per_instance + replica));
      const TrustedItem& trusted = *eligible[rng.bounded(eligible.size())];
      const std::size_t batch_len = end - begin;
      const auto slot = static_cast<std::size_t>(rng.bounded(batch_len + 1));

      Assignment a;
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "/b%04zu/r%zu", batch_index, replica);
      a.assignment_id = sample.model_id + "/" + sample.dataset_id + suffix;
      a.model_id = sample.model_id;
      a.dataset_id = sample.dataset_id;
      a.seed = options.seed;
      for (std::size_t i = begin; i < end; ++i) a.items.push_back({ids[i], false});
      a.items.insert(a.items.begin() + static_cast<std::ptrdiff_t>(slot), AssignmentItem{trusted.instance_id, true});
      a.trusted_slot = slot;
      a.trusted_answer = trusted.known_answer;
      out.push_back(std::move(a));
    }
  }
  return out;
}

CoverageReport check_group_coverage(const EvalSample& sample, std::span<const VlInstance> instances) {
  CoverageReport report;
  std::set<std::string> all;
  std::map<std::string_view, const VlInstance*> by_id;
  for (const auto& inst : instances) {
    by_id[inst.instance_id] = &inst;
    if (inst.group_tag) all.insert(*inst.group_tag);
  }
  if (all.empty()) {
    report.applicable = false;
    return report;
  }
  std::set<std::string> present;
  for (const auto& id : sample.instance_ids) {
    auto it = by_id.find(id);
    if (it != by_id.end() && it->second->group_tag) present.insert(*it->second->group_tag);
  }
  report.present.assign(present.begin(), present.end());
  std::set_difference(all.begin(), all.end(), present.begin(), present.end(),
                      std::back_inserter(report.missing));
  return report;
}

// ---- records ------------------------------------------------------------------

std::string to_record_line(const EvalSample& s) {
  return json{{"model_id", s.model_id},
              {"dataset_id", s.dataset_id},
              {"seed", s.seed},
              {"shuffle", kShuffleAlgorithm},
              {"instance_ids", s.instance_ids}}
      .dump();
}

EvalSample sample_from_line(std::string_view line) {
  const auto j = detail::parse_line(line);
  EvalSample s;
  s.model_id = detail::require<std::string>(j, "model_id");
  s.dataset_id = detail::require<std::string>(j, "dataset_id");
  s.seed = detail::require<std::uint64_t>(j, "seed");
  s.instance_ids = detail::require<std::vector<std::string>>(j, "instance_ids");
  return s;
}

std::string to_record_line(const Assignment& a) {
  json items = json::array();
  for (const auto& item : a.items) items.push_back(json{{"instance_id", item.instance_id}, {"trusted", item.trusted}});
  json j{{"assignment_id", a.assignment_id},
         {"model_id", a.model_id},
         {"dataset_id", a.dataset_id},
         {"seed", a.seed},
         {"items", std::move(items)},
         {"trusted_slot", a.trusted_slot},
         {"trusted_answer", a.trusted_answer},
         {"status", to_string(a.status)}};
  if (a.annotator_id) j["annotator_id"] = *a.annotator_id;
  return j.dump();
}

Assignment assignment_from_line(std::string_view line) {
  const auto j = detail::parse_line(line);
  Assignment a;
  a.assignment_id = detail::require<std::string>(j, "assignment_id");
  a.model_id = detail::require<std::string>(j, "model_id");
  a.dataset_id = detail::require<std::string>(j, "dataset_id");
  a.seed = j.value("seed", std::uint64_t{0});
  for (const auto& item : detail::require_array(j, "items")) {
    a.items.push_back({detail::require<std::string>(item, "instance_id"), item.value("trusted", false)});
  }
  a.trusted_slot = detail::require<std::size_t>(j, "trusted_slot");
  a.trusted_answer = detail::require<std::string>(j, "trusted_answer");
  a.status = parse_assignment_status(j.value("status", std::string{"open"}));
  if (j.contains("annotator_id")) a.annotator_id = j.at("annotator_id").get<std::string>();
  const auto trusted = std::count_if(a.items.begin(), a.items.end(), [](const auto& i) { return i.trusted; });
  if (trusted != 1 || a.trusted_slot >= a.items.size() || !a.items[a.trusted_slot].trusted) {
    throw DataError("assignment '" + a.assignment_id + "' must hold exactly one trusted item at trusted_slot");
  }
  return a;
}

namespace {

template <typename T, typename Parse>
std::vector<T> load_all(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (detail::is_blank(line)) continue;
    if (detail::is_meta(detail::parse_line(line))) continue;
    try {
      out.push_back(parse(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<Assignment> load_assignments(const std::filesystem::path& path) {
  return load_all<Assignment>(path, assignment_from_line);
}

std::vector<EvalSample> load_samples(const std::filesystem::path& path) {
  return load_all<EvalSample>(path, sample_from_line);
}

}  // namespace evil
