#pragma once

// Human-evaluation samples and annotator assignments.
//
// All models evaluated on a dataset share one seeded shuffle of its test
// instances; each model's sample is the first `sample_size` instances in that
// order that the model answered correctly, skipping repeated images. Shared
// order maximises overlap between the samples of different models.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evil/corpus.hpp"

namespace evil {

inline constexpr std::size_t kDefaultSampleSize = 300;
inline constexpr std::size_t kDefaultBatchSize = 10;
inline constexpr std::size_t kDefaultAnnotatorsPerInstance = 3;

struct EvalSample {
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::vector<std::string> instance_ids;

  bool operator==(const EvalSample&) const = default;
};

struct SampleResult {
  EvalSample sample;
  // Set when fewer than sample_size eligible instances exist.
  std::optional<std::string> warning;
};

/// The shared presentation order: instance ids sorted, then shuffled with the
/// seeded Fisher-Yates shuffle. Depends only on the instance set and seed.
std::vector<std::string> shared_order(std::span<const VlInstance> instances, std::uint64_t seed);

/// Walks the shared order taking correctly answered instances with unseen
/// image ids until `sample_size` are collected.
SampleResult build_eval_sample(std::span<const VlInstance> instances,
                               const std::map<std::string, bool>& correct, std::string model_id,
                               std::string dataset_id, std::uint64_t seed,
                               std::size_t sample_size = kDefaultSampleSize);

enum class AssignmentStatus { kOpen, kClaimed, kSubmitted, kRejected };
std::string_view to_string(AssignmentStatus status);
AssignmentStatus parse_assignment_status(std::string_view text);

struct TrustedItem {
  std::string instance_id;
  std::string known_answer;

  bool operator==(const TrustedItem&) const = default;
};

struct AssignmentItem {
  std::string instance_id;
  bool trusted = false;

  bool operator==(const AssignmentItem&) const = default;
};

struct Assignment {
  std::string assignment_id;
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::optional<std::string> annotator_id;
  std::vector<AssignmentItem> items;
  std::size_t trusted_slot = 0;
  std::string trusted_answer;
  AssignmentStatus status = AssignmentStatus::kOpen;

  bool operator==(const Assignment&) const = default;
};

struct AssignmentOptions {
  std::size_t annotators_per_instance = kDefaultAnnotatorsPerInstance;
  std::size_t batch_size = kDefaultBatchSize;
  std::uint64_t seed = 0;
};

/// Splits the sample into batches of `batch_size` and issues each batch
/// `annotators_per_instance` times, each copy with one trusted item drawn
/// from the pool and inserted at a seeded slot in [0, batch length].
/// Throws DataError when the trusted pool is empty.
std::vector<Assignment> build_assignments(const EvalSample& sample,
                                          std::span<const TrustedItem> trusted_pool,
                                          const AssignmentOptions& options = {});

struct CoverageReport {
  bool applicable = true;
  std::vector<std::string> present;
  std::vector<std::string> missing;

  bool complete() const { return !applicable || missing.empty(); }
};

/// Which group tags (e.g. movies) of the dataset appear in the sample.
CoverageReport check_group_coverage(const EvalSample& sample, std::span<const VlInstance> instances);

std::string to_record_line(const EvalSample& sample);
EvalSample sample_from_line(std::string_view line);
std::string to_record_line(const Assignment& assignment);
Assignment assignment_from_line(std::string_view line);
std::vector<Assignment> load_assignments(const std::filesystem::path& path);
std::vector<EvalSample> load_samples(const std::filesystem::path& path);

}  // namespace evil
