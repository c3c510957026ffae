#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stigma/annotstore/records.hpp"

namespace stigma::annotstore {

struct LabeledAnnotation {
  std::string worker_id;
  std::string comment_id;
  int label = 0;  // 1 = stigmatizing

  friend bool operator==(const LabeledAnnotation&, const LabeledAnnotation&) = default;
};

enum class Split { kTrain, kTest };
std::string_view split_name(Split s);

// Annotations that survived quality control. Immutable after construction
// by quality_filter / split assignment.
struct CleanDataset {
  std::map<std::string, WorkerProfile> workers;
  std::map<std::string, std::string> comments;  // id -> text
  std::vector<LabeledAnnotation> annotations;
  std::map<std::string, Split> split;  // empty until assigned

  // Annotations on comments assigned to `side`.
  std::vector<LabeledAnnotation> annotations_in(Split side) const;
};

struct FunnelStage {
  std::string stage;
  std::size_t workers = 0;
  std::size_t comments = 0;
  std::size_t annotations = 0;
};

struct QcOptions {
  std::size_t max_annotations_per_comment = 3;
  // Workers whose positive-stigma share reaches this value are removed.
  double max_positive_fraction = 0.95;
};

struct QcResult {
  CleanDataset dataset;
  std::vector<FunnelStage> funnel;
};

/// Quality-control funnel, applied in order:
///   1. drop workers who failed the attention check, skipped survey items
///      or quit the HIT early (and annotations naming unknown workers or
///      comments), with all their annotations;
///   2. drop annotations answered "no" to Q-Sub (no stigma label);
///   3. keep at most the first `max_annotations_per_comment` stigma labels
///      per comment, in input order;
///   4. drop workers whose post-cap positive share is >=
///      `max_positive_fraction`, with all their annotations.
/// Counts are distinct workers/comments/annotations among surviving
/// annotations. `comments` supplies texts; pass an empty map to accept any
/// comment id (texts are then left empty).
QcResult quality_filter(std::span<const WorkerProfile> workers,
                        std::span<const AnnotationRecord> annotations,
                        const std::map<std::string, std::string>& comments = {},
                        const QcOptions& options = {});

// Inverse view used to re-run the funnel on a cleaned dataset.
std::vector<AnnotationRecord> to_records(const CleanDataset& dataset);
std::vector<WorkerProfile> worker_list(const CleanDataset& dataset);

// Random comment-level partition: floor(train_frac * N) comments train,
// the rest test. Throws ArgumentError if train_frac is not in (0,1) or the
// dataset has no comments.
std::map<std::string, Split> split_train_test(const CleanDataset& dataset, double train_frac,
                                              std::uint64_t seed);

void write_funnel(std::ostream& out, std::span<const FunnelStage> funnel);
void write_labels(std::ostream& out, std::span<const LabeledAnnotation> labels);
std::vector<LabeledAnnotation> read_labels(const std::filesystem::path& path);
void write_split(std::ostream& out, const std::map<std::string, Split>& split);
std::map<std::string, Split> read_split(const std::filesystem::path& path);

}  // namespace stigma::annotstore
