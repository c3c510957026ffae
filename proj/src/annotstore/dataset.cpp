#include "stigma/annotstore/dataset.hpp"

#include <cmath>
#include <ostream>
#include <set>
#include <unordered_map>

#include "stigma/common/csv.hpp"
#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"

namespace stigma::annotstore {

std::string_view split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::vector<LabeledAnnotation> CleanDataset::annotations_in(Split side) const {
  std::vector<LabeledAnnotation> out;
  for (const auto& a : annotations) {
    auto it = split.find(a.comment_id);
    if (it != split.end() && it->second == side) out.push_back(a);
  }
  return out;
}

namespace {

template <class Range, class WorkerOf, class CommentOf>
FunnelStage count_stage(std::string name, const Range& items, WorkerOf worker_of,
                        CommentOf comment_of) {
  std::set<std::string_view> w, c;
  for (const auto& a : items) {
    w.insert(worker_of(a));
    c.insert(comment_of(a));
  }
  return {std::move(name), w.size(), c.size(), static_cast<std::size_t>(std::size(items))};
}

FunnelStage count_records(std::string name, const std::vector<AnnotationRecord>& items) {
  return count_stage(
      std::move(name), items, [](const AnnotationRecord& a) -> std::string_view { return a.worker_id; },
      [](const AnnotationRecord& a) -> std::string_view { return a.comment_id; });
}

FunnelStage count_labels(std::string name, const std::vector<LabeledAnnotation>& items) {
  return count_stage(
      std::move(name), items, [](const LabeledAnnotation& a) -> std::string_view { return a.worker_id; },
      [](const LabeledAnnotation& a) -> std::string_view { return a.comment_id; });
}

}  // namespace

QcResult quality_filter(std::span<const WorkerProfile> workers,
                        std::span<const AnnotationRecord> annotations,
                        const std::map<std::string, std::string>& comments,
                        const QcOptions& options) {
  QcResult out;
  std::unordered_map<std::string, const WorkerProfile*> by_id;
  for (const auto& w : workers) by_id.emplace(w.worker_id, &w);

  std::vector<AnnotationRecord> stage(annotations.begin(), annotations.end());
  out.funnel.push_back(count_records("input", stage));

  // (1) worker-level checks
  std::erase_if(stage, [&](const AnnotationRecord& a) {
    auto it = by_id.find(a.worker_id);
    if (it == by_id.end()) return true;
    if (!comments.empty() && !comments.contains(a.comment_id)) return true;
    const WorkerProfile& w = *it->second;
    return !(w.passed_attention_check && w.completed_survey && w.completed_hit);
  });
  out.funnel.push_back(count_records("worker_checks", stage));

  // (2) only annotations that carry a stigma label
  std::vector<LabeledAnnotation> labeled;
  for (const auto& a : stage) {
    if (a.q_sub && a.q_stigma) {
      labeled.push_back({a.worker_id, a.comment_id, *a.q_stigma ? 1 : 0});
    }
  }
  out.funnel.push_back(count_labels("stigma_answered", labeled));

  // (3) per-comment cap, first come first kept
  {
    std::unordered_map<std::string, std::size_t> per_comment;
    std::erase_if(labeled, [&](const LabeledAnnotation& a) {
      return ++per_comment[a.comment_id] > options.max_annotations_per_comment;
    });
  }
  out.funnel.push_back(count_labels("per_comment_cap", labeled));

  // (4) positive-rate filter on post-cap counts
  {
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> rate;  // pos, total
    for (const auto& a : labeled) {
      auto& [pos, total] = rate[a.worker_id];
      pos += a.label;
      ++total;
    }
    std::erase_if(labeled, [&](const LabeledAnnotation& a) {
      const auto [pos, total] = rate[a.worker_id];
      // Small slack so that e.g. 19/20 counts as reaching 0.95.
      return static_cast<double>(pos) >=
             options.max_positive_fraction * static_cast<double>(total) - 1e-9;
    });
  }
  out.funnel.push_back(count_labels("positive_rate", labeled));

  CleanDataset& ds = out.dataset;
  for (const auto& a : labeled) {
    ds.workers.emplace(a.worker_id, *by_id.at(a.worker_id));
    auto text = comments.find(a.comment_id);
    ds.comments.emplace(a.comment_id, text == comments.end() ? std::string() : text->second);
  }
  ds.annotations = std::move(labeled);
  return out;
}

std::vector<AnnotationRecord> to_records(const CleanDataset& dataset) {
  std::vector<AnnotationRecord> out;
  out.reserve(dataset.annotations.size());
  for (const auto& a : dataset.annotations) {
    out.push_back({a.worker_id, a.comment_id, true, a.label == 1});
  }
  return out;
}

std::vector<WorkerProfile> worker_list(const CleanDataset& dataset) {
  std::vector<WorkerProfile> out;
  for (const auto& [id, w] : dataset.workers) out.push_back(w);
  return out;
}

std::map<std::string, Split> split_train_test(const CleanDataset& dataset, double train_frac,
                                              std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ArgumentError("train_frac must lie in (0,1)");
  }
  std::set<std::string> ids;
  for (const auto& [id, text] : dataset.comments) ids.insert(id);
  for (const auto& a : dataset.annotations) ids.insert(a.comment_id);
  if (ids.empty()) throw ArgumentError("cannot split an empty dataset");

  std::vector<std::string> order(ids.begin(), ids.end());
  SplitMix64 rng(seed);
  shuffle(rng, order);
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(order.size()) + 1e-9));
  std::map<std::string, Split> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.emplace(order[i], i < n_train ? Split::kTrain : Split::kTest);
  }
  return out;
}

void write_funnel(std::ostream& out, std::span<const FunnelStage> funnel) {
  csv::Writer w(out);
  w.row({"stage", "workers", "comments", "annotations"});
  for (const auto& s : funnel) {
    w.field(std::string_view(s.stage)).field(s.workers).field(s.comments).field(s.annotations);
    w.end_row();
  }
}

void write_labels(std::ostream& out, std::span<const LabeledAnnotation> labels) {
  csv::Writer w(out);
  w.row({"worker_id", "comment_id", "stigma_label"});
  for (const auto& a : labels) {
    w.field(std::string_view(a.worker_id)).field(std::string_view(a.comment_id)).field(a.label);
    w.end_row();
  }
}

std::vector<LabeledAnnotation> read_labels(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  const auto wc = t.require_column("worker_id");
  const auto cc = t.require_column("comment_id");
  const auto lc = t.require_column("stigma_label");
  std::vector<LabeledAnnotation> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size() || (row[lc] != "0" && row[lc] != "1")) {
      throw FormatError(path.string() + ":" + std::to_string(t.line_numbers[r]) +
                        ": malformed label row");
    }
    out.push_back({row[wc], row[cc], row[lc] == "1" ? 1 : 0});
  }
  return out;
}

void write_split(std::ostream& out, const std::map<std::string, Split>& split) {
  csv::Writer w(out);
  w.row({"comment_id", "split"});
  for (const auto& [id, side] : split) {
    w.field(std::string_view(id)).field(split_name(side));
    w.end_row();
  }
}

std::map<std::string, Split> read_split(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  const auto ic = t.require_column("comment_id");
  const auto sc = t.require_column("split");
  std::map<std::string, Split> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size() || (row[sc] != "train" && row[sc] != "test")) {
      throw FormatError(path.string() + ":" + std::to_string(t.line_numbers[r]) +
                        ": malformed split row");
    }
    out[row[ic]] = row[sc] == "train" ? Split::kTrain : Split::kTest;
  }
  return out;
}

}  // namespace stigma::annotstore
