#include "stigma/model/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "stigma/common/csv.hpp"
#include "stigma/common/error.hpp"

namespace stigma::model {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
  if (scores.empty()) throw ArgumentError("no scores to evaluate");
  for (int y : labels) {
    if (y != 0 && y != 1) throw ArgumentError("labels must be 0 or 1");
  }
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double auc_rank(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    // Ranks i+1..j share their average.
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        rank_sum += avg;
        ++n1;
      }
    }
    i = j;
  }
  const std::size_t n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw ArgumentError("AUC needs both classes");
  const double d1 = static_cast<double>(n1);
  return (rank_sum - d1 * (d1 + 1.0) / 2.0) / (d1 * static_cast<double>(n0));
}

ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  ClassificationMetrics m;
  m.n = scores.size();
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > threshold;
    if (pred) {
      (labels[i] == 1 ? tp : fp) += 1;
    } else {
      (labels[i] == 1 ? fn : tn) += 1;
    }
  }
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.n);
  const bool both = tp + fn > 0 && tn + fp > 0;
  m.f1_defined = both;
  m.auc_defined = both;
  if (both) {
    m.f1 = f1_score(tp, fp, fn);
    m.macro_f1 = 0.5 * (m.f1 + f1_score(tn, fn, fp));
    m.auc = auc_rank(scores, labels);
  }
  return m;
}

void write_eval_report(std::ostream& out, std::span<const EvalRow> rows) {
  csv::Writer w(out);
  w.row({"model", "accuracy", "f1", "auc"});
  for (const auto& r : rows) {
    w.field(std::string_view(r.model)).field(r.metrics.accuracy);
    if (r.metrics.f1_defined) {
      w.field(r.metrics.f1);
    } else {
      w.field(std::string_view("NA"));
    }
    if (r.metrics.auc_defined) {
      w.field(r.metrics.auc);
    } else {
      w.field(std::string_view("NA"));
    }
    w.end_row();
  }
}

}  // namespace stigma::model
