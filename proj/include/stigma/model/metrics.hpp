#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace stigma::model {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;        // positive class = stigma
  double macro_f1 = 0.0;  // mean of per-class F1
  double auc = 0.0;
  // False when labels hold a single class; f1 and auc are then 0.
  bool auc_defined = false;
  bool f1_defined = false;
  std::size_t n = 0;
};

/// Predicted positive iff score > threshold. AUC is the rank statistic
/// with tied scores counting one half. Throws ArgumentError on length
/// mismatch, empty input or non-binary labels.
ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels,
                                             double threshold = 0.5);

double auc_rank(std::span<const double> scores, std::span<const int> labels);

struct EvalRow {
  std::string model;
  ClassificationMetrics metrics;
};

// CSV columns: model,accuracy,f1,auc
void write_eval_report(std::ostream& out, std::span<const EvalRow> rows);

}  // namespace stigma::model
