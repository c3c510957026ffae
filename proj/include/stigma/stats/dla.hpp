#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stigma/featurize/features.hpp"

namespace stigma::stats {

struct LabeledSet {
  std::vector<std::string> ids;
  std::vector<int> labels;
};

struct AgreeDisagree {
  LabeledSet agree;     // label_A == label_B, labeled by the shared value
  LabeledSet disagree;  // label_A == 1, labeled by label_B
};

/// Both maps must cover the same comment ids (ArgumentError otherwise).
/// Output follows id order.
AgreeDisagree agree_disagree_labels(const std::map<std::string, int>& labels_a,
                                    const std::map<std::string, int>& labels_b);

inline constexpr double kSeparationCap = 20.0;

struct UnivariateFit {
  double intercept = 0.0;
  double beta = 0.0;
  double se = 0.0;
  double p = 1.0;  // two-sided Wald
  bool separation = false;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Intercept + slope logistic regression by Newton iteration (gradient
/// norm of the mean log-likelihood below 1e-10, at most 100 iterations).
/// Complete or quasi-complete separation, or a slope that diverges past
/// the cap, sets `separation`, caps beta at +/-20 and reports p = 0. A
/// constant column gives beta = 0, p = 1. Throws ArgumentError for
/// mismatched lengths, non-binary or single-class labels.
UnivariateFit univariate_logreg(std::span<const double> x, std::span<const int> labels);

/// Benjamini-Hochberg step-up flags at level q.
std::vector<bool> bh_fdr(std::span<const double> p_values, double q = 0.05);

struct CohensD {
  double d = 0.0;
  bool ok = false;  // false when the pooled SD is zero
};

// (mean_1 - mean_0) / pooled SD. Throws ArgumentError when a group has
// fewer than 2 points.
CohensD cohens_d(std::span<const double> x, std::span<const int> labels);

struct DlaResult {
  std::string feature;
  double beta = 0.0;
  double p_raw = 1.0;
  bool significant = false;
  double cohens_d = 0.0;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  bool separation_flag = false;
  std::optional<std::string> error;  // per-feature failure; row kept, never significant
};

/// One univariate regression and effect size per feature over the rows
/// `ids` (labels aligned), BH-FDR across the family, sorted by |d|
/// descending (ties by feature name). The matrix must be standardized.
std::vector<DlaResult> dla(const featurize::FeatureMatrix& matrix, std::span<const std::string> ids,
                           std::span<const int> labels, double q = 0.05, std::size_t threads = 1);

// CSV: feature,beta,p_raw,significant,cohens_d,n0,n1
void write_dla(std::ostream& out, std::span<const DlaResult> results);

}  // namespace stigma::stats
