#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>

namespace stigma::model {

struct MfcClassifier {
  int majority = 0;
  // Constant score: 1 when the majority class is positive, else 0.
  double score() const { return majority; }
};

// Ties go to the negative class.
MfcClassifier baseline_mfc(std::span<const int> train_labels);

struct LogregOptions {
  double l2_c = 1e6;  // penalty (1 / 2C) * |w|^2 on slopes, intercept free
  double tolerance = 1e-8;
  std::size_t max_iterations = 200;
};

struct LogisticModel {
  Eigen::VectorXd coef;
  double intercept = 0.0;
  bool converged = false;  // false is a warning; coefficients are still usable
  std::size_t iterations = 0;
  double gradient_norm = 0.0;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};

/// L2-penalized logistic regression by damped Newton steps. Minimizes the
/// mean log-loss plus |w|^2 / (2 C n); the tolerance applies to the
/// gradient norm of that mean objective.
LogisticModel baseline_logreg(const Eigen::Ref<const Eigen::MatrixXd>& X,
                              std::span<const int> labels, const LogregOptions& options = {});

}  // namespace stigma::model
