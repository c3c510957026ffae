#include "stigma/model/baselines.hpp"

#include <Eigen/Cholesky>

#include <cmath>

#include "stigma/common/error.hpp"
#include "stigma/model/dcn.hpp"

namespace stigma::model {

MfcClassifier baseline_mfc(std::span<const int> train_labels) {
  if (train_labels.empty()) throw ArgumentError("baseline_mfc: no labels");
  std::size_t pos = 0;
  for (int y : train_labels) pos += y == 1 ? 1 : 0;
  return {2 * pos > train_labels.size() ? 1 : 0};
}

double LogisticModel::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return sigmoid(x.dot(coef) + intercept);
}

Eigen::VectorXd LogisticModel::predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  Eigen::VectorXd z = X * coef;
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i] + intercept);
  return z;
}

namespace {

// Mean log-loss plus penalty at beta = (intercept, coef...).
double objective(const Eigen::MatrixXd& Xa, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                 double lambda) {
  const Eigen::VectorXd z = Xa * beta;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    loss += bce_with_logit(z[i], static_cast<int>(y[i]));
  }
  return loss / static_cast<double>(z.size()) + 0.5 * lambda * beta.tail(beta.size() - 1).squaredNorm();
}

}  // namespace

LogisticModel baseline_logreg(const Eigen::Ref<const Eigen::MatrixXd>& X,
                              std::span<const int> labels, const LogregOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ArgumentError("baseline_logreg: feature rows and labels differ in length");
  }
  if (n == 0) throw ArgumentError("baseline_logreg: no rows");
  if (!(options.l2_c > 0.0)) throw ArgumentError("baseline_logreg: l2_c must be positive");
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int v = labels[static_cast<std::size_t>(i)];
    if (v != 0 && v != 1) throw ArgumentError("baseline_logreg: labels must be 0 or 1");
    y[i] = v;
  }
  Eigen::MatrixXd Xa(n, p + 1);
  Xa.col(0).setOnes();
  Xa.rightCols(p) = X;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double lambda = inv_n / options.l2_c;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  LogisticModel out;
  double f = objective(Xa, y, beta, lambda);
  for (std::size_t it = 0;; ++it) {
    const Eigen::VectorXd z = Xa * beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = sigmoid(z[i]);
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    Eigen::VectorXd grad = inv_n * (Xa.transpose() * (mu - y));
    grad.tail(p) += lambda * beta.tail(p);
    out.gradient_norm = grad.norm();
    out.iterations = it;
    if (out.gradient_norm < options.tolerance) {
      out.converged = true;
      break;
    }
    if (it == options.max_iterations) break;

    const Eigen::MatrixXd Xw = Xa.array().colwise() * (w.array() * inv_n).sqrt();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p + 1, p + 1);
    H.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
    H.diagonal().tail(p).array() += lambda;
    const Eigen::LDLT<Eigen::MatrixXd, Eigen::Lower> ldlt(H);
    Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite() || ldlt.info() != Eigen::Success) step = grad;

    double t = 1.0;
    Eigen::VectorXd next = beta - step;
    double f_next = objective(Xa, y, next, lambda);
    for (int halve = 0; halve < 50 && !(f_next <= f); ++halve) {
      t *= 0.5;
      next = beta - t * step;
      f_next = objective(Xa, y, next, lambda);
    }
    if (!(f_next <= f)) break;  // no descent possible at machine precision
    beta = std::move(next);
    f = f_next;
  }
  out.intercept = beta[0];
  out.coef = beta.tail(p);
  return out;
}

}  // namespace stigma::model
