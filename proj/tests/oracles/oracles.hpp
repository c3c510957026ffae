#pragma once

// Brute-force and direct-formula reference implementations used to check
// the library. Written independently of the library code paths.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stigma/annotstore/agreement.hpp"
#include "stigma/model/dcn.hpp"

namespace oracle {

// Fraction of positive x negative pairs ranked correctly, ties 1/2.
double auc_pairs(std::span<const double> scores, std::span<const int> labels);

// Kappa from the 2x2 contingency table.
double kappa_table(std::span<const int> a, std::span<const int> b);

struct Welch {
  double t = 0.0, df = 0.0, p = 1.0;
};
// p by adaptive Simpson integration of the Student t density.
Welch welch(std::span<const double> g1, std::span<const double> g0);

// Nominal alpha by enumerating every ordered pair of values within a unit.
double alpha_pairs(std::span<const stigma::annotstore::Rating> ratings);

double cohens_d(std::span<const double> x, std::span<const int> labels);

// Flags by checking every candidate cut rank.
std::vector<bool> bh(std::span<const double> p, double q);

struct Logit {
  double intercept = 0.0, beta = 0.0, se = 0.0, p = 1.0;
};
// Intercept + slope fit by IRLS with QR least-squares solves.
Logit logistic_irls(std::span<const double> x, std::span<const int> y);

// Minimizer of sum log-loss + |w|^2 / (2C), intercept unpenalized, by IRLS.
// Returns (intercept, w...).
Eigen::VectorXd ridge_logistic(const Eigen::MatrixXd& X, std::span<const int> y, double c);

// DCN logit with explicit loops.
double dcn_logit(const stigma::model::DcnConfig& config, const stigma::model::DcnParams& params,
                 const Eigen::VectorXd& x0);

// Exact fraction of juries (k from `positive`, jury_size - k from
// `negative`, all subsets) with at least `majority` positive votes.
double jury_fraction(std::span<const std::uint8_t> votes, std::span<const std::size_t> positive,
                     std::span<const std::size_t> negative, std::size_t k, std::size_t jury_size,
                     std::size_t majority);

}  // namespace oracle
