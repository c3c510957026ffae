#include "stigma/stats/dla.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "stigma/common/csv.hpp"
#include "stigma/common/error.hpp"
#include "stigma/common/parallel.hpp"

namespace stigma::stats {

AgreeDisagree agree_disagree_labels(const std::map<std::string, int>& labels_a,
                                    const std::map<std::string, int>& labels_b) {
  if (labels_a.size() != labels_b.size()) {
    throw ArgumentError("label sets differ in size");
  }
  AgreeDisagree out;
  for (const auto& [id, a] : labels_a) {
    auto it = labels_b.find(id);
    if (it == labels_b.end()) throw ArgumentError("comment '" + id + "' missing from labels_B");
    const int b = it->second;
    if ((a != 0 && a != 1) || (b != 0 && b != 1)) {
      throw ArgumentError("comment '" + id + "': labels must be 0 or 1");
    }
    if (a == b) {
      out.agree.ids.push_back(id);
      out.agree.labels.push_back(a);
    }
    if (a == 1) {
      out.disagree.ids.push_back(id);
      out.disagree.labels.push_back(b);
    }
  }
  return out;
}

namespace {

constexpr double kGradTol = 1e-10;
constexpr std::size_t kMaxIter = 100;
constexpr double kLocalGrad = 1e-6;

double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double neg_loglik(std::span<const double> x, std::span<const int> y, double a, double b) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = a + b * x[i];
    s += log1pexp(z) - y[i] * z;
  }
  return s;
}

UnivariateFit fit_oriented(std::span<const double> x, std::span<const int> y) {
  const std::size_t n = x.size();
  const double dn = static_cast<double>(n);
  UnivariateFit f;
  std::size_t n1 = 0;
  double min0 = INFINITY, max0 = -INFINITY, min1 = INFINITY, max1 = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] == 1) {
      ++n1;
      min1 = std::min(min1, x[i]);
      max1 = std::max(max1, x[i]);
    } else {
      min0 = std::min(min0, x[i]);
      max0 = std::max(max0, x[i]);
    }
  }
  const double ybar = static_cast<double>(n1) / dn;
  f.intercept = std::log(ybar / (1.0 - ybar));
  const double lo = std::min(min0, min1), hi = std::max(max0, max1);
  if (lo == hi) {
    f.converged = true;
    return f;
  }
  if (max0 <= min1 || max1 <= min0) {
    f.separation = true;
    f.beta = max0 <= min1 ? kSeparationCap : -kSeparationCap;
    f.p = 0.0;
    return f;
  }
  double a = f.intercept, b = 0.0;
  double obj = neg_loglik(x, y, a, b);
  double h00 = 0, h01 = 0, h11 = 0;
  for (std::size_t it = 0;; ++it) {
    double g0 = 0, g1 = 0;
    h00 = h01 = h11 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(a + b * x[i]);
      const double r = p - y[i];
      const double w = p * (1.0 - p);
      g0 += r;
      g1 += r * x[i];
      h00 += w;
      h01 += w * x[i];
      h11 += w * x[i] * x[i];
    }
    f.iterations = it;
    if (std::hypot(g0, g1) / dn < kGradTol) {
      f.converged = true;
      break;
    }
    if (it == kMaxIter || std::abs(b) > kSeparationCap) break;
    const double det = h00 * h11 - h01 * h01;
    if (!(det > 0.0)) break;
    double s0 = (h11 * g0 - h01 * g1) / det;
    double s1 = (h00 * g1 - h01 * g0) / det;
    double t = 1.0;
    double next = neg_loglik(x, y, a - s0, b - s1);
    // Near the optimum the objective change is below rounding; take the
    // plain Newton step there.
    const bool local = std::hypot(g0, g1) / dn < kLocalGrad;
    for (int k = 0; k < 60 && !local && !(next <= obj); ++k) {
      t *= 0.5;
      next = neg_loglik(x, y, a - t * s0, b - t * s1);
    }
    if (!local && !(next <= obj)) break;
    a -= t * s0;
    b -= t * s1;
    obj = next;
  }
  f.intercept = a;
  f.beta = b;
  if (std::abs(b) > kSeparationCap) {
    // Diverging slope: treat as separation.
    f.separation = true;
    f.beta = b >= 0 ? kSeparationCap : -kSeparationCap;
    f.p = 0.0;
    return f;
  }
  const double det = h00 * h11 - h01 * h01;
  f.se = std::sqrt(h00 / det);
  f.p = std::erfc(std::abs(b / f.se) / std::sqrt(2.0));
  return f;
}

void check_binary(std::span<const double> x, std::span<const int> labels) {
  if (x.size() != labels.size()) throw ArgumentError("feature column and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw ArgumentError("labels must be 0 or 1");
  }
}

}  // namespace

UnivariateFit univariate_logreg(std::span<const double> x, std::span<const int> labels) {
  check_binary(x, labels);
  std::size_t n1 = 0;
  for (int y : labels) n1 += static_cast<std::size_t>(y);
  if (n1 == 0 || n1 == labels.size()) throw ArgumentError("single-class labels");
  for (double v : x) {
    if (!std::isfinite(v)) throw ArgumentError("non-finite feature value");
  }
  // Fit with labels oriented so the first label is 0; flipping the labels
  // then negates intercept and slope exactly.
  if (labels[0] == 0) return fit_oriented(x, labels);
  std::vector<int> flipped(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) flipped[i] = 1 - labels[i];
  auto f = fit_oriented(x, flipped);
  f.intercept = -f.intercept;
  f.beta = -f.beta;
  return f;
}

std::vector<bool> bh_fdr(std::span<const double> p_values, double q) {
  const std::size_t m = p_values.size();
  std::vector<bool> flags(m, false);
  if (m == 0) return flags;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::size_t last = 0;  // largest passing rank, 1-based; 0 = none
  for (std::size_t i = 1; i <= m; ++i) {
    if (p_values[order[i - 1]] <= static_cast<double>(i) * q / static_cast<double>(m)) last = i;
  }
  for (std::size_t i = 0; i < last; ++i) flags[order[i]] = true;
  return flags;
}

CohensD cohens_d(std::span<const double> x, std::span<const int> labels) {
  check_binary(x, labels);
  double s[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    s[labels[i]] += x[i];
    ++n[labels[i]];
  }
  if (n[0] < 2 || n[1] < 2) throw ArgumentError("cohens_d needs at least 2 points per group");
  const double m0 = s[0] / static_cast<double>(n[0]);
  const double m1 = s[1] / static_cast<double>(n[1]);
  double ss[2] = {0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dev = x[i] - (labels[i] ? m1 : m0);
    ss[labels[i]] += dev * dev;
  }
  const double pooled =
      std::sqrt((ss[0] + ss[1]) / static_cast<double>(n[0] + n[1] - 2));
  CohensD out;
  if (pooled > 0.0) {
    out.d = (m1 - m0) / pooled;
    out.ok = true;
  }
  return out;
}

std::vector<DlaResult> dla(const featurize::FeatureMatrix& matrix, std::span<const std::string> ids,
                           std::span<const int> labels, double q, std::size_t threads) {
  if (!matrix.standardization) throw StateError("dla needs a standardized feature matrix");
  if (ids.size() != labels.size()) throw ArgumentError("ids and labels differ in length");
  std::vector<Eigen::Index> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(static_cast<Eigen::Index>(matrix.row_index(id)));
  std::size_t n1 = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ArgumentError("labels must be 0 or 1");
    n1 += static_cast<std::size_t>(y);
  }

  std::vector<DlaResult> results(matrix.cols());
  parallel_for(matrix.cols(), static_cast<unsigned>(threads), [&](std::size_t j) {
    DlaResult& r = results[j];
    r.feature = matrix.feature_names[j];
    r.n1 = n1;
    r.n0 = labels.size() - n1;
    std::vector<double> col(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      col[i] = matrix.values(rows[i], static_cast<Eigen::Index>(j));
    }
    try {
      const auto fit = univariate_logreg(col, labels);
      r.beta = fit.beta;
      r.p_raw = fit.p;
      r.separation_flag = fit.separation;
      const auto d = cohens_d(col, labels);
      if (!d.ok) throw NumericError("zero pooled standard deviation");
      r.cohens_d = d.d;
    } catch (const Error& e) {
      r.error = e.what();
      r.p_raw = 1.0;
    }
  });

  std::vector<double> p;
  p.reserve(results.size());
  for (const auto& r : results) p.push_back(r.p_raw);
  const auto flags = bh_fdr(p, q);
  for (std::size_t j = 0; j < results.size(); ++j) {
    results[j].significant = flags[j] && !results[j].error;
  }
  std::sort(results.begin(), results.end(), [](const DlaResult& a, const DlaResult& b) {
    if (a.error.has_value() != b.error.has_value()) return !a.error.has_value();
    const double da = std::abs(a.cohens_d), db = std::abs(b.cohens_d);
    if (da != db) return da > db;
    return a.feature < b.feature;
  });
  return results;
}

void write_dla(std::ostream& out, std::span<const DlaResult> results) {
  csv::Writer w(out);
  w.row({"feature", "beta", "p_raw", "significant", "cohens_d", "n0", "n1"});
  for (const auto& r : results) {
    w.field(std::string_view(r.feature));
    if (r.error) {
      w.field(std::string_view("NA")).field(std::string_view("NA")).field(0).field(
          std::string_view("NA"));
    } else {
      w.field(r.beta).field(r.p_raw).field(r.significant ? 1 : 0).field(r.cohens_d);
    }
    w.field(r.n0).field(r.n1);
    w.end_row();
  }
}

}  // namespace stigma::stats
