#include "stigma/annotstore/agreement.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "stigma/common/csv.hpp"
#include "stigma/common/error.hpp"

namespace stigma::annotstore {

namespace {

std::pair<double, double> mean_var(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, ss / static_cast<double>(x.size() - 1)};
}

}  // namespace

WelchResult welch_t_test(std::span<const double> group_1, std::span<const double> group_0) {
  if (group_1.size() < 2 || group_0.size() < 2) {
    throw ArgumentError("degenerate group: each group needs at least 2 observations");
  }
  WelchResult r;
  r.n_1 = group_1.size();
  r.n_0 = group_0.size();
  const auto [m1, v1] = mean_var(group_1);
  const auto [m0, v0] = mean_var(group_0);
  r.mean_1 = m1;
  r.mean_0 = m0;
  const double a = v1 / static_cast<double>(r.n_1);
  const double b = v0 / static_cast<double>(r.n_0);
  const double se2 = a + b;
  if (se2 <= 0.0) {
    r.df = static_cast<double>(r.n_1 + r.n_0 - 2);
    if (m1 == m0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = m1 > m0 ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = (m1 - m0) / std::sqrt(se2);
  r.df = se2 * se2 /
         (a * a / static_cast<double>(r.n_1 - 1) + b * b / static_cast<double>(r.n_0 - 1));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.p = std::min(1.0, r.p);
  return r;
}

GroupRateTest group_rate_ttest(const CleanDataset& dataset, Attribute attribute) {
  std::vector<double> g1, g0;
  for (const auto& a : dataset.annotations) {
    auto it = dataset.workers.find(a.worker_id);
    if (it == dataset.workers.end()) {
      throw ConsistencyError("annotation names unknown worker '" + a.worker_id + "'");
    }
    (attribute_value(it->second, attribute) ? g1 : g0).push_back(a.label);
  }
  GroupRateTest out;
  out.attribute = attribute;
  out.test = welch_t_test(g1, g0);
  out.rate_1 = out.test.mean_1;
  out.rate_0 = out.test.mean_0;
  return out;
}

AlphaResult krippendorff_alpha(std::span<const Rating> ratings) {
  std::map<std::string_view, std::vector<int>> units;
  for (const auto& r : ratings) units[r.unit].push_back(r.value);

  std::map<int, std::size_t> value_index;
  for (const auto& [u, vals] : units) {
    if (vals.size() < 2) continue;
    for (int v : vals) value_index.emplace(v, 0);
  }
  if (value_index.empty()) throw NumericError("no overlap: no unit has two ratings");
  std::size_t k = 0;
  for (auto& [v, idx] : value_index) idx = k++;

  // Coincidence matrix o[c][k] = sum_u (pairs c-k within u) / (m_u - 1).
  std::vector<std::vector<double>> o(k, std::vector<double>(k, 0.0));
  AlphaResult out;
  for (const auto& [u, vals] : units) {
    const std::size_t m = vals.size();
    if (m < 2) continue;
    ++out.units;
    out.pairable_values += m;
    std::vector<double> counts(k, 0.0);
    for (int v : vals) counts[value_index[v]] += 1.0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t d = 0; d < k; ++d) {
        const double pairs = c == d ? counts[c] * (counts[c] - 1.0) : counts[c] * counts[d];
        o[c][d] += pairs / static_cast<double>(m - 1);
      }
    }
  }
  std::vector<double> marg(k, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) marg[c] += o[c][d];
    n += marg[c];
  }
  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) {
      if (c == d) continue;
      observed += o[c][d];
      expected += marg[c] * marg[d];
    }
  }
  if (expected <= 0.0) throw NumericError("no variation: all pairable values identical");
  out.alpha = 1.0 - (n - 1.0) * observed / expected;
  return out;
}

AlphaResult krippendorff_alpha(const CleanDataset& dataset,
                               std::optional<std::pair<Attribute, int>> subgroup) {
  std::vector<Rating> ratings;
  for (const auto& a : dataset.annotations) {
    if (subgroup) {
      auto it = dataset.workers.find(a.worker_id);
      if (it == dataset.workers.end() ||
          attribute_value(it->second, subgroup->first) != subgroup->second) {
        continue;
      }
    }
    ratings.push_back({a.comment_id, a.worker_id, a.label});
  }
  return krippendorff_alpha(ratings);
}

std::vector<DemographicRow> demographic_summary(std::span<const WorkerProfile> workers) {
  const std::size_t n = workers.size();
  auto continuous = [&](std::string name, auto get) {
    DemographicRow r;
    r.measure = std::move(name);
    r.n = n;
    if (n == 0) return r;
    double mean = 0.0;
    for (const auto& w : workers) mean += get(w);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& w : workers) ss += (get(w) - mean) * (get(w) - mean);
    r.mean = mean;
    r.sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    return r;
  };
  auto binary = [&](std::string name, auto get) {
    DemographicRow r;
    r.measure = std::move(name);
    r.n = n;
    std::size_t c = 0;
    for (const auto& w : workers) c += get(w) ? 1 : 0;
    r.count = c;
    if (n > 0) r.percent = 100.0 * static_cast<double>(c) / static_cast<double>(n);
    return r;
  };
  return {
      continuous("age", [](const WorkerProfile& w) { return static_cast<double>(w.age); }),
      binary("gender_female", [](const WorkerProfile& w) { return w.gender_female == 1; }),
      binary("race_african_american",
             [](const WorkerProfile& w) { return w.race_african_american == 1; }),
      binary("knows_treated_person",
             [](const WorkerProfile& w) { return w.knows_treated_person == 1; }),
      binary("substance_user", [](const WorkerProfile& w) { return w.substance_user(); }),
      continuous("substance_use_days",
                 [](const WorkerProfile& w) { return static_cast<double>(w.substance_use_days); }),
  };
}

void write_demographics(std::ostream& out, std::span<const DemographicRow> rows) {
  csv::Writer w(out);
  w.row({"measure", "n", "count", "percent", "mean", "sd"});
  auto opt = [&](const auto& v) {
    if (v) {
      w.field(*v);
    } else {
      w.field(std::string_view());
    }
  };
  for (const auto& r : rows) {
    w.field(std::string_view(r.measure)).field(r.n);
    opt(r.count);
    opt(r.percent);
    opt(r.mean);
    opt(r.sd);
    w.end_row();
  }
}

}  // namespace stigma::annotstore
