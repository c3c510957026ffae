#include <doctest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"
#include "stigma/jury/jury.hpp"
#include "oracles.hpp"

using namespace stigma;
using namespace stigma::jury;
using annotstore::WorkerProfile;

namespace {

// n workers, the first `users` with substance use.
std::vector<WorkerProfile> pool(std::size_t n, std::size_t users) {
  std::vector<WorkerProfile> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].worker_id = "w" + std::to_string(i);
    out[i].age = 30;
    out[i].substance_use_days = i < users ? 3 : 0;
    out[i].gender_female = static_cast<int>(i % 2);
  }
  return out;
}

std::vector<std::uint8_t> ones(std::size_t n, std::size_t count) {
  std::vector<std::uint8_t> v(n, 0);
  std::fill_n(v.begin(), count, 1);
  return v;
}

}  // namespace

TEST_CASE("config validation") {
  JuryConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.verdict_thresholds.size() == 11);
  CHECK_THROWS_AS(c.validate_k(13), ArgumentError);
  auto bad = c;
  bad.majority_threshold = 6;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = c;
  bad.verdict_thresholds = {0.4};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  const auto strata = partition(pool(40, 20), Attribute::kSubstanceUser);
  CHECK_THROWS_AS(sample_jury(strata, c, 13, "c", 0), ArgumentError);
}

TEST_CASE("required_count") {
  CHECK(required_count(0.5, 10000) == 5000);
  CHECK(required_count(0.9, 10000) == 9000);
  CHECK(required_count(0.55, 10000) == 5500);
  CHECK(required_count(1.0, 10000) == 10000);
  CHECK(required_count(0.7, 3) == 3);
}

TEST_CASE("sampled juries satisfy the composition exactly") {
  const auto workers = pool(40, 15);
  const auto strata = partition(workers, Attribute::kSubstanceUser);
  JuryConfig c;
  c.master_seed = 77;
  for (std::size_t k : {0, 3, 7, 12}) {
    for (std::uint64_t j = 0; j < 10000; ++j) {
      const auto jury = sample_jury(strata, c, k, "comment_" + std::to_string(j % 13), j);
      REQUIRE(jury.size() == 12);
      std::set<std::size_t> distinct(jury.begin(), jury.end());
      CHECK(distinct.size() == 12);
      std::size_t pos = 0;
      for (auto w : jury) pos += workers[w].substance_user() ? 1 : 0;
      CHECK(pos == k);
    }
  }
}

TEST_CASE("forced stratum selection") {
  const auto workers = pool(30, 5);
  const auto strata = partition(workers, Attribute::kSubstanceUser);
  JuryConfig c;
  for (std::uint64_t j = 0; j < 200; ++j) {
    auto jury = sample_jury(strata, c, 5, "x", j);
    std::sort(jury.begin(), jury.begin() + 5);
    CHECK(std::vector<std::size_t>(jury.begin(), jury.begin() + 5) ==
          std::vector<std::size_t>{0, 1, 2, 3, 4});
  }
  CHECK_THROWS_WITH_AS(sample_jury(strata, c, 6, "x", 0),
                       doctest::Contains("short by 1"), ArgumentError);
}

TEST_CASE("sampling depends only on seed, comment and index") {
  const auto strata = partition(pool(50, 25), Attribute::kSubstanceUser);
  JuryConfig c;
  c.master_seed = 5;
  const auto a = sample_jury(strata, c, 6, "abc", 42);
  sample_jury(strata, c, 6, "other", 1);
  CHECK(sample_jury(strata, c, 6, "abc", 42) == a);
  c.master_seed = 6;
  CHECK(sample_jury(strata, c, 6, "abc", 42) != a);
}

TEST_CASE("jury_vote examples") {
  std::vector<std::size_t> jurors(12);
  std::iota(jurors.begin(), jurors.end(), 0);
  const std::vector<double> p7 = {0.9, 0.8, 0.7, 0.6, 0.51, 0.99, 0.6, 0.5, 0.4, 0.1, 0.2, 0.3};
  CHECK(jury_vote(juror_votes(p7), jurors, 7) == 1);
  CHECK(jury_vote(ones(12, 6), jurors, 7) == 0);
  CHECK(jury_vote(ones(12, 12), jurors, 7) == 1);
  CHECK(juror_votes(std::vector<double>{0.5})[0] == 0);
}

TEST_CASE("verdict with uniform models") {
  const auto strata = partition(pool(30, 15), Attribute::kSubstanceUser);
  JuryConfig c;
  c.n_juries = 500;
  const auto high = juror_votes(std::vector<double>(30, 0.9));
  auto v = verdict(high, "c", strata, 6, c);
  CHECK(v.positive_fraction == 1.0);
  CHECK(v.labels == std::vector<int>(11, 1));
  const auto low = juror_votes(std::vector<double>(30, 0.1));
  CHECK(verdict(low, "c", strata, 6, c).positive_fraction == 0.0);
}

TEST_CASE("verdict agrees with exhaustive enumeration on small pools") {
  SplitMix64 rng(31);
  JuryConfig c;
  c.master_seed = 9;
  for (std::size_t n : {12, 13, 14}) {
    const auto workers = pool(n, n / 2);
    const auto strata = partition(workers, Attribute::kSubstanceUser);
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<std::uint8_t> votes(n);
      for (auto& v : votes) v = bernoulli(rng, 0.6) ? 1 : 0;
      for (std::size_t k = 0; k <= 12; ++k) {
        if (!feasible(strata, k, 12)) continue;
        const double exact =
            oracle::jury_fraction(votes, strata.positive, strata.negative, k, 12, 7);
        const auto v = verdict(votes, "c" + std::to_string(rep), strata, k, c);
        const double bound = 3.0 * std::sqrt(exact * (1.0 - exact) / 10000.0);
        CHECK(std::abs(v.positive_fraction - exact) <= bound + 1e-12);
      }
    }
  }
}

TEST_CASE("labels are monotone in the threshold") {
  SplitMix64 rng(32);
  const auto strata = partition(pool(40, 20), Attribute::kSubstanceUser);
  JuryConfig c;
  c.n_juries = 400;
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<std::uint8_t> votes(40);
    for (auto& v : votes) v = bernoulli(rng, uniform01(rng)) ? 1 : 0;
    const auto v = verdict(votes, "c" + std::to_string(rep), strata, rep % 13, c);
    for (std::size_t i = 1; i < v.labels.size(); ++i) CHECK(v.labels[i] <= v.labels[i - 1]);
    for (std::size_t i = 0; i < v.labels.size(); ++i) {
      CHECK(v.labels[i] == (v.positive_fraction >= c.verdict_thresholds[i] - 1e-12 ? 1 : 0));
    }
  }
}

TEST_CASE("sweep: thresholds, feasibility and thread independence") {
  SplitMix64 rng(33);
  const auto workers = pool(30, 10);
  const auto strata = partition(workers, Attribute::kSubstanceUser);
  JuryConfig c;
  c.n_juries = 300;
  VoteMatrix votes(25, std::vector<std::uint8_t>(30));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    ids.push_back("c" + std::to_string(i));
    for (std::size_t w = 0; w < 30; ++w) votes[i][w] = bernoulli(rng, w < 10 ? 0.8 : 0.4);
  }
  const auto rows = sweep_composition(votes, ids, strata, c, 1);
  CHECK(rows.size() == 13 * 11);
  CHECK(rows == sweep_composition(votes, ids, strata, c, 8));
  for (const auto& r : rows) CHECK(r.percent_stigmatizing.has_value() == (r.k <= 10));
  for (std::size_t k = 0; k <= 10; ++k) {
    const auto& lo = rows[k * 11];
    const auto& hi = rows[k * 11 + 10];
    CHECK(lo.threshold == 0.5);
    CHECK(hi.threshold == 1.0);
    CHECK(*hi.percent_stigmatizing <= *lo.percent_stigmatizing);
  }
  std::ostringstream out;
  write_sweep(out, rows);
  CHECK(out.str().rfind("attribute,k,threshold,percent_stigmatizing\n", 0) == 0);
  CHECK(out.str().find(",NA\n") != std::string::npos);
}

TEST_CASE("label_in_wild") {
  const auto workers = pool(30, 15);
  const auto strata = partition(workers, Attribute::kSubstanceUser);
  JuryConfig c;
  c.n_juries = 500;
  // Users all vote 1; non-users all vote 0; one comment everybody votes 1.
  VoteMatrix votes = {ones(30, 15), ones(30, 30), ones(30, 0)};
  const std::vector<std::string> ids = {"split", "all", "none"};
  const auto labels = label_in_wild(votes, ids, strata, c, 1);
  CHECK(labels[0].label_a == 1);
  CHECK(labels[0].label_b == 0);
  CHECK(labels[1].label_a == 1);
  CHECK(labels[1].label_b == 1);
  CHECK(labels[2].fraction_a == 0.0);

  SplitMix64 rng(34);
  VoteMatrix random(40, std::vector<std::uint8_t>(30));
  std::vector<std::string> rid;
  for (std::size_t i = 0; i < random.size(); ++i) {
    rid.push_back("r" + std::to_string(i));
    for (auto& v : random[i]) v = bernoulli(rng, 0.7) ? 1 : 0;
  }
  const auto one = label_in_wild(random, rid, strata, c, 1);
  const auto many = label_in_wild(random, rid, strata, c, 8);
  std::ostringstream a, b;
  write_wild_labels(a, one);
  write_wild_labels(b, many);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  const auto back = read_wild_labels(in);
  REQUIRE(back.size() == one.size());
  CHECK(back[3].label_a == one[3].label_a);
}
