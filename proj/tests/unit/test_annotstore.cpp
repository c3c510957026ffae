#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stigma/annotstore/agreement.hpp"
#include "stigma/annotstore/dataset.hpp"
#include "stigma/annotstore/records.hpp"
#include "stigma/annotstore/synthetic.hpp"
#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"
#include "oracles.hpp"

using namespace stigma;
using namespace stigma::annotstore;

namespace {

const char* kHeader =
    "worker_id,age,gender_female,race_african_american,knows_treated_person,"
    "substance_use_days,passed_attention_check,completed_survey,completed_hit\n";

WorkerProfile worker(std::string id, bool attention = true) {
  WorkerProfile w;
  w.worker_id = std::move(id);
  w.age = 30;
  w.passed_attention_check = attention;
  return w;
}

// n stigma annotations of one worker on distinct comments, the first `pos` positive.
void add_labels(std::vector<AnnotationRecord>& out, const std::string& worker, std::size_t n,
                std::size_t pos, const std::string& prefix) {
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({worker, prefix + std::to_string(i), true, i < pos});
  }
}

std::vector<double> binary(std::size_t n, std::size_t ones) {
  std::vector<double> v(n, 0.0);
  std::fill_n(v.begin(), ones, 1.0);
  return v;
}

}  // namespace

TEST_CASE("read_workers accepts a well-formed file") {
  std::istringstream in(std::string(kHeader) +
                        "a,30,1,0,1,0,true,true,true\n"
                        "b,41,0,1,0,12,true,true,true\n"
                        "c,25,0,0,0,30,false,true,true\n");
  auto r = read_workers(in);
  CHECK(r.errors.empty());
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[1].substance_use_days == 12);
  CHECK(r.records[1].substance_user());
  CHECK_FALSE(r.records[2].passed_attention_check);
}

TEST_CASE("read_workers rejects invalid rows and keeps the rest") {
  std::istringstream in(std::string(kHeader) +
                        "a,30,1,0,1,0,true,true,true\n"
                        "b,41,0,1,0,45,true,true,true\n"
                        "c,25,0,2,0,3,true,true,true\n"
                        "a,33,0,0,0,0,true,true,true\n"
                        "d,29,0,0,0,0,true,true,true\n");
  auto r = read_workers(in);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].worker_id == "a");
  CHECK(r.records[1].worker_id == "d");
  REQUIRE(r.errors.size() == 3);
  CHECK(r.errors[0].line == 3);
  CHECK(r.errors[0].message.find("substance_use_days") != std::string::npos);
  CHECK(r.errors[1].line == 4);
  CHECK(r.errors[2].message.find("duplicate") != std::string::npos);
}

TEST_CASE("read_workers missing column is fatal") {
  std::istringstream in("worker_id,age\na,30\n");
  CHECK_THROWS_AS(read_workers(in), FormatError);
}

TEST_CASE("worker round trip on a synthetic pool") {
  SynthParams p;
  p.n_workers = 500;
  p.n_comments = 100;
  p.annotations_per_worker = 1;
  p.attention_fail_rate = 0.1;
  p.seed = 11;
  const auto pop = synthesize_population(p);
  std::stringstream buf;
  write_workers(buf, pop.workers);
  auto back = read_workers(buf);
  CHECK(back.errors.empty());
  CHECK(back.records == pop.workers);
}

TEST_CASE("annotations: q_stigma present iff q_sub") {
  std::istringstream in(
      "worker_id,comment_id,q_sub,q_stigma\n"
      "a,c1,yes,no\n"
      "a,c2,no,\n"
      "a,c3,yes,\n"
      "a,c4,no,yes\n");
  auto r = read_annotations(in);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].q_stigma == false);
  CHECK_FALSE(r.records[1].q_stigma.has_value());
  CHECK(r.errors.size() == 2);

  std::stringstream buf;
  write_annotations(buf, r.records);
  CHECK(read_annotations(buf).records == r.records);
}

TEST_CASE("quality_filter: attention-check failure removes all annotations") {
  std::vector<WorkerProfile> ws = {worker("bad", false), worker("ok")};
  std::vector<AnnotationRecord> as;
  add_labels(as, "bad", 20, 10, "x");
  add_labels(as, "ok", 20, 10, "y");
  auto r = quality_filter(ws, as);
  REQUIRE(r.funnel.size() == 5);
  CHECK(r.funnel[0].annotations == 40);
  CHECK(r.funnel[1].annotations == 20);
  CHECK(r.funnel[1].workers == 1);
  CHECK(r.dataset.workers.count("bad") == 0);
  CHECK(r.dataset.annotations.size() == 20);
}

TEST_CASE("quality_filter: positive-share threshold") {
  std::vector<WorkerProfile> ws = {worker("w19"), worker("w18")};
  std::vector<AnnotationRecord> as;
  add_labels(as, "w19", 20, 19, "a");
  add_labels(as, "w18", 20, 18, "b");
  auto r = quality_filter(ws, as);
  CHECK(r.dataset.workers.count("w19") == 0);
  CHECK(r.dataset.workers.count("w18") == 1);
  CHECK(r.funnel[3].annotations == 40);
  CHECK(r.funnel[4].annotations == 20);
}

TEST_CASE("quality_filter: q_sub=no and the per-comment cap") {
  std::vector<WorkerProfile> ws;
  std::vector<AnnotationRecord> as;
  for (int i = 0; i < 5; ++i) {
    ws.push_back(worker("w" + std::to_string(i)));
    as.push_back({"w" + std::to_string(i), "c", true, i % 2 == 0});
    as.push_back({"w" + std::to_string(i), "d" + std::to_string(i), true, false});
  }
  as.push_back({"w0", "e", false, std::nullopt});
  auto r = quality_filter(ws, as);
  CHECK(r.funnel[2].annotations == 10);
  std::vector<std::string> on_c;
  for (const auto& a : r.dataset.annotations) {
    if (a.comment_id == "c") on_c.push_back(a.worker_id);
  }
  CHECK(on_c == std::vector<std::string>{"w0", "w1", "w2"});
}

TEST_CASE("quality_filter funnel is monotone and idempotent") {
  SynthParams p;
  p.n_workers = 150;
  p.n_comments = 600;
  p.annotations_per_worker = 20;
  p.attention_fail_rate = 0.1;
  p.q_sub_no_rate = 0.2;
  p.always_positive_rate = 0.05;
  for (std::uint64_t seed : {1, 2, 3}) {
    p.seed = seed;
    const auto pop = synthesize_population(p);
    auto r = quality_filter(pop.workers, pop.annotations);
    for (std::size_t i = 1; i < r.funnel.size(); ++i) {
      CHECK(r.funnel[i].workers <= r.funnel[i - 1].workers);
      CHECK(r.funnel[i].comments <= r.funnel[i - 1].comments);
      CHECK(r.funnel[i].annotations <= r.funnel[i - 1].annotations);
    }
    std::map<std::string, std::size_t> per_comment;
    for (const auto& a : r.dataset.annotations) ++per_comment[a.comment_id];
    for (const auto& [id, n] : per_comment) CHECK(n <= 3);

    const auto records = to_records(r.dataset);
    const auto workers = worker_list(r.dataset);
    auto again = quality_filter(workers, records);
    CHECK(again.dataset.annotations == r.dataset.annotations);
    CHECK(again.dataset.workers == r.dataset.workers);
  }
}

TEST_CASE("split_train_test partitions comments") {
  CleanDataset ds;
  ds.workers.emplace("w", worker("w"));
  for (int i = 0; i < 100; ++i) {
    const auto id = "c" + std::to_string(i);
    ds.comments.emplace(id, "");
    ds.annotations.push_back({"w", id, i % 2});
  }
  auto s = split_train_test(ds, 0.8, 5);
  REQUIRE(s.size() == 100);
  CHECK(std::count_if(s.begin(), s.end(), [](auto& kv) { return kv.second == Split::kTrain; }) ==
        80);
  for (const auto& [id, _] : ds.comments) CHECK(s.count(id) == 1);
  CHECK(split_train_test(ds, 0.8, 5) == s);
  CHECK(split_train_test(ds, 0.8, 6) != s);
  CHECK_THROWS_AS(split_train_test(ds, 1.0, 5), ArgumentError);
  CHECK_THROWS_AS(split_train_test(ds, 0.0, 5), ArgumentError);
  CHECK_THROWS_AS(split_train_test(CleanDataset{}, 0.8, 5), ArgumentError);

  ds.split = s;
  const auto train = ds.annotations_in(Split::kTrain);
  const auto test = ds.annotations_in(Split::kTest);
  CHECK(train.size() + test.size() == ds.annotations.size());
  for (const auto& a : test) CHECK(s.at(a.comment_id) == Split::kTest);
}

TEST_CASE("welch_t_test examples") {
  const auto g = binary(30, 15);
  auto same = welch_t_test(g, g);
  CHECK(same.t == 0.0);
  CHECK(same.p == doctest::Approx(1.0).epsilon(1e-12));

  const auto g1 = binary(30, 24), g0 = binary(30, 6);
  auto r = welch_t_test(g1, g0);
  auto o = oracle::welch(g1, g0);
  CHECK(std::abs(r.t - o.t) < 1e-10);
  CHECK(std::abs(r.df - o.df) < 1e-10);
  CHECK(std::abs(r.p - o.p) < 1e-10);
  CHECK(r.mean_1 == doctest::Approx(0.8));

  CHECK_THROWS_AS(welch_t_test(std::vector<double>{1.0}, g0), ArgumentError);
}

TEST_CASE("welch_t_test agrees with the integration oracle") {
  SplitMix64 rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> a(5 + uniform_index(rng, 40)), b(5 + uniform_index(rng, 40));
    const double shift = uniform01(rng);
    for (auto& v : a) v = standard_normal(rng) + shift;
    for (auto& v : b) v = 2.0 * standard_normal(rng);
    auto r = welch_t_test(a, b);
    auto o = oracle::welch(a, b);
    CHECK(r.t == doctest::Approx(o.t).epsilon(1e-12));
    CHECK(std::abs(r.p - o.p) < 1e-10);
  }
}

TEST_CASE("group_rate_ttest over the dataset") {
  CleanDataset ds;
  auto w1 = worker("u");
  w1.substance_use_days = 5;
  ds.workers.emplace("u", w1);
  ds.workers.emplace("n", worker("n"));
  for (int i = 0; i < 10; ++i) {
    const auto id = "c" + std::to_string(i);
    ds.annotations.push_back({"u", id, i < 8 ? 1 : 0});
    ds.annotations.push_back({"n", id, i < 3 ? 1 : 0});
  }
  auto r = group_rate_ttest(ds, Attribute::kSubstanceUser);
  CHECK(r.rate_1 == doctest::Approx(0.8));
  CHECK(r.rate_0 == doctest::Approx(0.3));
  CHECK(r.test.t > 0.0);
  CHECK_THROWS_AS(group_rate_ttest(ds, Attribute::kGenderFemale), ArgumentError);
}

TEST_CASE("krippendorff_alpha examples") {
  std::vector<Rating> agree = {{"c1", "a", 1}, {"c1", "b", 1}, {"c2", "a", 0}, {"c2", "b", 0}};
  CHECK(krippendorff_alpha(agree).alpha == doctest::Approx(1.0));

  // 4 comments x 2 raters: coincidences o00=2, o01=o10=2, o11=2;
  // n=8, n0=n1=4; alpha = 1 - (n-1)(o01+o10)/(2 n0 n1) = 1/8.
  std::vector<Rating> toy = {{"1", "a", 0}, {"1", "b", 0}, {"2", "a", 0}, {"2", "b", 1},
                             {"3", "a", 1}, {"3", "b", 1}, {"4", "a", 1}, {"4", "b", 0}};
  const double expected = 1.0 - 7.0 * 4.0 / (2.0 * 4.0 * 4.0);
  CHECK(std::abs(krippendorff_alpha(toy).alpha - expected) < 1e-10);
  CHECK(std::abs(oracle::alpha_pairs(toy) - expected) < 1e-10);

  CHECK_THROWS_AS(krippendorff_alpha(std::vector<Rating>{{"1", "a", 0}, {"2", "a", 1}}),
                  NumericError);
  CHECK_THROWS_AS(krippendorff_alpha(std::vector<Rating>{{"1", "a", 0}, {"1", "b", 0}}),
                  NumericError);
}

TEST_CASE("krippendorff_alpha matches the pair oracle and is relabel invariant") {
  SplitMix64 rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Rating> rs;
    const std::size_t units = 3 + uniform_index(rng, 20), raters = 2 + uniform_index(rng, 5);
    for (std::size_t u = 0; u < units; ++u) {
      for (std::size_t r = 0; r < raters; ++r) {
        if (bernoulli(rng, 0.3)) continue;
        rs.push_back({"u" + std::to_string(u), "r" + std::to_string(r),
                      static_cast<int>(uniform_index(rng, 2))});
      }
    }
    double alpha = 0.0;
    try {
      alpha = krippendorff_alpha(rs).alpha;
    } catch (const NumericError&) {
      continue;
    }
    CHECK(std::abs(alpha - oracle::alpha_pairs(rs)) < 1e-10);

    auto relabeled = rs;
    for (auto& r : relabeled) r.rater = "x" + r.rater + "y";
    shuffle(rng, relabeled);
    CHECK(std::abs(krippendorff_alpha(relabeled).alpha - alpha) < 1e-12);
  }
}

TEST_CASE("demographic summary") {
  std::vector<WorkerProfile> ws = {worker("a"), worker("b")};
  ws[0].gender_female = 1;
  ws[0].age = 20;
  ws[1].age = 40;
  const auto rows = demographic_summary(ws);
  bool saw_female = false, saw_age = false;
  for (const auto& r : rows) {
    if (r.measure == "gender_female") {
      saw_female = true;
      CHECK(r.count == 1u);
      CHECK(*r.percent == doctest::Approx(50.0));
    }
    if (r.measure == "age") {
      saw_age = true;
      CHECK(*r.mean == doctest::Approx(30.0));
    }
  }
  CHECK(saw_female);
  CHECK(saw_age);
}

TEST_CASE("synthesize_population: symmetric rate with no effects") {
  SynthParams p;
  p.n_workers = 500;
  p.n_comments = 5000;
  p.annotations_per_worker = 24;
  p.seed = 3;
  const auto pop = synthesize_population(p);
  REQUIRE(pop.annotations.size() == 12000);
  double pos = 0;
  for (const auto& a : pop.annotations) pos += *a.q_stigma ? 1 : 0;
  const double n = static_cast<double>(pop.annotations.size());
  CHECK(std::abs(pos / n - 0.5) < 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("synthesize_population: planted effect and determinism") {
  SynthParams p;
  p.n_workers = 1000;
  p.n_comments = 6000;
  p.annotations_per_worker = 24;
  p.effects[Attribute::kSubstanceUser] = 1.5;
  p.seed = 4;
  const auto pop = synthesize_population(p);
  std::map<std::string, const WorkerProfile*> by_id;
  for (const auto& w : pop.workers) by_id[w.worker_id] = &w;
  double pos[2] = {0, 0}, n[2] = {0, 0};
  for (const auto& a : pop.annotations) {
    const int g = by_id.at(a.worker_id)->substance_user() ? 1 : 0;
    n[g] += 1;
    pos[g] += *a.q_stigma ? 1 : 0;
  }
  CHECK(n[0] >= 10000);
  CHECK(n[1] >= 10000);
  CHECK(pos[1] / n[1] - pos[0] / n[0] > 0.2);

  const auto again = synthesize_population(p);
  CHECK(again.workers == pop.workers);
  CHECK(again.annotations == pop.annotations);
  CHECK(population_manifest(again) == population_manifest(pop));
  p.seed = 5;
  CHECK(synthesize_population(p).annotations != pop.annotations);
}

TEST_CASE("synthesize_population: annotations per worker are distinct comments") {
  SynthParams p;
  p.n_workers = 50;
  p.n_comments = 200;
  p.annotations_per_worker = 20;
  p.n_wild_comments = 30;
  p.seed = 8;
  const auto pop = synthesize_population(p);
  CHECK(pop.comments.size() == 230);
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& a : pop.annotations) CHECK(seen[a.worker_id].insert(a.comment_id).second);
  for (const auto& [w, cs] : seen) CHECK(cs.size() == 20);
  for (std::size_t i = 200; i < 230; ++i) CHECK(pop.comments[i].wild);
}
