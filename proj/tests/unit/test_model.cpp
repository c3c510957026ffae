#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stigma/annotstore/dataset.hpp"
#include "stigma/annotstore/synthetic.hpp"
#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"
#include "stigma/model/baselines.hpp"
#include "stigma/model/dcn.hpp"
#include "stigma/model/metrics.hpp"
#include "stigma/model/training_data.hpp"
#include "oracles.hpp"

using namespace stigma;
using namespace stigma::model;

namespace {

DcnConfig tiny_config(SplitMix64& rng) {
  DcnConfig c;
  c.content_dim = 1 + uniform_index(rng, 4);
  c.n_workers = 1 + uniform_index(rng, 4);
  c.use_group = bernoulli(rng, 0.7);
  c.use_person = bernoulli(rng, 0.7);
  c.cross_layers = 1 + uniform_index(rng, 3);
  c.deep_widths.clear();
  for (std::size_t k = 0, n = 1 + uniform_index(rng, 3); k < n; ++k) {
    c.deep_widths.push_back(1 + uniform_index(rng, 8));
  }
  return c;
}

std::vector<TrainExample> random_batch(const DcnConfig& c, SplitMix64& rng, std::size_t n) {
  std::vector<TrainExample> out(n);
  for (auto& e : out) {
    e.content = Eigen::VectorXd(static_cast<Eigen::Index>(c.content_dim));
    for (auto& v : e.content) v = standard_normal(rng);
    e.group = {standard_normal(rng), static_cast<double>(uniform_index(rng, 2)),
               static_cast<double>(uniform_index(rng, 2)),
               static_cast<double>(uniform_index(rng, 2)), standard_normal(rng)};
    e.worker_index = uniform_index(rng, c.n_workers);
    e.label = static_cast<int>(uniform_index(rng, 2));
  }
  return out;
}

DcnParams random_params(const DcnConfig& c, SplitMix64& rng, double scale) {
  auto p = DcnParams::zeros(c);
  for (auto& v : p.flat) v = scale * standard_normal(rng);
  return p;
}

struct SynthData {
  annotstore::CleanDataset dataset;
  featurize::EmbeddingTable table;
  annotstore::SyntheticPopulation pop;
};

SynthData synth_data(std::size_t workers, std::size_t comments, std::uint64_t seed) {
  annotstore::SynthParams p;
  p.n_workers = workers;
  p.n_comments = comments;
  p.annotations_per_worker = 20;
  p.effects[annotstore::Attribute::kSubstanceUser] = 1.5;
  p.seed = seed;
  SynthData d;
  d.pop = annotstore::synthesize_population(p);
  auto qc = annotstore::quality_filter(d.pop.workers, d.pop.annotations);
  d.dataset = std::move(qc.dataset);
  d.dataset.split = annotstore::split_train_test(d.dataset, 0.8, seed);
  std::vector<double> latents;
  for (const auto& c : d.pop.comments) latents.push_back(c.latent);
  const auto vecs = annotstore::synthesize_content_embeddings(latents, {8, 1.5, 0.5, seed});
  d.table.dim = 8;
  for (std::size_t i = 0; i < vecs.size(); ++i) d.table.vectors[d.pop.comments[i].id] = vecs[i];
  return d;
}

}  // namespace

TEST_CASE("build_input layout") {
  DcnConfig c;
  c.content_dim = 1;
  c.n_workers = 2;
  TrainExample e;
  e.content = Eigen::VectorXd::Ones(1);
  e.worker_index = 0;
  Eigen::VectorXd expected(8);
  expected << 1, 0, 0, 0, 0, 0, 1, 0;
  CHECK(build_input(c, e) == expected);

  e.worker_index = 1;
  const auto other = build_input(c, e);
  CHECK(other.head(6) == expected.head(6));
  CHECK(other.tail(2) == Eigen::Vector2d(0, 1));

  e.content = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(build_input(c, e), ArgumentError);

  SplitMix64 rng(4);
  for (int i = 0; i < 50; ++i) {
    auto cfg = tiny_config(rng);
    cfg.use_group = cfg.use_person = true;
    const auto b = random_batch(cfg, rng, 1);
    CHECK(static_cast<std::size_t>(build_input(cfg, b[0]).size()) ==
          cfg.content_dim + 5 + cfg.n_workers);
  }
}

TEST_CASE("forward with zero parameters") {
  SplitMix64 rng(5);
  DcnConfig c;
  c.content_dim = 4;
  c.n_workers = 3;
  c.deep_widths = {8, 8, 8};
  const auto p = DcnParams::zeros(c);
  for (const auto& e : random_batch(c, rng, 20)) {
    CHECK(forward_one(c, p, build_input(c, e)) == 0.0);
  }
  DcnModel m;
  m.config = c;
  m.params = p;
  m.workers = {{"a", {}}, {"b", {}}, {"c", {}}};
  m.reindex();
  CHECK(predict_annotation(m, Eigen::VectorXd::Ones(4), "b") == 0.5);
  CHECK_THROWS_WITH_AS(predict_annotation(m, Eigen::VectorXd::Ones(4), "zz"),
                       doctest::Contains("worker not in person embedding"), ArgumentError);
}

TEST_CASE("single cross layer example") {
  DcnConfig c;
  c.content_dim = 2;
  c.use_group = c.use_person = false;
  c.cross_layers = 1;
  c.deep_widths = {2};
  auto p = DcnParams::zeros(c);
  p.tensor(p.cross_W(0)) = Eigen::Matrix2d::Identity();
  // Identity deep layer; x1 is positive so ReLU passes it: logit = [1, 1] . x1.
  p.tensor(p.deep_W(1, 0)) = Eigen::Matrix2d::Identity();
  p.tensor(p.out_w()).setOnes();
  const double logit = forward_one(c, p, Eigen::Vector2d(1, 2));
  CHECK(logit == 2.0 + 6.0);

  // With W = 0 and b = 0 the cross stack is the identity.
  c.cross_layers = 3;
  auto q = DcnParams::zeros(c);
  q.tensor(q.deep_W(3, 0)) = Eigen::Matrix2d::Identity();
  q.tensor(q.out_w()) << 0.25, -1.0;
  CHECK(forward_one(c, q, Eigen::Vector2d(3, 4)) == 0.25 * 3 - 4);
}

TEST_CASE("forward matches the loop oracle and is deterministic") {
  SplitMix64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const auto c = tiny_config(rng);
    const auto p = random_params(c, rng, 0.5);
    const auto batch = random_batch(c, rng, 5);
    std::vector<const TrainExample*> ptrs;
    for (const auto& e : batch) ptrs.push_back(&e);
    const auto X = build_inputs(c, ptrs);
    const auto logits = forward(c, p, X);
    CHECK(logits == forward(c, p, X));
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double o = oracle::dcn_logit(c, p, X.col(j));
      CHECK(std::abs(logits(j) - o) <= 1e-12 * std::max(1.0, std::abs(o)));
    }
  }
}

TEST_CASE("bce examples") {
  CHECK(bce_with_logit(0.0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(bce_with_logit(0.0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(bce_with_logit(800.0, 0)));
  CHECK(bce_with_logit(800.0, 0) == doctest::Approx(800.0));
  CHECK(bce_with_logit(-800.0, 0) == 0.0);
}

TEST_CASE("zero model output-bias gradient") {
  SplitMix64 rng(7);
  DcnConfig c;
  c.content_dim = 3;
  c.n_workers = 2;
  c.deep_widths = {4};
  const auto p = DcnParams::zeros(c);
  const auto batch = random_batch(c, rng, 17);
  double mean_y = 0;
  for (const auto& e : batch) mean_y += e.label;
  mean_y /= 17.0;
  auto lg = loss_and_grad(c, p, batch);
  CHECK(lg.loss == doctest::Approx(std::log(2.0)));
  // dL/db = mean(sigmoid(0) - y).
  CHECK(lg.grad.tensor(lg.grad.out_b())(0, 0) == doctest::Approx(0.5 - mean_y).epsilon(1e-14));
}

TEST_CASE("analytic gradients match central differences") {
  SplitMix64 rng(8);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    DcnConfig c = tiny_config(rng);
    if (rep == 0) {
      c.content_dim = 4;
      c.n_workers = 3;
      c.use_group = c.use_person = true;
      c.cross_layers = 3;
      c.deep_widths = {8, 8, 8};
    }
    auto p = random_params(c, rng, 0.3);
    const auto batch = random_batch(c, rng, 6);
    const auto lg = loss_and_grad(c, p, batch);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < p.flat.size(); ++i) {
      const double keep = p.flat(i);
      p.flat(i) = keep + h;
      const double up = loss_and_grad(c, p, batch).loss;
      p.flat(i) = keep - h;
      const double down = loss_and_grad(c, p, batch).loss;
      p.flat(i) = keep;
      const double fd = (up - down) / (2 * h);
      const double a = lg.grad.flat(i);
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
      // Entries whose gradient is tiny are dominated by rounding in the difference.
      if (std::max(std::abs(a), std::abs(fd)) > 1e-6) worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("loss_and_grad is invariant to batch order") {
  SplitMix64 rng(9);
  DcnConfig c;
  c.content_dim = 3;
  c.n_workers = 4;
  c.deep_widths = {5, 5};
  const auto p = random_params(c, rng, 0.4);
  auto batch = random_batch(c, rng, 12);
  const auto a = loss_and_grad(c, p, batch);
  shuffle(rng, batch);
  const auto b = loss_and_grad(c, p, batch);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  CHECK((a.grad.flat - b.grad.flat).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("checkpoint round trip") {
  SplitMix64 rng(10);
  DcnModel m;
  m.config.content_dim = 3;
  m.config.n_workers = 2;
  m.config.deep_widths = {4, 4};
  m.params = random_params(m.config, rng, 1.0);
  m.params.flat = m.params.flat.cast<float>().cast<double>();
  m.workers = {{"w1", {0.5, 1, 0, 1, -0.25}}, {"w2", {-1, 0, 1, 0, 2}}};
  m.scaler = {38.0, 10.0, 5.0, 3.0};
  m.metadata["unigram"] = "abc";
  m.reindex();
  std::stringstream buf;
  write_checkpoint(buf, m);
  CHECK(buf.str().rfind(kCheckpointMagic, 0) == 0);
  const auto back = read_checkpoint(buf);
  CHECK(back.params.flat == m.params.flat);
  CHECK(back.workers.size() == 2);
  CHECK(back.workers[1].group == m.workers[1].group);
  CHECK(back.metadata == m.metadata);
  CHECK(back.config.deep_widths == m.config.deep_widths);
  const Eigen::Vector3d x(0.1, -0.2, 0.3);
  CHECK(predict_annotation(back, x, "w2") == predict_annotation(m, x, "w2"));

  std::stringstream bad("NOTACKPT");
  CHECK_THROWS(read_checkpoint(bad));
}

TEST_CASE("training on synthetic data") {
  auto d = synth_data(200, 2000, 21);
  DcnConfig c;
  c.deep_widths = {64, 64, 64};
  c.seed = 3;
  auto fit = fit_dcn(d.dataset, d.table, c);
  REQUIRE(fit.log.size() == 20);
  CHECK(fit.log[0].phase == "joint");
  CHECK(fit.log[5].phase == "frozen");
  CHECK(fit.log.back().mean_loss <= fit.log.front().mean_loss);

  auto again = fit_dcn(d.dataset, d.table, c);
  CHECK(again.model.params.flat == fit.model.params.flat);
  std::stringstream a, b;
  write_checkpoint(a, fit.model);
  write_checkpoint(b, again.model);
  CHECK(a.str() == b.str());

  // Workers with the positive effect get higher predicted probabilities.
  double sum[2] = {0, 0}, n[2] = {0, 0};
  const auto& ids = d.dataset.split;
  std::size_t used = 0;
  for (const auto& [cid, side] : ids) {
    if (side != annotstore::Split::kTest || ++used > 50) continue;
    const auto probs = predict_all_workers(fit.model, content_vector(d.table, cid));
    for (std::size_t w = 0; w < fit.model.workers.size(); ++w) {
      const int g = d.dataset.workers.at(fit.model.workers[w].worker_id).substance_user() ? 1 : 0;
      sum[g] += probs(static_cast<Eigen::Index>(w));
      n[g] += 1;
      CHECK(probs(static_cast<Eigen::Index>(w)) > 0.0);
      CHECK(probs(static_cast<Eigen::Index>(w)) < 1.0);
    }
  }
  CHECK(sum[1] / n[1] > sum[0] / n[0]);
}

TEST_CASE("unknown training worker is a consistency error") {
  auto d = synth_data(30, 150, 22);
  DcnConfig c;
  c.deep_widths = {4};
  auto m = make_model(d.dataset, c, 8);
  auto ds = d.dataset;
  ds.workers.emplace("ghost", annotstore::WorkerProfile{"ghost", 30});
  const auto first_test = std::find_if(ds.split.begin(), ds.split.end(), [](auto& kv) {
    return kv.second == annotstore::Split::kTest;
  });
  ds.annotations.push_back({"ghost", first_test->first, 1});
  CHECK_THROWS_AS(make_examples(m, ds, annotstore::Split::kTest, d.table), ConsistencyError);
  const auto ok = make_examples(m, ds, annotstore::Split::kTest, d.table, true);
  CHECK(ok.skipped_unknown_workers >= 1);
}

TEST_CASE("classification metrics examples") {
  auto m = classification_metrics(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0});
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.auc == 1.0);
  auto tied = classification_metrics(std::vector<double>(10, 0.3),
                                     std::vector<int>{1, 0, 1, 0, 1, 0, 1, 0, 1, 0});
  CHECK(tied.auc == 0.5);
  CHECK(tied.accuracy == 0.5);
  CHECK(tied.macro_f1 == doctest::Approx(1.0 / 3.0));
  auto single = classification_metrics(std::vector<double>{0.7, 0.2}, std::vector<int>{1, 1});
  CHECK_FALSE(single.auc_defined);
  CHECK(single.accuracy == 0.5);
  CHECK_THROWS_AS(classification_metrics(std::vector<double>{0.1}, std::vector<int>{1, 0}),
                  ArgumentError);
}

TEST_CASE("AUC matches the pairwise oracle") {
  SplitMix64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + uniform_index(rng, 60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(uniform_index(rng, 10)) / 10.0;  // plenty of ties
      y[i] = static_cast<int>(uniform_index(rng, 2));
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(auc_rank(s, y) - oracle::auc_pairs(s, y)) < 1e-12);
  }
}

TEST_CASE("most frequent class baseline") {
  CHECK(baseline_mfc(std::vector<int>{1, 1, 0}).majority == 1);
  CHECK(baseline_mfc(std::vector<int>{1, 0}).majority == 0);
  const auto mfc = baseline_mfc(std::vector<int>{0, 0, 1});
  std::vector<int> test = {1, 0, 1, 0, 1, 0};
  const std::vector<double> scores(test.size(), mfc.score());
  auto m = classification_metrics(scores, test);
  CHECK(m.accuracy == 0.5);
  CHECK(m.auc == 0.5);
  CHECK(m.macro_f1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("logistic regression matches the Newton oracle") {
  SplitMix64 rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd X(40, 2);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
      X(i, 0) = standard_normal(rng);
      X(i, 1) = standard_normal(rng);
      const double z = 0.3 + 1.2 * X(i, 0) - 0.7 * X(i, 1) + standard_normal(rng);
      y[i] = z > 0 ? 1 : 0;
    }
    for (double c : {1e6, 1.0}) {
      const auto fit = baseline_logreg(X, y, {c, 1e-10, 200});
      const auto o = oracle::ridge_logistic(X, y, c);
      CHECK(fit.converged);
      CHECK(std::abs(fit.intercept - o(0)) < 1e-6);
      CHECK(std::abs(fit.coef(0) - o(1)) < 1e-6);
      CHECK(std::abs(fit.coef(1) - o(2)) < 1e-6);
    }
  }
}

TEST_CASE("intercept-only logistic regression predicts the base rate") {
  Eigen::MatrixXd X(10, 0);
  std::vector<int> y = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const auto fit = baseline_logreg(X, y);
  const auto p = fit.predict(X);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(std::abs(p(i) - 0.3) < 1e-8);
}
