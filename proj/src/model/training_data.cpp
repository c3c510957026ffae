#include "stigma/model/training_data.hpp"

#include <cmath>
#include <set>

#include "stigma/common/error.hpp"

namespace stigma::model {

using annotstore::CleanDataset;
using annotstore::Split;
using annotstore::WorkerProfile;

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(x.size()))};
}

double z(double v, double mean, double sd) { return sd > 0.0 ? (v - mean) / sd : 0.0; }

}  // namespace

GroupScaler fit_group_scaler(std::span<const WorkerProfile> workers) {
  if (workers.empty()) throw ArgumentError("fit_group_scaler: no workers");
  std::vector<double> age, days;
  for (const auto& w : workers) {
    age.push_back(w.age);
    days.push_back(w.substance_use_days);
  }
  GroupScaler s;
  std::tie(s.age_mean, s.age_sd) = mean_sd(age);
  std::tie(s.days_mean, s.days_sd) = mean_sd(days);
  return s;
}

std::array<double, kGroupDim> group_vector(const WorkerProfile& w, const GroupScaler& s) {
  return {z(w.age, s.age_mean, s.age_sd), static_cast<double>(w.gender_female),
          static_cast<double>(w.race_african_american),
          static_cast<double>(w.knows_treated_person),
          z(w.substance_use_days, s.days_mean, s.days_sd)};
}

Eigen::VectorXd content_vector(const featurize::EmbeddingTable& table, const std::string& id) {
  auto it = table.vectors.find(id);
  if (it == table.vectors.end()) {
    throw ConsistencyError("comment '" + id + "' has no content embedding");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(it->second.size()));
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = it->second[i];
  }
  return v;
}

DcnModel make_model(const CleanDataset& dataset, DcnConfig config, std::size_t content_dim) {
  std::set<std::string> ids;
  for (const auto& a : dataset.annotations_in(Split::kTrain)) ids.insert(a.worker_id);
  if (ids.empty()) throw ArgumentError("no training annotations");
  std::vector<WorkerProfile> train_workers;
  for (const auto& id : ids) {
    auto it = dataset.workers.find(id);
    if (it == dataset.workers.end()) {
      throw ConsistencyError("training annotation names unknown worker '" + id + "'");
    }
    train_workers.push_back(it->second);
  }
  DcnModel model;
  config.content_dim = content_dim;
  config.n_workers = train_workers.size();
  config.validate();
  model.config = config;
  model.scaler = fit_group_scaler(train_workers);
  for (const auto& w : train_workers) {
    model.workers.push_back({w.worker_id, group_vector(w, model.scaler)});
  }
  model.reindex();
  model.params = DcnParams::zeros(config);
  return model;
}

ExampleSet make_examples(const DcnModel& model, const CleanDataset& dataset, Split side,
                         const featurize::EmbeddingTable& content, bool allow_unknown_workers) {
  ExampleSet out;
  for (const auto& a : dataset.annotations_in(side)) {
    std::size_t wi = 0;
    try {
      wi = model.worker_index(a.worker_id);
    } catch (const ArgumentError&) {
      if (!allow_unknown_workers) {
        throw ConsistencyError("annotation names worker '" + a.worker_id +
                               "' that is not in the model roster");
      }
      ++out.skipped_unknown_workers;
      continue;
    }
    TrainExample ex;
    ex.content = content_vector(content, a.comment_id);
    ex.group = model.workers[wi].group;
    ex.worker_index = wi;
    ex.label = a.label;
    out.examples.push_back(std::move(ex));
    out.comment_ids.push_back(a.comment_id);
    out.worker_ids.push_back(a.worker_id);
  }
  return out;
}

FitResult fit_dcn(const CleanDataset& dataset, const featurize::EmbeddingTable& content,
                  const DcnConfig& config, const EpochCallback& on_epoch) {
  FitResult out;
  out.model = make_model(dataset, config, content.dim);
  const auto train = make_examples(out.model, dataset, Split::kTrain, content);
  auto result = train_dcn(out.model.config, train.examples, on_epoch);
  out.model.params = std::move(result.params);
  out.log = std::move(result.log);
  return out;
}

}  // namespace stigma::model
