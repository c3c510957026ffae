#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stigma/annotstore/dataset.hpp"
#include "stigma/featurize/embeddings.hpp"
#include "stigma/model/dcn.hpp"

namespace stigma::model {

// Means and population SDs of age and substance_use_days.
GroupScaler fit_group_scaler(std::span<const annotstore::WorkerProfile> workers);
std::array<double, kGroupDim> group_vector(const annotstore::WorkerProfile& worker,
                                           const GroupScaler& scaler);

Eigen::VectorXd content_vector(const featurize::EmbeddingTable& table, const std::string& id);

/// Untrained model whose roster is every worker with a training-split
/// annotation, in id order, with group vectors z-scored on those workers.
/// The config's n_workers and content_dim are filled in.
DcnModel make_model(const annotstore::CleanDataset& dataset, DcnConfig config,
                    std::size_t content_dim);

struct ExampleSet {
  std::vector<TrainExample> examples;
  std::vector<std::string> comment_ids;
  std::vector<std::string> worker_ids;
  // Annotations dropped because their worker is not in the roster
  // (only when allow_unknown_workers).
  std::size_t skipped_unknown_workers = 0;
};

/// Examples for the annotations on `side`. A missing content vector is a
/// ConsistencyError; so is an unknown worker unless allow_unknown_workers.
ExampleSet make_examples(const DcnModel& model, const annotstore::CleanDataset& dataset,
                         annotstore::Split side, const featurize::EmbeddingTable& content,
                         bool allow_unknown_workers = false);

// make_model + make_examples(train) + train_dcn.
struct FitResult {
  DcnModel model;
  std::vector<EpochLog> log;
};
FitResult fit_dcn(const annotstore::CleanDataset& dataset, const featurize::EmbeddingTable& content,
                  const DcnConfig& config, const EpochCallback& on_epoch = {});

}  // namespace stigma::model
