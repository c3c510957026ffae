#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stigma/annotstore/records.hpp"

namespace stigma::annotstore {

struct DemographicMarginals {
  double gender_female = 0.45;
  double race_african_american = 0.11;
  double knows_treated_person = 0.65;
  double substance_user = 0.53;
  double age_mean = 38.8;
  double age_sd = 10.8;
  int age_min = 18;
  int age_max = 80;
};

struct SynthParams {
  std::size_t n_workers = 400;
  std::size_t n_comments = 4000;
  std::size_t annotations_per_worker = 20;
  // Extra unannotated comments (the "in the wild" sample).
  std::size_t n_wild_comments = 0;
  std::map<Attribute, double> effects;  // logit offset per attribute = 1
  double base_logit = 0.0;
  // SD of the comment latent stigma score.
  double latent_sd = 1.0;
  double worker_noise_sd = 0.25;
  DemographicMarginals marginals;
  // Assign binary attributes with exact counts inside the cells of the
  // previously assigned attributes, so attributes are (nearly) orthogonal
  // in the realized pool instead of independent draws.
  bool balanced_attributes = false;
  // Quality-control exercise knobs; all zero by default.
  double attention_fail_rate = 0.0;
  double q_sub_no_rate = 0.0;
  double always_positive_rate = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticComment {
  std::string id;
  double latent = 0.0;  // stigma score, ~ Normal(0, latent_sd)
  std::string text;
  bool wild = false;
};

struct SyntheticPopulation {
  SynthParams params;
  std::vector<WorkerProfile> workers;
  std::vector<double> worker_noise;
  std::vector<bool> always_positive;
  std::vector<SyntheticComment> comments;  // annotated first, then wild
  std::vector<AnnotationRecord> annotations;

  // Generating log-odds that worker w labels comment c stigmatizing.
  double true_logit(std::size_t comment, std::size_t worker) const;
  double true_probability(std::size_t comment, std::size_t worker) const;
};

/// Draws workers, comment latents and texts, assigns each worker
/// `annotations_per_worker` distinct comments (spread evenly over
/// comments), and labels them positive with probability
/// sigmoid(base_logit + latent + sum(effect * attribute) + worker_noise).
/// Deterministic per seed.
SyntheticPopulation synthesize_population(const SynthParams& params);

// Manifest with seed, parameters and latent scores, as pretty JSON.
std::string population_manifest(const SyntheticPopulation& population);

struct EmbeddingSynthParams {
  std::size_t dim = 32;
  double signal = 1.5;    // length of the latent direction
  double noise_sd = 0.5;  // per-component isotropic noise
  std::uint64_t seed = 0;
};

// Content vectors v = signal * latent * u + noise for a random unit u.
std::vector<std::vector<float>> synthesize_content_embeddings(std::span<const double> latents,
                                                              const EmbeddingSynthParams& params);

}  // namespace stigma::annotstore
