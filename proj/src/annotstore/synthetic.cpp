#include "stigma/annotstore/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"

namespace stigma::annotstore {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string padded(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

constexpr std::array<const char*, 8> kSubstanceWords = {
    "weed", "meth", "heroin", "drug", "cocaine", "xanax", "opioid", "pot"};
constexpr std::array<const char*, 10> kStigmaWords = {
    "junkie", "addict", "crackhead", "criminal", "disgusting",
    "trash",  "lazy",   "deserve",   "they",     "people"};
constexpr std::array<const char*, 8> kSupportWords = {
    "recovery", "support", "help", "treatment", "health", "care", "hope", "i"};
constexpr std::array<const char*, 40> kFillerWords = {
    "the",   "a",     "and",  "to",    "of",    "it",    "is",    "that",
    "was",   "for",   "on",   "with",  "just",  "like",  "about", "really",
    "know",  "think", "time", "day",   "night", "man",   "friend", "work",
    "got",   "get",   "all",  "some",  "much",  "been",  "going", "back",
    "still", "years", "last", "thing", "lol",   "yeah",  "good",  "never"};

std::string synth_text(double latent, SplitMix64& rng) {
  const std::size_t len = 10 + static_cast<std::size_t>(uniform_index(rng, 15));
  const std::size_t keyword_slot = static_cast<std::size_t>(uniform_index(rng, len));
  const double p_stigma = 0.3 * sigmoid(2.0 * (latent - 0.5));
  const double p_support = 0.25 * sigmoid(-2.0 * latent);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    const char* word;
    if (i == keyword_slot) {
      word = kSubstanceWords[uniform_index(rng, kSubstanceWords.size())];
    } else {
      const double u = uniform01(rng);
      if (u < p_stigma) {
        word = kStigmaWords[uniform_index(rng, kStigmaWords.size())];
      } else if (u < p_stigma + p_support) {
        word = kSupportWords[uniform_index(rng, kSupportWords.size())];
      } else {
        word = kFillerWords[uniform_index(rng, kFillerWords.size())];
      }
    }
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  if (latent > 1.0 && bernoulli(rng, 0.3)) out += "!!!";
  return out;
}

// Sequentially assigns binary attributes; each attribute gets exactly
// round(p * size) ones inside every cell of the attributes before it.
void assign_balanced(std::vector<std::array<int, 4>>& attrs, const std::array<double, 4>& p,
                     SplitMix64& rng) {
  const std::size_t n = attrs.size();
  for (std::size_t j = 0; j < 4; ++j) {
    std::map<std::array<int, 4>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < n; ++i) {
      std::array<int, 4> key{};
      for (std::size_t q = 0; q < j; ++q) key[q] = attrs[i][q];
      cells[key].push_back(i);
    }
    for (auto& [key, members] : cells) {
      shuffle(rng, members);
      const auto ones = static_cast<std::size_t>(
          std::llround(p[j] * static_cast<double>(members.size())));
      for (std::size_t m = 0; m < members.size(); ++m) attrs[members[m]][j] = m < ones ? 1 : 0;
    }
  }
}

}  // namespace

double SyntheticPopulation::true_logit(std::size_t comment, std::size_t worker) const {
  double z = params.base_logit + comments.at(comment).latent + worker_noise.at(worker);
  for (const auto& [attr, effect] : params.effects) {
    z += effect * attribute_value(workers.at(worker), attr);
  }
  return z;
}

double SyntheticPopulation::true_probability(std::size_t comment, std::size_t worker) const {
  if (always_positive.at(worker)) return 1.0;
  return sigmoid(true_logit(comment, worker));
}

SyntheticPopulation synthesize_population(const SynthParams& params) {
  if (params.n_workers == 0 || params.n_comments == 0 || params.annotations_per_worker == 0) {
    throw ArgumentError("synthesize_population: counts must be positive");
  }
  if (!(params.latent_sd >= 0.0) || !(params.worker_noise_sd >= 0.0)) {
    throw ArgumentError("synthesize_population: SDs must be non-negative");
  }
  if (params.annotations_per_worker > params.n_comments) {
    throw ArgumentError("annotations_per_worker exceeds n_comments");
  }
  SyntheticPopulation pop;
  pop.params = params;
  const auto& mg = params.marginals;

  // Workers
  SplitMix64 wrng(derive_seed(params.seed, "workers"));
  const std::array<double, 4> p = {mg.substance_user, mg.knows_treated_person,
                                   mg.gender_female, mg.race_african_american};
  std::vector<std::array<int, 4>> attrs(params.n_workers);
  if (params.balanced_attributes) {
    assign_balanced(attrs, p, wrng);
  } else {
    for (auto& a : attrs) {
      for (std::size_t j = 0; j < 4; ++j) a[j] = bernoulli(wrng, p[j]) ? 1 : 0;
    }
  }
  for (std::size_t i = 0; i < params.n_workers; ++i) {
    WorkerProfile w;
    w.worker_id = padded("u", i + 1, 5);
    const double age = mg.age_mean + mg.age_sd * standard_normal(wrng);
    w.age = std::clamp(static_cast<int>(std::lround(age)), mg.age_min, mg.age_max);
    w.substance_use_days = attrs[i][0] ? 1 + static_cast<int>(uniform_index(wrng, 30)) : 0;
    w.knows_treated_person = attrs[i][1];
    w.gender_female = attrs[i][2];
    w.race_african_american = attrs[i][3];
    w.passed_attention_check = !bernoulli(wrng, params.attention_fail_rate);
    pop.workers.push_back(std::move(w));
    pop.worker_noise.push_back(params.worker_noise_sd * standard_normal(wrng));
    pop.always_positive.push_back(bernoulli(wrng, params.always_positive_rate));
  }

  // Comments
  SplitMix64 crng(derive_seed(params.seed, "comments"));
  SplitMix64 trng(derive_seed(params.seed, "text"));
  const std::size_t total = params.n_comments + params.n_wild_comments;
  for (std::size_t i = 0; i < total; ++i) {
    SyntheticComment c;
    c.wild = i >= params.n_comments;
    c.id = c.wild ? padded("x", i - params.n_comments + 1, 6) : padded("c", i + 1, 6);
    c.latent = params.latent_sd * standard_normal(crng);
    c.text = synth_text(c.latent, trng);
    pop.comments.push_back(std::move(c));
  }

  // Assignment: deal comments from consecutive random permutations so load
  // per comment stays even; skip repeats within one worker.
  SplitMix64 arng(derive_seed(params.seed, "assign"));
  SplitMix64 lrng(derive_seed(params.seed, "labels"));
  std::vector<std::size_t> deck(params.n_comments);
  std::size_t cursor = deck.size();
  auto draw = [&]() {
    if (cursor == deck.size()) {
      std::iota(deck.begin(), deck.end(), std::size_t{0});
      shuffle(arng, deck);
      cursor = 0;
    }
    return deck[cursor++];
  };
  for (std::size_t w = 0; w < params.n_workers; ++w) {
    std::unordered_set<std::size_t> mine;
    while (mine.size() < params.annotations_per_worker) {
      const std::size_t c = draw();
      if (!mine.insert(c).second) continue;
      AnnotationRecord rec;
      rec.worker_id = pop.workers[w].worker_id;
      rec.comment_id = pop.comments[c].id;
      rec.q_sub = !bernoulli(lrng, params.q_sub_no_rate);
      const bool positive = bernoulli(lrng, pop.true_probability(c, w));
      if (rec.q_sub) rec.q_stigma = positive;
      pop.annotations.push_back(std::move(rec));
    }
  }
  return pop;
}

std::string population_manifest(const SyntheticPopulation& pop) {
  using nlohmann::ordered_json;
  const auto& p = pop.params;
  ordered_json j;
  j["generator"] = "synthesize_population";
  j["seed"] = p.seed;
  ordered_json params;
  params["n_workers"] = p.n_workers;
  params["n_comments"] = p.n_comments;
  params["annotations_per_worker"] = p.annotations_per_worker;
  params["n_wild_comments"] = p.n_wild_comments;
  ordered_json effects = ordered_json::object();
  for (const auto& [a, e] : p.effects) effects[std::string(attribute_name(a))] = e;
  params["effects"] = effects;
  params["base_logit"] = p.base_logit;
  params["latent_sd"] = p.latent_sd;
  params["worker_noise_sd"] = p.worker_noise_sd;
  params["balanced_attributes"] = p.balanced_attributes;
  params["attention_fail_rate"] = p.attention_fail_rate;
  params["q_sub_no_rate"] = p.q_sub_no_rate;
  params["always_positive_rate"] = p.always_positive_rate;
  params["marginals"] = {{"gender_female", p.marginals.gender_female},
                         {"race_african_american", p.marginals.race_african_american},
                         {"knows_treated_person", p.marginals.knows_treated_person},
                         {"substance_user", p.marginals.substance_user},
                         {"age_mean", p.marginals.age_mean},
                         {"age_sd", p.marginals.age_sd}};
  j["parameters"] = params;
  ordered_json latent = ordered_json::object();
  for (const auto& c : pop.comments) latent[c.id] = c.latent;
  j["latent_scores"] = latent;
  ordered_json noise = ordered_json::object();
  for (std::size_t i = 0; i < pop.workers.size(); ++i) {
    noise[pop.workers[i].worker_id] = pop.worker_noise[i];
  }
  j["worker_noise"] = noise;
  return j.dump(2) + "\n";
}

std::vector<std::vector<float>> synthesize_content_embeddings(
    std::span<const double> latents, const EmbeddingSynthParams& params) {
  if (params.dim == 0) throw ArgumentError("embedding dim must be positive");
  SplitMix64 rng(derive_seed(params.seed, "embeddings"));
  std::vector<double> dir(params.dim);
  double norm = 0.0;
  for (auto& d : dir) {
    d = standard_normal(rng);
    norm += d * d;
  }
  norm = std::sqrt(norm);
  for (auto& d : dir) d /= norm;
  std::vector<std::vector<float>> out;
  out.reserve(latents.size());
  for (double s : latents) {
    std::vector<float> v(params.dim);
    for (std::size_t k = 0; k < params.dim; ++k) {
      v[k] = static_cast<float>(params.signal * s * dir[k] +
                                params.noise_sd * standard_normal(rng));
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace stigma::annotstore
