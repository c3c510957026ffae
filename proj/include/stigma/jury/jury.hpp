#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stigma/annotstore/records.hpp"

namespace stigma::jury {

using annotstore::Attribute;

struct JuryConfig {
  std::size_t jury_size = 12;
  std::size_t majority_threshold = 7;
  std::size_t n_juries = 10000;
  std::vector<double> verdict_thresholds = default_thresholds();
  double wild_threshold = 0.90;
  std::uint64_t master_seed = 0;

  // 0.50, 0.55, ..., 1.00
  static std::vector<double> default_thresholds();
  // Throws ArgumentError.
  void validate() const;
  void validate_k(std::size_t k) const;
};

// Smallest jury count c with c / n_juries >= threshold.
std::size_t required_count(double threshold, std::size_t n_juries);

/// Roster positions of the workers with attribute = 1 and = 0.
struct Strata {
  Attribute attribute = Attribute::kSubstanceUser;
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};

Strata partition(std::span<const annotstore::WorkerProfile> pool, Attribute attribute);

bool feasible(const Strata& strata, std::size_t k, std::size_t jury_size);

/// k roster positions drawn uniformly without replacement from the
/// attribute = 1 stratum and jury_size - k from the complement. The draw
/// depends only on (master_seed, comment_id, jury_index). Throws
/// ArgumentError naming the short stratum and its deficit.
std::vector<std::size_t> sample_jury(const Strata& strata, const JuryConfig& config, std::size_t k,
                                     std::string_view comment_id, std::uint64_t jury_index);

// Juror votes are 1 iff probability > 0.5.
std::vector<std::uint8_t> juror_votes(std::span<const double> probabilities);

// 1 iff at least majority_threshold jurors vote 1.
int jury_vote(std::span<const std::uint8_t> votes, std::span<const std::size_t> jurors,
              std::size_t majority_threshold);

struct CommentVerdict {
  std::string comment_id;
  std::size_t positive_juries = 0;
  std::size_t n_juries = 0;
  double positive_fraction = 0.0;
  std::vector<int> labels;  // one per config.verdict_thresholds entry
};

/// Monte-Carlo verdict for one comment given every roster worker's vote.
CommentVerdict verdict(std::span<const std::uint8_t> votes, std::string_view comment_id,
                       const Strata& strata, std::size_t k, const JuryConfig& config);

/// Per-comment roster votes: votes[c][w] for comment c, roster worker w.
using VoteMatrix = std::vector<std::vector<std::uint8_t>>;

struct SweepRow {
  Attribute attribute = Attribute::kSubstanceUser;
  std::size_t k = 0;
  double threshold = 0.0;
  std::optional<double> percent_stigmatizing;  // absent when k is infeasible

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// Percent of comments labeled stigmatizing for every k = 0..jury_size and
/// every verdict threshold. Parallel over comments; results do not depend
/// on `threads`.
std::vector<SweepRow> sweep_composition(const VoteMatrix& votes,
                                        std::span<const std::string> comment_ids,
                                        const Strata& strata, const JuryConfig& config,
                                        std::size_t threads = 1);

// CSV: attribute,k,threshold,percent_stigmatizing (NA when infeasible).
void write_sweep(std::ostream& out, std::span<const SweepRow> rows);

struct WildLabel {
  std::string comment_id;
  double fraction_a = 0.0;  // juries of jury_size attribute = 1 workers
  double fraction_b = 0.0;  // juries of jury_size attribute = 0 workers
  int label_a = 0;
  int label_b = 0;
};

/// Labels each comment twice, by single-stratum juries from either side
/// of the attribute, thresholded at config.wild_threshold.
std::vector<WildLabel> label_in_wild(const VoteMatrix& votes,
                                     std::span<const std::string> comment_ids,
                                     const Strata& strata, const JuryConfig& config,
                                     std::size_t threads = 1);

// CSV: comment_id,fraction_A,fraction_B,label_A,label_B
void write_wild_labels(std::ostream& out, std::span<const WildLabel> labels);
std::vector<WildLabel> read_wild_labels(std::istream& in);

}  // namespace stigma::jury
