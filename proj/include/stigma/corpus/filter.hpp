#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stigma/corpus/comment.hpp"
#include "stigma/corpus/lexicon.hpp"

namespace stigma::corpus {

// Sorted indices of a uniform sample of min(sample_n, population) items,
// a pure function of (population, sample_n, seed).
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t sample_n,
                                        std::uint64_t seed);

struct FilterResult {
  std::vector<RawComment> sample;  // input order
  std::vector<MatchResult> matches;  // one per input comment
  std::size_t survivors = 0;
};

/// Keeps comments with at least one keyword and no exclusion hit, then
/// draws a uniform sample of min(sample_n, survivors) of them. Two passes:
/// survivors are counted first, then sample_indices picks positions.
FilterResult filter_corpus(std::span<const RawComment> comments, const KeywordLexicon& lexicon,
                           std::uint64_t seed, std::size_t sample_n);

struct KappaResult {
  double agreement_rate = 0.0;
  double kappa = 0.0;
  // Chance agreement is 1 (both raters used a single, identical class);
  // kappa is undefined and left at 0.
  bool degenerate = false;
};

// Cohen's kappa for two binary raters. Throws ArgumentError on length
// mismatch, empty input or labels outside {0,1}.
KappaResult cohen_kappa(std::span<const int> labels_a, std::span<const int> labels_b);

struct DisambiguationItem {
  std::string comment_id;
  std::set<std::string> keyword_hits;
  // Both raters said the post is about substances.
  bool is_about_substances = false;
};

struct KeywordDisambiguation {
  std::string keyword;
  std::size_t occurrences = 0;
  std::size_t substance_count = 0;
  double substance_fraction = 0.0;  // 0 when occurrences == 0
  bool retain = false;
  // Set when the keyword is on the override list; true means the override
  // changed the outcome.
  std::optional<bool> manual_override;
};

/// Retains a keyword when more than half of its occurrences are about
/// substances, when it never occurs, or when it is listed in `overrides`.
/// One row per keyword, in keyword order.
std::vector<KeywordDisambiguation> disambiguation_report(
    std::span<const DisambiguationItem> sample, const std::set<std::string>& keywords,
    const std::set<std::string>& overrides = {});

}  // namespace stigma::corpus
