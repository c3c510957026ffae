#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "stigma/corpus/comment.hpp"

namespace stigma::corpus {

struct KeywordLexicon {
  std::set<std::string> keywords;
  // `*` is a wildcard; see apply_exclusions for matching rules.
  std::vector<std::string> exclusion_patterns;

  // Throws ArgumentError if a keyword is not lowercase or a pattern is
  // empty once its wildcards are removed.
  void validate() const;

  // Substance keywords plus retained ambiguous terms, and the
  // false-positive exclusion phrases.
  static KeywordLexicon defaults();

  /// Plain-text format, one entry per line, `#` starts a comment:
  ///
  ///     [keywords]
  ///     weed
  ///     [exclusions]
  ///     weed out
  ///     *redpill
  ///
  /// Entries are lowercased on load. Duplicate keywords are an error.
  static KeywordLexicon parse(std::string_view text);
  static KeywordLexicon load(const std::filesystem::path& path);

  std::string to_text() const;
};

struct MatchResult {
  std::string comment_id;
  std::set<std::string> matched_keywords;
  bool excluded = false;
  std::vector<std::string> exclusion_hits;

  bool passes() const { return !matched_keywords.empty() && !excluded; }
};

struct ExclusionResult {
  bool excluded = false;
  std::vector<std::string> hits;
};

// Lowercased maximal runs of letters, digits and apostrophes. Bytes of
// multi-byte UTF-8 sequences count as letters.
std::vector<std::string> word_tokens(std::string_view text);

// Case-insensitive whole-token keyword match.
MatchResult match_keywords(const RawComment& comment, const KeywordLexicon& lexicon);

/// Patterns containing `*` match as substrings of the lowercased,
/// whitespace-collapsed body, each `*` standing for any (possibly empty)
/// run of characters; leading and trailing stars are implied. Patterns
/// without `*` match as contiguous word-token sequences. Hits are listed
/// in lexicon order.
ExclusionResult apply_exclusions(const RawComment& comment, const KeywordLexicon& lexicon);

// Both checks combined.
MatchResult classify(const RawComment& comment, const KeywordLexicon& lexicon);

}  // namespace stigma::corpus
