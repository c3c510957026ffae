#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "stigma/featurize/embeddings.hpp"
#include "stigma/featurize/features.hpp"
#include "stigma/jury/jury.hpp"
#include "stigma/model/dcn.hpp"
#include "stigma/pipeline/config.hpp"

namespace stigma::pipeline {

inline constexpr std::array<std::string_view, 13> kStages = {
    "filter-corpus", "disambiguate", "clean",     "split",      "featurize",
    "train",         "eval",         "jury-sweep", "wild-label", "dla",
    "agreement",     "synth",        "report"};

bool is_stage(std::string_view name);

struct RunContext {
  Config config = Config::defaults();
  std::filesystem::path out = "out";
  // Caps parallelism; never changes results.
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

/// Runs one stage: reads its inputs (configured paths, else the artifacts
/// earlier stages left in `out`), writes its artifacts and
/// `manifest_<stage>.json` there. Missing inputs are IoErrors naming the
/// path; bad settings are ConfigErrors.
void run_stage(std::string_view stage, const RunContext& ctx);

// Roster votes (probability > 0.5) of `model` on each comment.
jury::VoteMatrix vote_matrix(const model::DcnModel& model, const featurize::EmbeddingTable& content,
                             std::span<const std::string> comment_ids);

// Category dictionary over the synthetic generator's word lists.
featurize::DictionaryLexicon synthetic_dictionary();

}  // namespace stigma::pipeline
