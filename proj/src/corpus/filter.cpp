#include "stigma/corpus/filter.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"

namespace stigma::corpus {

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t sample_n,
                                        std::uint64_t seed) {
  const std::size_t n = std::min(population, sample_n);
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix64 rng(seed);
  // Partial Fisher-Yates: the first n slots become the sample.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

FilterResult filter_corpus(std::span<const RawComment> comments, const KeywordLexicon& lexicon,
                           std::uint64_t seed, std::size_t sample_n) {
  lexicon.validate();
  FilterResult out;
  out.matches.reserve(comments.size());
  std::vector<std::size_t> survivor_pos;
  for (std::size_t i = 0; i < comments.size(); ++i) {
    out.matches.push_back(classify(comments[i], lexicon));
    if (out.matches.back().passes()) survivor_pos.push_back(i);
  }
  out.survivors = survivor_pos.size();
  for (std::size_t k : sample_indices(survivor_pos.size(), sample_n, seed)) {
    out.sample.push_back(comments[survivor_pos[k]]);
  }
  return out;
}

KappaResult cohen_kappa(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size()) {
    throw ArgumentError("cohen_kappa: label vectors differ in length (" +
                        std::to_string(labels_a.size()) + " vs " +
                        std::to_string(labels_b.size()) + ")");
  }
  if (labels_a.empty()) throw ArgumentError("cohen_kappa: empty label vectors");
  std::size_t agree = 0, a1 = 0, b1 = 0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    const int a = labels_a[i], b = labels_b[i];
    if ((a != 0 && a != 1) || (b != 0 && b != 1)) {
      throw ArgumentError("cohen_kappa: labels must be 0 or 1");
    }
    agree += (a == b);
    a1 += a;
    b1 += b;
  }
  const double n = static_cast<double>(labels_a.size());
  const double pa = a1 / n, pb = b1 / n;
  KappaResult r;
  r.agreement_rate = agree / n;
  const double pe = pa * pb + (1.0 - pa) * (1.0 - pb);
  if (pe >= 1.0) {
    r.degenerate = true;
    return r;
  }
  r.kappa = (r.agreement_rate - pe) / (1.0 - pe);
  return r;
}

std::vector<KeywordDisambiguation> disambiguation_report(
    std::span<const DisambiguationItem> sample, const std::set<std::string>& keywords,
    const std::set<std::string>& overrides) {
  std::map<std::string, KeywordDisambiguation> rows;
  for (const auto& k : keywords) rows[k].keyword = k;
  for (const auto& item : sample) {
    for (const auto& k : item.keyword_hits) {
      auto it = rows.find(k);
      if (it == rows.end()) continue;
      ++it->second.occurrences;
      it->second.substance_count += item.is_about_substances;
    }
  }
  std::vector<KeywordDisambiguation> out;
  out.reserve(rows.size());
  for (auto& [k, row] : rows) {
    row.substance_fraction =
        row.occurrences == 0 ? 0.0
                             : static_cast<double>(row.substance_count) / row.occurrences;
    const bool by_rule = row.occurrences == 0 || row.substance_fraction > 0.5;
    row.retain = by_rule;
    if (overrides.contains(k)) {
      row.manual_override = !by_rule;
      row.retain = true;
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace stigma::corpus
