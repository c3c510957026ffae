#include "stigma/jury/jury.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "stigma/common/csv.hpp"
#include "stigma/common/error.hpp"
#include "stigma/common/parallel.hpp"
#include "stigma/common/rng.hpp"

namespace stigma::jury {

std::vector<double> JuryConfig::default_thresholds() {
  std::vector<double> t;
  for (int i = 10; i <= 20; ++i) t.push_back(i / 20.0);
  return t;
}

void JuryConfig::validate() const {
  if (jury_size == 0 || jury_size > 64) throw ArgumentError("jury_size must be in 1..64");
  if (2 * majority_threshold <= jury_size || majority_threshold > jury_size) {
    throw ArgumentError("majority_threshold must exceed half the jury and fit in it");
  }
  if (n_juries == 0) throw ArgumentError("n_juries must be positive");
  if (verdict_thresholds.empty()) throw ArgumentError("verdict_thresholds must not be empty");
  for (double t : verdict_thresholds) {
    if (!(t >= 0.5 && t <= 1.0)) throw ArgumentError("verdict thresholds must lie in [0.5, 1.0]");
  }
  if (!(wild_threshold >= 0.5 && wild_threshold <= 1.0)) {
    throw ArgumentError("wild_threshold must lie in [0.5, 1.0]");
  }
}

void JuryConfig::validate_k(std::size_t k) const {
  if (k > jury_size) {
    throw ArgumentError("composition k=" + std::to_string(k) + " exceeds jury size " +
                        std::to_string(jury_size));
  }
}

std::size_t required_count(double threshold, std::size_t n_juries) {
  const double exact = threshold * static_cast<double>(n_juries);
  // Guard against t*n landing just above an integer through rounding.
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

Strata partition(std::span<const annotstore::WorkerProfile> pool, Attribute attribute) {
  Strata s;
  s.attribute = attribute;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (annotstore::attribute_value(pool[i], attribute) ? s.positive : s.negative).push_back(i);
  }
  return s;
}

bool feasible(const Strata& strata, std::size_t k, std::size_t jury_size) {
  return k <= jury_size && strata.positive.size() >= k && strata.negative.size() >= jury_size - k;
}

namespace {

// Floyd's algorithm: m distinct picks from `from`, appended to out.
void floyd(SplitMix64& rng, std::span<const std::size_t> from, std::size_t m, std::size_t* out) {
  const std::size_t n = from.size();
  std::size_t chosen[64];
  std::size_t count = 0;
  for (std::size_t j = n - m; j < n; ++j) {
    const auto t = static_cast<std::size_t>(uniform_index(rng, j + 1));
    const bool seen = std::find(chosen, chosen + count, t) != chosen + count;
    chosen[count++] = seen ? j : t;
  }
  for (std::size_t i = 0; i < m; ++i) out[i] = from[chosen[i]];
}

void check_strata(const Strata& strata, const JuryConfig& config, std::size_t k) {
  config.validate_k(k);
  const auto name = annotstore::attribute_name(strata.attribute);
  if (strata.positive.size() < k) {
    throw ArgumentError("stratum " + std::string(name) + "=1 has " +
                        std::to_string(strata.positive.size()) + " workers, short by " +
                        std::to_string(k - strata.positive.size()));
  }
  const std::size_t rest = config.jury_size - k;
  if (strata.negative.size() < rest) {
    throw ArgumentError("stratum " + std::string(name) + "=0 has " +
                        std::to_string(strata.negative.size()) + " workers, short by " +
                        std::to_string(rest - strata.negative.size()));
  }
}

void draw(const Strata& strata, std::size_t jury_size, std::size_t k, std::uint64_t master_seed,
          std::uint64_t comment_key, std::uint64_t jury_index, std::size_t* out) {
  SplitMix64 rng(counter_seed(master_seed, comment_key, jury_index));
  floyd(rng, strata.positive, k, out);
  floyd(rng, strata.negative, jury_size - k, out + k);
}

// Number of juries (of n_juries) voting 1.
std::size_t count_positive(std::span<const std::uint8_t> votes, std::string_view comment_id,
                           const Strata& strata, std::size_t k, const JuryConfig& config) {
  const std::uint64_t key = fnv1a64(comment_id);
  std::size_t jurors[64];
  std::size_t positive = 0;
  for (std::uint64_t j = 0; j < config.n_juries; ++j) {
    draw(strata, config.jury_size, k, config.master_seed, key, j, jurors);
    std::size_t yes = 0;
    for (std::size_t i = 0; i < config.jury_size; ++i) yes += votes[jurors[i]];
    positive += yes >= config.majority_threshold ? 1 : 0;
  }
  return positive;
}

void check_votes(std::span<const std::uint8_t> votes, const Strata& strata) {
  const std::size_t n = strata.positive.size() + strata.negative.size();
  if (votes.size() != n) {
    throw ArgumentError("vote vector has " + std::to_string(votes.size()) +
                        " entries for a pool of " + std::to_string(n));
  }
}

}  // namespace

std::vector<std::size_t> sample_jury(const Strata& strata, const JuryConfig& config, std::size_t k,
                                     std::string_view comment_id, std::uint64_t jury_index) {
  config.validate();
  check_strata(strata, config, k);
  std::vector<std::size_t> out(config.jury_size);
  draw(strata, config.jury_size, k, config.master_seed, fnv1a64(comment_id), jury_index,
       out.data());
  return out;
}

std::vector<std::uint8_t> juror_votes(std::span<const double> probabilities) {
  std::vector<std::uint8_t> v(probabilities.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = probabilities[i] > 0.5 ? 1 : 0;
  return v;
}

int jury_vote(std::span<const std::uint8_t> votes, std::span<const std::size_t> jurors,
              std::size_t majority_threshold) {
  std::size_t yes = 0;
  for (auto j : jurors) yes += votes[j] ? 1 : 0;
  return yes >= majority_threshold ? 1 : 0;
}

CommentVerdict verdict(std::span<const std::uint8_t> votes, std::string_view comment_id,
                       const Strata& strata, std::size_t k, const JuryConfig& config) {
  config.validate();
  check_strata(strata, config, k);
  check_votes(votes, strata);
  CommentVerdict v;
  v.comment_id = std::string(comment_id);
  v.n_juries = config.n_juries;
  v.positive_juries = count_positive(votes, comment_id, strata, k, config);
  v.positive_fraction = static_cast<double>(v.positive_juries) / static_cast<double>(v.n_juries);
  for (double t : config.verdict_thresholds) {
    v.labels.push_back(v.positive_juries >= required_count(t, v.n_juries) ? 1 : 0);
  }
  return v;
}

std::vector<SweepRow> sweep_composition(const VoteMatrix& votes,
                                        std::span<const std::string> comment_ids,
                                        const Strata& strata, const JuryConfig& config,
                                        std::size_t threads) {
  config.validate();
  if (votes.size() != comment_ids.size()) {
    throw ArgumentError("vote matrix and comment ids differ in length");
  }
  for (const auto& v : votes) check_votes(v, strata);
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k <= config.jury_size; ++k) {
    const bool ok = feasible(strata, k, config.jury_size) && !comment_ids.empty();
    std::vector<std::size_t> positives(comment_ids.size(), 0);
    if (ok) {
      parallel_for(comment_ids.size(), static_cast<unsigned>(threads), [&](std::size_t c) {
        positives[c] = count_positive(votes[c], comment_ids[c], strata, k, config);
      });
    }
    for (double t : config.verdict_thresholds) {
      SweepRow row;
      row.attribute = strata.attribute;
      row.k = k;
      row.threshold = t;
      if (ok) {
        const std::size_t need = required_count(t, config.n_juries);
        std::size_t labeled = 0;
        for (auto p : positives) labeled += p >= need ? 1 : 0;
        row.percent_stigmatizing =
            100.0 * static_cast<double>(labeled) / static_cast<double>(comment_ids.size());
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_sweep(std::ostream& out, std::span<const SweepRow> rows) {
  csv::Writer w(out);
  w.row({"attribute", "k", "threshold", "percent_stigmatizing"});
  for (const auto& r : rows) {
    w.field(annotstore::attribute_name(r.attribute)).field(r.k).field(r.threshold);
    if (r.percent_stigmatizing) {
      w.field(*r.percent_stigmatizing);
    } else {
      w.field(std::string_view("NA"));
    }
    w.end_row();
  }
}

std::vector<WildLabel> label_in_wild(const VoteMatrix& votes,
                                     std::span<const std::string> comment_ids,
                                     const Strata& strata, const JuryConfig& config,
                                     std::size_t threads) {
  config.validate();
  if (votes.size() != comment_ids.size()) {
    throw ArgumentError("vote matrix and comment ids differ in length");
  }
  check_strata(strata, config, config.jury_size);
  check_strata(strata, config, 0);
  for (const auto& v : votes) check_votes(v, strata);
  const std::size_t need = required_count(config.wild_threshold, config.n_juries);
  const double n = static_cast<double>(config.n_juries);
  std::vector<WildLabel> out(comment_ids.size());
  parallel_for(comment_ids.size(), static_cast<unsigned>(threads), [&](std::size_t c) {
    const auto a = count_positive(votes[c], comment_ids[c], strata, config.jury_size, config);
    const auto b = count_positive(votes[c], comment_ids[c], strata, 0, config);
    out[c] = {comment_ids[c], static_cast<double>(a) / n, static_cast<double>(b) / n,
              a >= need ? 1 : 0, b >= need ? 1 : 0};
  });
  return out;
}

void write_wild_labels(std::ostream& out, std::span<const WildLabel> labels) {
  csv::Writer w(out);
  w.row({"comment_id", "fraction_A", "fraction_B", "label_A", "label_B"});
  for (const auto& l : labels) {
    w.field(std::string_view(l.comment_id))
        .field(l.fraction_a)
        .field(l.fraction_b)
        .field(l.label_a)
        .field(l.label_b);
    w.end_row();
  }
}

std::vector<WildLabel> read_wild_labels(std::istream& in) {
  const auto table = csv::read(in);
  const auto id = table.require_column("comment_id");
  const auto fa = table.require_column("fraction_A");
  const auto fb = table.require_column("fraction_B");
  const auto la = table.require_column("label_A");
  const auto lb = table.require_column("label_B");
  std::vector<WildLabel> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    auto fail = [&](const std::string& what) {
      return FormatError("wild labels line " + std::to_string(table.line_numbers[i]) + ": " + what);
    };
    if (r.size() != table.header.size()) throw fail("wrong number of fields");
    WildLabel l;
    l.comment_id = r[id];
    try {
      l.fraction_a = std::stod(r[fa]);
      l.fraction_b = std::stod(r[fb]);
    } catch (const std::exception&) {
      throw fail("bad fraction");
    }
    if (r[la] != "0" && r[la] != "1") throw fail("label_A must be 0 or 1");
    if (r[lb] != "0" && r[lb] != "1") throw fail("label_B must be 0 or 1");
    l.label_a = r[la] == "1";
    l.label_b = r[lb] == "1";
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace stigma::jury
