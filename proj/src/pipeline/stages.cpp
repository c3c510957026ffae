#include "stigma/pipeline/stages.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "stigma/annotstore/agreement.hpp"
#include "stigma/annotstore/dataset.hpp"
#include "stigma/annotstore/records.hpp"
#include "stigma/annotstore/synthetic.hpp"
#include "stigma/common/csv.hpp"
#include "stigma/common/encoding.hpp"
#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"
#include "stigma/corpus/comment.hpp"
#include "stigma/corpus/filter.hpp"
#include "stigma/corpus/lexicon.hpp"
#include "stigma/featurize/tokenizer.hpp"
#include "stigma/model/baselines.hpp"
#include "stigma/model/metrics.hpp"
#include "stigma/model/training_data.hpp"
#include "stigma/stats/dla.hpp"
#include "stigma/version.hpp"

namespace stigma::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using annotstore::Attribute;
using annotstore::CleanDataset;
using annotstore::Split;

bool is_stage(std::string_view name) {
  return std::find(kStages.begin(), kStages.end(), name) != kStages.end();
}

namespace {

// Bookkeeping for one stage run: resolves inputs, registers outputs and
// writes the manifest.
class Stage {
 public:
  Stage(const RunContext& ctx, std::string name)
      : ctx_(ctx), name_(std::move(name)), seed_(derive_seed(ctx.config.master_seed(), name_)) {}

  const Config& config() const { return ctx_.config; }
  std::uint64_t seed() const { return seed_; }
  std::size_t threads() const { return std::max<std::size_t>(1, ctx_.threads); }
  json& stats() { return stats_; }

  fs::path artifact(const std::string& file) const { return ctx_.out / file; }

  // paths.<key> when set, else the out-dir artifact `fallback` (when
  // non-empty). Must exist.
  fs::path input(const std::string& key, const std::string& fallback = "") {
    const auto configured = config().get("paths." + key);
    if (configured.empty() && fallback.empty()) {
      throw ConfigError("paths." + key + " must be set for stage " + name_);
    }
    return require(configured.empty() ? artifact(fallback) : fs::path(configured));
  }

  // Like input(), but an unset key with an absent fallback is not an error.
  std::optional<fs::path> optional_input(const std::string& key, const std::string& fallback) {
    const auto configured = config().get("paths." + key);
    if (!configured.empty()) return require(configured);
    if (fallback.empty() || !fs::is_regular_file(artifact(fallback))) return std::nullopt;
    return require(artifact(fallback));
  }

  fs::path require(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw IoError("missing input: " + path.string());
    if (std::find(inputs_.begin(), inputs_.end(), path) == inputs_.end()) inputs_.push_back(path);
    return path;
  }

  void write(const std::string& file, const std::function<void(std::ostream&)>& body) {
    const auto path = artifact(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    body(out);
    out.close();
    if (!out) throw IoError("write failed: " + path.string());
    outputs_.push_back(path);
  }

  void log(const std::string& message) const {
    if (ctx_.log) *ctx_.log << "[" << name_ << "] " << message << "\n" << std::flush;
  }

  void finish() {
    json m;
    m["stage"] = name_;
    m["master_seed"] = config().master_seed();
    m["stage_seed"] = seed_;
    json cfg = json::object();
    for (const auto& [section, keys] : config().tree()) {
      json s = json::object();
      for (const auto& [key, value] : keys) s[key] = value.data();
      cfg[section] = s;
    }
    m["config"] = cfg;
    m["inputs"] = files(inputs_);
    m["outputs"] = files(outputs_);
    m["stats"] = stats_;
    m["versions"] = {
        {"stigma", kVersion},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                      "." + std::to_string(EIGEN_MINOR_VERSION)},
        {"boost", BOOST_LIB_VERSION},
        {"checkpoint_format", model::kCheckpointMagic},
        {"embedding_format", std::string(featurize::kEmbtabMagic) + " " + featurize::kEmbtabVersion}};
    write_text_file(artifact("manifest_" + name_ + ".json"), m.dump(2) + "\n");
    log("done");
  }

  // Path as recorded in manifests: relative inside the out dir.
  std::string display(const fs::path& p) const {
    const auto rel = p.lexically_normal().lexically_relative(ctx_.out.lexically_normal());
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
  }

 private:
  json files(const std::vector<fs::path>& paths) const {
    json arr = json::array();
    for (const auto& p : paths) arr.push_back({{"path", display(p)}, {"sha256", sha256_file(p)}});
    return arr;
  }

  const RunContext& ctx_;
  std::string name_;
  std::uint64_t seed_;
  std::vector<fs::path> inputs_, outputs_;
  json stats_ = json::object();
};

template <class Fn>
auto as_config(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ArgumentError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

Attribute config_attribute(const std::string& key, const std::string& name) {
  return as_config(key, [&] { return annotstore::parse_attribute(name); });
}

std::vector<Attribute> config_attributes(const Config& c, const std::string& key) {
  std::vector<Attribute> out;
  for (const auto& name : c.get_list(key)) out.push_back(config_attribute(key, name));
  return out;
}

corpus::KeywordLexicon lexicon_for(Stage& s) {
  if (auto p = s.optional_input("lexicon", "")) return corpus::KeywordLexicon::load(*p);
  return corpus::KeywordLexicon::defaults();
}

std::map<std::string, std::string> comment_map(const fs::path& path) {
  std::map<std::string, std::string> out;
  for (auto& c : corpus::load_comments(path).comments) {
    if (!out.emplace(c.id, std::move(c.body)).second) {
      throw FormatError(path.string() + ": duplicate comment id '" + c.id + "'");
    }
  }
  return out;
}

std::vector<std::string> comment_ids(const fs::path& path) {
  std::vector<std::string> ids;
  for (const auto& c : corpus::load_comments(path).comments) ids.push_back(c.id);
  return ids;
}

void write_comment_map(std::ostream& out, const std::map<std::string, std::string>& comments) {
  std::vector<corpus::RawComment> list;
  for (const auto& [id, body] : comments) list.push_back({id, body, std::nullopt, std::nullopt});
  corpus::write_comments(out, list);
}

template <class T>
std::vector<T> take_records(annotstore::LoadResult<T> loaded, const fs::path& path) {
  if (!loaded.errors.empty()) {
    const auto& e = loaded.errors.front();
    throw FormatError(path.string() + " line " + std::to_string(e.line) + ": " + e.message);
  }
  return std::move(loaded.records);
}

// Dataset as left by `clean`, with the split when `with_split`.
CleanDataset load_clean(Stage& s, bool with_split) {
  CleanDataset ds;
  const auto workers_path = s.require(s.artifact("workers_clean.csv"));
  for (auto& w : take_records(annotstore::load_workers(workers_path), workers_path)) {
    ds.workers.emplace(w.worker_id, std::move(w));
  }
  ds.annotations = annotstore::read_labels(s.require(s.artifact("labels.csv")));
  ds.comments = comment_map(s.require(s.artifact("comments_clean.jsonl")));
  for (const auto& a : ds.annotations) {
    if (!ds.workers.contains(a.worker_id)) {
      throw ConsistencyError("labels.csv names unknown worker '" + a.worker_id + "'");
    }
    if (!ds.comments.contains(a.comment_id)) {
      throw ConsistencyError("labels.csv names unknown comment '" + a.comment_id + "'");
    }
  }
  if (with_split) {
    ds.split = annotstore::read_split(s.require(s.artifact("split.csv")));
    for (const auto& [id, text] : ds.comments) {
      if (!ds.split.contains(id)) throw ConsistencyError("comment '" + id + "' has no split side");
    }
  }
  return ds;
}

std::vector<featurize::TextRow> text_rows(const std::map<std::string, std::string>& comments,
                                          std::span<const std::string> ids) {
  std::vector<featurize::TextRow> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = comments.find(id);
    if (it == comments.end()) throw ConsistencyError("no text for comment '" + id + "'");
    rows.push_back({id, it->second});
  }
  return rows;
}

std::vector<std::string> train_annotation_comments(const CleanDataset& ds) {
  std::vector<std::string> ids;
  for (const auto& a : ds.annotations_in(Split::kTrain)) ids.push_back(a.comment_id);
  return ids;
}

void check_embeddings(const featurize::EmbeddingTable& table, std::span<const std::string> ids,
                      const fs::path& path) {
  std::size_t missing = 0;
  std::string first;
  for (const auto& id : ids) {
    if (!table.contains(id)) {
      if (missing++ == 0) first = id;
    }
  }
  if (missing > 0) {
    throw ConsistencyError(path.string() + ": no embedding for " + std::to_string(missing) +
                           " comment(s), first '" + first + "'");
  }
}

std::vector<std::string> map_keys(const std::map<std::string, std::string>& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

struct Variant {
  std::string name;
  std::string label;  // eval model name
  bool use_group, use_person;
};

Variant variant(const std::string& name) {
  if (name == "content") return {name, "dcn_content", false, false};
  if (name == "content_group") return {name, "dcn_content+group", true, false};
  if (name == "full") return {name, "dcn_content+group+person", true, true};
  throw ConfigError("unknown model variant '" + name + "' (content, content_group, full)");
}

std::vector<Variant> variants(const Config& c) {
  std::vector<Variant> out;
  for (const auto& v : c.get_list("model.variants")) out.push_back(variant(v));
  if (out.empty()) throw ConfigError("model.variants is empty");
  return out;
}

model::DcnConfig dcn_config(const Config& c, const Variant& v, std::uint64_t seed) {
  model::DcnConfig cfg;
  cfg.use_group = v.use_group;
  cfg.use_person = v.use_person;
  cfg.cross_layers = c.get_size("model.cross_layers");
  cfg.deep_widths = c.get_size_list("model.deep_widths");
  cfg.lr = c.get_double("model.lr");
  cfg.epochs = c.get_size("model.epochs");
  cfg.joint_epochs = c.get_size("model.joint_epochs");
  cfg.batch_size = c.get_size("model.batch_size");
  cfg.seed = seed;
  return cfg;
}

jury::JuryConfig jury_config(const Config& c, std::uint64_t seed) {
  jury::JuryConfig j;
  j.jury_size = c.get_size("jury.jury_size");
  j.majority_threshold = c.get_size("jury.majority_threshold");
  j.n_juries = c.get_size("jury.n_juries");
  const auto t = c.get_double_list("jury.thresholds");
  if (!t.empty()) j.verdict_thresholds = t;
  j.wild_threshold = c.get_double("jury.wild_threshold");
  j.master_seed = seed;
  as_config("jury", [&] {
    j.validate();
    return 0;
  });
  return j;
}

// ---------------------------------------------------------------- stages

void stage_synth(Stage& s) {
  const auto& c = s.config();
  annotstore::SynthParams p;
  p.n_workers = c.get_size("synth.n_workers");
  p.n_comments = c.get_size("synth.n_comments");
  p.annotations_per_worker = c.get_size("synth.annotations_per_worker");
  p.n_wild_comments = c.get_size("synth.n_wild_comments");
  for (const auto& item : c.get_list("synth.effects")) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("synth.effects: expected attribute:logit, got '" + item + "'");
    }
    const auto attr = config_attribute("synth.effects", item.substr(0, colon));
    const auto value = item.substr(colon + 1);
    std::size_t used = 0;
    try {
      p.effects[attr] = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw ConfigError("synth.effects: bad logit '" + value + "'");
    }
  }
  p.base_logit = c.get_double("synth.base_logit");
  p.latent_sd = c.get_double("synth.latent_sd");
  p.worker_noise_sd = c.get_double("synth.worker_noise_sd");
  p.balanced_attributes = c.get_bool("synth.balanced_attributes");
  p.attention_fail_rate = c.get_double("synth.attention_fail_rate");
  p.q_sub_no_rate = c.get_double("synth.q_sub_no_rate");
  p.always_positive_rate = c.get_double("synth.always_positive_rate");
  p.seed = s.seed();
  const auto pop = as_config("synth", [&] { return annotstore::synthesize_population(p); });

  annotstore::EmbeddingSynthParams ep;
  ep.dim = c.get_size("synth.embedding_dim");
  ep.signal = c.get_double("synth.embedding_signal");
  ep.noise_sd = c.get_double("synth.embedding_noise_sd");
  ep.seed = derive_seed(s.seed(), "embeddings");
  std::vector<double> latents;
  for (const auto& cm : pop.comments) latents.push_back(cm.latent);
  auto vectors =
      as_config("synth", [&] { return annotstore::synthesize_content_embeddings(latents, ep); });
  featurize::EmbeddingTable table;
  table.dim = ep.dim;
  for (std::size_t i = 0; i < pop.comments.size(); ++i) {
    table.vectors.emplace(pop.comments[i].id, std::move(vectors[i]));
  }

  std::vector<corpus::RawComment> annotated, wild;
  for (const auto& cm : pop.comments) {
    (cm.wild ? wild : annotated).push_back({cm.id, cm.text, std::nullopt, std::nullopt});
  }
  s.write("workers.csv", [&](std::ostream& o) { annotstore::write_workers(o, pop.workers); });
  s.write("annotations.csv",
          [&](std::ostream& o) { annotstore::write_annotations(o, pop.annotations); });
  s.write("comments.jsonl", [&](std::ostream& o) { corpus::write_comments(o, annotated); });
  s.write("wild.jsonl", [&](std::ostream& o) { corpus::write_comments(o, wild); });
  s.write("embeddings.embtab", [&](std::ostream& o) { featurize::write_embeddings(o, table); });
  s.write("population.json",
          [&](std::ostream& o) { o << annotstore::population_manifest(pop) << "\n"; });
  if (c.get_bool("synth.write_dictionary")) {
    s.write("dictionary.dic", [&](std::ostream& o) { o << synthetic_dictionary().to_text(); });
  }
  s.stats()["workers"] = pop.workers.size();
  s.stats()["annotated_comments"] = annotated.size();
  s.stats()["wild_comments"] = wild.size();
  s.stats()["annotations"] = pop.annotations.size();
}

void stage_filter_corpus(Stage& s) {
  const auto path = s.input("corpus");
  const auto lexicon = lexicon_for(s);
  const auto loaded = corpus::load_comments(path);
  const auto result = corpus::filter_corpus(loaded.comments, lexicon, s.seed(),
                                            s.config().get_size("corpus.sample_n"));
  s.write("filtered.jsonl", [&](std::ostream& o) { corpus::write_comments(o, result.sample); });
  s.write("matches.csv", [&](std::ostream& o) {
    csv::Writer w(o);
    w.row({"comment_id", "keywords", "excluded"});
    for (const auto& m : result.matches) {
      std::string kw;
      for (const auto& k : m.matched_keywords) kw += (kw.empty() ? "" : ";") + k;
      w.field(std::string_view(m.comment_id)).field(std::string_view(kw)).field(m.excluded ? 1 : 0);
      w.end_row();
    }
  });
  s.stats()["comments"] = loaded.comments.size();
  s.stats()["malformed_lines"] = loaded.skipped;
  s.stats()["survivors"] = result.survivors;
  s.stats()["sampled"] = result.sample.size();
}

void stage_disambiguate(Stage& s) {
  const auto labels_path = s.input("disambiguation");
  const auto bodies = comment_map(s.input("corpus"));
  const auto lexicon = lexicon_for(s);
  const auto table = csv::read_file(labels_path);
  const auto id_col = table.require_column("comment_id");
  const auto r1_col = table.require_column("rater_1");
  const auto r2_col = table.require_column("rater_2");
  std::vector<int> r1, r2;
  std::vector<corpus::DisambiguationItem> items;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    auto bit = [&](std::size_t col) {
      if (row.size() != table.header.size() || (row[col] != "0" && row[col] != "1")) {
        throw FormatError(labels_path.string() + " line " + std::to_string(table.line_numbers[i]) +
                          ": rater labels must be 0 or 1");
      }
      return row[col] == "1" ? 1 : 0;
    };
    r1.push_back(bit(r1_col));
    r2.push_back(bit(r2_col));
    auto body = bodies.find(row[id_col]);
    if (body == bodies.end()) {
      throw ConsistencyError("comment '" + row[id_col] + "' is not in the corpus");
    }
    corpus::RawComment rc{row[id_col], body->second, std::nullopt, std::nullopt};
    items.push_back({rc.id, corpus::match_keywords(rc, lexicon).matched_keywords,
                     r1.back() == 1 && r2.back() == 1});
  }
  const auto kappa = corpus::cohen_kappa(r1, r2);
  const auto overrides_list = s.config().get_list("corpus.retain_overrides");
  const std::set<std::string> overrides(overrides_list.begin(), overrides_list.end());
  const auto report = corpus::disambiguation_report(items, lexicon.keywords, overrides);
  s.write("disambiguation.csv", [&](std::ostream& o) {
    csv::Writer w(o);
    w.row({"keyword", "occurrences", "substance_count", "substance_fraction", "retain",
           "manual_override"});
    for (const auto& k : report) {
      w.field(std::string_view(k.keyword))
          .field(k.occurrences)
          .field(k.substance_count)
          .field(k.substance_fraction)
          .field(k.retain ? 1 : 0);
      if (k.manual_override) {
        w.field(*k.manual_override ? 1 : 0);
      } else {
        w.field(std::string_view("NA"));
      }
      w.end_row();
    }
  });
  s.write("rater_agreement.csv", [&](std::ostream& o) {
    csv::Writer w(o);
    w.row({"n", "agreement_rate", "kappa", "degenerate"});
    w.field(r1.size()).field(kappa.agreement_rate);
    if (kappa.degenerate) {
      w.field(std::string_view("NA"));
    } else {
      w.field(kappa.kappa);
    }
    w.field(kappa.degenerate ? 1 : 0);
    w.end_row();
  });
}

void stage_clean(Stage& s) {
  const auto workers_path = s.input("workers", "workers.csv");
  const auto annotations_path = s.input("annotations", "annotations.csv");
  const auto comments = comment_map(s.input("comments", "comments.jsonl"));
  auto workers = annotstore::load_workers(workers_path);
  auto annotations = annotstore::load_annotations(annotations_path);
  annotstore::QcOptions qc;
  qc.max_annotations_per_comment = s.config().get_size("qc.max_annotations_per_comment");
  qc.max_positive_fraction = s.config().get_double("qc.max_positive_fraction");
  const auto result =
      annotstore::quality_filter(workers.records, annotations.records, comments, qc);
  s.write("row_errors.csv", [&](std::ostream& o) {
    csv::Writer w(o);
    w.row({"file", "line", "message"});
    auto emit = [&](const fs::path& p, const std::vector<annotstore::RowError>& errors) {
      for (const auto& e : errors) {
        w.field(std::string_view(p.filename().string())).field(e.line).field(
            std::string_view(e.message));
        w.end_row();
      }
    };
    emit(workers_path, workers.errors);
    emit(annotations_path, annotations.errors);
  });
  s.write("funnel.csv", [&](std::ostream& o) { annotstore::write_funnel(o, result.funnel); });
  s.write("labels.csv",
          [&](std::ostream& o) { annotstore::write_labels(o, result.dataset.annotations); });
  s.write("workers_clean.csv", [&](std::ostream& o) {
    annotstore::write_workers(o, annotstore::worker_list(result.dataset));
  });
  s.write("comments_clean.jsonl",
          [&](std::ostream& o) { write_comment_map(o, result.dataset.comments); });
  s.stats()["row_errors"] = workers.errors.size() + annotations.errors.size();
  const auto& last = result.funnel.back();
  s.stats()["workers"] = last.workers;
  s.stats()["comments"] = last.comments;
  s.stats()["annotations"] = last.annotations;
}

void stage_split(Stage& s) {
  auto ds = load_clean(s, false);
  ds.split = annotstore::split_train_test(ds, s.config().get_double("split.train_frac"), s.seed());
  s.write("split.csv", [&](std::ostream& o) { annotstore::write_split(o, ds.split); });
  std::size_t train = 0;
  for (const auto& [id, side] : ds.split) train += side == Split::kTrain ? 1 : 0;
  s.stats()["train_comments"] = train;
  s.stats()["test_comments"] = ds.split.size() - train;
  s.stats()["train_annotations"] = ds.annotations_in(Split::kTrain).size();
  s.stats()["test_annotations"] = ds.annotations_in(Split::kTest).size();
}

void stage_featurize(Stage& s) {
  const auto ds = load_clean(s, true);
  const auto ids = map_keys(ds.comments);
  const auto rows = text_rows(ds.comments, ids);
  const auto fit = train_annotation_comments(ds);
  const double min_frac = s.config().get_double("featurize.min_doc_frac");

  const auto unigrams =
      featurize::standardize(featurize::unigram_features(rows, fit, min_frac), fit);
  s.write("unigram.csv", [&](std::ostream& o) { featurize::write_matrix(o, unigrams); });
  s.write("unigram_standardization.csv",
          [&](std::ostream& o) { featurize::write_standardization(o, unigrams); });
  s.stats()["unigram_vocabulary"] = unigrams.cols();

  if (auto dic = s.optional_input("dictionary", "dictionary.dic")) {
    const auto lexicon = featurize::DictionaryLexicon::load(dic->string());
    const auto dict = featurize::standardize(featurize::dictionary_features(rows, lexicon), fit);
    s.write("dictionary.csv", [&](std::ostream& o) { featurize::write_matrix(o, dict); });
    s.write("dictionary_standardization.csv",
            [&](std::ostream& o) { featurize::write_standardization(o, dict); });
    s.stats()["dictionary_categories"] = dict.cols();
  }

  const auto emb_path = s.input("embeddings", "embeddings.embtab");
  const auto table = featurize::load_embeddings(emb_path);
  check_embeddings(table, ids, emb_path);
  s.stats()["embedding_dim"] = table.dim;
  s.stats()["embedding_count"] = table.vectors.size();
}

void stage_train(Stage& s) {
  const auto ds = load_clean(s, true);
  const auto emb_path = s.input("embeddings", "embeddings.embtab");
  const auto table = featurize::load_embeddings(emb_path);
  const auto emb_hash = sha256_file(emb_path);
  const auto labels_hash = sha256_file(s.artifact("labels.csv"));
  const auto split_hash = sha256_file(s.artifact("split.csv"));
  for (const auto& v : variants(s.config())) {
    const auto cfg = dcn_config(s.config(), v, s.seed());
    s.log("training " + v.name);
    auto fit = model::fit_dcn(ds, table, cfg, [&](const model::EpochLog& e) {
      std::ostringstream msg;
      msg << v.name << " epoch " << e.epoch << " (" << e.phase << ") loss " << e.mean_loss;
      s.log(msg.str());
    });
    fit.model.metadata["variant"] = v.name;
    fit.model.metadata["embeddings_sha256"] = emb_hash;
    fit.model.metadata["labels_sha256"] = labels_hash;
    fit.model.metadata["split_sha256"] = split_hash;
    s.write("checkpoint_" + v.name + ".dcn",
            [&](std::ostream& o) { model::write_checkpoint(o, fit.model); });
    s.write("training_log_" + v.name + ".csv",
            [&](std::ostream& o) { model::write_training_log(o, fit.log); });
    s.stats()["final_loss_" + v.name] = fit.log.empty() ? 0.0 : fit.log.back().mean_loss;
  }
}

// Annotation-level design matrix: comment features, plus the worker group
// vector when `with_group`.
Eigen::MatrixXd design(const featurize::FeatureMatrix& m, const model::DcnModel& roster,
                       std::span<const std::string> comment_ids,
                       std::span<const std::string> worker_ids, bool with_group) {
  const Eigen::Index p = static_cast<Eigen::Index>(m.cols()) + (with_group ? model::kGroupDim : 0);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(comment_ids.size()), p);
  for (std::size_t i = 0; i < comment_ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X.row(r).head(static_cast<Eigen::Index>(m.cols())) =
        m.values.row(static_cast<Eigen::Index>(m.row_index(comment_ids[i])));
    if (with_group) {
      const auto& g = roster.workers[roster.worker_index(worker_ids[i])].group;
      for (std::size_t k = 0; k < model::kGroupDim; ++k) {
        X(r, static_cast<Eigen::Index>(m.cols() + k)) = g[k];
      }
    }
  }
  return X;
}

void stage_eval(Stage& s) {
  const auto ds = load_clean(s, true);
  const auto table = featurize::load_embeddings(s.input("embeddings", "embeddings.embtab"));
  const double threshold = s.config().get_double("model.threshold");
  const auto vs = variants(s.config());
  std::vector<model::DcnModel> models;
  for (const auto& v : vs) {
    models.push_back(model::load_checkpoint(s.require(s.artifact("checkpoint_" + v.name + ".dcn"))));
  }
  const auto& roster = models.front();
  for (const auto& m : models) {
    if (m.workers.size() != roster.workers.size()) {
      throw ConsistencyError("checkpoints were trained on different rosters");
    }
  }
  // Every model is scored on the test annotations of roster workers.
  const auto test = model::make_examples(roster, ds, Split::kTest, table, true);
  const auto train = model::make_examples(roster, ds, Split::kTrain, table);
  std::vector<int> y_test, y_train;
  for (const auto& e : test.examples) y_test.push_back(e.label);
  for (const auto& e : train.examples) y_train.push_back(e.label);

  std::vector<model::EvalRow> rows;
  std::vector<bool> converged;
  auto add = [&](std::string name, const Eigen::VectorXd& scores, bool ok) {
    rows.push_back({std::move(name), model::classification_metrics(
                                         std::span(scores.data(), scores.size()), y_test, threshold)});
    converged.push_back(ok);
  };

  const auto mfc = model::baseline_mfc(y_train);
  add("most_frequent_class",
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(y_test.size()), mfc.score()), true);

  model::LogregOptions lo;
  lo.l2_c = s.config().get_double("baseline.l2_c");
  lo.tolerance = s.config().get_double("baseline.tolerance");
  lo.max_iterations = s.config().get_size("baseline.max_iterations");
  auto logreg = [&](const featurize::FeatureMatrix& m, const std::string& name, bool with_group) {
    const auto fit = model::baseline_logreg(
        design(m, roster, train.comment_ids, train.worker_ids, with_group), y_train, lo);
    add(name, fit.predict(design(m, roster, test.comment_ids, test.worker_ids, with_group)),
        fit.converged);
  };
  if (fs::is_regular_file(s.artifact("dictionary.csv"))) {
    const auto m = featurize::load_matrix(s.require(s.artifact("dictionary.csv")).string());
    logreg(m, "dictionary_logreg", false);
    logreg(m, "dictionary_logreg+dem", true);
  }
  const auto uni = featurize::load_matrix(s.require(s.artifact("unigram.csv")).string());
  logreg(uni, "unigram_logreg[substitutes_extra_trees]", false);
  logreg(uni, "unigram_logreg+dem[substitutes_extra_trees]", true);

  for (std::size_t i = 0; i < vs.size(); ++i) {
    const auto& m = models[i];
    std::vector<const model::TrainExample*> ptrs;
    for (const auto& e : test.examples) ptrs.push_back(&e);
    const auto logits = model::forward(m.config, m.params, model::build_inputs(m.config, ptrs));
    Eigen::VectorXd p(logits.size());
    for (Eigen::Index k = 0; k < logits.size(); ++k) p[k] = model::sigmoid(logits[k]);
    add(vs[i].label, p, true);
  }

  s.write("eval.csv", [&](std::ostream& o) { model::write_eval_report(o, rows); });
  s.write("eval_details.csv", [&](std::ostream& o) {
    csv::Writer w(o);
    w.row({"model", "n", "accuracy", "f1", "macro_f1", "auc", "converged"});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i].metrics;
      w.field(std::string_view(rows[i].model)).field(r.n).field(r.accuracy);
      if (r.f1_defined) {
        w.field(r.f1);
      } else {
        w.field(std::string_view("NA"));
      }
      w.field(r.macro_f1);
      if (r.auc_defined) {
        w.field(r.auc);
      } else {
        w.field(std::string_view("NA"));
      }
      w.field(converged[i] ? 1 : 0);
      w.end_row();
    }
  });
  s.stats()["test_annotations"] = y_test.size();
  s.stats()["skipped_unknown_workers"] = test.skipped_unknown_workers;
  s.stats()["substitution"] =
      "unigram_logreg[substitutes_extra_trees]: logistic regression replaces the Extra Trees "
      "unigram baseline";
}

struct JuryInputs {
  model::DcnModel model;
  std::vector<annotstore::WorkerProfile> pool;  // roster order
  std::vector<std::string> ids;
  jury::VoteMatrix votes;
};

JuryInputs jury_inputs(Stage& s, bool wild_only) {
  JuryInputs in;
  const auto v = variant(s.config().get("jury.variant"));
  in.model = model::load_checkpoint(s.require(s.artifact("checkpoint_" + v.name + ".dcn")));
  const auto workers_path = s.require(s.artifact("workers_clean.csv"));
  std::map<std::string, annotstore::WorkerProfile> by_id;
  for (auto& w : take_records(annotstore::load_workers(workers_path), workers_path)) {
    by_id.emplace(w.worker_id, std::move(w));
  }
  for (const auto& entry : in.model.workers) {
    auto it = by_id.find(entry.worker_id);
    if (it == by_id.end()) {
      throw ConsistencyError("roster worker '" + entry.worker_id + "' missing from " +
                             workers_path.string());
    }
    in.pool.push_back(it->second);
  }
  const auto source = wild_only ? std::string("wild") : s.config().get("jury.sweep_comments");
  if (source == "wild") {
    in.ids = comment_ids(s.input("wild", "wild.jsonl"));
  } else if (source == "test") {
    for (const auto& [id, side] : annotstore::read_split(s.require(s.artifact("split.csv")))) {
      if (side == Split::kTest) in.ids.push_back(id);
    }
  } else {
    throw ConfigError("jury.sweep_comments must be wild or test, got '" + source + "'");
  }
  const auto emb_path = s.input("embeddings", "embeddings.embtab");
  const auto table = featurize::load_embeddings(emb_path);
  check_embeddings(table, in.ids, emb_path);
  in.votes = vote_matrix(in.model, table, in.ids);
  s.stats()["comments"] = in.ids.size();
  s.stats()["pool"] = in.pool.size();
  return in;
}

void stage_jury_sweep(Stage& s) {
  const auto jc = jury_config(s.config(), s.seed());
  const auto attributes = config_attributes(s.config(), "jury.attributes");
  const auto in = jury_inputs(s, false);
  std::vector<jury::SweepRow> rows;
  for (auto a : attributes) {
    s.log("sweeping " + std::string(annotstore::attribute_name(a)));
    const auto strata = jury::partition(in.pool, a);
    auto part = jury::sweep_composition(in.votes, in.ids, strata, jc, s.threads());
    rows.insert(rows.end(), part.begin(), part.end());
    s.stats()["pool_" + std::string(annotstore::attribute_name(a))] = {
        {"positive", strata.positive.size()}, {"negative", strata.negative.size()}};
  }
  s.write("sweep.csv", [&](std::ostream& o) { jury::write_sweep(o, rows); });
}

void stage_wild_label(Stage& s) {
  const auto jc = jury_config(s.config(), s.seed());
  const auto a = config_attribute("jury.wild_attribute", s.config().get("jury.wild_attribute"));
  const auto in = jury_inputs(s, true);
  const auto labels =
      jury::label_in_wild(in.votes, in.ids, jury::partition(in.pool, a), jc, s.threads());
  s.write("wild_labels.csv", [&](std::ostream& o) { jury::write_wild_labels(o, labels); });
  std::size_t a1 = 0, b1 = 0;
  for (const auto& l : labels) {
    a1 += static_cast<std::size_t>(l.label_a);
    b1 += static_cast<std::size_t>(l.label_b);
  }
  s.stats()["attribute"] = annotstore::attribute_name(a);
  s.stats()["label_a_positive"] = a1;
  s.stats()["label_b_positive"] = b1;
}

void stage_dla(Stage& s) {
  std::vector<jury::WildLabel> wild;
  {
    std::ifstream in(s.require(s.artifact("wild_labels.csv")), std::ios::binary);
    wild = jury::read_wild_labels(in);
  }
  const auto texts = comment_map(s.input("wild", "wild.jsonl"));
  std::optional<featurize::DictionaryLexicon> lexicon;
  if (auto dic = s.optional_input("dictionary", "dictionary.dic")) {
    lexicon = featurize::DictionaryLexicon::load(dic->string());
  }
  std::map<std::string, int> a, b;
  for (const auto& l : wild) {
    a[l.comment_id] = l.label_a;
    b[l.comment_id] = l.label_b;
  }
  const auto sets = stats::agree_disagree_labels(a, b);
  const double q = s.config().get_double("dla.q");
  const double min_frac = s.config().get_double("dla.min_doc_frac");

  auto family = [&](const std::string& name, const stats::LabeledSet& set) {
    std::size_t n1 = 0;
    for (int y : set.labels) n1 += static_cast<std::size_t>(y);
    const std::size_t n0 = set.labels.size() - n1;
    const bool usable = n0 >= 2 && n1 >= 2;
    s.stats()[name] = {{"n0", n0}, {"n1", n1}, {"analyzed", usable}};
    const auto rows = text_rows(texts, set.ids);
    auto run = [&](const std::string& kind, auto make) {
      std::vector<stats::DlaResult> results;
      if (usable) {
        const auto m = featurize::standardize(make(), set.ids);
        results = stats::dla(m, set.ids, set.labels, q, s.threads());
      }
      s.write("dla_" + name + "_" + kind + ".csv",
              [&](std::ostream& o) { stats::write_dla(o, results); });
      std::vector<stats::DlaResult> significant;
      for (const auto& r : results) {
        if (r.significant) significant.push_back(r);
      }
      s.write("dla_" + name + "_" + kind + "_significant.csv",
              [&](std::ostream& o) { stats::write_dla(o, significant); });
    };
    run("unigram", [&] { return featurize::unigram_features(rows, set.ids, min_frac); });
    if (lexicon) run("dictionary", [&] { return featurize::dictionary_features(rows, *lexicon); });
  };
  family("agree", sets.agree);
  family("disagree", sets.disagree);
}

void stage_agreement(Stage& s) {
  const auto ds = load_clean(s, false);
  s.write("agreement.csv", [&](std::ostream& o) {
    csv::Writer w(o);
    w.row({"subgroup", "value", "alpha", "units", "pairable_values"});
    // Subgroups without co-rated comments or without label variation get NA.
    auto emit = [&](std::string_view group, std::string_view value,
                    std::optional<std::pair<Attribute, int>> subgroup) {
      w.field(group).field(value);
      try {
        const auto r = annotstore::krippendorff_alpha(ds, subgroup);
        w.field(r.alpha).field(r.units).field(r.pairable_values);
      } catch (const NumericError&) {
        w.field(std::string_view("NA")).field(std::size_t{0}).field(std::size_t{0});
      }
      w.end_row();
    };
    emit("all", "NA", std::nullopt);
    for (auto a : annotstore::kAllAttributes) {
      for (int v : {1, 0}) {
        emit(annotstore::attribute_name(a), v ? "1" : "0", std::pair{a, v});
      }
    }
  });
  s.write("label_rates.csv", [&](std::ostream& o) {
    csv::Writer w(o);
    w.row({"attribute", "rate_1", "rate_0", "n_1", "n_0", "t", "df", "p"});
    for (auto a : annotstore::kAllAttributes) {
      const auto r = annotstore::group_rate_ttest(ds, a);
      w.field(annotstore::attribute_name(a))
          .field(r.rate_1)
          .field(r.rate_0)
          .field(r.test.n_1)
          .field(r.test.n_0)
          .field(r.test.t)
          .field(r.test.df)
          .field(r.test.p);
      w.end_row();
    }
  });
  s.write("demographics.csv", [&](std::ostream& o) {
    annotstore::write_demographics(o,
                                   annotstore::demographic_summary(annotstore::worker_list(ds)));
  });
  s.stats()["ttest_unit"] = "annotation";
}

void stage_report(Stage& s, const fs::path& out) {
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(out)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("manifest_") && name.ends_with(".json") && name != "manifest_report.json") {
      manifests.push_back(entry.path());
    }
  }
  std::sort(manifests.begin(), manifests.end());
  // path -> (producing stage, hash at production)
  std::map<std::string, std::pair<std::string, std::string>> produced;
  std::vector<json> loaded;
  for (const auto& p : manifests) {
    json m;
    try {
      m = json::parse(read_text_file(s.require(p)));
    } catch (const json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
    for (const auto& o : m.at("outputs")) {
      produced[o.at("path").get<std::string>()] = {m.at("stage").get<std::string>(),
                                                   o.at("sha256").get<std::string>()};
    }
    loaded.push_back(std::move(m));
  }
  json problems = json::array();
  json stages = json::array();
  for (const auto& m : loaded) {
    const auto stage = m.at("stage").get<std::string>();
    json entry = {{"stage", stage}, {"inputs", json::array()}, {"outputs", m.at("outputs")}};
    for (const auto& i : m.at("inputs")) {
      const auto path = i.at("path").get<std::string>();
      const auto hash = i.at("sha256").get<std::string>();
      json link = {{"path", path}, {"sha256", hash}};
      auto it = produced.find(path);
      if (it != produced.end()) {
        link["produced_by"] = it->second.first;
        if (it->second.second != hash) {
          problems.push_back(stage + ": input " + path + " differs from the " + it->second.first +
                             " output");
        }
      }
      entry["inputs"].push_back(link);
    }
    for (const auto& o : m.at("outputs")) {
      const auto path = out / o.at("path").get<std::string>();
      if (!fs::is_regular_file(path)) {
        problems.push_back(stage + ": output " + o.at("path").get<std::string>() + " is missing");
      } else if (sha256_file(path) != o.at("sha256").get<std::string>()) {
        problems.push_back(stage + ": output " + o.at("path").get<std::string>() +
                           " changed since it was written");
      }
    }
    stages.push_back(std::move(entry));
  }
  json report;
  report["stages"] = stages;
  report["chain_ok"] = problems.empty();
  report["problems"] = problems;
  report["substitutions"] = json::array(
      {"unigram_logreg[substitutes_extra_trees]: logistic regression over unigrams replaces the "
       "Extra Trees unigram baseline"});
  s.write("report.json", [&](std::ostream& o) { o << report.dump(2) << "\n"; });
  s.stats()["stages"] = loaded.size();
  s.stats()["chain_ok"] = problems.empty();
}

}  // namespace

jury::VoteMatrix vote_matrix(const model::DcnModel& model, const featurize::EmbeddingTable& content,
                             std::span<const std::string> comment_ids) {
  jury::VoteMatrix votes;
  votes.reserve(comment_ids.size());
  for (const auto& id : comment_ids) {
    const Eigen::VectorXd p = model::predict_all_workers(model, model::content_vector(content, id));
    votes.push_back(jury::juror_votes(std::span(p.data(), static_cast<std::size_t>(p.size()))));
  }
  return votes;
}

featurize::DictionaryLexicon synthetic_dictionary() {
  return featurize::DictionaryLexicon::parse(R"(%
substance
weed
meth
heroin
drug*
cocaine
xanax
opioid*
pot
%
stigma_terms
junkie*
addict
crackhead*
criminal*
disgust*
trash
lazy
deserve*
%
support
recover*
support*
help*
treat*
health*
care*
hope*
%
pronoun_i
i
%
pronoun_they
they
people
%
exclaim
!!!
)");
}

void run_stage(std::string_view stage, const RunContext& ctx) {
  if (!is_stage(stage)) throw ConfigError("unknown stage '" + std::string(stage) + "'");
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out)) {
    throw IoError("cannot create output directory " + ctx.out.string());
  }
  Stage s(ctx, std::string(stage));
  s.log("start");
  if (stage == "synth") stage_synth(s);
  else if (stage == "filter-corpus") stage_filter_corpus(s);
  else if (stage == "disambiguate") stage_disambiguate(s);
  else if (stage == "clean") stage_clean(s);
  else if (stage == "split") stage_split(s);
  else if (stage == "featurize") stage_featurize(s);
  else if (stage == "train") stage_train(s);
  else if (stage == "eval") stage_eval(s);
  else if (stage == "jury-sweep") stage_jury_sweep(s);
  else if (stage == "wild-label") stage_wild_label(s);
  else if (stage == "dla") stage_dla(s);
  else if (stage == "agreement") stage_agreement(s);
  else stage_report(s, ctx.out);
  s.finish();
}

}  // namespace stigma::pipeline
