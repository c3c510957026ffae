#include "stigma/featurize/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "stigma/common/csv.hpp"
#include "stigma/common/encoding.hpp"
#include "stigma/common/error.hpp"
#include "stigma/featurize/tokenizer.hpp"

namespace stigma::featurize {

std::size_t FeatureMatrix::row_index(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) throw ArgumentError("no feature row for key '" + std::string(key) + "'");
  return it->second;
}

bool FeatureMatrix::has_row(std::string_view key) const {
  return index_.contains(std::string(key));
}

Eigen::VectorXd FeatureMatrix::row(std::string_view key) const {
  return values.row(static_cast<Eigen::Index>(row_index(key))).transpose();
}

void FeatureMatrix::reindex() {
  index_.clear();
  index_.reserve(row_keys.size());
  for (std::size_t i = 0; i < row_keys.size(); ++i) {
    if (!index_.emplace(row_keys[i], i).second) {
      throw ConsistencyError("duplicate feature row key '" + row_keys[i] + "'");
    }
  }
}

void FeatureMatrix::validate() const {
  if (static_cast<std::size_t>(values.rows()) != row_keys.size() ||
      static_cast<std::size_t>(values.cols()) != feature_names.size()) {
    throw ConsistencyError("feature matrix shape does not match names and keys");
  }
  if (index_.size() != row_keys.size()) throw ConsistencyError("feature matrix index is stale");
  if (standardization) {
    const auto& s = *standardization;
    if (static_cast<std::size_t>(s.mean.size()) != cols() ||
        static_cast<std::size_t>(s.sd.size()) != cols()) {
      throw ConsistencyError("standardization parameters do not match feature count");
    }
  }
}

namespace {

FeatureMatrix empty_matrix(std::span<const TextRow> rows, std::vector<std::string> names) {
  FeatureMatrix m;
  m.feature_names = std::move(names);
  m.row_keys.reserve(rows.size());
  for (const auto& r : rows) m.row_keys.push_back(r.key);
  m.values = RowMatrix::Zero(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(m.feature_names.size()));
  m.reindex();
  return m;
}

}  // namespace

std::vector<std::string> unigram_vocabulary(std::span<const std::vector<std::string>> fit,
                                            double min_doc_frac) {
  if (fit.empty()) throw ArgumentError("unigram vocabulary needs at least one fit row");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& tokens : fit) {
    std::unordered_set<std::string_view> seen(tokens.begin(), tokens.end());
    for (auto t : seen) ++df[std::string(t)];
  }
  const double need = min_doc_frac * static_cast<double>(fit.size());
  std::vector<std::string> vocab;
  for (const auto& [tok, count] : df) {
    if (static_cast<double>(count) >= need - 1e-9) vocab.push_back(tok);
  }
  std::sort(vocab.begin(), vocab.end());
  return vocab;
}

FeatureMatrix unigram_features(std::span<const TextRow> rows,
                               std::span<const std::string> fit_rows, double min_doc_frac) {
  std::unordered_map<std::string_view, std::size_t> by_key;
  for (std::size_t i = 0; i < rows.size(); ++i) by_key.emplace(rows[i].key, i);
  std::vector<std::vector<std::string>> fit;
  fit.reserve(fit_rows.size());
  for (const auto& key : fit_rows) {
    auto it = by_key.find(key);
    if (it == by_key.end()) throw ArgumentError("fit row '" + key + "' is not among the rows");
    fit.push_back(tokenize(rows[it->second].text));
  }
  const auto vocab = unigram_vocabulary(fit, min_doc_frac);
  return encode_unigrams(rows, vocab);
}

FeatureMatrix encode_unigrams(std::span<const TextRow> rows,
                              std::span<const std::string> vocabulary) {
  std::unordered_map<std::string, Eigen::Index> col;
  for (std::size_t j = 0; j < vocabulary.size(); ++j) {
    col.emplace(vocabulary[j], static_cast<Eigen::Index>(j));
  }
  auto m = empty_matrix(rows, {vocabulary.begin(), vocabulary.end()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto tokens = tokenize(rows[i].text);
    if (tokens.empty()) continue;
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (const auto& t : tokens) {
      auto it = col.find(t);
      if (it != col.end()) m.values(static_cast<Eigen::Index>(i), it->second) += inv;
    }
  }
  return m;
}

void DictionaryLexicon::validate() const {
  if (order.size() != categories.size()) {
    throw FormatError("dictionary category order does not match categories");
  }
  for (const auto& name : order) {
    auto it = categories.find(name);
    if (it == categories.end()) throw FormatError("dictionary category '" + name + "' missing");
    if (name.empty()) throw FormatError("empty dictionary category name");
    for (const auto& e : it->second) {
      if (e.empty() || e == "*") {
        throw FormatError("empty entry in dictionary category '" + name + "'");
      }
      if (e.find('*') != e.size() - 1 && e.find('*') != std::string::npos) {
        throw FormatError("dictionary entry '" + e + "': '*' allowed only at the end");
      }
      for (char c : e) {
        if (c >= 'A' && c <= 'Z') throw FormatError("dictionary entry '" + e + "' is not lowercase");
      }
    }
  }
}

DictionaryLexicon DictionaryLexicon::parse(std::string_view text) {
  DictionaryLexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  bool in_block = false;
  std::vector<std::string>* entries = nullptr;
  bool expect_name = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::vector<std::string> fields;
    for (std::string w; words >> w;) fields.push_back(w);
    if (fields.empty()) continue;
    if (fields.size() == 1 && fields[0] == "%") {
      expect_name = true;
      continue;
    }
    if (expect_name) {
      if (fields.size() != 1) {
        throw FormatError("dictionary line " + std::to_string(line_no) +
                          ": category name must be a single word");
      }
      auto [it, fresh] = lex.categories.emplace(fields[0], std::vector<std::string>{});
      if (!fresh) throw FormatError("duplicate dictionary category '" + fields[0] + "'");
      lex.order.push_back(fields[0]);
      in_block = true;
      entries = &it->second;
      expect_name = false;
      continue;
    }
    if (!in_block) {
      throw FormatError("dictionary line " + std::to_string(line_no) +
                        ": entry before the first '%' block");
    }
    for (auto& f : fields) entries->push_back(std::move(f));
  }
  if (expect_name) throw FormatError("dictionary ends with '%' and no category name");
  lex.validate();
  return lex;
}

DictionaryLexicon DictionaryLexicon::load(const std::string& path) {
  return parse(read_text_file(path));
}

std::string DictionaryLexicon::to_text() const {
  std::string out;
  for (const auto& name : order) {
    out += "%\n" + name + "\n";
    for (const auto& e : categories.at(name)) out += e + "\n";
  }
  return out;
}

bool DictionaryLexicon::matches(const std::string& category, std::string_view token) const {
  for (const auto& e : categories.at(category)) {
    if (e.back() == '*') {
      if (token.starts_with(std::string_view(e).substr(0, e.size() - 1))) return true;
    } else if (token == e) {
      return true;
    }
  }
  return false;
}

FeatureMatrix dictionary_features(std::span<const TextRow> rows, const DictionaryLexicon& lexicon) {
  lexicon.validate();
  auto m = empty_matrix(rows, lexicon.order);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto tokens = tokenize(rows[i].text);
    if (tokens.empty()) continue;
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (const auto& t : tokens) {
      for (std::size_t j = 0; j < lexicon.order.size(); ++j) {
        if (lexicon.matches(lexicon.order[j], t)) {
          m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += inv;
        }
      }
    }
  }
  return m;
}

FeatureMatrix standardize(const FeatureMatrix& matrix, std::span<const std::string> fit_rows) {
  if (matrix.standardization) throw StateError("feature matrix is already standardized");
  if (fit_rows.empty()) throw ArgumentError("standardize needs at least one fit row");
  const auto p = static_cast<Eigen::Index>(matrix.cols());
  Standardization s;
  s.fit_rows = fit_rows.size();
  s.mean = Eigen::VectorXd::Zero(p);
  for (const auto& key : fit_rows) s.mean += matrix.values.row(matrix.row_index(key)).transpose();
  s.mean /= static_cast<double>(fit_rows.size());
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(p);
  for (const auto& key : fit_rows) {
    ss += (matrix.values.row(matrix.row_index(key)).transpose() - s.mean).array().square().matrix();
  }
  s.sd = (ss / static_cast<double>(fit_rows.size())).array().sqrt();
  // Rounding noise on a constant column must not produce a tiny nonzero SD.
  for (Eigen::Index j = 0; j < p; ++j) {
    if (s.sd[j] <= 1e-12 * std::max(1.0, std::abs(s.mean[j]))) s.sd[j] = 0.0;
  }
  return apply_standardization(matrix, s);
}

FeatureMatrix apply_standardization(const FeatureMatrix& matrix, const Standardization& params) {
  if (matrix.standardization) throw StateError("feature matrix is already standardized");
  const auto p = static_cast<Eigen::Index>(matrix.cols());
  if (params.mean.size() != p || params.sd.size() != p) {
    throw ConsistencyError("standardization parameters do not match feature count");
  }
  FeatureMatrix out = matrix;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (params.sd[j] == 0.0) {
      out.values.col(j).setZero();
    } else {
      out.values.col(j) = (out.values.col(j).array() - params.mean[j]) / params.sd[j];
    }
  }
  out.standardization = params;
  return out;
}

void write_matrix(std::ostream& out, const FeatureMatrix& matrix) {
  csv::Writer w(out);
  w.field(std::string_view("row_key"));
  for (const auto& n : matrix.feature_names) w.field(std::string_view(n));
  w.end_row();
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    w.field(std::string_view(matrix.row_keys[i]));
    for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) {
      w.field(matrix.values(static_cast<Eigen::Index>(i), j));
    }
    w.end_row();
  }
}

FeatureMatrix read_matrix(std::istream& in) {
  const auto table = csv::read(in);
  if (table.header.empty() || table.header[0] != "row_key") {
    throw FormatError("feature matrix CSV must start with a row_key column");
  }
  FeatureMatrix m;
  m.feature_names.assign(table.header.begin() + 1, table.header.end());
  m.values.resize(static_cast<Eigen::Index>(table.rows.size()),
                  static_cast<Eigen::Index>(m.feature_names.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != table.header.size()) {
      throw FormatError("feature matrix line " + std::to_string(table.line_numbers[i]) +
                        ": expected " + std::to_string(table.header.size()) + " fields");
    }
    m.row_keys.push_back(row[0]);
    for (std::size_t j = 1; j < row.size(); ++j) {
      char* end = nullptr;
      const double v = std::strtod(row[j].c_str(), &end);
      if (row[j].empty() || *end != '\0' || !std::isfinite(v)) {
        throw FormatError("feature matrix line " + std::to_string(table.line_numbers[i]) +
                          ": bad value '" + row[j] + "'");
      }
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = v;
    }
  }
  m.reindex();
  return m;
}

void save_matrix(const std::string& path, const FeatureMatrix& matrix) {
  std::ostringstream out;
  write_matrix(out, matrix);
  write_text_file(path, out.str());
}

FeatureMatrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature matrix '" + path + "'");
  return read_matrix(in);
}

void write_standardization(std::ostream& out, const FeatureMatrix& matrix) {
  if (!matrix.standardization) throw StateError("feature matrix is not standardized");
  const auto& s = *matrix.standardization;
  csv::Writer w(out);
  w.row({"feature", "mean", "sd"});
  for (std::size_t j = 0; j < matrix.cols(); ++j) {
    w.field(std::string_view(matrix.feature_names[j]))
        .field(s.mean[static_cast<Eigen::Index>(j)])
        .field(s.sd[static_cast<Eigen::Index>(j)]);
    w.end_row();
  }
}

}  // namespace stigma::featurize
