#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stigma::featurize {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // population SD; 0 marks a zero-variance feature
  std::string fitted_on = "train";
  std::size_t fit_rows = 0;
};

struct FeatureMatrix {
  std::vector<std::string> feature_names;
  std::vector<std::string> row_keys;
  RowMatrix values;  // row_keys.size() x feature_names.size()
  std::optional<Standardization> standardization;

  std::size_t rows() const { return row_keys.size(); }
  std::size_t cols() const { return feature_names.size(); }
  // Throws ArgumentError for an unknown key.
  std::size_t row_index(std::string_view key) const;
  bool has_row(std::string_view key) const;
  Eigen::VectorXd row(std::string_view key) const;
  // Rebuilds the key index; call after editing row_keys directly.
  void reindex();
  // Throws ConsistencyError when shapes disagree or keys repeat.
  void validate() const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct TextRow {
  std::string key;
  std::string text;
};

// Vocabulary of tokens whose document frequency among `fit` is at least
// min_doc_frac, sorted.
std::vector<std::string> unigram_vocabulary(std::span<const std::vector<std::string>> fit,
                                            double min_doc_frac);

/// Relative-frequency unigram matrix. The vocabulary comes from the rows
/// whose keys are listed in `fit_rows` only; every row is then encoded as
/// count / total tokens (all zeros for empty text).
FeatureMatrix unigram_features(std::span<const TextRow> rows,
                               std::span<const std::string> fit_rows,
                               double min_doc_frac = 0.005);

// Encodes rows against a fixed vocabulary.
FeatureMatrix encode_unigrams(std::span<const TextRow> rows,
                              std::span<const std::string> vocabulary);

struct DictionaryLexicon {
  // Category name -> entries; an entry ending in '*' is a prefix stem.
  std::map<std::string, std::vector<std::string>> categories;
  // Category names in file order.
  std::vector<std::string> order;

  void validate() const;
  // `%` line opens a block, next line is the category name, following
  // lines are entries; '#' starts a comment.
  static DictionaryLexicon parse(std::string_view text);
  static DictionaryLexicon load(const std::string& path);
  std::string to_text() const;
  // True when `token` matches an entry of `category`.
  bool matches(const std::string& category, std::string_view token) const;
};

// Per category: tokens matching any entry / total tokens.
FeatureMatrix dictionary_features(std::span<const TextRow> rows, const DictionaryLexicon& lexicon);

/// Fits per-feature mean and population SD over `fit_rows` and transforms
/// every row. Zero-variance features become zero. Throws StateError if the
/// matrix is already standardized.
FeatureMatrix standardize(const FeatureMatrix& matrix, std::span<const std::string> fit_rows);

// Applies fitted parameters to an unstandardized matrix with the same
// feature names.
FeatureMatrix apply_standardization(const FeatureMatrix& matrix, const Standardization& params);

// CSV: row_key then one column per feature.
void write_matrix(std::ostream& out, const FeatureMatrix& matrix);
FeatureMatrix read_matrix(std::istream& in);
void save_matrix(const std::string& path, const FeatureMatrix& matrix);
FeatureMatrix load_matrix(const std::string& path);

// Standardization parameters: feature,mean,sd.
void write_standardization(std::ostream& out, const FeatureMatrix& matrix);

}  // namespace stigma::featurize
