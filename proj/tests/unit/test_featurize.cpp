#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"
#include "stigma/featurize/embeddings.hpp"
#include "stigma/featurize/features.hpp"
#include "stigma/featurize/tokenizer.hpp"

using namespace stigma;
using namespace stigma::featurize;
using Tokens = std::vector<std::string>;

namespace {

std::string join(const Tokens& t) {
  std::string s;
  for (const auto& w : t) s += (s.empty() ? "" : " ") + w;
  return s;
}

double at(const FeatureMatrix& m, std::string_view row, std::string_view feature) {
  for (std::size_t j = 0; j < m.cols(); ++j) {
    if (m.feature_names[j] == feature) {
      return m.values(static_cast<Eigen::Index>(m.row_index(row)), static_cast<Eigen::Index>(j));
    }
  }
  FAIL("no feature " << feature);
  return 0.0;
}

bool has_feature(const FeatureMatrix& m, std::string_view feature) {
  return std::find(m.feature_names.begin(), m.feature_names.end(), feature) !=
         m.feature_names.end();
}

}  // namespace

TEST_CASE("tokenize examples") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("Drugs are BAD!!!") == Tokens{"drugs", "are", "bad", "!!!"});
  CHECK(tokenize("see http://a.b :)") == Tokens{"see", "<url>", ":)"});
  CHECK(tokenize("@someone don't, ok...") == Tokens{"<user>", "don't", "ok", "..."});
}

TEST_CASE("tokenize is idempotent on its joined output") {
  const char* texts[] = {"Drugs are BAD!!!", "see http://a.b :) and www.x.org/y?z=1",
                         "@a_b I'm so done... :-( ugh!!", "it's 4:20, why not?!",
                         "mixed-CASE words; with (brackets) & more", "  ", ";) ;) <3 xD"};
  for (const char* t : texts) {
    const auto once = tokenize(t);
    CHECK(tokenize(join(once)) == once);
  }
}

TEST_CASE("unigram relative frequencies") {
  std::vector<TextRow> rows = {{"r", "a a b"}, {"e", ""}};
  const std::vector<std::string> fit = {"r", "e"};
  auto m = unigram_features(rows, fit, 0.0);
  CHECK(at(m, "r", "a") == doctest::Approx(2.0 / 3.0));
  CHECK(at(m, "r", "b") == doctest::Approx(1.0 / 3.0));
  CHECK(m.values.row(0).sum() == doctest::Approx(1.0));
  CHECK(m.values.row(1).sum() == 0.0);
}

TEST_CASE("unigram document-frequency cut") {
  // 1000 fit rows: "rare" in 4 (0.4%), "edge" in 5 (0.5%).
  std::vector<TextRow> rows;
  std::vector<std::string> fit;
  for (int i = 0; i < 1000; ++i) {
    std::string text = "common";
    if (i < 4) text += " rare";
    if (i < 5) text += " edge";
    rows.push_back({"r" + std::to_string(i), text});
    fit.push_back(rows.back().key);
  }
  auto m = unigram_features(rows, fit, 0.005);
  CHECK(has_feature(m, "common"));
  CHECK(has_feature(m, "edge"));
  CHECK_FALSE(has_feature(m, "rare"));
}

TEST_CASE("unigram vocabulary depends only on fit rows") {
  SplitMix64 rng(1);
  const char* words[] = {"alpha", "beta", "gamma", "delta", "eps"};
  std::vector<TextRow> rows;
  std::vector<std::string> fit;
  for (int i = 0; i < 200; ++i) {
    std::string t;
    for (int k = 0; k < 5; ++k) t += std::string(words[uniform_index(rng, 5)]) + " ";
    rows.push_back({"f" + std::to_string(i), t});
    fit.push_back(rows.back().key);
  }
  auto base = unigram_features(rows, fit, 0.01);
  auto extended = rows;
  for (int i = 0; i < 50; ++i) extended.push_back({"t" + std::to_string(i), "zeta zeta omega"});
  auto more = unigram_features(extended, fit, 0.01);
  CHECK(base.feature_names == more.feature_names);
  for (Eigen::Index r = 0; r < more.values.rows(); ++r) {
    CHECK(more.values.row(r).minCoeff() >= 0.0);
    CHECK(more.values.row(r).sum() <= 1.0 + 1e-12);
  }
}

TEST_CASE("dictionary features") {
  auto lex = DictionaryLexicon::parse("%\nNEG\nbad\n%\nADD\naddict*\n");
  std::vector<TextRow> rows = {{"a", "bad bad good"}, {"b", "addiction is an addict"}, {"c", ""}};
  auto m = dictionary_features(rows, lex);
  CHECK(at(m, "a", "NEG") == doctest::Approx(2.0 / 3.0));
  CHECK(at(m, "b", "ADD") == doctest::Approx(2.0 / 4.0));
  CHECK(at(m, "c", "NEG") == 0.0);
  CHECK(at(m, "c", "ADD") == 0.0);
  CHECK(lex.matches("ADD", "addiction"));
  CHECK_FALSE(lex.matches("ADD", "add"));
  CHECK(DictionaryLexicon::parse(lex.to_text()).categories == lex.categories);
  CHECK_THROWS_AS(DictionaryLexicon::parse("bad\n"), FormatError);
}

TEST_CASE("standardize") {
  FeatureMatrix m;
  m.feature_names = {"x", "const"};
  m.row_keys = {"a", "b", "t"};
  m.values.resize(3, 2);
  m.values << 0, 5, 2, 5, 7, 5;
  m.reindex();
  const std::vector<std::string> fit = {"a", "b"};
  auto s = standardize(m, fit);
  CHECK(s.values(0, 0) == doctest::Approx(-1.0));
  CHECK(s.values(1, 0) == doctest::Approx(1.0));
  CHECK(s.values(2, 0) == doctest::Approx((7.0 - 1.0) / 1.0));
  CHECK(s.values.col(1).isZero());
  REQUIRE(s.standardization);
  CHECK(s.standardization->fit_rows == 2);
  CHECK_THROWS_AS(standardize(s, fit), StateError);

  auto applied = apply_standardization(m, *s.standardization);
  CHECK(applied.values.isApprox(s.values));
}

TEST_CASE("standardization parameters ignore non-fit rows") {
  SplitMix64 rng(2);
  FeatureMatrix m;
  m.feature_names = {"u", "v", "w"};
  std::vector<std::string> fit;
  m.values.resize(60, 3);
  for (int i = 0; i < 60; ++i) {
    m.row_keys.push_back("r" + std::to_string(i));
    if (i < 40) fit.push_back(m.row_keys.back());
    for (int j = 0; j < 3; ++j) m.values(i, j) = standard_normal(rng) * (j + 1) + j;
  }
  m.reindex();
  auto s = standardize(m, fit);
  const auto& p = *s.standardization;
  for (int j = 0; j < 3; ++j) {
    const auto col = m.values.col(j).head(40);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    CHECK(p.mean(j) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(p.sd(j) == doctest::Approx(sd).epsilon(1e-12));
    CHECK(s.values(55, j) == doctest::Approx((m.values(55, j) - mean) / sd).epsilon(1e-12));
  }
}

TEST_CASE("feature matrix CSV round trip") {
  std::vector<TextRow> rows = {{"a", "x y z"}, {"b", "x x"}};
  const std::vector<std::string> fit = {"a", "b"};
  auto m = unigram_features(rows, fit, 0.0);
  std::stringstream buf;
  write_matrix(buf, m);
  auto back = read_matrix(buf);
  CHECK(back.feature_names == m.feature_names);
  CHECK(back.row_keys == m.row_keys);
  CHECK(back.values == m.values);
}

TEST_CASE("EMBTAB reads a reference blob") {
  // Base64 of little-endian float32 {1, -2} and {0.5, 0.25, 3}.
  std::istringstream two("EMBTAB v1 2 1\nc1\tAACAPwAAAMA=\n");
  auto t = read_embeddings(two);
  CHECK(t.dim == 2);
  CHECK(t.at("c1") == std::vector<float>{1.0f, -2.0f});

  std::istringstream three("EMBTAB v1 3 1\nq\tAAAAPwAAgD4AAEBA\n");
  CHECK(read_embeddings(three).at("q") == std::vector<float>{0.5f, 0.25f, 3.0f});

  EmbeddingTable w;
  w.dim = 2;
  w.vectors["c1"] = {1.0f, -2.0f};
  std::ostringstream out;
  write_embeddings(out, w);
  CHECK(out.str() == "EMBTAB v1 2 1\nc1\tAACAPwAAAMA=\n");
}

TEST_CASE("EMBTAB round trip is exact") {
  SplitMix64 rng(3);
  EmbeddingTable t;
  t.dim = 768;
  for (int i = 0; i < 5; ++i) {
    auto& v = t.vectors["comment_" + std::to_string(i)];
    for (int j = 0; j < 768; ++j) v.push_back(static_cast<float>(standard_normal(rng) * 1e3));
  }
  std::stringstream buf;
  write_embeddings(buf, t);
  auto back = read_embeddings(buf);
  CHECK(back.dim == 768);
  CHECK(back.vectors == t.vectors);

  std::stringstream jsonl;
  write_embeddings_jsonl(jsonl, t);
  CHECK(read_embeddings(jsonl).vectors == t.vectors);
}

TEST_CASE("EMBTAB errors name the offending id") {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_embeddings(in);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("EMBTAB v1 2 2\nok\tAACAPwAAAMA=\nbad_one\tAADAfwAAgD8=\n").find("bad_one") !=
        std::string::npos);
  CHECK(message("EMBTAB v1 3 1\nshort\tAACAPwAAAMA=\n").find("short") != std::string::npos);
  CHECK(message("EMBTAB v1 2 1\nd\tAACAPwAAAMA=\nd\tAACAPwAAAMA=\n").find("d") !=
        std::string::npos);
  CHECK_FALSE(message("EMBTAB v2 2 0\n").empty());
  CHECK(message("{\"id\": \"j1\", \"v\": [1.0, 2.0]}\n{\"id\": \"j2\", \"v\": [1.0]}\n")
            .find("j2") != std::string::npos);
}
