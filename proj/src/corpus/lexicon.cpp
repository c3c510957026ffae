#include "stigma/corpus/lexicon.hpp"

#include <algorithm>
#include <sstream>

#include "stigma/common/encoding.hpp"
#include "stigma/common/error.hpp"

namespace stigma::corpus {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '\'' || c >= 0x80;
}

char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Lowercase and collapse whitespace runs to one space, trimmed.
std::string normalize_space(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ascii_lower(c));
  }
  return out;
}

bool wildcard_match(std::string_view haystack, std::string_view pattern) {
  std::size_t pos = 0;
  std::size_t start = 0;
  while (start <= pattern.size()) {
    const auto star = pattern.find('*', start);
    const auto segment = pattern.substr(
        start, star == std::string_view::npos ? std::string_view::npos : star - start);
    if (!segment.empty()) {
      const auto found = haystack.find(segment, pos);
      if (found == std::string_view::npos) return false;
      pos = found + segment.size();
    }
    if (star == std::string_view::npos) break;
    start = star + 1;
  }
  return true;
}

bool contains_sequence(const std::vector<std::string>& tokens,
                       const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) !=
         tokens.end();
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      cur.push_back(ascii_lower(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

void KeywordLexicon::validate() const {
  for (const auto& k : keywords) {
    if (k.empty()) throw ArgumentError("empty keyword in lexicon");
    if (lowercase(k) != k) throw ArgumentError("keyword '" + k + "' is not lowercase");
  }
  for (const auto& p : exclusion_patterns) {
    std::string core = p;
    std::erase(core, '*');
    if (trim(core).empty()) {
      throw ArgumentError("exclusion pattern '" + p + "' is empty without wildcards");
    }
  }
}

KeywordLexicon KeywordLexicon::defaults() {
  KeywordLexicon lex;
  lex.keywords = {"acid",    "adderall", "addy",   "cocaine",  "codeine", "coke",
                  "dab",     "drug",     "fentanyl", "heroin", "kratom",  "kush",
                  "lsd",     "marijuana", "mdma",  "meth",     "molly",   "norco",
                  "opiate",  "opioid",   "oxy",    "oxycodone", "percocet", "purp",
                  "shrooms", "valium",   "weed",   "xanax",    "xans",    "xtc",
                  // ambiguous terms kept after disambiguation
                  "barbs",   "blunt",    "crack",  "ecstasy",  "joint",   "pot",
                  "tabs"};
  lex.exclusion_patterns = {"hillary",     "clinton",     "obama",       "bernie",
                            "bern",        "sanders",     "trump",       "gab",
                            "weed out",    "crack jokes", "crack me up", "*white pill",
                            "black pill",  "red pill",    "blue pill",   "*whitepill*",
                            "*blackpill*", "*redpill",    "*bluepill*",  "crazy pill"};
  return lex;
}

KeywordLexicon KeywordLexicon::parse(std::string_view text) {
  enum class Section { kNone, kKeywords, kExclusions };
  KeywordLexicon lex;
  Section section = Section::kNone;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line == "[keywords]") {
      section = Section::kKeywords;
    } else if (line == "[exclusions]") {
      section = Section::kExclusions;
    } else if (section == Section::kKeywords) {
      if (!lex.keywords.insert(lowercase(line)).second) {
        throw FormatError("lexicon line " + std::to_string(line_no) + ": duplicate keyword '" +
                          line + "'");
      }
    } else if (section == Section::kExclusions) {
      lex.exclusion_patterns.push_back(normalize_space(line));
    } else {
      throw FormatError("lexicon line " + std::to_string(line_no) +
                        ": entry outside [keywords]/[exclusions] section");
    }
  }
  lex.validate();
  return lex;
}

KeywordLexicon KeywordLexicon::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

std::string KeywordLexicon::to_text() const {
  std::string out = "[keywords]\n";
  for (const auto& k : keywords) out += k + "\n";
  out += "[exclusions]\n";
  for (const auto& p : exclusion_patterns) out += p + "\n";
  return out;
}

MatchResult match_keywords(const RawComment& comment, const KeywordLexicon& lexicon) {
  MatchResult r;
  r.comment_id = comment.id;
  for (auto& tok : word_tokens(comment.body)) {
    if (lexicon.keywords.contains(tok)) r.matched_keywords.insert(std::move(tok));
  }
  return r;
}

ExclusionResult apply_exclusions(const RawComment& comment, const KeywordLexicon& lexicon) {
  ExclusionResult r;
  const std::string normalized = normalize_space(comment.body);
  std::vector<std::string> tokens;
  bool tokenized = false;
  for (const auto& pattern : lexicon.exclusion_patterns) {
    bool hit;
    if (pattern.find('*') != std::string::npos) {
      hit = wildcard_match(normalized, pattern);
    } else {
      if (!tokenized) {
        tokens = word_tokens(comment.body);
        tokenized = true;
      }
      hit = contains_sequence(tokens, word_tokens(pattern));
    }
    if (hit) r.hits.push_back(pattern);
  }
  r.excluded = !r.hits.empty();
  return r;
}

MatchResult classify(const RawComment& comment, const KeywordLexicon& lexicon) {
  MatchResult r = match_keywords(comment, lexicon);
  auto ex = apply_exclusions(comment, lexicon);
  r.excluded = ex.excluded;
  r.exclusion_hits = std::move(ex.hits);
  return r;
}

}  // namespace stigma::corpus
