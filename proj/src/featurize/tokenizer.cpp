#include "stigma/featurize/tokenizer.hpp"

#include <array>

namespace stigma::featurize {

namespace {

// Lowercase forms, longest first where one is a prefix of another.
constexpr std::array<std::string_view, 19> kEmoticons = {
    ":-)", ":-(", ":-d", ":-p", ";-)", ":'(", "^_^", "-_-", ":)", ":(",
    ":d",  ":p",  ";)",  ":/",  "<3",  "xd",  "=)",  "=(",  ":o"};

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}
bool is_word(unsigned char c) { return is_alnum(c) || c >= 0x80; }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool starts_with_ci(std::string_view text, std::size_t pos, std::string_view prefix) {
  if (text.size() - pos < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (lower(text[pos + i]) != prefix[i]) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };

  while (i < n) {
    const unsigned char c = at(i);
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (starts_with_ci(text, i, "http://") || starts_with_ci(text, i, "https://") ||
        starts_with_ci(text, i, "www.")) {
      while (i < n && !is_space(at(i))) ++i;
      out.emplace_back("<url>");
      continue;
    }
    if (c == '@' && i + 1 < n && (is_alnum(at(i + 1)) || at(i + 1) == '_')) {
      ++i;
      while (i < n && (is_alnum(at(i)) || at(i) == '_')) ++i;
      out.emplace_back("<user>");
      continue;
    }
    if (starts_with_ci(text, i, "<url>") || starts_with_ci(text, i, "<user>")) {
      const std::string_view tok = starts_with_ci(text, i, "<url>") ? "<url>" : "<user>";
      out.emplace_back(tok);
      i += tok.size();
      continue;
    }
    bool emoticon = false;
    const bool at_boundary = i == 0 || !is_word(at(i - 1));
    for (std::string_view e : kEmoticons) {
      if (!starts_with_ci(text, i, e)) continue;
      const std::size_t end = i + e.size();
      const bool has_letter = e.find_first_of("dpxo") != std::string_view::npos;
      if (has_letter && (!at_boundary || (end < n && is_word(at(end))))) continue;
      out.emplace_back(e);
      i = end;
      emoticon = true;
      break;
    }
    if (emoticon) continue;

    if (is_word(c)) {
      std::string word;
      while (i < n && (is_word(at(i)) || at(i) == '\'')) word.push_back(lower(text[i++]));
      while (!word.empty() && word.back() == '\'') word.pop_back();
      if (!word.empty()) out.push_back(std::move(word));
      continue;
    }
    // Punctuation (including stray apostrophes): keep runs of one repeated
    // character, drop singletons.
    std::size_t j = i + 1;
    while (j < n && text[j] == text[i]) ++j;
    if (j - i >= 2) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace stigma::featurize
