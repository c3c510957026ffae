#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace stigma::corpus {

struct RawComment {
  std::string id;
  std::string body;
  std::optional<std::int64_t> created_utc;
  std::optional<std::string> subreddit;

  friend bool operator==(const RawComment&, const RawComment&) = default;
};

// Fraction of malformed lines above which a JSONL stream is rejected.
inline constexpr double kMaxMalformedFraction = 0.10;

/// Streaming JSONL reader. Malformed lines (invalid JSON, missing or
/// mistyped `id`/`body`, empty or repeated id) are counted and skipped.
/// Blank lines are ignored entirely.
class CommentReader {
 public:
  explicit CommentReader(const std::filesystem::path& path);

  // Next well-formed comment, or nullopt at end of file.
  std::optional<RawComment> next();

  std::size_t lines_read() const { return lines_; }
  std::size_t skipped() const { return skipped_; }

  // Throws FormatError if more than kMaxMalformedFraction of the
  // non-blank lines were malformed.
  void check_malformed_rate() const;

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t lines_ = 0;
  std::size_t skipped_ = 0;
  std::unordered_set<std::string> seen_;
};

struct LoadedComments {
  std::vector<RawComment> comments;
  std::size_t skipped = 0;
};

// Reads a whole JSONL file in order. Unreadable file -> IoError; too many
// malformed lines -> FormatError.
LoadedComments load_comments(const std::filesystem::path& path);

// Parses one JSONL line; nullopt when the line is malformed.
std::optional<RawComment> parse_comment_line(const std::string& line);

std::string to_jsonl(const RawComment& comment);
void write_comments(std::ostream& out, const std::vector<RawComment>& comments);

}  // namespace stigma::corpus
