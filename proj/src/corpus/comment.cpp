#include "stigma/corpus/comment.hpp"

#include <json.hpp>

#include <ostream>

#include "stigma/common/error.hpp"

namespace stigma::corpus {

using nlohmann::json;

std::optional<RawComment> parse_comment_line(const std::string& line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto id = j.find("id");
  auto body = j.find("body");
  if (id == j.end() || body == j.end() || !id->is_string() || !body->is_string()) {
    return std::nullopt;
  }
  RawComment c;
  c.id = id->get<std::string>();
  if (c.id.empty()) return std::nullopt;
  c.body = body->get<std::string>();
  if (auto t = j.find("created_utc"); t != j.end() && !t->is_null()) {
    if (!t->is_number()) return std::nullopt;
    c.created_utc = t->is_number_integer() ? t->get<std::int64_t>()
                                           : static_cast<std::int64_t>(t->get<double>());
  }
  if (auto s = j.find("subreddit"); s != j.end() && !s->is_null()) {
    if (!s->is_string()) return std::nullopt;
    c.subreddit = s->get<std::string>();
  }
  return c;
}

CommentReader::CommentReader(const std::filesystem::path& path)
    : path_(path), in_(path) {
  if (!in_) throw IoError("cannot open comment file '" + path.string() + "'");
}

std::optional<RawComment> CommentReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++lines_;
    auto c = parse_comment_line(line);
    if (!c || !seen_.insert(c->id).second) {
      ++skipped_;
      continue;
    }
    return c;
  }
  if (in_.bad()) throw IoError("read error on '" + path_.string() + "'");
  return std::nullopt;
}

void CommentReader::check_malformed_rate() const {
  if (lines_ > 0 &&
      static_cast<double>(skipped_) > kMaxMalformedFraction * static_cast<double>(lines_)) {
    throw FormatError("'" + path_.string() + "': " + std::to_string(skipped_) + " of " +
                      std::to_string(lines_) + " lines malformed (limit 10%)");
  }
}

LoadedComments load_comments(const std::filesystem::path& path) {
  CommentReader reader(path);
  LoadedComments out;
  while (auto c = reader.next()) out.comments.push_back(std::move(*c));
  reader.check_malformed_rate();
  out.skipped = reader.skipped();
  return out;
}

std::string to_jsonl(const RawComment& comment) {
  json j;
  j["id"] = comment.id;
  j["body"] = comment.body;
  if (comment.created_utc) j["created_utc"] = *comment.created_utc;
  if (comment.subreddit) j["subreddit"] = *comment.subreddit;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

void write_comments(std::ostream& out, const std::vector<RawComment>& comments) {
  for (const auto& c : comments) out << to_jsonl(c) << '\n';
}

}  // namespace stigma::corpus
