#include "stigma/common/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <system_error>

#include "stigma/common/error.hpp"

namespace stigma::csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::require_column(std::string_view name) const {
  if (auto idx = column(name)) return *idx;
  throw FormatError("missing required column '" + std::string(name) + "'");
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

namespace {

// Reads one logical record, joining physical lines while a quote is open.
bool read_record(std::istream& in, std::string& record, std::size_t& lines) {
  record.clear();
  std::string line;
  bool open = false;
  bool any = false;
  while (std::getline(in, line)) {
    ++lines;
    any = true;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (open) record.push_back('\n');
    record += line;
    for (char c : line) {
      if (c == '"') open = !open;
    }
    if (!open) return true;
  }
  if (open) throw FormatError("unterminated quoted field at end of input");
  return any;
}

}  // namespace

Table read(std::istream& in) {
  Table table;
  std::string record;
  std::size_t lines = 0;
  if (!read_record(in, record, lines)) return table;
  table.header = split_line(record);
  while (true) {
    const std::size_t start = lines + 1;
    if (!read_record(in, record, lines)) break;
    if (record.empty()) continue;
    table.rows.push_back(split_line(record));
    table.line_numbers.push_back(start);
  }
  return table;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read(in);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc{}) throw NumericError("cannot format double");
  return std::string(buf, res.ptr);
}

Writer& Writer::field(std::string_view value) {
  if (!first_) out_ << ',';
  out_ << escape(value);
  first_ = false;
  return *this;
}

Writer& Writer::field(double value) { return field(format_double(value)); }

Writer& Writer::field(long long value) {
  return field(std::string_view(std::to_string(value)));
}

Writer& Writer::field(std::size_t value) {
  return field(std::string_view(std::to_string(value)));
}

void Writer::end_row() {
  out_ << '\n';
  first_ = true;
}

void Writer::row(const std::vector<std::string>& fields) {
  for (const auto& f : fields) field(std::string_view(f));
  end_row();
}

}  // namespace stigma::csv
