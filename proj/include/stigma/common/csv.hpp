#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stigma::csv {

// A parsed CSV file: header plus data rows (RFC 4180 quoting).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based line number of each row in the source (header is line 1).
  std::vector<std::size_t> line_numbers;

  // Column index by name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
  // Column index by name; throws FormatError naming the column if absent.
  std::size_t require_column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

// Splits one logical record; exposed for tests.
std::vector<std::string> split_line(std::string_view line);

std::string escape(std::string_view field);

// Shortest representation that round-trips through strtod.
std::string format_double(double value);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  Writer& field(std::string_view value);
  Writer& field(double value);
  Writer& field(long long value);
  Writer& field(std::size_t value);
  Writer& field(int value) { return field(static_cast<long long>(value)); }
  void end_row();

  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  bool first_ = true;
};

}  // namespace stigma::csv
