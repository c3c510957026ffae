#include "stigma/annotstore/records.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <unordered_set>

#include "stigma/common/csv.hpp"
#include "stigma/common/error.hpp"

namespace stigma::annotstore {

std::string_view attribute_name(Attribute a) {
  switch (a) {
    case Attribute::kGenderFemale: return "gender_female";
    case Attribute::kRaceAfricanAmerican: return "race_african_american";
    case Attribute::kKnowsTreatedPerson: return "knows_treated_person";
    case Attribute::kSubstanceUser: return "substance_user";
  }
  return "?";
}

Attribute parse_attribute(std::string_view name) {
  for (Attribute a : kAllAttributes) {
    if (attribute_name(a) == name) return a;
  }
  throw ArgumentError("unknown worker attribute '" + std::string(name) + "'");
}

int attribute_value(const WorkerProfile& w, Attribute a) {
  switch (a) {
    case Attribute::kGenderFemale: return w.gender_female;
    case Attribute::kRaceAfricanAmerican: return w.race_african_american;
    case Attribute::kKnowsTreatedPerson: return w.knows_treated_person;
    case Attribute::kSubstanceUser: return w.substance_user() ? 1 : 0;
  }
  return 0;
}

namespace {

// Row-level parse failure; caught per row and turned into a RowError.
struct BadValue {
  std::string message;
};

int parse_int(const std::string& field, std::string_view column) {
  int v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end || field.empty()) {
    throw BadValue{std::string(column) + ": '" + field + "' is not an integer"};
  }
  return v;
}

int parse_binary(const std::string& field, std::string_view column) {
  const int v = parse_int(field, column);
  if (v != 0 && v != 1) throw BadValue{std::string(column) + " must be 0 or 1"};
  return v;
}

bool parse_bool(const std::string& field, std::string_view column) {
  if (field == "1" || field == "true" || field == "yes") return true;
  if (field == "0" || field == "false" || field == "no") return false;
  throw BadValue{std::string(column) + ": '" + field + "' is not a boolean"};
}

std::optional<bool> parse_yes_no(const std::string& field, std::string_view column,
                                 bool allow_empty) {
  if (field == "yes") return true;
  if (field == "no") return false;
  if (field.empty() && allow_empty) return std::nullopt;
  throw BadValue{std::string(column) + ": expected yes/no, got '" + field + "'"};
}

template <std::size_t N>
std::array<std::size_t, N> require_columns(const csv::Table& t,
                                           const std::array<std::string_view, N>& names) {
  std::array<std::size_t, N> idx{};
  for (std::size_t i = 0; i < N; ++i) idx[i] = t.require_column(names[i]);
  return idx;
}

}  // namespace

LoadResult<WorkerProfile> read_workers(std::istream& in) {
  const csv::Table t = csv::read(in);
  const auto col = require_columns(t, kWorkerColumns);
  LoadResult<WorkerProfile> out;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    try {
      if (row.size() != t.header.size()) throw BadValue{"wrong number of fields"};
      WorkerProfile w;
      w.worker_id = row[col[0]];
      if (w.worker_id.empty()) throw BadValue{"empty worker_id"};
      w.age = parse_int(row[col[1]], "age");
      if (w.age <= 0) throw BadValue{"age must be positive"};
      w.gender_female = parse_binary(row[col[2]], "gender_female");
      w.race_african_american = parse_binary(row[col[3]], "race_african_american");
      w.knows_treated_person = parse_binary(row[col[4]], "knows_treated_person");
      w.substance_use_days = parse_int(row[col[5]], "substance_use_days");
      if (w.substance_use_days < 0 || w.substance_use_days > 30) {
        throw BadValue{"substance_use_days must be within [0,30]"};
      }
      w.passed_attention_check = parse_bool(row[col[6]], "passed_attention_check");
      w.completed_survey = parse_bool(row[col[7]], "completed_survey");
      w.completed_hit = parse_bool(row[col[8]], "completed_hit");
      if (!seen.insert(w.worker_id).second) throw BadValue{"duplicate worker_id"};
      out.records.push_back(std::move(w));
    } catch (const BadValue& e) {
      out.errors.push_back({t.line_numbers[r], e.message});
    }
  }
  return out;
}

LoadResult<WorkerProfile> load_workers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open workers file '" + path.string() + "'");
  return read_workers(in);
}

LoadResult<AnnotationRecord> read_annotations(std::istream& in) {
  const csv::Table t = csv::read(in);
  const auto col = require_columns(t, kAnnotationColumns);
  LoadResult<AnnotationRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    try {
      if (row.size() != t.header.size()) throw BadValue{"wrong number of fields"};
      AnnotationRecord a;
      a.worker_id = row[col[0]];
      a.comment_id = row[col[1]];
      if (a.worker_id.empty() || a.comment_id.empty()) throw BadValue{"empty id"};
      a.q_sub = *parse_yes_no(row[col[2]], "q_sub", false);
      a.q_stigma = parse_yes_no(row[col[3]], "q_stigma", true);
      if (a.q_sub != a.q_stigma.has_value()) {
        throw BadValue{"q_stigma must be present exactly when q_sub is yes"};
      }
      out.records.push_back(std::move(a));
    } catch (const BadValue& e) {
      out.errors.push_back({t.line_numbers[r], e.message});
    }
  }
  return out;
}

LoadResult<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations file '" + path.string() + "'");
  return read_annotations(in);
}

void write_workers(std::ostream& out, std::span<const WorkerProfile> workers) {
  csv::Writer w(out);
  for (auto c : kWorkerColumns) w.field(c);
  w.end_row();
  for (const auto& p : workers) {
    w.field(std::string_view(p.worker_id))
        .field(p.age)
        .field(p.gender_female)
        .field(p.race_african_american)
        .field(p.knows_treated_person)
        .field(p.substance_use_days)
        .field(p.passed_attention_check ? 1 : 0)
        .field(p.completed_survey ? 1 : 0)
        .field(p.completed_hit ? 1 : 0);
    w.end_row();
  }
}

void write_annotations(std::ostream& out, std::span<const AnnotationRecord> annotations) {
  csv::Writer w(out);
  for (auto c : kAnnotationColumns) w.field(c);
  w.end_row();
  for (const auto& a : annotations) {
    w.field(std::string_view(a.worker_id))
        .field(std::string_view(a.comment_id))
        .field(std::string_view(a.q_sub ? "yes" : "no"))
        .field(std::string_view(!a.q_stigma ? "" : (*a.q_stigma ? "yes" : "no")));
    w.end_row();
  }
}

}  // namespace stigma::annotstore
