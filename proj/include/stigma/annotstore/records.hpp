#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stigma::annotstore {

struct WorkerProfile {
  std::string worker_id;
  int age = 0;
  int gender_female = 0;
  int race_african_american = 0;
  int knows_treated_person = 0;
  int substance_use_days = 0;  // days of use in the past 30
  bool passed_attention_check = true;
  bool completed_survey = true;
  bool completed_hit = true;

  // Person who used substances in the past 30 days.
  bool substance_user() const { return substance_use_days > 0; }

  friend bool operator==(const WorkerProfile&, const WorkerProfile&) = default;
};

// The binary worker attributes used for jury composition and subgroup
// statistics.
enum class Attribute { kGenderFemale, kRaceAfricanAmerican, kKnowsTreatedPerson, kSubstanceUser };

inline constexpr std::array<Attribute, 4> kAllAttributes = {
    Attribute::kSubstanceUser, Attribute::kKnowsTreatedPerson,
    Attribute::kRaceAfricanAmerican, Attribute::kGenderFemale};

std::string_view attribute_name(Attribute a);
// Throws ArgumentError for unknown names.
Attribute parse_attribute(std::string_view name);
int attribute_value(const WorkerProfile& w, Attribute a);

struct AnnotationRecord {
  std::string worker_id;
  std::string comment_id;
  bool q_sub = false;
  std::optional<bool> q_stigma;  // present iff q_sub

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct RowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
};

template <class T>
struct LoadResult {
  std::vector<T> records;
  std::vector<RowError> errors;
};

inline constexpr std::array<std::string_view, 9> kWorkerColumns = {
    "worker_id",           "age",
    "gender_female",       "race_african_american",
    "knows_treated_person", "substance_use_days",
    "passed_attention_check", "completed_survey",
    "completed_hit"};

inline constexpr std::array<std::string_view, 4> kAnnotationColumns = {
    "worker_id", "comment_id", "q_sub", "q_stigma"};

// Missing column -> FormatError. Rows with invalid values or violated
// invariants are collected in `errors` with their line number.
LoadResult<WorkerProfile> read_workers(std::istream& in);
LoadResult<WorkerProfile> load_workers(const std::filesystem::path& path);
LoadResult<AnnotationRecord> read_annotations(std::istream& in);
LoadResult<AnnotationRecord> load_annotations(const std::filesystem::path& path);

void write_workers(std::ostream& out, std::span<const WorkerProfile> workers);
void write_annotations(std::ostream& out, std::span<const AnnotationRecord> annotations);

}  // namespace stigma::annotstore
