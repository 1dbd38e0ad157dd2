#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlabel/annotation_set.hpp"
#include "crowdlabel/labels.hpp"

namespace crowdlabel {

inline constexpr std::string_view kPreferNotToSay = "Prefer not to say";

enum class FieldScale { Nominal, Ordinal };

struct DemographicField {
  std::string name;
  FieldScale scale = FieldScale::Nominal;
  // Declared level order. For ordinal fields this is the scale order and
  // "Prefer not to say" is not part of it.
  std::vector<std::string> levels;
};

// age, gender, income, area, ideology, affiliation, education, ai_experience.
const std::vector<DemographicField>& demographic_schema();
const DemographicField& demographic_field(std::string_view name);  // throws InvalidArgument

// Position of `value` in the field's declared levels, matched ignoring case,
// spacing and dash style. nullopt for undeclared values.
std::optional<std::size_t> level_index(const DemographicField& field, std::string_view value);

// One (post, worker) labeling event.
struct Assignment {
  std::string post_id;
  std::string worker_id;
  std::map<std::string, std::string> demographics;
  LabelVector labels;
};

// JSONL: {"post_id", "worker_id", "demographics": {...}, <category>: bool|null}.
// Category fields may also sit in a "labels" object.
std::vector<Assignment> read_assignments(std::istream& in);
std::vector<Assignment> read_assignments_file(const std::filesystem::path& path);

// Workers become Human annotators; post and worker order is first appearance.
AnnotationSet human_annotation_set(const std::vector<Assignment>& assignments);

struct ContingencyTable {
  std::string field;
  Category category = Category::Conspiracy;
  std::vector<std::string> row_labels;  // observed levels in declared order
  std::vector<std::string> col_labels;  // {"True", "False"}
  std::vector<std::vector<std::uint64_t>> counts;
  std::size_t n_excluded = 0;  // missing label or missing field value
};

// Undeclared levels of a nominal field follow the declared ones in
// lexicographic order. Throws UndefinedStatistic with fewer than two
// populated rows.
ContingencyTable contingency_table(const std::vector<Assignment>& assignments, std::string_view field, Category category);

struct AssociationResult {
  double chi_square = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  double cramers_v = 0.0;
  double n = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

// Pearson chi-square test of independence. Throws UndefinedStatistic when an
// expected count is zero.
AssociationResult chi_square_test(const std::vector<std::vector<double>>& table);
AssociationResult chi_square_test(const ContingencyTable& table);

struct TrendResult {
  std::optional<double> rho;
  std::optional<double> p_value;  // t approximation, n - 2 degrees of freedom
  std::size_t n = 0;
  std::string reason;  // why rho is absent
};

// Spearman correlation with average ranks for ties.
TrendResult spearman(const std::vector<double>& x, const std::vector<double>& y);

// Rank correlation between an ordinal field's scale position and the binary
// label. Assignments with a missing label, "Prefer not to say" or an
// undeclared level are left out. Throws InvalidArgument for a nominal field
// and UndefinedStatistic with fewer than three distinct levels present.
TrendResult spearman_trend(const std::vector<Assignment>& assignments, std::string_view field, Category category);

}  // namespace crowdlabel
