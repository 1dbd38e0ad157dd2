#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlabel/annotation_set.hpp"
#include "crowdlabel/labels.hpp"

namespace crowdlabel {

// One category sliced out of an AnnotationSet: units x raters, tri-state.
class CategoryMatrix {
 public:
  CategoryMatrix(Category category, std::vector<std::string> units, std::vector<std::string> raters);

  static CategoryMatrix from_set(const AnnotationSet& set, Category category);
  static CategoryMatrix from_set(const AnnotationSet& set, Category category, const std::vector<std::string>& units,
                                 const std::vector<std::string>& raters);
  // columns[r][u]; every column must have the same length.
  static CategoryMatrix from_columns(const std::vector<std::vector<std::optional<bool>>>& columns,
                                     Category category = Category::Conspiracy);

  Category category() const { return category_; }
  const std::vector<std::string>& units() const { return units_; }
  const std::vector<std::string>& raters() const { return raters_; }
  std::size_t rater_index(const std::string& rater) const;

  const std::optional<bool>& at(std::size_t unit, std::size_t rater) const { return values_[unit * raters_.size() + rater]; }
  void set(std::size_t unit, std::size_t rater, std::optional<bool> v) { values_[unit * raters_.size() + rater] = v; }

 private:
  Category category_;
  std::vector<std::string> units_;
  std::vector<std::string> raters_;
  std::vector<std::optional<bool>> values_;  // row-major by unit
};

struct KappaResult {
  double kappa = 0.0;
  double observed_agreement = 0.0;  // p_o
  double expected_agreement = 0.0;  // p_e
  std::size_t n_units_used = 0;
  // 1 - p_e == 0; kappa is reported as 1.
  bool degenerate = false;
};

struct AlphaResult {
  double alpha = 0.0;
  double observed_disagreement = 0.0;  // D_o
  double expected_disagreement = 0.0;  // D_e
  std::size_t n_pairable_values = 0;
  // D_e == 0 (a single class); alpha is reported as 1.
  bool degenerate = false;
};

// Pairwise deletion: only units where both raters have a value count.
// Throws UndefinedStatistic when there is no such unit.
double percent_agreement(const CategoryMatrix& matrix, std::size_t rater_a, std::size_t rater_b);
KappaResult cohens_kappa(const CategoryMatrix& matrix, std::size_t rater_a, std::size_t rater_b);

// Nominal Krippendorff's alpha via the coincidence matrix; units with fewer
// than two values are not pairable and are dropped.
AlphaResult krippendorff_alpha(const CategoryMatrix& matrix);

enum class PairMetric { PercentAgreement, Kappa };

std::string_view pair_metric_name(PairMetric m);

struct PairValue {
  std::string rater_a;
  std::string rater_b;
  std::optional<double> value;
  std::optional<KappaResult> kappa;  // filled for PairMetric::Kappa
  std::size_t n_units = 0;
  std::string error;  // non-empty when the pair was excluded
};

struct PairwiseSummary {
  PairMetric metric = PairMetric::Kappa;
  double mean = 0.0;
  double sd = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::size_t n_pairs = 0;
  std::size_t n_excluded = 0;
  std::vector<PairValue> pairs;  // every unordered pair, excluded ones included
};

// Evaluates the metric for every unordered pair of `raters` (all matrix
// raters when empty). Undefined pairs are listed with an error and left out
// of the statistics; if none is defined the statistics stay zero with
// n_pairs == 0.
PairwiseSummary pairwise_summary(const CategoryMatrix& matrix, PairMetric metric,
                                 const std::vector<std::string>& raters = {});

struct RaterGroup {
  std::string name;
  std::vector<std::string> units;   // empty = every post in the set
  std::vector<std::string> raters;
};

struct GroupAlpha {
  std::string group;
  Category category;
  std::optional<AlphaResult> result;
  std::string error;
};

// One alpha per group and category, groups in input order, categories in
// category order. Failures are reported per entry.
std::vector<GroupAlpha> grouped_alpha(const AnnotationSet& set, const std::vector<RaterGroup>& groups);

// All C(n,3) triples over `raters`, each over every unit.
std::vector<RaterGroup> rater_triples(const std::vector<std::string>& raters);

// Groups file: one JSON object per line {"name", "units": [...], "raters": [...]}.
std::vector<RaterGroup> load_groups(const std::filesystem::path& path);

struct SummaryStats {
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t n = 0;
};
// Population SD. Returns n == 0 for an empty input.
SummaryStats summarize(const std::vector<double>& values);

}  // namespace crowdlabel
