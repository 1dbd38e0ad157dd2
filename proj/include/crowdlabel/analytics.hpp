#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "crowdlabel/annotation_set.hpp"
#include "crowdlabel/consensus.hpp"
#include "crowdlabel/labels.hpp"
#include "crowdlabel/reliability.hpp"

namespace crowdlabel {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t n_excluded_missing = 0;

  std::size_t n_scored() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Scored over posts present in both label sets; a post where either side is
// missing the category is counted in n_excluded_missing. Throws
// InvalidArgument when the post sets do not overlap.
ConfusionCounts confusion_counts(const ConsensusLabels& pred, const ConsensusLabels& truth, Category category);

// A value, or the reason it could not be computed.
struct Measure {
  std::optional<double> value;
  std::string reason;
};

struct Prf {
  Measure precision;
  Measure recall;
  Measure f1;
};
Prf precision_recall_f1(const ConfusionCounts& c);

using CategoryProportions = std::array<std::optional<double>, kNumCategories>;

// Share of True among present values, per category.
CategoryProportions category_distribution(const AnnotationSet& set, const std::string& annotator);
CategoryProportions category_distribution(const ConsensusLabels& labels);

// Kappa between two label sets on their shared posts (pairwise deletion).
KappaResult kappa_between(const ConsensusLabels& pred, const ConsensusLabels& truth, Category category);

struct CategoryEval {
  std::optional<KappaResult> kappa;
  std::optional<ConfusionCounts> counts;
  Prf prf;
  std::string error;
};

struct CandidateEval {
  RaterSubset subset;
  std::array<CategoryEval, kNumCategories> categories;
  std::string error;  // whole-candidate failure, e.g. unknown annotator
};

struct TruthComparison {
  std::vector<CandidateEval> candidates;
  // Index into candidates of the highest-kappa subset per category; ties go
  // to the lexicographically smallest subset name.
  std::array<std::optional<std::size_t>, kNumCategories> best;
};

CandidateEval evaluate_against_truth(const ConsensusLabels& pred, const ConsensusLabels& truth);
TruthComparison compare_to_truth(const std::vector<ConsensusLabels>& preds, const ConsensusLabels& truth);
TruthComparison kappa_vs_truth(const AnnotationSet& set, const std::vector<RaterSubset>& candidates,
                               const ConsensusLabels& truth, const VotePolicy& policy = {});

struct Cooccurrence {
  std::size_t n_posts = 0;
  // at_least[k - 1] = share of posts with at least k True categories.
  std::array<double, kNumCategories> at_least{};
  // counts[i][j]: posts True for both i and j; the diagonal holds per-category
  // True counts.
  std::array<std::array<std::size_t, kNumCategories>, kNumCategories> counts{};
};
// Missing values count as not True here.
Cooccurrence cooccurrence_stats(const ConsensusLabels& labels);

}  // namespace crowdlabel
