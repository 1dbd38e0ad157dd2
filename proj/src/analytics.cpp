#include "crowdlabel/analytics.hpp"

#include <unordered_map>

#include "crowdlabel/error.hpp"

namespace crowdlabel {

namespace {

struct Aligned {
  std::vector<std::optional<bool>> pred;
  std::vector<std::optional<bool>> truth;
};

Aligned align(const ConsensusLabels& pred, const ConsensusLabels& truth, Category category) {
  std::unordered_map<std::string, std::size_t> pred_index;
  pred_index.reserve(pred.posts.size());
  for (std::size_t i = 0; i < pred.posts.size(); ++i) pred_index.emplace(pred.posts[i], i);
  Aligned a;
  for (std::size_t i = 0; i < truth.posts.size(); ++i) {
    auto it = pred_index.find(truth.posts[i]);
    if (it == pred_index.end()) continue;
    a.pred.push_back(pred.labels[it->second][category]);
    a.truth.push_back(truth.labels[i][category]);
  }
  if (a.pred.empty()) {
    throw InvalidArgument("prediction '" + pred.subset.name() + "' and truth '" + truth.subset.name() + "' share no posts");
  }
  return a;
}

Measure ratio(std::size_t num, std::size_t den, const char* reason) {
  if (den == 0) return {std::nullopt, reason};
  return {static_cast<double>(num) / static_cast<double>(den), {}};
}

}  // namespace

ConfusionCounts confusion_counts(const ConsensusLabels& pred, const ConsensusLabels& truth, Category category) {
  const auto a = align(pred, truth, category);
  ConfusionCounts c;
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    if (!a.pred[i] || !a.truth[i]) {
      ++c.n_excluded_missing;
      continue;
    }
    if (*a.pred[i]) {
      (*a.truth[i] ? c.tp : c.fp) += 1;
    } else {
      (*a.truth[i] ? c.fn : c.tn) += 1;
    }
  }
  return c;
}

Prf precision_recall_f1(const ConfusionCounts& c) {
  Prf r;
  r.precision = ratio(c.tp, c.tp + c.fp, "no positive predictions (tp + fp = 0)");
  r.recall = ratio(c.tp, c.tp + c.fn, "no positive truth labels (tp + fn = 0)");
  if (!r.precision.value || !r.recall.value) {
    r.f1 = {std::nullopt, "precision or recall undefined"};
  } else {
    const double p = *r.precision.value, q = *r.recall.value;
    r.f1.value = (p + q == 0.0) ? 0.0 : 2.0 * p * q / (p + q);
  }
  return r;
}

CategoryProportions category_distribution(const AnnotationSet& set, const std::string& annotator) {
  const auto col = set.require_annotator(annotator);
  CategoryProportions out;
  for (Category c : kAllCategories) {
    std::size_t yes = 0, present = 0;
    for (std::size_t p = 0; p < set.posts().size(); ++p) {
      const auto v = set.value(p, col, c);
      if (!v) continue;
      ++present;
      yes += *v ? 1 : 0;
    }
    if (present > 0) out[index_of(c)] = static_cast<double>(yes) / static_cast<double>(present);
  }
  return out;
}

CategoryProportions category_distribution(const ConsensusLabels& labels) {
  CategoryProportions out;
  for (Category c : kAllCategories) {
    std::size_t yes = 0, present = 0;
    for (const auto& lv : labels.labels) {
      if (!lv[c]) continue;
      ++present;
      yes += *lv[c] ? 1 : 0;
    }
    if (present > 0) out[index_of(c)] = static_cast<double>(yes) / static_cast<double>(present);
  }
  return out;
}

KappaResult kappa_between(const ConsensusLabels& pred, const ConsensusLabels& truth, Category category) {
  auto a = align(pred, truth, category);
  const auto m = CategoryMatrix::from_columns({std::move(a.pred), std::move(a.truth)}, category);
  return cohens_kappa(m, 0, 1);
}

CandidateEval evaluate_against_truth(const ConsensusLabels& pred, const ConsensusLabels& truth) {
  CandidateEval ev;
  ev.subset = pred.subset;
  for (Category c : kAllCategories) {
    auto& ce = ev.categories[index_of(c)];
    try {
      ce.counts = confusion_counts(pred, truth, c);
      ce.prf = precision_recall_f1(*ce.counts);
      ce.kappa = kappa_between(pred, truth, c);
    } catch (const Error& e) {
      ce.error = e.what();
    }
  }
  return ev;
}

namespace {

void pick_best(TruthComparison& cmp) {
  for (Category c : kAllCategories) {
    std::optional<std::size_t> best;
    std::string best_name;
    for (std::size_t i = 0; i < cmp.candidates.size(); ++i) {
      const auto& k = cmp.candidates[i].categories[index_of(c)].kappa;
      if (!k) continue;
      const auto name = cmp.candidates[i].subset.name();
      if (!best) {
        best = i;
        best_name = name;
        continue;
      }
      const double cur = cmp.candidates[*best].categories[index_of(c)].kappa->kappa;
      if (k->kappa > cur || (k->kappa == cur && name < best_name)) {
        best = i;
        best_name = name;
      }
    }
    cmp.best[index_of(c)] = best;
  }
}

}  // namespace

TruthComparison compare_to_truth(const std::vector<ConsensusLabels>& preds, const ConsensusLabels& truth) {
  TruthComparison cmp;
  for (const auto& p : preds) cmp.candidates.push_back(evaluate_against_truth(p, truth));
  pick_best(cmp);
  return cmp;
}

TruthComparison kappa_vs_truth(const AnnotationSet& set, const std::vector<RaterSubset>& candidates,
                               const ConsensusLabels& truth, const VotePolicy& policy) {
  TruthComparison cmp;
  for (const auto& subset : candidates) {
    try {
      cmp.candidates.push_back(evaluate_against_truth(consensus_labels(set, subset, policy), truth));
    } catch (const Error& e) {
      CandidateEval ev;
      ev.subset = subset;
      ev.error = e.what();
      for (auto& ce : ev.categories) ce.error = e.what();
      cmp.candidates.push_back(std::move(ev));
    }
  }
  pick_best(cmp);
  return cmp;
}

Cooccurrence cooccurrence_stats(const ConsensusLabels& labels) {
  Cooccurrence out;
  out.n_posts = labels.labels.size();
  std::array<std::size_t, kNumCategories + 1> by_count{};
  for (const auto& lv : labels.labels) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < kNumCategories; ++i) {
      if (lv[kAllCategories[i]] != true) continue;
      ++k;
      for (std::size_t j = 0; j < kNumCategories; ++j) {
        if (lv[kAllCategories[j]] == true) ++out.counts[i][j];
      }
    }
    ++by_count[k];
  }
  if (out.n_posts == 0) return out;
  std::size_t tail = 0;
  for (std::size_t k = kNumCategories; k >= 1; --k) {
    tail += by_count[k];
    out.at_least[k - 1] = static_cast<double>(tail) / static_cast<double>(out.n_posts);
  }
  return out;
}

}  // namespace crowdlabel
