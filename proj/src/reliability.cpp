#include "crowdlabel/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "crowdlabel/consensus.hpp"
#include "crowdlabel/error.hpp"
#include "crowdlabel/io.hpp"

namespace crowdlabel {

CategoryMatrix::CategoryMatrix(Category category, std::vector<std::string> units, std::vector<std::string> raters)
    : category_(category), units_(std::move(units)), raters_(std::move(raters)), values_(units_.size() * raters_.size()) {}

CategoryMatrix CategoryMatrix::from_set(const AnnotationSet& set, Category category) {
  return from_set(set, category, set.posts(), set.annotators());
}

CategoryMatrix CategoryMatrix::from_set(const AnnotationSet& set, Category category, const std::vector<std::string>& units,
                                        const std::vector<std::string>& raters) {
  CategoryMatrix m(category, units, raters);
  std::vector<std::size_t> cols;
  cols.reserve(raters.size());
  for (const auto& r : raters) cols.push_back(set.require_annotator(r));
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto p = set.post_index(units[u]);
    if (!p) throw InvalidArgument("unknown unit '" + units[u] + "'");
    for (std::size_t r = 0; r < cols.size(); ++r) m.set(u, r, set.value(*p, cols[r], category));
  }
  return m;
}

CategoryMatrix CategoryMatrix::from_columns(const std::vector<std::vector<std::optional<bool>>>& columns, Category category) {
  const std::size_t n_units = columns.empty() ? 0 : columns.front().size();
  std::vector<std::string> units, raters;
  for (std::size_t u = 0; u < n_units; ++u) units.push_back("u" + std::to_string(u));
  for (std::size_t r = 0; r < columns.size(); ++r) {
    if (columns[r].size() != n_units) throw InvalidArgument("matrix columns differ in length");
    raters.push_back("r" + std::to_string(r));
  }
  CategoryMatrix m(category, std::move(units), std::move(raters));
  for (std::size_t r = 0; r < columns.size(); ++r) {
    for (std::size_t u = 0; u < n_units; ++u) m.set(u, r, columns[r][u]);
  }
  return m;
}

std::size_t CategoryMatrix::rater_index(const std::string& rater) const {
  auto it = std::find(raters_.begin(), raters_.end(), rater);
  if (it == raters_.end()) throw InvalidArgument("rater '" + rater + "' is not in the matrix");
  return static_cast<std::size_t>(it - raters_.begin());
}

namespace {

struct PairCounts {
  std::size_t n = 0;
  std::size_t agree = 0;
  std::size_t a_true = 0;
  std::size_t b_true = 0;
};

PairCounts count_pair(const CategoryMatrix& m, std::size_t a, std::size_t b) {
  if (a >= m.raters().size() || b >= m.raters().size()) throw InvalidArgument("rater index out of range");
  PairCounts c;
  for (std::size_t u = 0; u < m.units().size(); ++u) {
    const auto& va = m.at(u, a);
    const auto& vb = m.at(u, b);
    if (!va || !vb) continue;
    ++c.n;
    c.agree += (*va == *vb) ? 1 : 0;
    c.a_true += *va ? 1 : 0;
    c.b_true += *vb ? 1 : 0;
  }
  if (c.n == 0) {
    throw UndefinedStatistic("raters '" + m.raters()[a] + "' and '" + m.raters()[b] + "' share no co-annotated unit");
  }
  return c;
}

}  // namespace

double percent_agreement(const CategoryMatrix& matrix, std::size_t rater_a, std::size_t rater_b) {
  const auto c = count_pair(matrix, rater_a, rater_b);
  return 100.0 * static_cast<double>(c.agree) / static_cast<double>(c.n);
}

KappaResult cohens_kappa(const CategoryMatrix& matrix, std::size_t rater_a, std::size_t rater_b) {
  const auto c = count_pair(matrix, rater_a, rater_b);
  const double n = static_cast<double>(c.n);
  const std::size_t chance_matches = c.a_true * c.b_true + (c.n - c.a_true) * (c.n - c.b_true);
  KappaResult r;
  r.n_units_used = c.n;
  r.observed_agreement = static_cast<double>(c.agree) / n;
  r.expected_agreement = static_cast<double>(chance_matches) / (n * n);
  if (chance_matches == c.n * c.n) {
    // Both raters constant on the same class, so p_o is 1 as well.
    r.degenerate = true;
    r.kappa = 1.0;
    return r;
  }
  r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
  return r;
}

AlphaResult krippendorff_alpha(const CategoryMatrix& matrix) {
  // For two classes the off-diagonal coincidences are o_10 = o_01 =
  // sum_u t_u (m_u - t_u) / (m_u - 1), with t_u the True count of unit u.
  double off_diagonal = 0.0;
  std::size_t n = 0, n_true = 0;
  for (std::size_t u = 0; u < matrix.units().size(); ++u) {
    std::size_t m = 0, t = 0;
    for (std::size_t r = 0; r < matrix.raters().size(); ++r) {
      const auto& v = matrix.at(u, r);
      if (!v) continue;
      ++m;
      t += *v ? 1 : 0;
    }
    if (m < 2) continue;
    off_diagonal += static_cast<double>(t * (m - t)) / static_cast<double>(m - 1);
    n += m;
    n_true += t;
  }
  if (n == 0) throw UndefinedStatistic("no unit has two or more values; alpha is undefined");

  AlphaResult r;
  r.n_pairable_values = n;
  const std::size_t n_false = n - n_true;
  const double dn = static_cast<double>(n);
  r.observed_disagreement = 2.0 * off_diagonal / dn;
  r.expected_disagreement = 2.0 * static_cast<double>(n_true) * static_cast<double>(n_false) / (dn * (dn - 1.0));
  if (n_true == 0 || n_false == 0) {
    r.degenerate = true;
    r.alpha = 1.0;
    return r;
  }
  r.alpha = 1.0 - r.observed_disagreement / r.expected_disagreement;
  return r;
}

std::string_view pair_metric_name(PairMetric m) { return m == PairMetric::Kappa ? "kappa" : "percent_agreement"; }

SummaryStats summarize(const std::vector<double>& values) {
  SummaryStats s;
  s.n = values.size();
  if (values.empty()) return s;
  long double sum = 0.0L;
  for (double v : values) sum += v;
  const long double mean = sum / static_cast<long double>(values.size());
  long double ss = 0.0L;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.mean = static_cast<double>(mean);
  s.sd = static_cast<double>(std::sqrt(ss / static_cast<long double>(values.size())));
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  // Summation rounding can put the mean a hair outside [min, max] when all
  // values are equal.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

PairwiseSummary pairwise_summary(const CategoryMatrix& matrix, PairMetric metric, const std::vector<std::string>& raters) {
  std::vector<std::size_t> idx;
  if (raters.empty()) {
    for (std::size_t r = 0; r < matrix.raters().size(); ++r) idx.push_back(r);
  } else {
    for (const auto& r : raters) idx.push_back(matrix.rater_index(r));
  }
  if (idx.size() < 2) throw InvalidArgument("pairwise summary needs at least two raters");

  PairwiseSummary summary;
  summary.metric = metric;
  std::vector<double> values;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      PairValue pv{matrix.raters()[idx[i]], matrix.raters()[idx[j]], std::nullopt, std::nullopt, 0, {}};
      try {
        if (metric == PairMetric::Kappa) {
          pv.kappa = cohens_kappa(matrix, idx[i], idx[j]);
          pv.value = pv.kappa->kappa;
          pv.n_units = pv.kappa->n_units_used;
        } else {
          pv.value = percent_agreement(matrix, idx[i], idx[j]);
          pv.n_units = count_pair(matrix, idx[i], idx[j]).n;
        }
        values.push_back(*pv.value);
      } catch (const UndefinedStatistic& e) {
        pv.error = e.what();
        ++summary.n_excluded;
      }
      summary.pairs.push_back(std::move(pv));
    }
  }
  const auto stats = summarize(values);
  summary.mean = stats.mean;
  summary.sd = stats.sd;
  summary.min = stats.min;
  summary.max = stats.max;
  summary.n_pairs = stats.n;
  return summary;
}

std::vector<GroupAlpha> grouped_alpha(const AnnotationSet& set, const std::vector<RaterGroup>& groups) {
  std::vector<GroupAlpha> out;
  out.reserve(groups.size() * kNumCategories);
  for (const auto& g : groups) {
    for (Category c : kAllCategories) {
      GroupAlpha ga{g.name, c, std::nullopt, {}};
      try {
        const auto matrix = CategoryMatrix::from_set(set, c, g.units.empty() ? set.posts() : g.units, g.raters);
        ga.result = krippendorff_alpha(matrix);
      } catch (const Error& e) {
        ga.error = e.what();
      }
      out.push_back(std::move(ga));
    }
  }
  return out;
}

std::vector<RaterGroup> rater_triples(const std::vector<std::string>& raters) {
  std::vector<RaterGroup> groups;
  if (raters.size() < 3) return groups;
  for (const auto& subset : enumerate_subsets(raters, {3})) {
    groups.push_back(RaterGroup{subset.name(), {}, subset.annotator_ids()});
  }
  return groups;
}

std::vector<RaterGroup> load_groups(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open groups file " + path.string());
  std::vector<RaterGroup> groups;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos || is_header_line(line)) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw IngestError("groups line " + std::to_string(n) + ": invalid JSON object");
    RaterGroup g;
    g.name = doc.value("name", "group" + std::to_string(groups.size() + 1));
    g.units = doc.value("units", std::vector<std::string>{});
    g.raters = doc.value("raters", std::vector<std::string>{});
    if (g.raters.empty()) throw IngestError("groups line " + std::to_string(n) + ": 'raters' must list at least one rater");
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace crowdlabel
