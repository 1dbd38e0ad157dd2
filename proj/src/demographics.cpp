#include "crowdlabel/demographics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "crowdlabel/error.hpp"
#include "crowdlabel/io.hpp"
#include "crowdlabel/special_functions.hpp"

namespace crowdlabel {

const std::vector<DemographicField>& demographic_schema() {
  static const std::vector<DemographicField> schema = {
      {"age", FieldScale::Ordinal, {"18-24 years", "25-34 years", "35-44 years", "45-54 years", "55+ years"}},
      {"gender", FieldScale::Nominal, {"Male", "Female", "Non-binary", std::string(kPreferNotToSay)}},
      {"income",
       FieldScale::Ordinal,
       {"Less than $20k", "$20k-$30k", "$30k-$40k", "$40k-$50k", "$50k-$75k", "$75k-$100k", "$100k-$150k",
        "More than $150k"}},
      {"area", FieldScale::Nominal, {"Rural", "Suburban", "Urban", "Metropolitan", "Other"}},
      {"ideology", FieldScale::Ordinal, {"Very Liberal", "Liberal", "Centrist", "Conservative", "Very Conservative"}},
      {"affiliation", FieldScale::Nominal, {"Democrat", "Republican", "Independent", "Other", std::string(kPreferNotToSay)}},
      {"education",
       FieldScale::Ordinal,
       {"High School / GED", "Some College", "Bachelor's Degree", "Master's Degree", "Doctorate or Higher"}},
      {"ai_experience",
       FieldScale::Ordinal,
       {"Strongly Disagree", "Somewhat Disagree", "Neutral", "Somewhat Agree", "Strongly Agree"}},
  };
  return schema;
}

const DemographicField& demographic_field(std::string_view name) {
  for (const auto& f : demographic_schema()) {
    if (f.name == name) return f;
  }
  throw InvalidArgument("unknown demographic field '" + std::string(name) + "'");
}

namespace {

// Lowercase, dashes of any style (including "--") folded to '-', spaces
// around dashes dropped, runs of whitespace collapsed, curly apostrophes
// straightened.
std::string normalize_level(std::string_view s) {
  std::string tmp;
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 3, "\xE2\x80\x93") == 0 || s.compare(i, 3, "\xE2\x80\x94") == 0) {
      tmp += '-';
      i += 3;
    } else if (s.compare(i, 3, "\xE2\x80\x99") == 0) {
      tmp += '\'';
      i += 3;
    } else {
      const char ch = s[i++];
      tmp += (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
    }
  }
  std::string out;
  for (char ch : tmp) {
    const bool space = ch == ' ' || ch == '\t';
    if (space) {
      if (!out.empty() && out.back() != ' ' && out.back() != '-') out += ' ';
    } else if (ch == '-') {
      if (!out.empty() && out.back() == ' ') out.pop_back();
      if (out.empty() || out.back() != '-') out += '-';
    } else {
      out += ch;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool is_prefer_not_to_say(std::string_view value) { return normalize_level(value) == normalize_level(kPreferNotToSay); }

std::optional<bool> label_field(const nlohmann::json& obj, Category c) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const auto cat = category_from_name(it.key());
    if (!cat || *cat != c) continue;
    if (it->is_null()) return std::nullopt;
    if (!it->is_boolean()) throw IngestError("category '" + it.key() + "' must be true, false or null");
    return it->get<bool>();
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::size_t> level_index(const DemographicField& field, std::string_view value) {
  const auto key = normalize_level(value);
  for (std::size_t i = 0; i < field.levels.size(); ++i) {
    if (normalize_level(field.levels[i]) == key) return i;
  }
  return std::nullopt;
}

std::vector<Assignment> read_assignments(std::istream& in) {
  std::vector<Assignment> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos || is_header_line(line)) continue;
    const auto where = "assignments line " + std::to_string(line_number) + ": ";
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw IngestError(where + "invalid JSON object");
    Assignment a;
    if (!doc.contains("post_id") || !doc["post_id"].is_string()) throw IngestError(where + "missing post_id");
    if (!doc.contains("worker_id") || !doc["worker_id"].is_string()) throw IngestError(where + "missing worker_id");
    a.post_id = doc["post_id"].get<std::string>();
    a.worker_id = doc["worker_id"].get<std::string>();
    if (auto d = doc.find("demographics"); d != doc.end() && d->is_object()) {
      for (auto it = d->begin(); it != d->end(); ++it) {
        if (it->is_string()) a.demographics[it.key()] = it->get<std::string>();
      }
    }
    const auto& label_src = (doc.contains("labels") && doc["labels"].is_object()) ? doc["labels"] : doc;
    try {
      for (Category c : kAllCategories) a.labels[c] = label_field(label_src, c);
    } catch (const IngestError& e) {
      throw IngestError(where + e.what());
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Assignment> read_assignments_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open assignments file " + path.string());
  return read_assignments(in);
}

AnnotationSet human_annotation_set(const std::vector<Assignment>& assignments) {
  AnnotationSet set;
  for (const auto& a : assignments) {
    Annotation ann;
    ann.post_id = a.post_id;
    ann.annotator_id = a.worker_id;
    ann.annotator_kind = AnnotatorKind::Human;
    ann.labels = a.labels;
    set.insert(ann);
  }
  return set;
}

ContingencyTable contingency_table(const std::vector<Assignment>& assignments, std::string_view field_name,
                                   Category category) {
  const auto& field = demographic_field(field_name);
  ContingencyTable t;
  t.field = field.name;
  t.category = category;
  t.col_labels = {"True", "False"};

  // Row keys: declared index, then "Prefer not to say" for ordinal fields,
  // then undeclared values alphabetically.
  std::vector<std::array<std::uint64_t, 2>> declared(field.levels.size(), {0, 0});
  std::array<std::uint64_t, 2> prefer{0, 0};
  std::map<std::string, std::array<std::uint64_t, 2>> extra;
  for (const auto& a : assignments) {
    const auto v = a.labels[category];
    auto it = a.demographics.find(field.name);
    if (!v || it == a.demographics.end() || it->second.empty()) {
      ++t.n_excluded;
      continue;
    }
    const std::size_t col = *v ? 0 : 1;
    if (auto idx = level_index(field, it->second)) {
      ++declared[*idx][col];
    } else if (is_prefer_not_to_say(it->second)) {
      ++prefer[col];
    } else {
      ++extra[it->second][col];
    }
  }
  auto push = [&t](const std::string& label, const std::array<std::uint64_t, 2>& row) {
    if (row[0] + row[1] == 0) return;
    t.row_labels.push_back(label);
    t.counts.push_back({row[0], row[1]});
  };
  for (std::size_t i = 0; i < field.levels.size(); ++i) push(field.levels[i], declared[i]);
  push(std::string(kPreferNotToSay), prefer);
  for (const auto& [label, row] : extra) push(label, row);
  if (t.row_labels.size() < 2) {
    throw UndefinedStatistic("field '" + field.name + "' has " + std::to_string(t.row_labels.size()) +
                             " populated level(s) for " + std::string(category_key(category)) +
                             "; a test needs at least two");
  }
  return t;
}

AssociationResult chi_square_test(const std::vector<std::vector<double>>& table) {
  const std::size_t r = table.size();
  if (r < 2) throw UndefinedStatistic("chi-square test needs at least two rows");
  const std::size_t c = table.front().size();
  if (c < 2) throw UndefinedStatistic("chi-square test needs at least two columns");
  std::vector<double> row_sum(r, 0.0), col_sum(c, 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (table[i].size() != c) throw InvalidArgument("contingency table rows differ in length");
    for (std::size_t j = 0; j < c; ++j) {
      if (table[i][j] < 0.0) throw InvalidArgument("contingency counts must be non-negative");
      row_sum[i] += table[i][j];
      col_sum[j] += table[i][j];
      n += table[i][j];
    }
  }
  double chi = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double e = row_sum[i] * col_sum[j] / n;
      if (!(e > 0.0)) {
        throw UndefinedStatistic("expected count is zero in row " + std::to_string(i) + ", column " + std::to_string(j) +
                                 "; merge sparse categories before testing");
      }
      const double d = table[i][j] - e;
      chi += d * d / e;
    }
  }
  AssociationResult res;
  res.chi_square = chi;
  res.rows = r;
  res.cols = c;
  res.n = n;
  res.dof = (r - 1) * (c - 1);
  res.p_value = chi_square_sf(chi, static_cast<double>(res.dof));
  res.cramers_v = std::min(1.0, std::sqrt(chi / (n * static_cast<double>(std::min(r - 1, c - 1)))));
  return res;
}

AssociationResult chi_square_test(const ContingencyTable& table) {
  std::vector<std::vector<double>> d;
  d.reserve(table.counts.size());
  for (const auto& row : table.counts) d.emplace_back(row.begin(), row.end());
  return chi_square_test(d);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

TrendResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman inputs differ in length");
  TrendResult t;
  t.n = x.size();
  if (t.n < 2) {
    t.reason = "fewer than two observations";
    return t;
  }
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mean = (static_cast<double>(t.n) + 1.0) / 2.0;
  long double sxy = 0.0L, sxx = 0.0L, syy = 0.0L;
  for (std::size_t i = 0; i < t.n; ++i) {
    const long double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0L || syy == 0.0L) {
    t.reason = sxx == 0.0L ? "ordinal values are constant" : "labels are constant";
    return t;
  }
  const double rho = std::clamp(static_cast<double>(sxy / std::sqrt(sxx * syy)), -1.0, 1.0);
  t.rho = rho;
  if (t.n > 2) {
    const double df = static_cast<double>(t.n - 2);
    if (std::fabs(rho) == 1.0) {
      t.p_value = 0.0;
    } else {
      t.p_value = student_t_two_sided(rho * std::sqrt(df / (1.0 - rho * rho)), df);
    }
  }
  return t;
}

TrendResult spearman_trend(const std::vector<Assignment>& assignments, std::string_view field_name, Category category) {
  const auto& field = demographic_field(field_name);
  if (field.scale != FieldScale::Ordinal) {
    throw InvalidArgument("field '" + field.name + "' is nominal; trend tests need an ordinal field");
  }
  std::vector<double> x, y;
  std::set<std::size_t> levels;
  for (const auto& a : assignments) {
    const auto v = a.labels[category];
    auto it = a.demographics.find(field.name);
    if (!v || it == a.demographics.end()) continue;
    const auto idx = level_index(field, it->second);
    if (!idx) continue;
    levels.insert(*idx);
    x.push_back(static_cast<double>(*idx));
    y.push_back(*v ? 1.0 : 0.0);
  }
  if (levels.size() < 3) {
    throw UndefinedStatistic("field '" + field.name + "' has " + std::to_string(levels.size()) +
                             " distinct level(s) present; a trend test needs at least three");
  }
  return spearman(x, y);
}

}  // namespace crowdlabel
