#include "crowdlabel/consensus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_set>

#include "crowdlabel/error.hpp"

namespace crowdlabel {

RaterSubset::RaterSubset(std::vector<std::string> annotator_ids) : ids_(std::move(annotator_ids)) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (id.empty()) throw InvalidArgument("rater subset contains an empty id");
    if (id.find('+') != std::string::npos) throw InvalidArgument("annotator id '" + id + "' must not contain '+'");
    if (!seen.insert(id).second) throw InvalidArgument("rater subset lists '" + id + "' twice");
  }
}

std::string RaterSubset::name() const {
  std::string out;
  for (const auto& id : ids_) {
    if (!out.empty()) out += '+';
    out += id;
  }
  return out;
}

RaterSubset RaterSubset::from_name(const std::string& name) {
  std::vector<std::string> ids;
  std::size_t start = 0;
  while (start <= name.size()) {
    const auto end = name.find('+', start);
    ids.push_back(name.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return RaterSubset(std::move(ids));
}

void VotePolicy::validate() const {
  if (min_valid_votes < 1) throw ConfigError("min_valid_votes must be at least 1");
}

std::optional<bool> majority_vote(std::span<const std::optional<bool>> votes, const VotePolicy& policy) {
  if (votes.empty()) throw InvalidArgument("majority_vote needs at least one vote slot");
  policy.validate();
  std::size_t yes = 0, no = 0;
  for (const auto& v : votes) {
    if (!v) continue;
    (*v ? yes : no) += 1;
  }
  const auto quorum = std::min(policy.min_valid_votes, votes.size());
  if (yes + no < quorum || yes + no == 0) return std::nullopt;
  if (yes > no) return true;
  if (no > yes) return false;
  return policy.tie_break == TieBreak::Negative ? std::optional<bool>(false) : std::nullopt;
}

const LabelVector* ConsensusLabels::find(const std::string& post_id) const {
  // Linear scan; bulk callers build their own index.
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (posts[i] == post_id) return &labels[i];
  }
  return nullptr;
}

ConsensusLabels consensus_labels(const AnnotationSet& set, const RaterSubset& subset, const VotePolicy& policy) {
  policy.validate();
  if (subset.size() == 0) throw InvalidArgument("consensus needs a non-empty rater subset");
  std::vector<std::size_t> columns;
  for (const auto& id : subset.annotator_ids()) columns.push_back(set.require_annotator(id));

  ConsensusLabels out{subset, set.posts(), {}};
  out.labels.reserve(set.posts().size());
  std::vector<std::optional<bool>> votes(columns.size());
  for (std::size_t p = 0; p < set.posts().size(); ++p) {
    LabelVector lv;
    for (Category c : kAllCategories) {
      for (std::size_t k = 0; k < columns.size(); ++k) votes[k] = set.value(p, columns[k], c);
      lv[c] = majority_vote(votes, policy);
    }
    out.labels.push_back(lv);
  }
  return out;
}

std::vector<RaterSubset> enumerate_subsets(const std::vector<std::string>& annotators, const std::set<std::size_t>& sizes) {
  const auto n = annotators.size();
  for (auto k : sizes) {
    if (k == 0) throw InvalidArgument("subset size must be at least 1");
    if (k > n) {
      throw InvalidArgument("subset size " + std::to_string(k) + " exceeds annotator count " + std::to_string(n));
    }
  }
  std::vector<RaterSubset> out;
  for (auto k : sizes) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      std::vector<std::string> ids;
      ids.reserve(k);
      for (auto i : idx) ids.push_back(annotators[i]);
      out.emplace_back(std::move(ids));
      // Advance to the next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return out;
}

void write_consensus(std::ostream& out, const std::vector<ConsensusLabels>& consensus, const OutputHeader& header) {
  nlohmann::ordered_json subsets = nlohmann::ordered_json::array();
  for (const auto& c : consensus) subsets.push_back(c.subset.name());
  out << header_json_line(header, {{"subsets", subsets}}) << '\n';
  for (const auto& c : consensus) {
    const auto name = c.subset.name();
    for (std::size_t i = 0; i < c.posts.size(); ++i) {
      nlohmann::ordered_json rec;
      rec["post_id"] = c.posts[i];
      for (Category cat : kAllCategories) {
        const auto& v = c.labels[i][cat];
        rec[std::string(category_key(cat))] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
      }
      rec["subset"] = name;
      out << rec.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
  }
}

std::vector<ConsensusLabels> read_consensus(std::istream& in) {
  std::vector<ConsensusLabels> out;
  std::map<std::string, std::size_t> by_name;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    const auto where = "consensus line " + std::to_string(line_number) + ": ";
    if (doc.is_discarded() || !doc.is_object()) throw IngestError(where + "invalid JSON object");
    if (doc.contains("_header")) continue;
    if (!doc.contains("post_id") || !doc["post_id"].is_string()) throw IngestError(where + "missing post_id");
    const std::string name = doc.value("subset", "");
    if (name.empty()) throw IngestError(where + "missing subset");
    auto [it, inserted] = by_name.emplace(name, out.size());
    if (inserted) out.push_back(ConsensusLabels{RaterSubset::from_name(name), {}, {}});
    auto& c = out[it->second];
    LabelVector lv;
    for (Category cat : kAllCategories) {
      auto field = doc.find(std::string(category_key(cat)));
      if (field == doc.end() || field->is_null()) continue;
      if (!field->is_boolean()) throw IngestError(where + "category values must be true, false or null");
      lv[cat] = field->get<bool>();
    }
    c.posts.push_back(doc["post_id"].get<std::string>());
    c.labels.push_back(lv);
  }
  return out;
}

std::vector<ConsensusLabels> read_consensus_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open consensus file " + path.string());
  return read_consensus(in);
}

std::string_view tie_break_name(TieBreak t) { return t == TieBreak::Negative ? "negative" : "mark_missing"; }

TieBreak tie_break_from_name(std::string_view name) {
  if (name == "negative") return TieBreak::Negative;
  if (name == "mark_missing") return TieBreak::MarkMissing;
  throw ConfigError("unknown tie_break '" + std::string(name) + "' (expected mark_missing or negative)");
}

}  // namespace crowdlabel
