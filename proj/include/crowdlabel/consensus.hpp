#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "crowdlabel/annotation_set.hpp"
#include "crowdlabel/io.hpp"
#include "crowdlabel/labels.hpp"

namespace crowdlabel {

class RaterSubset {
 public:
  RaterSubset() = default;
  explicit RaterSubset(std::vector<std::string> annotator_ids);

  const std::vector<std::string>& annotator_ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  // Members joined with '+', e.g. "gpt-4o+gemini-2.0-flash+llama-3.1-8b".
  std::string name() const;
  static RaterSubset from_name(const std::string& name);

  friend bool operator==(const RaterSubset&, const RaterSubset&) = default;

 private:
  std::vector<std::string> ids_;
};

enum class TieBreak { MarkMissing, Negative };

struct VotePolicy {
  // Fewer present votes than this gives a missing result. The quorum is
  // capped at the number of votes cast, so a one-rater subset reproduces
  // that rater.
  std::size_t min_valid_votes = 2;
  TieBreak tie_break = TieBreak::MarkMissing;

  void validate() const;
};

std::optional<bool> majority_vote(std::span<const std::optional<bool>> votes, const VotePolicy& policy = {});

struct ConsensusLabels {
  RaterSubset subset;
  std::vector<std::string> posts;
  std::vector<LabelVector> labels;  // parallel to posts

  const LabelVector* find(const std::string& post_id) const;
};

ConsensusLabels consensus_labels(const AnnotationSet& set, const RaterSubset& subset, const VotePolicy& policy = {});

// All combinations of the requested sizes; sizes ascending, combinations in
// lexicographic order of annotator position.
std::vector<RaterSubset> enumerate_subsets(const std::vector<std::string>& annotators, const std::set<std::size_t>& sizes);

// Consensus records: post_id, one true/false/null field per category, subset.
void write_consensus(std::ostream& out, const std::vector<ConsensusLabels>& consensus, const OutputHeader& header);
std::vector<ConsensusLabels> read_consensus(std::istream& in);
std::vector<ConsensusLabels> read_consensus_file(const std::filesystem::path& path);

std::string_view tie_break_name(TieBreak t);
TieBreak tie_break_from_name(std::string_view name);

}  // namespace crowdlabel
