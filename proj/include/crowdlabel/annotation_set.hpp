#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crowdlabel/io.hpp"
#include "crowdlabel/labels.hpp"

namespace crowdlabel {

struct Cell {
  LabelVector labels;
  int attempt_count = 1;
  std::optional<std::string> error;

  friend bool operator==(const Cell&, const Cell&) = default;
};

// Posts x annotators matrix of label vectors. Post and annotator order is the
// insertion order and is the order used for serialization.
class AnnotationSet {
 public:
  std::size_t add_post(const std::string& post_id);
  std::size_t add_annotator(const std::string& annotator_id, AnnotatorKind kind);

  // Both ids must already be registered; a cell may be set only once.
  void set(const std::string& post_id, const std::string& annotator_id, Cell cell);
  // Registers unknown ids on the fly.
  void insert(const Annotation& annotation);

  const std::vector<std::string>& posts() const { return posts_; }
  const std::vector<std::string>& annotators() const { return annotators_; }
  AnnotatorKind kind(std::size_t annotator) const { return kinds_[annotator]; }

  std::optional<std::size_t> post_index(const std::string& post_id) const;
  std::optional<std::size_t> annotator_index(const std::string& annotator_id) const;
  // Throws InvalidArgument naming the id.
  std::size_t require_annotator(const std::string& annotator_id) const;

  const std::optional<Cell>& cell(std::size_t post, std::size_t annotator) const { return columns_[annotator][post]; }
  const Cell* find(const std::string& post_id, const std::string& annotator_id) const;
  std::optional<bool> value(std::size_t post, std::size_t annotator, Category c) const;

  std::size_t cell_count() const;
  std::vector<Annotation> annotations() const;

  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;

 private:
  std::vector<std::string> posts_;
  std::vector<std::string> annotators_;
  std::vector<AnnotatorKind> kinds_;
  std::unordered_map<std::string, std::size_t> post_lookup_;
  std::unordered_map<std::string, std::size_t> annotator_lookup_;
  // columns_[annotator][post]
  std::vector<std::vector<std::optional<Cell>>> columns_;
};

// Fraction of posts (over all posts in the set) whose value is missing, per
// annotator and category.
struct MissingRate {
  std::string annotator_id;
  std::array<double, kNumCategories> per_category{};
  std::size_t failed_cells = 0;
};
std::vector<MissingRate> missing_rates(const AnnotationSet& set);

// Annotation records: one JSON object per line with post_id, annotator_id,
// annotator_kind, one true/false/null field per category, attempt_count and
// an optional error. The header line lists the annotators so that column
// order survives a round trip even for sparse sets.
std::string annotation_to_json_line(const Annotation& annotation);
Annotation annotation_from_json(const nlohmann::json& record);
void write_annotations(std::ostream& out, const AnnotationSet& set, const OutputHeader& header);
AnnotationSet read_annotations(std::istream& in);
AnnotationSet read_annotations_file(const std::filesystem::path& path);

}  // namespace crowdlabel
