#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlabel/error.hpp"

namespace crowdlabel {

// The five harm categories. The enumerator order is the serialization order
// used by every file format and report in the project.
enum class Category : std::size_t { Conspiracy = 0, Sensationalism, HateSpeech, Speculation, Satire };

inline constexpr std::size_t kNumCategories = 5;

inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::Conspiracy, Category::Sensationalism, Category::HateSpeech, Category::Speculation,
    Category::Satire};

constexpr std::size_t index_of(Category c) { return static_cast<std::size_t>(c); }

// Canonical key used in records ("HateSpeech").
std::string_view category_key(Category c);
// Human-facing name used in prompts and tables ("Hate Speech").
std::string_view category_display_name(Category c);
// Accepts any spelling that normalizes to a category name: case-insensitive,
// ignoring whitespace, '_' and '-'.
std::optional<Category> category_from_name(std::string_view name);

// Five tri-state slots, one per category. An empty slot means the annotation
// is missing, not negative.
class LabelVector {
 public:
  LabelVector() = default;

  static LabelVector all(bool value);
  static LabelVector from_bools(const std::array<bool, kNumCategories>& values);

  std::optional<bool>& operator[](Category c) { return slots_[index_of(c)]; }
  const std::optional<bool>& operator[](Category c) const { return slots_[index_of(c)]; }

  bool fully_present() const;
  bool all_missing() const;
  std::size_t present_count() const;
  std::size_t true_count() const;

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::array<std::optional<bool>, kNumCategories> slots_{};
};

struct CategoryDefinition {
  Category category;
  std::string definition_text;
};

// The prompt's five definitions, in category order.
const std::vector<CategoryDefinition>& default_definitions();

enum class AnnotatorKind { Llm, Human };

std::string_view annotator_kind_name(AnnotatorKind kind);
AnnotatorKind annotator_kind_from_name(std::string_view name);

struct Annotation {
  std::string post_id;
  std::string annotator_id;
  AnnotatorKind annotator_kind = AnnotatorKind::Llm;
  LabelVector labels;
  int attempt_count = 1;
  // Set when the cell degraded because of a transport failure or retry
  // exhaustion.
  std::optional<std::string> error;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Raised by parse_label_response. Names every offending key; `partial` holds
// the categories that did parse, which the gateway uses only once retries are
// exhausted.
class LabelParseError : public Error {
 public:
  enum class Reason { NotAnObject, MissingKey, ExtraKey, BadValue, DuplicateKey };

  struct Problem {
    Reason reason;
    std::string key;
  };

  LabelParseError(std::vector<Problem> problems, LabelVector partial);
  explicit LabelParseError(const std::string& message);

  const std::vector<Problem>& problems() const { return problems_; }
  const LabelVector& partial() const { return partial_; }
  // True when every problem is a missing or unparseable value of a known
  // category: the rest of the response is structurally sound.
  bool category_scoped() const;

 private:
  std::vector<Problem> problems_;
  LabelVector partial_;
};

std::string_view parse_reason_name(LabelParseError::Reason reason);

// Parses a model reply into a fully-present LabelVector. Surrounding
// whitespace and a Markdown code fence around the object are tolerated.
LabelVector parse_label_response(std::string_view text);

// Compact JSON object with canonical keys in category order. Missing slots
// serialize as null.
std::string serialize_labels(const LabelVector& labels);

}  // namespace crowdlabel
