#include "crowdlabel/annotation_set.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "crowdlabel/error.hpp"

namespace crowdlabel {

std::size_t AnnotationSet::add_post(const std::string& post_id) {
  auto [it, inserted] = post_lookup_.emplace(post_id, posts_.size());
  if (inserted) {
    posts_.push_back(post_id);
    for (auto& column : columns_) column.emplace_back();
  }
  return it->second;
}

std::size_t AnnotationSet::add_annotator(const std::string& annotator_id, AnnotatorKind kind) {
  auto [it, inserted] = annotator_lookup_.emplace(annotator_id, annotators_.size());
  if (inserted) {
    annotators_.push_back(annotator_id);
    kinds_.push_back(kind);
    columns_.emplace_back(posts_.size());
  } else if (kinds_[it->second] != kind) {
    throw InvalidArgument("annotator '" + annotator_id + "' registered with conflicting kinds");
  }
  return it->second;
}

void AnnotationSet::set(const std::string& post_id, const std::string& annotator_id, Cell cell) {
  const auto p = post_index(post_id);
  if (!p) throw InvalidArgument("unknown post '" + post_id + "'");
  const auto a = require_annotator(annotator_id);
  auto& slot = columns_[a][*p];
  if (slot) throw InvalidArgument("duplicate annotation for post '" + post_id + "' by '" + annotator_id + "'");
  if (cell.attempt_count < 1) throw InvalidArgument("attempt_count must be at least 1");
  slot = std::move(cell);
}

void AnnotationSet::insert(const Annotation& annotation) {
  add_post(annotation.post_id);
  add_annotator(annotation.annotator_id, annotation.annotator_kind);
  set(annotation.post_id, annotation.annotator_id, Cell{annotation.labels, annotation.attempt_count, annotation.error});
}

std::optional<std::size_t> AnnotationSet::post_index(const std::string& post_id) const {
  auto it = post_lookup_.find(post_id);
  if (it == post_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> AnnotationSet::annotator_index(const std::string& annotator_id) const {
  auto it = annotator_lookup_.find(annotator_id);
  if (it == annotator_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t AnnotationSet::require_annotator(const std::string& annotator_id) const {
  const auto a = annotator_index(annotator_id);
  if (!a) throw InvalidArgument("unknown annotator '" + annotator_id + "'");
  return *a;
}

const Cell* AnnotationSet::find(const std::string& post_id, const std::string& annotator_id) const {
  const auto p = post_index(post_id);
  const auto a = annotator_index(annotator_id);
  if (!p || !a) return nullptr;
  const auto& slot = columns_[*a][*p];
  return slot ? &*slot : nullptr;
}

std::optional<bool> AnnotationSet::value(std::size_t post, std::size_t annotator, Category c) const {
  const auto& slot = columns_[annotator][post];
  if (!slot) return std::nullopt;
  return slot->labels[c];
}

std::size_t AnnotationSet::cell_count() const {
  std::size_t n = 0;
  for (const auto& column : columns_) {
    for (const auto& slot : column) n += slot.has_value() ? 1 : 0;
  }
  return n;
}

std::vector<Annotation> AnnotationSet::annotations() const {
  std::vector<Annotation> out;
  for (std::size_t p = 0; p < posts_.size(); ++p) {
    for (std::size_t a = 0; a < annotators_.size(); ++a) {
      const auto& slot = columns_[a][p];
      if (!slot) continue;
      out.push_back(Annotation{posts_[p], annotators_[a], kinds_[a], slot->labels, slot->attempt_count, slot->error});
    }
  }
  return out;
}

std::vector<MissingRate> missing_rates(const AnnotationSet& set) {
  std::vector<MissingRate> rates;
  const auto n_posts = set.posts().size();
  for (std::size_t a = 0; a < set.annotators().size(); ++a) {
    MissingRate rate{set.annotators()[a], {}, 0};
    std::array<std::size_t, kNumCategories> missing{};
    for (std::size_t p = 0; p < n_posts; ++p) {
      const auto& slot = set.cell(p, a);
      if (slot && slot->error) ++rate.failed_cells;
      for (Category c : kAllCategories) {
        if (!slot || !slot->labels[c]) ++missing[index_of(c)];
      }
    }
    for (std::size_t i = 0; i < kNumCategories; ++i) {
      rate.per_category[i] = n_posts == 0 ? 0.0 : static_cast<double>(missing[i]) / static_cast<double>(n_posts);
    }
    rates.push_back(rate);
  }
  return rates;
}

namespace {

std::optional<bool> read_tristate(const nlohmann::json& record, Category c) {
  // Accept the canonical key or any spelling that normalizes to it.
  for (const auto& [key, value] : record.items()) {
    if (category_from_name(key) != c) continue;
    if (value.is_null()) return std::nullopt;
    if (value.is_boolean()) return value.get<bool>();
    throw InvalidArgument("category field '" + key + "' must be true, false or null");
  }
  return std::nullopt;
}

}  // namespace

std::string annotation_to_json_line(const Annotation& annotation) {
  nlohmann::ordered_json obj;
  obj["post_id"] = annotation.post_id;
  obj["annotator_id"] = annotation.annotator_id;
  obj["annotator_kind"] = annotator_kind_name(annotation.annotator_kind);
  for (Category c : kAllCategories) {
    const auto& v = annotation.labels[c];
    obj[std::string(category_key(c))] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  }
  obj["attempt_count"] = annotation.attempt_count;
  if (annotation.error) obj["error"] = *annotation.error;
  return obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

Annotation annotation_from_json(const nlohmann::json& record) {
  if (!record.is_object()) throw InvalidArgument("annotation record is not an object");
  Annotation a;
  auto post = record.find("post_id");
  auto annotator = record.find("annotator_id");
  if (post == record.end() || !post->is_string()) throw InvalidArgument("missing string field 'post_id'");
  if (annotator == record.end() || !annotator->is_string()) throw InvalidArgument("missing string field 'annotator_id'");
  a.post_id = post->get<std::string>();
  a.annotator_id = annotator->get<std::string>();
  a.annotator_kind = annotator_kind_from_name(record.value("annotator_kind", "llm"));
  for (Category c : kAllCategories) a.labels[c] = read_tristate(record, c);
  a.attempt_count = record.value("attempt_count", 1);
  if (a.attempt_count < 1) throw InvalidArgument("attempt_count must be at least 1");
  auto error = record.find("error");
  if (error != record.end() && error->is_string()) a.error = error->get<std::string>();
  return a;
}

void write_annotations(std::ostream& out, const AnnotationSet& set, const OutputHeader& header) {
  nlohmann::ordered_json roster = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < set.annotators().size(); ++i) {
    roster.push_back({{"id", set.annotators()[i]}, {"kind", annotator_kind_name(set.kind(i))}});
  }
  out << header_json_line(header, {{"annotators", roster}}) << '\n';
  for (const auto& a : set.annotations()) out << annotation_to_json_line(a) << '\n';
}

AnnotationSet read_annotations(std::istream& in) {
  AnnotationSet set;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw IngestError("annotations line " + std::to_string(line_number) + ": invalid JSON");
    if (doc.contains("_header")) {
      const auto& h = doc["_header"];
      if (h.contains("annotators") && h["annotators"].is_array()) {
        for (const auto& entry : h["annotators"]) {
          set.add_annotator(entry.value("id", ""), annotator_kind_from_name(entry.value("kind", "llm")));
        }
      }
      continue;
    }
    try {
      set.insert(annotation_from_json(doc));
    } catch (const Error& e) {
      throw IngestError("annotations line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  return set;
}

AnnotationSet read_annotations_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open annotations file " + path.string());
  return read_annotations(in);
}

}  // namespace crowdlabel
