#include "crowdlabel/labels.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

namespace crowdlabel {

namespace {

using json = nlohmann::json;

std::string normalize_key(std::string_view key) {
  std::string out;
  out.reserve(key.size());
  for (unsigned char c : key) {
    if (std::isspace(c) || c == '_' || c == '-') continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string lower_trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Removes a ```json ... ``` wrapper if present.
std::string_view strip_code_fence(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  if (text.size() >= 6 && text.substr(0, 3) == "```" && text.substr(text.size() - 3) == "```") {
    text.remove_suffix(3);
    text.remove_prefix(3);
    const auto newline = text.find('\n');
    if (newline != std::string_view::npos) {
      // Drop an info string such as "json".
      const auto info = text.substr(0, newline);
      if (std::all_of(info.begin(), info.end(), [](unsigned char c) { return std::isalnum(c) || std::isspace(c); })) {
        text.remove_prefix(newline + 1);
      }
    }
    text = trim(text);
  }
  return text;
}

std::string describe(const std::vector<LabelParseError::Problem>& problems) {
  std::string msg = "label response rejected:";
  for (const auto& p : problems) {
    msg += " ";
    msg += parse_reason_name(p.reason);
    if (!p.key.empty()) msg += " '" + p.key + "'";
    msg += ";";
  }
  msg.pop_back();
  return msg;
}

}  // namespace

std::string_view category_key(Category c) {
  switch (c) {
    case Category::Conspiracy: return "Conspiracy";
    case Category::Sensationalism: return "Sensationalism";
    case Category::HateSpeech: return "HateSpeech";
    case Category::Speculation: return "Speculation";
    case Category::Satire: return "Satire";
  }
  return "";
}

std::string_view category_display_name(Category c) {
  return c == Category::HateSpeech ? std::string_view("Hate Speech") : category_key(c);
}

std::optional<Category> category_from_name(std::string_view name) {
  const auto key = normalize_key(name);
  for (Category c : kAllCategories) {
    if (normalize_key(category_key(c)) == key) return c;
  }
  return std::nullopt;
}

LabelVector LabelVector::all(bool value) {
  LabelVector v;
  for (auto& s : v.slots_) s = value;
  return v;
}

LabelVector LabelVector::from_bools(const std::array<bool, kNumCategories>& values) {
  LabelVector v;
  for (std::size_t i = 0; i < kNumCategories; ++i) v.slots_[i] = values[i];
  return v;
}

bool LabelVector::fully_present() const { return present_count() == kNumCategories; }

bool LabelVector::all_missing() const { return present_count() == 0; }

std::size_t LabelVector::present_count() const {
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); }));
}

std::size_t LabelVector::true_count() const {
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s.value_or(false); }));
}

const std::vector<CategoryDefinition>& default_definitions() {
  static const std::vector<CategoryDefinition> defs = {
      {Category::Conspiracy,
       "Simplifies complex events by attributing them to secret plots, rejects mainstream information, forms "
       "closed belief communities, replaces science with alternative explanations, or frames events as elite "
       "deception."},
      {Category::Sensationalism,
       "Uses exaggerated or dramatic language, shock and fear appeal, oversimplifies issues, or employs "
       "clickbait-style framing to increase engagement."},
      {Category::HateSpeech,
       "Contains incitement of discrimination, defamation, hostility, or violence based on identity, or makes "
       "false statements that damage a person’s reputation (libel/slander)."},
      {Category::Speculation,
       "Circulates unverified claims for political advantage, driven by partisan interests, amplified in "
       "ideological echo chambers, and sustains political controversy."},
      {Category::Satire,
       "Uses humor, political satire, and internet memes to criticize or comment on politics, often spreading "
       "through viral online platforms."},
  };
  return defs;
}

std::string_view annotator_kind_name(AnnotatorKind kind) {
  return kind == AnnotatorKind::Llm ? "llm" : "human";
}

AnnotatorKind annotator_kind_from_name(std::string_view name) {
  const auto lowered = lower_trimmed(name);
  if (lowered == "llm") return AnnotatorKind::Llm;
  if (lowered == "human") return AnnotatorKind::Human;
  throw InvalidArgument("unknown annotator_kind '" + std::string(name) + "' (expected llm or human)");
}

LabelParseError::LabelParseError(std::vector<Problem> problems, LabelVector partial)
    : Error("label_parse", describe(problems)), problems_(std::move(problems)), partial_(partial) {}

LabelParseError::LabelParseError(const std::string& message)
    : Error("label_parse", message), problems_{{Reason::NotAnObject, ""}} {}

bool LabelParseError::category_scoped() const {
  return !problems_.empty() && std::all_of(problems_.begin(), problems_.end(), [](const Problem& p) {
    return p.reason == Reason::MissingKey || p.reason == Reason::BadValue;
  });
}

std::string_view parse_reason_name(LabelParseError::Reason reason) {
  switch (reason) {
    case LabelParseError::Reason::NotAnObject: return "not_an_object";
    case LabelParseError::Reason::MissingKey: return "missing_key";
    case LabelParseError::Reason::ExtraKey: return "extra_key";
    case LabelParseError::Reason::BadValue: return "bad_value";
    case LabelParseError::Reason::DuplicateKey: return "duplicate_key";
  }
  return "unknown";
}

LabelVector parse_label_response(std::string_view text) {
  const auto body = strip_code_fence(text);
  json doc = json::parse(body.begin(), body.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw LabelParseError("label response rejected: not_an_object");
  }

  using Reason = LabelParseError::Reason;
  std::vector<LabelParseError::Problem> problems;
  LabelVector labels;
  std::array<bool, kNumCategories> seen{};
  std::array<bool, kNumCategories> bad{};

  for (const auto& [key, value] : doc.items()) {
    const auto category = category_from_name(key);
    if (!category) {
      problems.push_back({Reason::ExtraKey, key});
      continue;
    }
    const auto idx = index_of(*category);
    if (seen[idx]) {
      problems.push_back({Reason::DuplicateKey, std::string(category_key(*category))});
      bad[idx] = true;
      labels[*category].reset();
      continue;
    }
    seen[idx] = true;

    std::optional<bool> parsed;
    if (value.is_boolean()) {
      parsed = value.get<bool>();
    } else if (value.is_string()) {
      const auto s = lower_trimmed(value.get<std::string>());
      if (s == "true") parsed = true;
      if (s == "false") parsed = false;
    }
    if (!parsed) {
      problems.push_back({Reason::BadValue, std::string(category_key(*category))});
      bad[idx] = true;
      continue;
    }
    labels[*category] = parsed;
  }

  for (Category c : kAllCategories) {
    if (!seen[index_of(c)]) problems.push_back({Reason::MissingKey, std::string(category_key(c))});
  }
  if (!problems.empty()) throw LabelParseError(std::move(problems), labels);
  return labels;
}

std::string serialize_labels(const LabelVector& labels) {
  // Built by hand so key order follows category order rather than json's
  // alphabetical map ordering.
  std::string out = "{";
  for (Category c : kAllCategories) {
    if (out.size() > 1) out += ",";
    out += "\"";
    out += category_key(c);
    out += "\":";
    const auto& slot = labels[c];
    out += slot ? (*slot ? "true" : "false") : "null";
  }
  out += "}";
  return out;
}

}  // namespace crowdlabel
