#include "crowdlabel/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <unordered_set>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <json.hpp>

#include "crowdlabel/error.hpp"
#include "crowdlabel/random.hpp"

namespace crowdlabel {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::vector<UChar32> decode_utf8(std::string_view s) {
  std::vector<UChar32> out;
  out.reserve(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c >= 0) out.push_back(c);  // invalid sequences are dropped
  }
  return out;
}

void append_utf8(std::string& out, UChar32 c) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, c, error);
  if (!error) out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c); }

// Unicode punctuation (general category P*) plus the ASCII symbol characters
// that string-punctuation tables conventionally include ($, +, <, =, ...).
bool is_punct(UChar32 c) {
  if (c < 0x80) return c > 0x20 && c < 0x7f && !std::isalnum(static_cast<int>(c));
  return u_ispunct(c);
}

bool is_apostrophe(UChar32 c) { return c == 0x27 || c == 0x2019; }

bool is_word_char(UChar32 c) { return u_isalnum(c); }

bool starts_with_ascii_ci(const std::vector<UChar32>& cps, std::size_t from, std::string_view prefix) {
  if (cps.size() - from < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (u_tolower(cps[from + i]) != static_cast<UChar32>(prefix[i])) return false;
  }
  return true;
}

template <typename Fn>
void for_each_token(const std::vector<UChar32>& cps, Fn&& fn) {
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space(cps[i])) ++i;
    const std::size_t start = i;
    while (i < cps.size() && !is_space(cps[i])) ++i;
    if (i > start) fn(std::vector<UChar32>(cps.begin() + static_cast<std::ptrdiff_t>(start), cps.begin() + static_cast<std::ptrdiff_t>(i)));
  }
}

// Returns the cleaned token, empty when the token is removed.
std::string clean_token(const std::vector<UChar32>& tok, const CleaningConfig& cfg) {
  // Opening wrappers such as '(' or '"' do not hide a mention or URL.
  std::size_t core = 0;
  while (core < tok.size() && is_punct(tok[core]) && tok[core] != '@' && tok[core] != '#') ++core;
  if (core == tok.size()) core = 0;

  if (cfg.strip_mentions && tok[core] == '@') return {};
  if (cfg.strip_urls && (starts_with_ascii_ci(tok, core, "http://") || starts_with_ascii_ci(tok, core, "https://") ||
                         starts_with_ascii_ci(tok, core, "www."))) {
    return {};
  }

  const bool hashtag = tok[core] == '#';
  if (hashtag && cfg.drop_hashtag_words) return {};
  std::size_t hash_run_end = core;
  if (hashtag) {
    while (hash_run_end < tok.size() && tok[hash_run_end] == '#') ++hash_run_end;
  }

  std::string out;
  for (std::size_t k = 0; k < tok.size(); ++k) {
    UChar32 c = tok[k];
    const bool leading_hash = hashtag && k >= core && k < hash_run_end;
    if (leading_hash) {
      if (!cfg.strip_hashmarks) append_utf8(out, c);
      continue;
    }
    if (is_apostrophe(c)) {
      const bool intra_word = k > 0 && k + 1 < tok.size() && is_word_char(tok[k - 1]) && is_word_char(tok[k + 1]);
      if (intra_word) {
        out.push_back('\'');
        continue;
      }
    }
    if (is_punct(c) && cfg.strip_punctuation) continue;
    if (cfg.lowercase) c = u_tolower(c);
    append_utf8(out, c);
  }
  // Remnants of URLs split by punctuation ("(https" + "://...") are URL
  // fragments too.
  if (cfg.strip_urls && out.find("http") != std::string::npos) return {};
  return out;
}

std::string require_string_id(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned() || v.is_number_integer()) return v.dump();
  throw std::invalid_argument("field 'id' must be a string or integer");
}

std::uint64_t read_count(const json& obj, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) continue;
    if (it->is_number_unsigned()) return it->get<std::uint64_t>();
    if (it->is_number_integer()) {
      const auto v = it->get<std::int64_t>();
      if (v < 0) throw std::invalid_argument(std::string("field '") + name + "' must be non-negative");
      return static_cast<std::uint64_t>(v);
    }
    throw std::invalid_argument(std::string("field '") + name + "' must be an integer");
  }
  return 0;
}

bool read_bool(const json& obj, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) continue;
    if (!it->is_boolean()) throw std::invalid_argument(std::string("field '") + name + "' must be a boolean");
    return it->get<bool>();
  }
  return false;
}

std::optional<std::string> read_opt_string(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer() || it->is_number_unsigned()) return it->dump();
  throw std::invalid_argument(std::string("field '") + name + "' must be a string");
}

Post post_from_json(const json& obj) {
  if (!obj.is_object()) throw std::invalid_argument("record is not an object");
  Post post;
  auto id = obj.find("id");
  if (id == obj.end() || id->is_null()) throw std::invalid_argument("missing field 'id'");
  post.id = require_string_id(*id);
  if (post.id.empty()) throw std::invalid_argument("field 'id' is empty");

  auto text = obj.find("text");
  if (text == obj.end()) text = obj.find("raw_text");
  if (text == obj.end() || !text->is_string()) throw std::invalid_argument("missing or non-string field 'text'");
  post.raw_text = text->get<std::string>();

  if (auto created = read_opt_string(obj, "created_at")) {
    post.created_at = parse_timestamp(*created);
    if (!post.created_at) throw std::invalid_argument("field 'created_at' is not an ISO-8601 timestamp");
  }
  post.author_id = read_opt_string(obj, "author_id");
  post.user_location = read_opt_string(obj, "user_location");

  const json* metrics = &obj;
  auto pm = obj.find("public_metrics");
  if (pm != obj.end() && !pm->is_null()) {
    if (!pm->is_object()) throw std::invalid_argument("field 'public_metrics' must be an object");
    metrics = &*pm;
  }
  post.repost_count = read_count(*metrics, {"repost_count", "retweet_count"});
  post.like_count = read_count(*metrics, {"like_count"});
  post.impression_count = read_count(*metrics, {"impression_count"});
  post.sensitive = read_bool(obj, {"sensitive", "possibly_sensitive"});
  post.verified = read_bool(obj, {"verified"});

  post.clean_text = read_opt_string(obj, "clean_text");
  auto wc = obj.find("word_count");
  if (wc != obj.end() && !wc->is_null()) post.word_count = static_cast<std::size_t>(read_count(obj, {"word_count"}));
  return post;
}

int parse_digits(std::string_view s, std::size_t pos, std::size_t n, bool& ok) {
  if (pos + n > s.size()) {
    ok = false;
    return 0;
  }
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') {
      ok = false;
      return 0;
    }
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

}  // namespace

void CleaningConfig::validate() const {
  if (min_words < 1) throw ConfigError("min_words must be at least 1");
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  bool ok = true;
  const int y = parse_digits(s, 0, 4, ok);
  const int mo = parse_digits(s, 5, 2, ok);
  const int d = parse_digits(s, 8, 2, ok);
  if (!ok || s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int h = 0, mi = 0, sec = 0, ms = 0;
  std::size_t pos = 10;
  int offset_minutes = 0;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
    h = parse_digits(s, pos + 1, 2, ok);
    mi = parse_digits(s, pos + 4, 2, ok);
    sec = parse_digits(s, pos + 7, 2, ok);
    if (!ok || s[pos + 3] != ':' || s[pos + 6] != ':') return std::nullopt;
    pos += 9;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      int digits = 0;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
        if (digits < 3) ms = ms * 10 + (s[pos] - '0');
        ++digits;
        ++pos;
      }
      if (digits == 0) return std::nullopt;
      for (int i = digits; i < 3; ++i) ms *= 10;
    }
    if (pos < s.size()) {
      if (s[pos] == 'Z' && pos + 1 == s.size()) {
        ++pos;
      } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
        const int oh = parse_digits(s, pos + 1, 2, ok);
        const int om = parse_digits(s, pos + 4, 2, ok);
        if (!ok) return std::nullopt;
        offset_minutes = (s[pos] == '+' ? 1 : -1) * (oh * 60 + om);
        pos += 6;
      } else {
        return std::nullopt;
      }
    }
  }
  if (pos != s.size() && s.size() != 10) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{ms} - minutes{offset_minutes};
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day_point = floor<days>(ts);
  const year_month_day ymd{day_point};
  const hh_mm_ss<milliseconds> tod{ts - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(tod.hours().count()),
                static_cast<int>(tod.minutes().count()), static_cast<int>(tod.seconds().count()),
                static_cast<int>(tod.subseconds().count()));
  return buf;
}

ParsedPosts parse_posts(std::istream& in) {
  ParsedPosts result;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) {
      result.errors.push_back({line_number, "invalid JSON"});
      continue;
    }
    if (doc.is_object() && doc.contains("_header")) continue;
    try {
      Post post = post_from_json(doc);
      if (!ids.insert(post.id).second) {
        result.errors.push_back({line_number, "duplicate id '" + post.id + "'"});
        continue;
      }
      result.posts.push_back(std::move(post));
    } catch (const std::exception& e) {
      result.errors.push_back({line_number, e.what()});
    }
  }
  if (in.bad()) throw IngestError("read failure after line " + std::to_string(line_number));
  return result;
}

ParsedPosts parse_posts_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open corpus file " + path.string());
  return parse_posts(in);
}

std::string post_to_json_line(const Post& post) {
  ordered_json obj;
  obj["id"] = post.id;
  obj["text"] = post.raw_text;
  if (post.created_at) obj["created_at"] = format_timestamp(*post.created_at);
  if (post.author_id) obj["author_id"] = *post.author_id;
  if (post.user_location) obj["user_location"] = *post.user_location;
  obj["public_metrics"] = ordered_json{{"repost_count", post.repost_count},
                                       {"like_count", post.like_count},
                                       {"impression_count", post.impression_count}};
  obj["sensitive"] = post.sensitive;
  obj["verified"] = post.verified;
  if (post.clean_text) obj["clean_text"] = *post.clean_text;
  if (post.word_count) obj["word_count"] = *post.word_count;
  return obj.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string clean_text(std::string_view raw, const CleaningConfig& config) {
  std::string out;
  for_each_token(decode_utf8(raw), [&](const std::vector<UChar32>& tok) {
    auto cleaned = clean_token(tok, config);
    if (cleaned.empty()) return;
    if (!out.empty()) out.push_back(' ');
    out += cleaned;
  });
  return out;
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  for_each_token(decode_utf8(text), [&](const std::vector<UChar32>&) { ++n; });
  return n;
}

std::vector<Post> filter_corpus(std::vector<Post> posts, const CleaningConfig& config) {
  config.validate();
  std::vector<Post> kept;
  kept.reserve(posts.size());
  std::unordered_set<std::string> seen;
  for (auto& post : posts) {
    if (!post.clean_text) post.clean_text = clean_text(post.raw_text, config);
    if (!post.word_count) post.word_count = count_words(*post.clean_text);
    if (*post.word_count < config.min_words) continue;
    const auto& key = config.dedupe_on == DedupeKey::CleanText ? *post.clean_text : post.raw_text;
    if (!seen.insert(key).second) continue;
    kept.push_back(std::move(post));
  }
  return kept;
}

namespace {

template <typename Extract>
std::optional<MeanSd> mean_sd(const std::vector<Post>& posts, Extract&& extract) {
  // Welford in long double; counts can be large and skewed.
  long double mean = 0.0L, m2 = 0.0L;
  std::size_t n = 0;
  for (const auto& p : posts) {
    const std::optional<long double> x = extract(p);
    if (!x) continue;
    ++n;
    const long double delta = *x - mean;
    mean += delta / static_cast<long double>(n);
    m2 += delta * (*x - mean);
  }
  if (n == 0) return std::nullopt;
  const long double var = m2 / static_cast<long double>(n);
  return MeanSd{static_cast<double>(mean), static_cast<double>(std::sqrt(std::max(0.0L, var)))};
}

}  // namespace

CorpusStats corpus_stats(const std::vector<Post>& posts) {
  CorpusStats s;
  s.total_posts = posts.size();
  std::unordered_set<std::string> users;
  for (const auto& p : posts) {
    s.sensitive_count += p.sensitive ? 1 : 0;
    s.verified_count += p.verified ? 1 : 0;
    if (p.author_id) users.insert(*p.author_id);
  }
  s.unique_users = users.size();
  s.repost_count = mean_sd(posts, [](const Post& p) { return std::optional<long double>(p.repost_count); });
  s.like_count = mean_sd(posts, [](const Post& p) { return std::optional<long double>(p.like_count); });
  s.impressions = mean_sd(posts, [](const Post& p) { return std::optional<long double>(p.impression_count); });
  s.word_count = mean_sd(posts, [](const Post& p) -> std::optional<long double> {
    if (!p.word_count) return std::nullopt;
    return static_cast<long double>(*p.word_count);
  });
  return s;
}

std::vector<Post> sample_posts(const std::vector<Post>& posts, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample size must be positive");
  if (n > posts.size()) {
    throw InvalidArgument("sample size " + std::to_string(n) + " exceeds corpus size " + std::to_string(posts.size()));
  }
  std::vector<std::size_t> order(posts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, posts.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<Post> sample;
  sample.reserve(n);
  for (std::size_t i = 0; i < n; ++i) sample.push_back(posts[order[i]]);
  return sample;
}

}  // namespace crowdlabel
