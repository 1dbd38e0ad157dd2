#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crowdlabel {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

struct Post {
  std::string id;
  std::string raw_text;
  std::optional<Timestamp> created_at;
  std::optional<std::string> author_id;
  std::optional<std::string> user_location;
  std::uint64_t repost_count = 0;
  std::uint64_t like_count = 0;
  std::uint64_t impression_count = 0;
  bool sensitive = false;
  bool verified = false;
  std::optional<std::string> clean_text;
  std::optional<std::size_t> word_count;

  friend bool operator==(const Post&, const Post&) = default;
};

enum class DedupeKey { RawText, CleanText };

struct CleaningConfig {
  std::size_t min_words = 5;
  bool lowercase = true;
  bool strip_urls = true;
  bool strip_mentions = true;
  // Drop the leading '#' of a hashtag and keep the word. When false the '#'
  // survives punctuation removal.
  bool strip_hashmarks = true;
  // Remove hashtag tokens entirely, word included.
  bool drop_hashtag_words = false;
  bool strip_punctuation = true;
  DedupeKey dedupe_on = DedupeKey::CleanText;

  void validate() const;
};

struct LineError {
  std::size_t line_number;  // 1-based
  std::string message;
};

struct ParsedPosts {
  std::vector<Post> posts;
  std::vector<LineError> errors;
};

// One JSON object per line. Blank lines are skipped; malformed lines are
// collected and parsing continues.
ParsedPosts parse_posts(std::istream& in);
// Throws IngestError when the file cannot be opened.
ParsedPosts parse_posts_file(const std::filesystem::path& path);

std::optional<Timestamp> parse_timestamp(std::string_view iso8601);
std::string format_timestamp(Timestamp ts);

// JSON with the input field names plus clean_text and word_count when set.
std::string post_to_json_line(const Post& post);

std::string clean_text(std::string_view raw, const CleaningConfig& config = {});
std::size_t count_words(std::string_view text);

// Populates clean_text/word_count where absent, removes duplicates (first
// occurrence wins) and posts shorter than min_words. Order is preserved.
std::vector<Post> filter_corpus(std::vector<Post> posts, const CleaningConfig& config = {});

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // population (divide by N)
};

struct CorpusStats {
  std::size_t total_posts = 0;
  std::size_t sensitive_count = 0;
  std::size_t verified_count = 0;
  std::size_t unique_users = 0;
  std::optional<MeanSd> repost_count;
  std::optional<MeanSd> like_count;
  std::optional<MeanSd> impressions;
  // Over posts that carry a word_count.
  std::optional<MeanSd> word_count;
};

CorpusStats corpus_stats(const std::vector<Post>& posts);

// Uniform sample without replacement by partial Fisher-Yates over a
// platform-independent generator. The result is in draw order.
std::vector<Post> sample_posts(const std::vector<Post>& posts, std::size_t n, std::uint64_t seed);

}  // namespace crowdlabel
