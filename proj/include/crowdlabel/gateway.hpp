#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "crowdlabel/annotation_set.hpp"
#include "crowdlabel/corpus.hpp"
#include "crowdlabel/error.hpp"
#include "crowdlabel/labels.hpp"

namespace crowdlabel {

struct BackendConfig {
  std::string name;
  std::string endpoint_url;
  std::string model_id;
  double temperature = 0.0;
  int max_retries = 3;
  int max_in_flight = 4;
  int requests_per_minute = 60;
  // Name of the environment variable holding the API key. Empty means the
  // endpoint takes no credential (e.g. a local inference server).
  std::string auth_env_var;
  int retry_backoff_ms = 250;

  void validate() const;
};

// Roster file: a JSON array of backend objects, or one object per line.
std::vector<BackendConfig> load_backend_roster(const std::filesystem::path& path);
std::vector<BackendConfig> parse_backend_roster(const std::string& text);

// Retryable failure: connection errors, timeouts, 5xx and 429 responses.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message) : Error("transport", message) {}
};

// Missing credential or rejected key. Fatal for the whole run.
class AuthError : public Error {
 public:
  explicit AuthError(const std::string& message) : Error("auth", message) {}
};

std::string render_prompt(const Post& post, const std::vector<CategoryDefinition>& definitions = default_definitions());

struct ChatRequest {
  std::string model_id;
  double temperature = 0.0;
  std::string prompt;
  // Not sent on the wire; offline backends key their behaviour on these.
  std::string post_id;
  std::string post_text;
};

// Returns the assistant message content. Throws TransportError or AuthError.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

// JSON body of a chat-completion request: model, temperature, one user
// message and a json_schema response format with five required booleans.
nlohmann::json chat_request_body(const ChatRequest& request);
// Pulls choices[0].message.content out of a response body; falls back to the
// body itself when it already is the label object.
std::string extract_reply_content(const std::string& body);

// OpenAI-compatible chat-completions client over cpp-httplib.
class HttpChatBackend : public ChatBackend {
 public:
  // Reads the credential from config.auth_env_var; throws AuthError if the
  // variable is named but unset.
  explicit HttpChatBackend(const BackendConfig& config, std::chrono::seconds timeout = std::chrono::seconds(120));
  std::string complete(const ChatRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

// Deterministic offline annotator. A category is True iff one of its trigger
// strings occurs case-insensitively in the post text. The optional fault
// knobs select posts by a stable hash of (salt, post id), so the same config
// always produces the same replies.
struct KeywordMockOptions {
  std::map<Category, std::vector<std::string>> rules;
  std::string salt;
  // Probability that a label is flipped.
  double flip_rate = 0.0;
  // Fraction of posts for which every reply is malformed.
  double malformed_rate = 0.0;
  // Per category fraction of posts whose replies always omit that key.
  std::map<Category, double> omit_rate;
  // Fraction of posts for which every request fails at the transport layer.
  double transport_failure_rate = 0.0;
  std::chrono::microseconds latency{0};
};

class KeywordMockBackend : public ChatBackend {
 public:
  explicit KeywordMockBackend(KeywordMockOptions options);
  std::string complete(const ChatRequest& request) override;

  // Labels the backend would report for `text` before fault injection.
  LabelVector rule_labels(const std::string& text) const;
  // Stable value in [0,1) for (salt, purpose, post id).
  double unit_hash(const std::string& purpose, const std::string& post_id) const;

 private:
  KeywordMockOptions options_;
  std::map<Category, std::vector<std::string>> lowered_rules_;
};

// Mock rules file: {"rules": {category: [triggers]}, "backends": {name:
// {"rules": ..., "flip_rate": f, "malformed_rate": m, "omit_rate": {...},
// "transport_failure_rate": t}}}. Per-backend rules replace the shared ones.
struct MockRulesFile {
  KeywordMockOptions defaults;
  std::map<std::string, KeywordMockOptions> per_backend;

  KeywordMockOptions options_for(const std::string& backend_name) const;
};
MockRulesFile load_mock_rules(const std::filesystem::path& path);
MockRulesFile parse_mock_rules(const std::string& text);

// Replays a fixed reply sequence per post id (the last reply repeats).
// An entry of "!transport" throws TransportError, "!auth" throws AuthError.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies);
  std::string complete(const ChatRequest& request) override;
  int calls() const { return calls_.load(); }

 private:
  std::vector<std::string> replies_;
  std::mutex mutex_;
  std::map<std::string, std::size_t> next_;
  std::atomic<int> calls_{0};
};

// Decorator counting concurrent entries into the wrapped backend.
class ConcurrencyProbe : public ChatBackend {
 public:
  ConcurrencyProbe(std::shared_ptr<ChatBackend> inner, std::chrono::microseconds hold);
  std::string complete(const ChatRequest& request) override;
  int max_observed() const { return max_observed_.load(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::chrono::microseconds hold_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_observed_{0};
};

// Token bucket: `capacity` burst, refilled at `rate_per_second`. Callers that
// find the bucket empty reserve a future token and sleep until it is due.
class TokenBucket {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;
  using Sleeper = std::function<void(std::chrono::steady_clock::duration)>;

  TokenBucket(double rate_per_second, double capacity, Clock clock = {}, Sleeper sleeper = {});
  void acquire();

 private:
  double rate_;
  double capacity_;
  double tokens_;
  Clock clock_;
  Sleeper sleeper_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

struct Annotator {
  BackendConfig config;
  std::shared_ptr<ChatBackend> backend;
};

// Sends the rendered prompt, retrying the whole request on a malformed reply
// or transport failure up to config.max_retries times. On exhaustion the cell
// is all-missing, except that categories which parsed in the final reply are
// kept when the only problems were missing or unparseable category values.
Annotation annotate_post(const Annotator& annotator, const Post& post,
                         const std::vector<CategoryDefinition>& definitions = default_definitions(),
                         TokenBucket* limiter = nullptr);

struct AnnotateProgress {
  std::string backend;
  std::size_t done = 0;
  std::size_t total = 0;
};

struct AnnotateOptions {
  std::vector<CategoryDefinition> definitions = default_definitions();
  // Cells present here are reused instead of re-requested. Cells that failed
  // at the transport layer are retried.
  const AnnotationSet* existing = nullptr;
  std::function<void(const AnnotateProgress&)> on_progress;
  bool rate_limit = true;
};

// One cell per (post, backend). Each backend runs its own pool of
// max_in_flight workers behind its own token bucket; the result is
// assembled in post x roster order, independent of completion order.
AnnotationSet annotate_corpus(const std::vector<Annotator>& annotators, const std::vector<Post>& posts,
                              const AnnotateOptions& options = {});

}  // namespace crowdlabel
