#include "crowdlabel/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "crowdlabel/random.hpp"

namespace crowdlabel {

namespace {

using json = nlohmann::json;

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

BackendConfig backend_from_json(const json& obj) {
  if (!obj.is_object()) throw ConfigError("backend entry is not an object");
  BackendConfig cfg;
  cfg.name = obj.value("name", "");
  cfg.endpoint_url = obj.value("endpoint_url", "");
  cfg.model_id = obj.value("model_id", cfg.name);
  cfg.temperature = obj.value("temperature", 0.0);
  cfg.max_retries = obj.value("max_retries", 3);
  cfg.max_in_flight = obj.value("max_in_flight", 4);
  cfg.requests_per_minute = obj.value("requests_per_minute", 60);
  cfg.auth_env_var = obj.value("auth_env_var", "");
  cfg.retry_backoff_ms = obj.value("retry_backoff_ms", 250);
  for (const char* forbidden : {"api_key", "key", "token", "secret"}) {
    if (obj.contains(forbidden)) {
      throw ConfigError("backend '" + cfg.name + "': credentials must come from an environment variable (auth_env_var), not the roster");
    }
  }
  cfg.validate();
  return cfg;
}

std::map<Category, std::vector<std::string>> parse_rules(const json& obj) {
  std::map<Category, std::vector<std::string>> rules;
  if (obj.is_null()) return rules;
  if (!obj.is_object()) throw ConfigError("mock rules must be an object keyed by category");
  for (const auto& [key, triggers] : obj.items()) {
    const auto c = category_from_name(key);
    if (!c) throw ConfigError("mock rules: unknown category '" + key + "'");
    if (!triggers.is_array()) throw ConfigError("mock rules: triggers for '" + key + "' must be an array");
    for (const auto& t : triggers) rules[*c].push_back(t.get<std::string>());
  }
  return rules;
}

KeywordMockOptions options_from_json(const json& obj, KeywordMockOptions base) {
  if (obj.contains("rules")) base.rules = parse_rules(obj["rules"]);
  base.flip_rate = obj.value("flip_rate", base.flip_rate);
  base.malformed_rate = obj.value("malformed_rate", base.malformed_rate);
  base.transport_failure_rate = obj.value("transport_failure_rate", base.transport_failure_rate);
  if (obj.contains("omit_rate")) {
    base.omit_rate.clear();
    for (const auto& [key, rate] : obj["omit_rate"].items()) {
      const auto c = category_from_name(key);
      if (!c) throw ConfigError("mock omit_rate: unknown category '" + key + "'");
      base.omit_rate[*c] = rate.get<double>();
    }
  }
  if (obj.contains("latency_us")) base.latency = std::chrono::microseconds(obj["latency_us"].get<long>());
  return base;
}

}  // namespace

void BackendConfig::validate() const {
  if (name.empty()) throw ConfigError("backend name must not be empty");
  if (max_retries < 0) throw ConfigError("backend '" + name + "': max_retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("backend '" + name + "': max_in_flight must be positive");
  if (requests_per_minute < 1) throw ConfigError("backend '" + name + "': requests_per_minute must be positive");
  if (retry_backoff_ms < 0) throw ConfigError("backend '" + name + "': retry_backoff_ms must be >= 0");
}

std::vector<BackendConfig> parse_backend_roster(const std::string& text) {
  std::vector<BackendConfig> roster;
  auto doc = json::parse(text, nullptr, false);
  if (!doc.is_discarded() && doc.is_array()) {
    for (const auto& entry : doc) roster.push_back(backend_from_json(entry));
  } else if (!doc.is_discarded() && doc.is_object() && doc.contains("backends")) {
    for (const auto& entry : doc["backends"]) roster.push_back(backend_from_json(entry));
  } else {
    std::istringstream lines(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos || is_header_line(line)) continue;
      auto entry = json::parse(line, nullptr, false);
      if (entry.is_discarded()) throw ConfigError("backend roster line " + std::to_string(n) + ": invalid JSON");
      roster.push_back(backend_from_json(entry));
    }
  }
  for (std::size_t i = 0; i < roster.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (roster[i].name == roster[j].name) throw ConfigError("duplicate backend name '" + roster[i].name + "'");
    }
  }
  return roster;
}

std::vector<BackendConfig> load_backend_roster(const std::filesystem::path& path) {
  return parse_backend_roster(read_file(path));
}

std::string render_prompt(const Post& post, const std::vector<CategoryDefinition>& definitions) {
  if (definitions.size() != kNumCategories) {
    throw InvalidArgument("prompt needs exactly five category definitions, got " + std::to_string(definitions.size()));
  }
  std::array<const CategoryDefinition*, kNumCategories> by_category{};
  for (const auto& d : definitions) {
    auto& slot = by_category[index_of(d.category)];
    if (slot) throw InvalidArgument("duplicate definition for " + std::string(category_key(d.category)));
    if (d.definition_text.empty()) throw InvalidArgument("empty definition for " + std::string(category_key(d.category)));
    slot = &d;
  }

  std::string prompt =
      "Your task is to accurately classify social media posts related to the U.S. Presidential Election. "
      "Determine whether the given post falls into one or more of the following categories: Conspiracy, "
      "Sensationalism, Hate Speech, Speculation, and Satire. Use the detailed definitions provided for each "
      "category and respond with True or False for each category only.\n\n";
  for (Category c : kAllCategories) {
    prompt += "- ";
    prompt += category_display_name(c);
    prompt += ": ";
    prompt += by_category[index_of(c)]->definition_text;
    prompt += "\n";
  }
  prompt += "\nPost: \"" + post.raw_text + "\"";
  return prompt;
}

nlohmann::json chat_request_body(const ChatRequest& request) {
  json properties = json::object();
  json required = json::array();
  for (Category c : kAllCategories) {
    properties[std::string(category_key(c))] = {{"type", "boolean"}};
    required.push_back(std::string(category_key(c)));
  }
  return json{
      {"model", request.model_id},
      {"temperature", request.temperature},
      {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"response_format",
       {{"type", "json_schema"},
        {"json_schema",
         {{"name", "harm_labels"},
          {"strict", true},
          {"schema",
           {{"type", "object"}, {"properties", properties}, {"required", required}, {"additionalProperties", false}}}}}}},
  };
}

std::string extract_reply_content(const std::string& body) {
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) return body;
  if (doc.is_object()) {
    auto choices = doc.find("choices");
    if (choices != doc.end() && choices->is_array() && !choices->empty()) {
      const auto& first = (*choices)[0];
      if (first.contains("message") && first["message"].contains("content")) {
        const auto& content = first["message"]["content"];
        return content.is_string() ? content.get<std::string>() : content.dump();
      }
    }
    if (doc.contains("message") && doc["message"].is_object() && doc["message"].contains("content")) {
      const auto& content = doc["message"]["content"];
      return content.is_string() ? content.get<std::string>() : content.dump();
    }
  }
  return body;
}

HttpChatBackend::HttpChatBackend(const BackendConfig& config, std::chrono::seconds timeout) : timeout_(timeout) {
  const auto& url = config.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("backend '" + config.name + "': endpoint_url needs a scheme");
  const auto scheme = to_lower(url.substr(0, scheme_end));
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("backend '" + config.name + "': unsupported scheme '" + scheme + "'");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ConfigError("backend '" + config.name + "': built without TLS support");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);

  if (!config.auth_env_var.empty()) {
    const char* key = std::getenv(config.auth_env_var.c_str());
    if (key == nullptr || *key == '\0') {
      throw AuthError("backend '" + config.name + "': environment variable " + config.auth_env_var + " is not set");
    }
    api_key_ = key;
  }
}

std::string HttpChatBackend::complete(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto result = client.Post(path_, headers, chat_request_body(request).dump(), "application/json");
  if (!result) throw TransportError("request failed: " + httplib::to_string(result.error()));
  const int status = result->status;
  if (status == 401 || status == 403) throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
  if (status < 200 || status >= 300) throw TransportError("HTTP " + std::to_string(status));
  return extract_reply_content(result->body);
}

KeywordMockBackend::KeywordMockBackend(KeywordMockOptions options) : options_(std::move(options)) {
  for (const auto& [category, triggers] : options_.rules) {
    for (const auto& t : triggers) {
      if (!t.empty()) lowered_rules_[category].push_back(to_lower(t));
    }
  }
}

double KeywordMockBackend::unit_hash(const std::string& purpose, const std::string& post_id) const {
  const auto h = mix64(fnv1a(post_id, fnv1a(purpose, fnv1a(options_.salt))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

LabelVector KeywordMockBackend::rule_labels(const std::string& text) const {
  const auto lowered = to_lower(text);
  LabelVector labels = LabelVector::all(false);
  for (const auto& [category, triggers] : lowered_rules_) {
    labels[category] = std::any_of(triggers.begin(), triggers.end(),
                                   [&](const std::string& t) { return lowered.find(t) != std::string::npos; });
  }
  return labels;
}

std::string KeywordMockBackend::complete(const ChatRequest& request) {
  if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
  const auto& id = request.post_id;
  if (unit_hash("transport", id) < options_.transport_failure_rate) throw TransportError("mock transport failure");
  if (unit_hash("malformed", id) < options_.malformed_rate) return "I'm sorry, I can't help classify this post.";

  LabelVector labels = rule_labels(request.post_text);
  json reply = json::object();
  for (Category c : kAllCategories) {
    auto omit = options_.omit_rate.find(c);
    if (omit != options_.omit_rate.end() && unit_hash(std::string("omit:") + std::string(category_key(c)), id) < omit->second) {
      continue;
    }
    bool v = *labels[c];
    if (unit_hash(std::string("flip:") + std::string(category_key(c)), id) < options_.flip_rate) v = !v;
    reply[std::string(category_display_name(c))] = v;
  }
  return reply.dump();
}

KeywordMockOptions MockRulesFile::options_for(const std::string& backend_name) const {
  auto it = per_backend.find(backend_name);
  KeywordMockOptions options = it == per_backend.end() ? defaults : it->second;
  if (options.salt.empty()) options.salt = backend_name;
  return options;
}

MockRulesFile parse_mock_rules(const std::string& text) {
  auto doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("mock rules file must be a JSON object");
  MockRulesFile file;
  if (doc.contains("rules")) {
    file.defaults = options_from_json(doc, {});
  } else if (!doc.contains("backends")) {
    // Bare {category: [triggers]} form.
    file.defaults.rules = parse_rules(doc);
  }
  if (doc.contains("backends")) {
    for (const auto& [name, obj] : doc["backends"].items()) {
      file.per_backend[name] = options_from_json(obj, file.defaults);
    }
  }
  return file;
}

MockRulesFile load_mock_rules(const std::filesystem::path& path) { return parse_mock_rules(read_file(path)); }

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {
  if (replies_.empty()) throw InvalidArgument("scripted backend needs at least one reply");
}

std::string ScriptedBackend::complete(const ChatRequest& request) {
  ++calls_;
  std::string reply;
  {
    std::lock_guard lock(mutex_);
    auto& next = next_[request.post_id];
    reply = replies_[std::min(next, replies_.size() - 1)];
    ++next;
  }
  if (reply == "!transport") throw TransportError("scripted transport failure");
  if (reply == "!auth") throw AuthError("scripted auth failure");
  return reply;
}

ConcurrencyProbe::ConcurrencyProbe(std::shared_ptr<ChatBackend> inner, std::chrono::microseconds hold)
    : inner_(std::move(inner)), hold_(hold) {}

std::string ConcurrencyProbe::complete(const ChatRequest& request) {
  const int now = ++in_flight_;
  int seen = max_observed_.load();
  while (now > seen && !max_observed_.compare_exchange_weak(seen, now)) {
  }
  struct Exit {
    std::atomic<int>& counter;
    ~Exit() { --counter; }
  } exit{in_flight_};
  if (hold_.count() > 0) std::this_thread::sleep_for(hold_);
  return inner_->complete(request);
}

TokenBucket::TokenBucket(double rate_per_second, double capacity, Clock clock, Sleeper sleeper)
    : rate_(rate_per_second), capacity_(std::max(1.0, capacity)), tokens_(std::max(1.0, capacity)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::steady_clock::now(); })),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::steady_clock::duration d) { std::this_thread::sleep_for(d); })),
      last_(clock_()) {
  if (!(rate_per_second > 0.0)) throw InvalidArgument("token bucket rate must be positive");
}

void TokenBucket::acquire() {
  std::chrono::steady_clock::duration wait{0};
  {
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    tokens_ -= 1.0;
    if (tokens_ < 0.0) {
      wait = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(-tokens_ / rate_));
    }
  }
  if (wait.count() > 0) sleeper_(wait);
}

Annotation annotate_post(const Annotator& annotator, const Post& post, const std::vector<CategoryDefinition>& definitions,
                         TokenBucket* limiter) {
  const auto& cfg = annotator.config;
  ChatRequest request{cfg.model_id, cfg.temperature, render_prompt(post, definitions), post.id, post.raw_text};

  Annotation result{post.id, cfg.name, AnnotatorKind::Llm, {}, 0, std::nullopt};
  std::optional<LabelParseError> last_parse;
  std::string last_failure;
  const int max_attempts = cfg.max_retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    result.attempt_count = attempt;
    if (limiter) limiter->acquire();
    std::string reply;
    try {
      reply = annotator.backend->complete(request);
    } catch (const TransportError& e) {
      last_parse.reset();
      last_failure = std::string("transport: ") + e.what();
      if (attempt < max_attempts && cfg.retry_backoff_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg.retry_backoff_ms) * (1 << std::min(attempt - 1, 6)));
      }
      continue;
    }
    try {
      result.labels = parse_label_response(reply);
      return result;
    } catch (const LabelParseError& e) {
      last_parse = e;
      last_failure = std::string("malformed: ") + e.what();
    }
  }

  result.labels = LabelVector{};
  if (last_parse && last_parse->category_scoped()) result.labels = last_parse->partial();
  result.error = "retries exhausted after " + std::to_string(result.attempt_count) + " attempts; last " + last_failure;
  return result;
}

AnnotationSet annotate_corpus(const std::vector<Annotator>& annotators, const std::vector<Post>& posts,
                              const AnnotateOptions& options) {
  for (std::size_t i = 0; i < annotators.size(); ++i) {
    annotators[i].config.validate();
    if (!annotators[i].backend) throw ConfigError("backend '" + annotators[i].config.name + "' has no client");
    for (std::size_t j = 0; j < i; ++j) {
      if (annotators[i].config.name == annotators[j].config.name) {
        throw ConfigError("duplicate backend name '" + annotators[i].config.name + "'");
      }
    }
  }

  // results[backend][post]
  std::vector<std::vector<std::optional<Annotation>>> results(annotators.size(), std::vector<std::optional<Annotation>>(posts.size()));
  std::vector<std::vector<std::size_t>> pending(annotators.size());
  for (std::size_t b = 0; b < annotators.size(); ++b) {
    for (std::size_t p = 0; p < posts.size(); ++p) {
      const Cell* prior = options.existing ? options.existing->find(posts[p].id, annotators[b].config.name) : nullptr;
      const bool transport_failed = prior && prior->error && prior->error->find("last transport:") != std::string::npos;
      if (prior && !transport_failed) {
        results[b][p] = Annotation{posts[p].id, annotators[b].config.name, AnnotatorKind::Llm, prior->labels,
                                   prior->attempt_count, prior->error};
      } else {
        pending[b].push_back(p);
      }
    }
  }

  std::atomic<bool> abort{false};
  std::mutex error_mutex;
  std::exception_ptr fatal;
  std::mutex progress_mutex;

  struct BackendState {
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::unique_ptr<TokenBucket> limiter;
  };
  std::vector<BackendState> states(annotators.size());
  std::vector<std::thread> workers;
  for (std::size_t b = 0; b < annotators.size(); ++b) {
    const auto& cfg = annotators[b].config;
    if (options.rate_limit) {
      states[b].limiter = std::make_unique<TokenBucket>(cfg.requests_per_minute / 60.0, static_cast<double>(cfg.max_in_flight));
    }
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), pending[b].size());
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&, b] {
        auto& state = states[b];
        while (!abort.load()) {
          const auto k = state.next.fetch_add(1);
          if (k >= pending[b].size()) break;
          const auto p = pending[b][k];
          try {
            results[b][p] = annotate_post(annotators[b], posts[p], options.definitions, state.limiter.get());
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!fatal) fatal = std::current_exception();
            abort.store(true);
            break;
          }
          const auto done = ++state.done;
          if (options.on_progress) {
            std::lock_guard lock(progress_mutex);
            options.on_progress({annotators[b].config.name, done, pending[b].size()});
          }
        }
      });
    }
  }
  for (auto& t : workers) t.join();
  if (fatal) std::rethrow_exception(fatal);

  AnnotationSet set;
  for (const auto& post : posts) set.add_post(post.id);
  for (const auto& a : annotators) set.add_annotator(a.config.name, AnnotatorKind::Llm);
  for (std::size_t p = 0; p < posts.size(); ++p) {
    for (std::size_t b = 0; b < annotators.size(); ++b) {
      const auto& a = *results[b][p];
      set.set(a.post_id, a.annotator_id, Cell{a.labels, a.attempt_count, a.error});
    }
  }
  return set;
}

}  // namespace crowdlabel
