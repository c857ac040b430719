//
// Copyright 2026 The toxcg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Prompt templates, a chat-completion client with retries and a replayable
// offline fixture mode, and parsers for the three response formats.

#ifndef TOXCG_LLMCLIENT_HPP_
#define TOXCG_LLMCLIENT_HPP_

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"

// <resolv.h>, reached through httplib, defines _res as a macro; Eigen uses
// the name as an identifier.
#ifdef _res
#undef _res
#endif
#include "json.hpp"
#include "toxcg/core.hpp"

namespace toxcg {

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

enum class PromptId { kExtractWords, kGroupWords, kGenerateSentences };

inline std::string_view to_string(PromptId id) {
  switch (id) {
    case PromptId::kExtractWords: return "extract_words";
    case PromptId::kGroupWords: return "group_words";
    case PromptId::kGenerateSentences: return "generate_sentences";
  }
  return "";
}

struct PromptTemplate {
  PromptId id = PromptId::kExtractWords;
  std::string body;
};

namespace detail {

// Same bytes as data/prompts/*.txt; a test keeps the two in sync.
inline constexpr std::string_view kExtractWordsBody = R"([Task Description]
Given the following sentence and its incorrect prediction, identify the individual words responsible for the misclassification.

[Response Instructions]
Return only a comma-separated list of words, without any numbers, explanations, or additional text.
0 is for non-toxic sentence and 1 is for toxic sentence.

[Response format]
Sentence: {sentence}
Incorrect Prediction: {prediction}
Words: <reordered or original phrase>
)";

inline constexpr std::string_view kGroupWordsBody = R"([Task Description]
Given the following words, group them on the basis of similarity between words and for toxicity

[Response Instructions]
Return only a comma-separated list of words in each group, without any numbers, explanations, or additional text.

[Response Format]
Group 1: <words>
Group 2: <words>
and so on

Words: {words}
)";

inline constexpr std::string_view kGenerateSentencesBody = R"([Task Description]
Given the following words, generate {n} sentences which do not contain these words and are toxic.

[Response Instructions]
Return only a list of sentences, without any numbers, explanations, or additional text.

[Response Format]
Sentence1: <sentence>, Sentence2: <sentence>, and so on.

Words: {words}
)";

inline bool is_placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

}  // namespace detail

inline PromptTemplate builtin_prompt(PromptId id) {
  switch (id) {
    case PromptId::kExtractWords: return {id, std::string(detail::kExtractWordsBody)};
    case PromptId::kGroupWords: return {id, std::string(detail::kGroupWordsBody)};
    case PromptId::kGenerateSentences: return {id, std::string(detail::kGenerateSentencesBody)};
  }
  return {};
}

/// Reads <dir>/<template_id>.txt.
inline PromptTemplate load_prompt(PromptId id, const std::filesystem::path& dir) {
  return {id, read_file(dir / (std::string(to_string(id)) + ".txt"))};
}

/// Names of the {placeholders} in a body, in order of first appearance.
inline std::vector<std::string> placeholders(std::string_view body) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < body.size() && detail::is_placeholder_char(body[j])) ++j;
    if (j < body.size() && body[j] == '}' && j > i + 1) {
      std::string name(body.substr(i + 1, j - i - 1));
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
      i = j;
    }
  }
  return names;
}

/// Single-pass substitution: bound values are inserted verbatim and never
/// re-scanned for placeholders.
inline std::string render(const PromptTemplate& prompt, const std::map<std::string, std::string>& bindings) {
  const std::string_view body = prompt.body;
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && detail::is_placeholder_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}' && j > i + 1) {
        const std::string name(body.substr(i + 1, j - i - 1));
        const auto it = bindings.find(name);
        if (it == bindings.end()) {
          fail(ErrorKind::kRender, "unbound placeholder {" + name + "} in prompt " + std::string(to_string(prompt.id)));
        }
        out += it->second;
        i = j;
        continue;
      }
    }
    out.push_back(body[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Response parsers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string clean_item(std::string_view item) {
  item = trim(item);
  while (!item.empty() && (item.front() == '"' || item.front() == '\'' || item.front() == '.')) item.remove_prefix(1);
  while (!item.empty() && (item.back() == '"' || item.back() == '\'' || item.back() == '.')) item.remove_suffix(1);
  return ascii_lower(trim(item));
}

}  // namespace detail

/// Comma- (or newline-) separated words, trimmed and lowercased; a leading
/// "Words:" prefix is dropped. Duplicates are kept.
inline std::vector<std::string> parse_word_list(std::string_view raw) {
  std::string_view body = trim(raw);
  if (istarts_with(body, "words:")) body = trim(body.substr(6));
  std::vector<std::string> words;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i == body.size() || body[i] == ',' || body[i] == '\n') {
      auto w = detail::clean_item(body.substr(start, i - start));
      if (!w.empty()) words.push_back(std::move(w));
      start = i + 1;
    }
  }
  if (words.empty()) fail(ErrorKind::kParse, "word list response has no words");
  return words;
}

/// One list per "Group k:" line, in the order given.
inline std::vector<std::vector<std::string>> parse_groups(std::string_view raw) {
  static const std::regex kGroupLine(R"(^[\s*#\-]*group\s*\d+\s*[:\-]\**\s*(.*)$)", std::regex::icase);
  std::vector<std::vector<std::string>> groups;
  for (const auto& line : split_lines(raw)) {
    std::smatch match;
    const std::string trimmed(trim(line));
    if (!std::regex_match(trimmed, match, kGroupLine)) continue;
    const std::string content = match[1].str();
    if (trim(content).empty()) continue;
    groups.push_back(parse_word_list(content));
  }
  if (groups.empty()) fail(ErrorKind::kParse, "group response has no \"Group k:\" lines");
  return groups;
}

/// Text after each "SentenceK:" marker; without markers, one sentence per
/// non-empty line.
inline std::vector<std::string> parse_sentences(std::string_view raw) {
  static const std::regex kMarker(R"(sentence\s*\d+\s*:)", std::regex::icase);
  const std::string text(raw);
  std::vector<std::string> out;
  std::vector<std::pair<std::size_t, std::size_t>> markers;  // (start, end) of each marker
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kMarker); it != std::sregex_iterator(); ++it) {
    markers.emplace_back(static_cast<std::size_t>(it->position()),
                         static_cast<std::size_t>(it->position() + it->length()));
  }
  auto push = [&](std::string_view s) {
    s = trim(s);
    while (!s.empty() && (s.back() == ',' || s.back() == ';')) s = trim(s.substr(0, s.size() - 1));
    if (!s.empty()) out.emplace_back(s);
  };
  if (!markers.empty()) {
    for (std::size_t k = 0; k < markers.size(); ++k) {
      const std::size_t begin = markers[k].second;
      const std::size_t end = k + 1 < markers.size() ? markers[k + 1].first : text.size();
      push(std::string_view(text).substr(begin, end - begin));
    }
  } else {
    for (const auto& line : split_lines(text)) {
      std::string_view s = trim(line);
      if (s.starts_with("- ")) s.remove_prefix(2);
      push(s);
    }
  }
  if (out.empty()) fail(ErrorKind::kParse, "sentence response has no sentences");
  return out;
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

enum class ClientMode { kLive, kOffline };

inline ClientMode client_mode_from_string(std::string_view s) {
  if (s == "live") return ClientMode::kLive;
  if (s == "offline") return ClientMode::kOffline;
  fail(ErrorKind::kConfig, "unknown client mode: " + std::string(s));
}

inline std::string_view to_string(ClientMode m) { return m == ClientMode::kLive ? "live" : "offline"; }

struct ClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_seconds = 1.0;
  int max_concurrent = 4;
  ClientMode mode = ClientMode::kOffline;
  std::string fixture_path;
  std::string record_path;  // live mode: append {prompt_sha256, response} here
  std::string api_key_env = "OPENAI_API_KEY";
  std::uint64_t seed = 0;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (max_retries < 0) v.push_back("llm.max_retries must be >= 0");
    if (max_concurrent < 1) v.push_back("llm.max_concurrent must be >= 1");
    if (!(timeout_seconds > 0.0)) v.push_back("llm.timeout_seconds must be > 0");
    if (!(backoff_seconds >= 0.0)) v.push_back("llm.backoff_seconds must be >= 0");
    if (mode == ClientMode::kOffline && fixture_path.empty()) v.push_back("llm.fixture_path is required in offline mode");
    if (mode == ClientMode::kLive && endpoint.empty()) v.push_back("llm.endpoint is required in live mode");
    return v;
  }

  void validate() const {
    const auto v = violations();
    if (!v.empty()) fail(ErrorKind::kConfig, v.front());
  }
};

/// NO_NETWORK=1 forces offline mode regardless of the configured mode.
inline ClientConfig effective_client_config(ClientConfig config) {
  const char* no_network = std::getenv("NO_NETWORK");
  if (no_network != nullptr && std::string_view(no_network) == "1") config.mode = ClientMode::kOffline;
  return config;
}

struct HttpResponse {
  int status = 0;  // 0: no response (timeout or connection failure)
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            double timeout_seconds) = 0;
};

class HttplibTransport : public Transport {
 public:
  HttpResponse post(const std::string& url, const std::string& body,
                    const std::vector<std::pair<std::string, std::string>>& headers,
                    double timeout_seconds) override {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch match;
    if (!std::regex_match(url, match, kUrl)) fail(ErrorKind::kConfig, "malformed endpoint URL: " + url);
    httplib::Client client(match[1].str());
    const auto timeout = std::chrono::duration<double>(timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    const std::string path = match[2].matched ? match[2].str() : "/";
    auto result = client.Post(path, h, body, "application/json");
    HttpResponse out;
    if (!result) {
      out.error = httplib::to_string(result.error());
      return out;
    }
    out.status = result->status;
    out.body = result->body;
    return out;
  }
};

using Sleeper = std::function<void(double seconds)>;

inline void real_sleep(double seconds) {
  std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

/// Result of one prompt in a batch: response text or the error it raised.
struct Completion {
  std::optional<std::string> text;
  std::optional<ErrorKind> error_kind;
  std::string error;
};

inline std::map<std::string, std::string> load_fixtures(const std::filesystem::path& path) {
  std::map<std::string, std::string> fixtures;
  if (!std::filesystem::exists(path)) return fixtures;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(read_file(path))) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      fixtures.emplace(j.at("prompt_sha256").get<std::string>(), j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, "fixture " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return fixtures;
}

inline std::string fixtures_to_jsonl(const std::map<std::string, std::string>& fixtures) {
  std::string out;
  for (const auto& [hash, response] : fixtures) {
    nlohmann::ordered_json j;
    j["prompt_sha256"] = hash;
    j["response"] = response;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

/// Shareable across threads. At most max_concurrent requests are in flight.
class LlmClient {
 public:
  explicit LlmClient(ClientConfig config, std::shared_ptr<Transport> transport = nullptr,
                     Sleeper sleeper = real_sleep)
      : config_(effective_client_config(std::move(config))),
        transport_(transport ? std::move(transport) : std::make_shared<HttplibTransport>()),
        sleeper_(std::move(sleeper)),
        rng_(derive_seed(config_.seed, "llm-jitter")) {
    config_.validate();
    if (!config_.fixture_path.empty() && config_.mode == ClientMode::kOffline) {
      fixtures_ = load_fixtures(config_.fixture_path);
    }
    if (!config_.record_path.empty()) recorded_ = load_fixtures(config_.record_path);
  }

  const ClientConfig& config() const { return config_; }

  std::string complete(const std::string& prompt) {
    if (config_.mode == ClientMode::kOffline) {
      const std::string hash = sha256_hex(prompt);
      const auto it = fixtures_.find(hash);
      if (it == fixtures_.end()) fail(ErrorKind::kFixtureMiss, "no fixture for prompt sha256 " + hash);
      return it->second;
    }
    SlotGuard slot(*this);
    std::string text = complete_live(prompt);
    if (!config_.record_path.empty()) record(prompt, text);
    return text;
  }

  /// Runs prompts on up to max_concurrent worker threads. Results are in
  /// prompt order; failures are captured per prompt.
  std::vector<Completion> complete_all(const std::vector<std::string>& prompts) {
    std::vector<Completion> results(prompts.size());
    std::mutex next_mutex;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        std::size_t k;
        {
          std::lock_guard lock(next_mutex);
          if (next >= prompts.size()) return;
          k = next++;
        }
        try {
          results[k].text = complete(prompts[k]);
        } catch (const Error& e) {
          results[k].error_kind = e.kind();
          results[k].error = e.what();
        }
      }
    };
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config_.max_concurrent), prompts.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    return results;
  }

 private:
  class SlotGuard {
   public:
    explicit SlotGuard(LlmClient& c) : c_(c) {
      std::unique_lock lock(c_.slot_mutex_);
      c_.slot_cv_.wait(lock, [&] { return c_.in_flight_ < c_.config_.max_concurrent; });
      ++c_.in_flight_;
    }
    ~SlotGuard() {
      {
        std::lock_guard lock(c_.slot_mutex_);
        --c_.in_flight_;
      }
      c_.slot_cv_.notify_one();
    }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

   private:
    LlmClient& c_;
  };

  std::string complete_live(const std::string& prompt) {
    nlohmann::ordered_json request;
    request["model"] = config_.model;
    request["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt}}});
    std::vector<std::pair<std::string, std::string>> headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
    const std::string body = request.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      const HttpResponse response = transport_->post(config_.endpoint, body, headers, config_.timeout_seconds);
      if (response.status >= 200 && response.status < 300) return extract_content(response.body);
      const bool retryable = response.status == 0 || response.status == 429 || response.status >= 500;
      last_error = response.status == 0 ? "no response (" + response.error + ")"
                                        : "HTTP " + std::to_string(response.status);
      if (!retryable) break;
      if (attempt < config_.max_retries) sleeper_(backoff_delay(attempt));
    }
    fail(ErrorKind::kTransport, "LLM request failed after retries: " + last_error);
  }

  double backoff_delay(int attempt) {
    double jitter;
    {
      std::lock_guard lock(rng_mutex_);
      jitter = rng_.uniform();
    }
    return config_.backoff_seconds * static_cast<double>(1ULL << std::min(attempt, 30)) * (1.0 + 0.25 * jitter);
  }

  static std::string extract_content(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, std::string("malformed chat-completion response: ") + e.what());
    }
  }

  void record(const std::string& prompt, const std::string& response) {
    std::lock_guard lock(record_mutex_);
    recorded_[sha256_hex(prompt)] = response;
    write_file(config_.record_path, fixtures_to_jsonl(recorded_));
  }

  ClientConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::map<std::string, std::string> fixtures_;

  std::mutex rng_mutex_;
  Rng rng_;

  std::mutex record_mutex_;
  std::map<std::string, std::string> recorded_;

  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
};

}  // namespace toxcg

#endif  // TOXCG_LLMCLIENT_HPP_
