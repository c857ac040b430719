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


// Helpers shared by the unit tests: temp directories, tiny corpora and a
// scripted HTTP transport.

#ifndef TOXCG_TESTS_SUPPORT_HPP_
#define TOXCG_TESTS_SUPPORT_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "toxcg/core.hpp"
#include "toxcg/corpus.hpp"
#include "toxcg/llmclient.hpp"

namespace toxcg::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("toxcg-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Sample sample(std::string id, std::string text, int label, std::vector<int> concepts) {
  Sample s;
  s.id = std::move(id);
  s.text = std::move(text);
  s.label = label;
  s.raw_toxicity = label;
  for (int c : concepts) s.raw_concepts.push_back(c);
  s.concept_labels = std::move(concepts);
  return s;
}

inline Corpus corpus_of(std::vector<Sample> samples, std::vector<std::string> concepts = {"obscene", "threat",
                                                                                          "insult"}) {
  Corpus c;
  c.schema = ConceptSchema(std::move(concepts));
  c.samples = std::move(samples);
  c.binarized = true;
  return c;
}

/// Small synthetic corpus, already binarized.
inline Corpus small_synth(std::size_t n, std::uint64_t seed, double noise = 0.0) {
  auto cfg = default_synth_config();
  cfg.samples = n;
  cfg.noise_rate = noise;
  return synthesize(cfg, seed).corpus;
}

inline std::string chat_body(const std::string& content) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}});
  return j.dump();
}

/// Scripted transport. Each call pops the next scripted status (default
/// 200) and answers with responder(prompt).
class FakeTransport : public Transport {
 public:
  using Responder = std::function<std::string(const std::string& prompt)>;

  explicit FakeTransport(Responder responder, std::deque<int> statuses = {}, int delay_ms = 0)
      : responder_(std::move(responder)), statuses_(std::move(statuses)), delay_ms_(delay_ms) {}

  HttpResponse post(const std::string&, const std::string& body, const std::vector<std::pair<std::string, std::string>>&,
                    double) override {
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    int status = 200;
    {
      std::lock_guard lock(mutex_);
      ++calls_;
      if (!statuses_.empty()) {
        status = statuses_.front();
        statuses_.pop_front();
      }
    }
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    HttpResponse r;
    r.status = status;
    if (status == 200) {
      const auto prompt = nlohmann::json::parse(body).at("messages").at(0).at("content").get<std::string>();
      r.body = chat_body(responder_(prompt));
    } else if (status == 0) {
      r.error = "connection refused";
    }
    --in_flight_;
    return r;
  }

  int calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }
  int max_in_flight() const { return max_in_flight_.load(); }

 private:
  Responder responder_;
  mutable std::mutex mutex_;
  std::deque<int> statuses_;
  int calls_ = 0;
  int delay_ms_ = 0;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

}  // namespace toxcg::testing

#endif  // TOXCG_TESTS_SUPPORT_HPP_
