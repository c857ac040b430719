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


#include <gtest/gtest.h>

#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "toxcg/llmclient.hpp"

namespace toxcg {
namespace {

using testing::FakeTransport;
using testing::TempDir;

const std::filesystem::path kPromptDir = std::filesystem::path(TOXCG_DATA_DIR) / "prompts";

TEST(Prompts, ShippedFilesMatchBuiltinsByteForByte) {
  for (auto id : {PromptId::kExtractWords, PromptId::kGroupWords, PromptId::kGenerateSentences}) {
    EXPECT_EQ(load_prompt(id, kPromptDir).body, builtin_prompt(id).body) << to_string(id);
  }
}

TEST(Prompts, PlaceholdersPerTemplate) {
  EXPECT_EQ(placeholders(builtin_prompt(PromptId::kExtractWords).body),
            (std::vector<std::string>{"sentence", "prediction"}));
  EXPECT_EQ(placeholders(builtin_prompt(PromptId::kGroupWords).body), (std::vector<std::string>{"words"}));
  EXPECT_EQ(placeholders(builtin_prompt(PromptId::kGenerateSentences).body),
            (std::vector<std::string>{"n", "words"}));
}

TEST(Prompts, RenderSubstitutesOnceAndRejectsUnbound) {
  const auto p = builtin_prompt(PromptId::kExtractWords);
  const auto text = render(p, {{"sentence", "you {prediction} fool"}, {"prediction", "1"}});
  EXPECT_NE(text.find("Sentence: you {prediction} fool\n"), std::string::npos);
  EXPECT_NE(text.find("Incorrect Prediction: 1\n"), std::string::npos);
  EXPECT_NE(text.find("Words: <reordered or original phrase>"), std::string::npos);
  try {
    render(p, {{"sentence", "x"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRender);
  }
}

TEST(Parsers, WordList) {
  EXPECT_EQ(parse_word_list("Words: Idiot, \"stupid\", moron."),
            (std::vector<std::string>{"idiot", "stupid", "moron"}));
  EXPECT_EQ(parse_word_list("a\nb, b"), (std::vector<std::string>{"a", "b", "b"}));
  EXPECT_THROW(parse_word_list("Words: , ,"), Error);
}

TEST(Parsers, Groups) {
  const auto groups = parse_groups("Here you go:\nGroup 1: idiot, moron\n**Group 2:** kill, hurt\ngroup 3 - damn\n");
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0], (std::vector<std::string>{"idiot", "moron"}));
  EXPECT_EQ(groups[1], (std::vector<std::string>{"kill", "hurt"}));
  EXPECT_EQ(groups[2], (std::vector<std::string>{"damn"}));
  try {
    parse_groups("no groups here");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
  }
}

TEST(Parsers, Sentences) {
  EXPECT_EQ(parse_sentences("Sentence1: You are awful, Sentence2: Get lost now, and so on."),
            (std::vector<std::string>{"You are awful", "Get lost now, and so on."}));
  EXPECT_EQ(parse_sentences("first one\n- second one\n\n"), (std::vector<std::string>{"first one", "second one"}));
  EXPECT_THROW(parse_sentences("  \n "), Error);
}

ClientConfig live_config() {
  ClientConfig c;
  c.mode = ClientMode::kLive;
  c.endpoint = "http://fake.invalid/v1/chat/completions";
  c.backoff_seconds = 0.5;
  c.seed = 3;
  return c;
}

class ClientTest : public ::testing::Test {
 protected:
  void SetUp() override { unsetenv("NO_NETWORK"); }
  std::vector<double> sleeps_;
  std::mutex sleep_mutex_;
  Sleeper recorder() {
    return [this](double s) {
      std::lock_guard lock(sleep_mutex_);
      sleeps_.push_back(s);
    };
  }
};

TEST_F(ClientTest, RetriesTransientFailuresWithBackoff) {
  auto transport = std::make_shared<FakeTransport>([](const std::string&) { return "ok"; },
                                                   std::deque<int>{503, 429, 0, 200});
  LlmClient client(live_config(), transport, recorder());
  EXPECT_EQ(client.complete("hello"), "ok");
  EXPECT_EQ(transport->calls(), 4);
  ASSERT_EQ(sleeps_.size(), 3u);
  for (std::size_t a = 0; a < 3; ++a) {
    const double base = 0.5 * static_cast<double>(1 << a);
    EXPECT_GE(sleeps_[a], base);
    EXPECT_LE(sleeps_[a], 1.25 * base);
  }
}

TEST_F(ClientTest, GivesUpAfterMaxRetries) {
  auto transport = std::make_shared<FakeTransport>([](const std::string&) { return "ok"; },
                                                   std::deque<int>{500, 500, 500, 500, 200});
  LlmClient client(live_config(), transport, recorder());
  try {
    client.complete("hello");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTransport);
    EXPECT_EQ(exit_code(e.kind()), 5);
  }
  EXPECT_EQ(transport->calls(), 4);
}

TEST_F(ClientTest, ClientErrorsAreNotRetried) {
  auto transport = std::make_shared<FakeTransport>([](const std::string&) { return "ok"; }, std::deque<int>{401});
  LlmClient client(live_config(), transport, recorder());
  EXPECT_THROW(client.complete("hello"), Error);
  EXPECT_EQ(transport->calls(), 1);
  EXPECT_TRUE(sleeps_.empty());
}

TEST_F(ClientTest, BoundsConcurrentRequests) {
  auto transport = std::make_shared<FakeTransport>([](const std::string& p) { return "re:" + p; },
                                                   std::deque<int>{}, 20);
  auto cfg = live_config();
  cfg.max_concurrent = 3;
  LlmClient client(cfg, transport, recorder());
  std::vector<std::string> prompts;
  for (int i = 0; i < 12; ++i) prompts.push_back("p" + std::to_string(i));
  const auto results = client.complete_all(prompts);
  ASSERT_EQ(results.size(), prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) EXPECT_EQ(*results[i].text, "re:" + prompts[i]);
  EXPECT_LE(transport->max_in_flight(), 3);
  EXPECT_GE(transport->max_in_flight(), 2);
}

TEST_F(ClientTest, PerPromptFailuresAreCaptured) {
  auto transport = std::make_shared<FakeTransport>([](const std::string&) { return "fine"; }, std::deque<int>{404});
  auto cfg = live_config();
  cfg.max_concurrent = 1;
  LlmClient client(cfg, transport, recorder());
  const auto results = client.complete_all({"a", "b"});
  EXPECT_FALSE(results[0].text.has_value());
  EXPECT_EQ(results[0].error_kind, ErrorKind::kTransport);
  EXPECT_EQ(*results[1].text, "fine");
}

TEST_F(ClientTest, RecordThenReplayOffline) {
  TempDir dir("fixtures");
  auto transport = std::make_shared<FakeTransport>([](const std::string& p) { return "answer to " + p; });
  auto cfg = live_config();
  cfg.record_path = (dir / "fx.jsonl").string();
  {
    LlmClient client(cfg, transport, recorder());
    client.complete("beta");
    client.complete("alpha");
  }
  const auto fixtures = load_fixtures(dir / "fx.jsonl");
  ASSERT_EQ(fixtures.size(), 2u);
  EXPECT_EQ(fixtures.at(sha256_hex("alpha")), "answer to alpha");
  EXPECT_EQ(read_file(dir / "fx.jsonl"), fixtures_to_jsonl(fixtures));

  ClientConfig offline;
  offline.fixture_path = cfg.record_path;
  LlmClient replay(offline, transport, recorder());
  EXPECT_EQ(replay.complete("alpha"), "answer to alpha");
  EXPECT_EQ(transport->calls(), 2);
  try {
    replay.complete("gamma");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFixtureMiss);
    EXPECT_NE(std::string(e.what()).find(sha256_hex("gamma")), std::string::npos);
  }
}

TEST_F(ClientTest, NoNetworkForcesOffline) {
  setenv("NO_NETWORK", "1", 1);
  auto cfg = live_config();
  EXPECT_EQ(effective_client_config(cfg).mode, ClientMode::kOffline);
  EXPECT_THROW(LlmClient(cfg, std::make_shared<FakeTransport>([](const std::string&) { return ""; })), Error);
  unsetenv("NO_NETWORK");
  EXPECT_EQ(effective_client_config(cfg).mode, ClientMode::kLive);
}

TEST_F(ClientTest, ConfigViolationsAreListed) {
  ClientConfig c;
  c.max_concurrent = 0;
  c.max_retries = -1;
  c.timeout_seconds = 0.0;
  const auto v = c.violations();
  EXPECT_EQ(v.size(), 4u);  // three bad values plus the missing fixture path
}

TEST_F(ClientTest, MalformedResponseIsAParseError) {
  class Broken : public Transport {
   public:
    HttpResponse post(const std::string&, const std::string&, const std::vector<std::pair<std::string, std::string>>&,
                      double) override {
      return {200, "{\"choices\": []}", ""};
    }
  };
  LlmClient client(live_config(), std::make_shared<Broken>(), recorder());
  try {
    client.complete("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
  }
}

}  // namespace
}  // namespace toxcg
