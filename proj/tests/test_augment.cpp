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

#include <memory>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "test_support.hpp"
#include "toxcg/augment.hpp"

namespace toxcg {
namespace {

using testing::sample;

LexiconSet set_of(std::vector<std::string> words, int id = 1) {
  LexiconSet s;
  s.set_id = id;
  s.words = std::move(words);
  return s;
}

// Independent oracle: lowercase, split on anything that is not a letter,
// digit or inner apostrophe, intersect with the set.
bool leaks(const std::string& text, const std::set<std::string>& words) {
  std::string token;
  auto flush = [&]() {
    while (!token.empty() && token.back() == '\'') token.pop_back();
    while (!token.empty() && token.front() == '\'') token.erase(token.begin());
    const bool hit = words.count(token) != 0;
    token.clear();
    return hit;
  };
  for (char ch : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      token.push_back(c);
    } else if (flush()) {
      return true;
    }
  }
  return flush();
}

TEST(Validation, RejectsCaseFoldedMembersAndNamesThem) {
  const auto set = set_of({"idiot", "burn"});
  EXPECT_TRUE(validate_lexicon_free("you are wonderful", set).accepted);
  const auto v = validate_lexicon_free("What an IDIOT.", set);
  EXPECT_FALSE(v.accepted);
  EXPECT_NE(v.reason.find("idiot"), std::string::npos);
  EXPECT_TRUE(validate_lexicon_free("idiotic burner", set).accepted);
  EXPECT_TRUE(validate_lexicon_free("anything", set_of({})).accepted);
}

TEST(Generation, TemplatesNeverLeakLexiconWords) {
  const auto grammar = default_template_grammar();
  Rng rng(8);
  std::vector<std::string> pool = grammar.adjectives;
  pool.insert(pool.end(), grammar.nouns.begin(), grammar.nouns.end());
  pool.insert(pool.end(), grammar.verbs.begin(), grammar.verbs.end());
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::string> words;
    for (int k = 0; k < 6; ++k) words.push_back(pool[rng.index(pool.size())]);
    words.push_back("you");
    const auto set = set_of(words);
    const std::set<std::string> lexicon(words.begin(), words.end());
    GenerationConfig cfg;
    cfg.n = 1000;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto batch = generate_from_templates(set, cfg);
    std::size_t accepted = 0;
    for (const auto& c : batch.candidates) {
      if (!c.accepted) continue;
      ++accepted;
      EXPECT_FALSE(leaks(c.text, lexicon)) << c.text;
    }
    EXPECT_EQ(accepted, batch.accepted_count);
    EXPECT_LE(batch.accepted_count, cfg.n);
    EXPECT_EQ(batch.shortfall(), cfg.n - batch.accepted_count);
  }
}

TEST(Generation, TemplatesAreDeterministicPerSeed) {
  const auto set = set_of({"pathetic"});
  GenerationConfig cfg;
  cfg.n = 200;
  cfg.seed = 4;
  EXPECT_EQ(batch_to_jsonl(generate_from_templates(set, cfg)), batch_to_jsonl(generate_from_templates(set, cfg)));
  cfg.seed = 5;
  const auto other = generate_from_templates(set, cfg);
  cfg.seed = 4;
  EXPECT_NE(batch_to_jsonl(other), batch_to_jsonl(generate_from_templates(set, cfg)));
}

TEST(Generation, ExhaustedBudgetReportsShortfall) {
  GenerationConfig cfg;
  cfg.n = 50;
  cfg.max_attempts = 10;
  const auto batch = generate_from_templates(set_of({"pathetic"}), cfg);
  EXPECT_LE(batch.accepted_count, 10u);
  EXPECT_GE(batch.shortfall(), 40u);

  TemplateGrammar tiny;
  tiny.frames = {"you {noun}"};
  tiny.nouns = {"fraud"};
  const auto blocked = generate_from_templates(set_of({"fraud"}), cfg, tiny);
  EXPECT_EQ(blocked.accepted_count, 0u);
  EXPECT_TRUE(blocked.candidates.empty());
  EXPECT_EQ(blocked.shortfall(), 50u);
}

TEST(Generation, LlmResponsesAreValidated) {
  auto transport = std::make_shared<testing::FakeTransport>([](const std::string& prompt) {
    // Later rounds ask only for the remainder.
    EXPECT_TRUE(prompt.find("generate 3 sentences") != std::string::npos ||
                prompt.find("generate 1 sentences") != std::string::npos);
    EXPECT_NE(prompt.find("Words: idiot, burn"), std::string::npos);
    return "Sentence1: you absolute idiot, Sentence2: what a worthless take, Sentence3: go away, creep";
  });
  ClientConfig client_cfg;
  client_cfg.mode = ClientMode::kLive;
  LlmClient client(client_cfg, transport, [](double) {});
  GenerationConfig cfg;
  cfg.n = 3;
  cfg.batch_size = 3;
  cfg.max_requests = 2;
  const auto batch =
      generate_with_llm(set_of({"idiot", "burn"}), cfg, client, builtin_prompt(PromptId::kGenerateSentences));
  EXPECT_EQ(batch.accepted_texts(), (std::vector<std::string>{"what a worthless take", "go away, creep"}));
  EXPECT_EQ(batch.generator, GeneratorKind::kLlm);
  EXPECT_EQ(transport->calls(), 2);
  // Second round repeats the same sentences, all rejected as duplicates.
  std::size_t duplicates = 0;
  for (const auto& c : batch.candidates) duplicates += c.rejection_reason == "duplicate" ? 1 : 0;
  EXPECT_EQ(duplicates, 3u);
}

TEST(Merge, AppendsAcceptedAsToxicAugmentation) {
  const auto train = testing::corpus_of({sample("gen-2-0", "hello there", 0, {1, 0, 0}),
                                         sample("x", "some text", 1, {0, 1, 0})});
  AugmentationBatch batch;
  batch.set_id = 2;
  batch.requested = 3;
  batch.candidates = {{"first", true, ""}, {"bad idiot", false, "contains lexicon word 'idiot'"}, {"second", true, ""}};
  batch.accepted_count = 2;
  const auto merged = merge(train, batch);
  ASSERT_EQ(merged.size(), 4u);
  EXPECT_EQ(merged.samples[0].id, "gen-2-0");
  EXPECT_EQ(merged.samples[2].id, "aug-gen-2-0");
  EXPECT_EQ(merged.samples[3].id, "gen-2-1");
  for (std::size_t i = 2; i < 4; ++i) {
    EXPECT_EQ(merged.samples[i].label, 1);
    EXPECT_EQ(merged.samples[i].concept_labels, (std::vector<int>{0, 0, 0}));
    EXPECT_EQ(merged.samples[i].origin, SplitTag::kAug);
  }
  EXPECT_EQ(merged.samples[2].text, "first");
  EXPECT_EQ(merged.count_label(1), train.count_label(1) + 2);
  EXPECT_NO_THROW(merged.validate());
}

TEST(Batch, JsonlRoundTrip) {
  GenerationConfig cfg;
  cfg.n = 30;
  cfg.seed = 2;
  const auto batch = generate_from_templates(set_of({"coward"}, 3), cfg);
  const auto text = batch_to_jsonl(batch);
  const auto back = batch_from_jsonl(text, batch.requested);
  EXPECT_EQ(back.set_id, 3);
  EXPECT_EQ(back.accepted_count, batch.accepted_count);
  EXPECT_EQ(batch_to_jsonl(back), text);
}

class RetrainTest : public ::testing::Test {
 protected:
  static RetrainSetup setup() {
    RetrainSetup s;
    s.target = {8, 64, 2e-5, 20000.0, 3, 5, false, true};
    s.concepts = {40, 64, 2e-5, 100000.0, 5, 5, true, false};
    s.featurizer = {{1}, 512, true};
    s.shape = {16, 16};
    return s;
  }
};

TEST_F(RetrainTest, EmptyBatchLeavesMetricsUnchanged) {
  const auto corpus = testing::small_synth(600, 21, 0.05);
  const auto parts = split(corpus, {0.7, 0.1, 0.2, false, 3});
  AugmentationBatch empty;
  empty.requested = 10;
  auto cfg = setup();
  cfg.with_aggregate = false;
  const auto out = retrain_and_compare(parts.train, parts.val, empty, parts.test, cfg);
  EXPECT_EQ(to_json(out.report.before).dump(), to_json(out.report.after).dump());
  EXPECT_EQ(out.report.delta_f1, 0.0);
  EXPECT_EQ(out.report.train_size_after, out.report.train_size_before);
}

TEST_F(RetrainTest, ReportsFullMetricSetsOnTheSameTestCorpus) {
  const auto corpus = testing::small_synth(600, 22, 0.05);
  const auto parts = split(corpus, {0.7, 0.1, 0.2, false, 4});
  GenerationConfig gen;
  gen.n = 40;
  const auto batch = generate_from_templates(set_of({"pathetic"}), gen);
  const auto out = retrain_and_compare(parts.train, parts.val, batch, parts.test, setup());
  const auto& r = out.report;
  EXPECT_EQ(r.test_hash, corpus_hash(parts.test));
  EXPECT_EQ(r.train_size_after, parts.train.size() + batch.accepted_count);
  EXPECT_NEAR(r.delta_f1, r.after.macro_f1 - r.before.macro_f1, 1e-15);
  const auto tc = r.before.confusion;
  const auto ac = r.after.confusion;
  EXPECT_EQ(tc.tn + tc.fp + tc.fn + tc.tp, static_cast<std::int64_t>(parts.test.size()));
  EXPECT_EQ(ac.tn + ac.fp + ac.fn + ac.tp, static_cast<std::int64_t>(parts.test.size()));
  ASSERT_TRUE(r.aggregate_after.has_value());

  const auto csv = before_after_f1_csv(r);
  const auto lines = split_lines(csv);
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "stage,macro_f1,accuracy");
  EXPECT_TRUE(istarts_with(lines[1], "before_augmentation,"));
  EXPECT_TRUE(istarts_with(lines[2], "after_augmentation,"));
  EXPECT_EQ(split_lines(confusion_csv(tc))[0], "actual,predicted_negative,predicted_positive");
}

TEST_F(RetrainTest, SchemaMismatchIsRejected) {
  const auto a = testing::small_synth(100, 1);
  auto b = testing::corpus_of({sample("q", "x y", 1, {0})}, {"only"});
  EXPECT_THROW(retrain_and_compare(a, a, AugmentationBatch{}, b, setup()), Error);
}

}  // namespace
}  // namespace toxcg
