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

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "toxcg/lexicon.hpp"

namespace toxcg {
namespace {

using testing::sample;

TEST(Stopwords, ShippedFileMatchesBuiltin) {
  const auto text = read_file(std::filesystem::path(TOXCG_DATA_DIR) / "stopwords_en.txt");
  EXPECT_EQ(text, std::string(detail::kEnglishStopwords));
  EXPECT_EQ(english_stopwords().size(), 179u);
  EXPECT_TRUE(english_stopwords().count("the"));
  EXPECT_TRUE(english_stopwords().count("don't"));
  EXPECT_FALSE(english_stopwords().count("idiot"));
}

TEST(Clean, DropsStopwordsSplitsPhrasesAndDedupes) {
  const WordList raw{{"The", "idiot", "you moron", "idiot", "  ", "Damn!"}, WordStage::kRaw};
  const auto cleaned = clean(raw);
  EXPECT_EQ(cleaned.words, (std::vector<std::string>{"idiot", "moron", "damn"}));
  EXPECT_EQ(cleaned.stage, WordStage::kCleaned);
}

// Naive oracle: scan every sample's tokens for membership.
std::vector<std::string> naive_members(const Corpus& corpus, const std::vector<std::string>& words) {
  const std::set<std::string> set(words.begin(), words.end());
  std::vector<std::string> ids;
  for (const auto& s : corpus.samples) {
    for (const auto& t : tokenize(s.text)) {
      if (set.count(t)) {
        ids.push_back(s.id);
        break;
      }
    }
  }
  return ids;
}

std::vector<std::string> vocabulary(const SynthConfig& cfg) {
  std::vector<std::string> vocab = cfg.filler;
  for (const auto& t : cfg.triggers) vocab.insert(vocab.end(), t.begin(), t.end());
  return vocab;
}

TEST(TokenIndex, MatchesNaiveScanOnTenThousandSamples) {
  const auto corpus = testing::small_synth(10000, 31, 0.05);
  const auto vocab = vocabulary(default_synth_config());
  const TokenIndex index(corpus);
  Rng rng(2);
  for (int t = 0; t < 25; ++t) {
    LexiconSet set;
    const std::size_t size = 1 + rng.index(4);
    for (std::size_t k = 0; k < size; ++k) set.words.push_back(vocab[rng.index(vocab.size())]);
    EXPECT_EQ(index.sentences_containing(set), naive_members(corpus, set.words));
  }
  LexiconSet absent;
  absent.words = {"zzzz"};
  EXPECT_TRUE(index.sentences_containing(absent).empty());
}

TEST(TokenIndex, MembershipIsMonotoneInTheSet) {
  const auto corpus = testing::small_synth(2000, 32);
  const auto vocab = vocabulary(default_synth_config());
  const TokenIndex index(corpus);
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    LexiconSet a, b;
    const std::size_t size = 1 + rng.index(3);
    for (std::size_t k = 0; k < size; ++k) a.words.push_back(vocab[rng.index(vocab.size())]);
    b.words = a.words;
    const std::size_t extra = rng.index(4);
    for (std::size_t k = 0; k < extra; ++k) b.words.push_back(vocab[rng.index(vocab.size())]);
    const auto za = index.sentences_containing(a);
    const auto zb = index.sentences_containing(b);
    const std::set<std::string> sa(za.begin(), za.end());
    const std::set<std::string> sb(zb.begin(), zb.end());
    EXPECT_TRUE(std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()));
    EXPECT_GE(zb.size(), za.size());
  }
}

std::vector<AttributionRecord> random_records(const Corpus& corpus, std::size_t m, Rng& rng) {
  std::vector<AttributionRecord> recs;
  for (const auto& s : corpus.samples) {
    AttributionRecord r;
    r.sample_id = s.id;
    r.true_label = s.label;
    for (std::size_t j = 0; j < m; ++j) r.scores.push_back(rng.normal());
    recs.push_back(std::move(r));
  }
  return recs;
}

TEST(Wca, FullCorpusEqualsMeanCg) {
  const auto corpus = testing::small_synth(3000, 33);
  Rng rng(4);
  const auto recs = random_records(corpus, 3, rng);
  std::vector<std::string> all;
  for (const auto& s : corpus.samples) all.push_back(s.id);
  ConditionSlices slices;
  slices[0].sample_ids = all;
  for (auto mode : {AggregateMode::kSigned, AggregateMode::kAbsolute}) {
    const auto w = wca(recs, all, mode, 3, 1);
    const auto report = mean_cg(recs, slices, mode, corpus.schema.names());
    ASSERT_TRUE(w.scores.has_value());
    for (std::size_t j = 0; j < 3; ++j) {
      double direct = 0.0;
      for (const auto& r : recs) direct += mode == AggregateMode::kAbsolute ? std::abs(r.scores[j]) : r.scores[j];
      direct /= static_cast<double>(recs.size());
      EXPECT_NEAR((*w.scores)[j], *report.table[0][j], 1e-12);
      EXPECT_NEAR((*w.scores)[j], direct, 1e-12);
    }
  }
}

TEST(Wca, EmptyMembershipIsNotAvailable) {
  const auto w = wca({}, {}, AggregateMode::kAbsolute, 3, 4);
  EXPECT_FALSE(w.scores.has_value());
  EXPECT_EQ(wca_csv({w}, {"a", "b", "c"}), "set_id,mode,sentence_count,a,b,c\n4,absolute,0,NA,NA,NA\n");
}

TEST(Wca, SentenceDumpHonorsMode) {
  AttributionRecord r;
  r.sample_id = "s1";
  r.scores = {-0.5, 0.25};
  EXPECT_EQ(wca_sentence_csv({r}, {"s1"}, 2, {"a", "b"}, AggregateMode::kAbsolute),
            "set_id,sample_id,a,b\n2,s1,0.5,0.25\n");
  EXPECT_EQ(wca_sentence_csv({r}, {"s1"}, 2, {"a", "b"}, AggregateMode::kSigned),
            "set_id,sample_id,a,b\n2,s1,-0.5,0.25\n");
  EXPECT_THROW(wca_sentence_csv({r}, {"s2"}, 2, {"a", "b"}, AggregateMode::kSigned), Error);
}

// Two word blocks that only co-occur within their block.
Corpus block_corpus(std::size_t n, std::uint64_t seed) {
  const std::vector<std::vector<std::string>> blocks{{"idiot", "moron", "clown", "loser", "fool"},
                                                     {"smash", "burn", "crush", "wreck", "punish"}};
  const std::vector<std::string> filler{"the", "park", "road", "news", "plan", "city", "team", "market"};
  Rng rng(seed);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& block = blocks[i % 2];
    std::string text;
    for (int k = 0; k < 3; ++k) text += block[rng.index(block.size())] + " ";
    for (int k = 0; k < 4; ++k) text += filler[rng.index(filler.size())] + " ";
    samples.push_back(sample("b" + std::to_string(i), text, 1, {0, 0, 0}));
  }
  return testing::corpus_of(std::move(samples));
}

TEST(Grouping, ClusterFallbackRecoversPlantedBlocks) {
  const auto corpus = block_corpus(600, 5);
  const WordList cleaned{{"idiot", "smash", "moron", "burn", "clown", "crush", "loser", "wreck", "fool", "punish"},
                         WordStage::kCleaned};
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto result = group_words_cluster(cleaned, corpus, corpus, {2, 5, seed});
    ASSERT_EQ(result.sets.size(), 2u);
    std::set<std::set<std::string>> got;
    for (const auto& s : result.sets) got.insert(std::set<std::string>(s.words.begin(), s.words.end()));
    const std::set<std::set<std::string>> expected{{"idiot", "moron", "clown", "loser", "fool"},
                                                   {"smash", "burn", "crush", "wreck", "punish"}};
    EXPECT_EQ(got, expected) << "seed " << seed;
    EXPECT_EQ(result.sets[0].set_id, 1);
    EXPECT_EQ(result.sets[0].member_sentence_count, 300u);
  }
}

TEST(Grouping, UnseenWordsAreDroppedWithAWarning) {
  const auto corpus = block_corpus(50, 6);
  const WordList cleaned{{"idiot", "neverseen"}, WordStage::kCleaned};
  const auto result = group_words_cluster(cleaned, corpus, corpus, {4, 5, 1});
  ASSERT_EQ(result.sets.size(), 1u);
  EXPECT_EQ(result.sets[0].words, (std::vector<std::string>{"idiot"}));
  ASSERT_EQ(result.warnings.size(), 1u);
}

TEST(Grouping, ResolveKeepsFirstOwnerAndCleanedWordsOnly) {
  std::vector<std::string> warnings;
  const WordList cleaned{{"a", "b", "c"}, WordStage::kCleaned};
  const auto groups = detail::resolve_groups({{"a", "b", "zz"}, {"b", "c"}, {"zz"}}, cleaned, warnings);
  EXPECT_EQ(groups, (std::vector<std::vector<std::string>>{{"a", "b"}, {"c"}}));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Grouping, RankingIsByTrainMembershipThenKeepTop) {
  const auto train = testing::corpus_of({sample("1", "x y", 0, {0, 0, 0}), sample("2", "y", 0, {0, 0, 0}),
                                         sample("3", "z y", 0, {0, 0, 0})});
  const TokenIndex index(train);
  const auto sets = detail::rank_groups({{"x"}, {"y"}, {"z"}, {"q"}}, Provenance::kLlm, index, 2);
  ASSERT_EQ(sets.size(), 2u);
  EXPECT_EQ(sets[0].words, (std::vector<std::string>{"y"}));
  EXPECT_EQ(sets[0].member_sentence_count, 3u);
  EXPECT_EQ(sets[1].words, (std::vector<std::string>{"x"}));  // tie with z keeps input order
  EXPECT_EQ(sets[1].set_id, 2);
}

TEST(Grouping, LlmGrouperUsesTheGroupPrompt) {
  const auto train = block_corpus(40, 7);
  auto transport = std::make_shared<testing::FakeTransport>([](const std::string& prompt) {
    EXPECT_NE(prompt.find("Words: idiot, smash, fool"), std::string::npos);
    return "Group 1: smash\nGroup 2: idiot, fool\n";
  });
  ClientConfig cfg;
  cfg.mode = ClientMode::kLive;
  LlmClient client(cfg, transport, [](double) {});
  const WordList cleaned{{"idiot", "smash", "fool"}, WordStage::kCleaned};
  const auto result = group_words_llm(cleaned, client, builtin_prompt(PromptId::kGroupWords), train, {8, 5, 0});
  ASSERT_EQ(result.sets.size(), 2u);
  EXPECT_EQ(result.sets[0].provenance, Provenance::kLlm);
  EXPECT_EQ(result.groups_formed, 2u);
}

TEST(Extraction, LlmExtractorSkipsFailedSamples) {
  MisclassifiedSet mis;
  mis.entries.push_back({sample("a", "you absolute clown", 0, {0, 0, 0}), 1});
  mis.entries.push_back({sample("b", "broken sample", 1, {0, 0, 0}), 0});
  auto transport = std::make_shared<testing::FakeTransport>([](const std::string& prompt) -> std::string {
    if (prompt.find("broken") != std::string::npos) return "   ";
    EXPECT_NE(prompt.find("Incorrect Prediction: 1"), std::string::npos);
    return "Words: clown, absolute";
  });
  ClientConfig cfg;
  cfg.mode = ClientMode::kLive;
  cfg.max_concurrent = 2;
  LlmClient client(cfg, transport, [](double) {});
  const auto result = extract_words_llm(mis, client, builtin_prompt(PromptId::kExtractWords));
  EXPECT_EQ(result.raw.words, (std::vector<std::string>{"clown", "absolute"}));
  ASSERT_EQ(result.skipped.size(), 1u);
  EXPECT_EQ(result.skipped[0].first, "b");
}

TEST(Extraction, TokenContributionsSumToGradientTimesInput) {
  const Model model = init_model({{1}, 128, true}, {8, 6}, {"a", "b", "c"}, 9);
  for (const char* text : {"you damn damn fool", "the city park plan", "crush"}) {
    for (int predicted : {0, 1}) {
      const auto contribs = token_contributions(model, text, predicted);
      double total = 0.0;
      for (const auto& c : contribs) total += c.contribution;
      const auto x = model.represent(text);
      const double sign = predicted == 1 ? 1.0 : -1.0;
      EXPECT_NEAR(total, sign * target_gradient(model.params, x).dot(x), 1e-12);
      for (std::size_t k = 1; k < contribs.size(); ++k) {
        EXPECT_GE(std::abs(contribs[k - 1].contribution) + 1e-12, std::abs(contribs[k].contribution));
      }
    }
  }
  const Model bigram_only = init_model({{2}, 128, true}, {4, 4}, {"a"}, 1);
  EXPECT_THROW(token_contributions(bigram_only, "a b", 1), Error);
}

TEST(Extraction, GradientExtractorRespectsTopKAndStopwords) {
  const Model model = init_model({{1}, 256, true}, {8, 6}, {"a", "b", "c"}, 10);
  MisclassifiedSet mis;
  mis.entries.push_back({sample("a", "the idiot was about to crush this plan again", 0, {0, 0, 1}), 1});
  const auto result = extract_words_gradient(mis, model, english_stopwords(), {2, 0.0});
  ASSERT_EQ(result.per_sample.size(), 1u);
  EXPECT_EQ(result.per_sample[0].second.size(), 2u);
  for (const auto& w : result.raw.words) EXPECT_FALSE(english_stopwords().count(w)) << w;
  const auto ranked = token_contributions(model, mis.entries[0].sample.text, 1, english_stopwords());
  EXPECT_EQ(result.per_sample[0].second[0], ranked[0].token);
}

TEST(Mining, MisclassifiedAreExactlyTheDisagreements) {
  const auto corpus = testing::small_synth(200, 34);
  const Model model = init_model({{1}, 256, true}, {8, 6}, corpus.schema.names(), 11);
  const auto mis = mine_misclassified(model, corpus);
  const auto preds = predict_corpus(model, corpus);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) expected += preds.labels[i] != corpus.samples[i].label ? 1 : 0;
  EXPECT_EQ(mis.size(), expected);
  for (const auto& e : mis.entries) EXPECT_NE(e.predicted, e.sample.label);
}

TEST(LexiconFile, JsonRoundTrip) {
  testing::TempDir dir("lex");
  std::vector<LexiconSet> sets(2);
  sets[0] = {1, {"idiot", "fool"}, Provenance::kLlm, 12};
  sets[1] = {2, {"burn"}, Provenance::kFallback, 3};
  save_lexicon(dir / "l.json", sets);
  const auto back = load_lexicon(dir / "l.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].words, sets[0].words);
  EXPECT_EQ(back[1].provenance, Provenance::kFallback);
  EXPECT_EQ(back[0].member_sentence_count, 12u);
  write_file(dir / "bad.json", "{}");
  EXPECT_THROW(load_lexicon(dir / "bad.json"), Error);
}

}  // namespace
}  // namespace toxcg
