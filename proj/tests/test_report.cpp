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
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "toxcg/report.hpp"

namespace toxcg {
namespace {

using testing::sample;

TEST(Histogram, BinsAreHalfOpenWithAClosedLastBin) {
  HistogramSpec spec;
  spec.bin_count = 4;
  spec.range = std::make_pair(0.0, 1.0);
  const auto bins = histogram({0.0, 0.25, 0.5, 0.74, 1.0, -3.0, 9.0}, spec);
  ASSERT_EQ(bins.size(), 4u);
  EXPECT_EQ(bins[0].count, 2u);  // 0.0 and the clamped -3
  EXPECT_EQ(bins[1].count, 1u);
  EXPECT_EQ(bins[2].count, 2u);
  EXPECT_EQ(bins[3].count, 2u);  // 1.0 and the clamped 9
  EXPECT_DOUBLE_EQ(bins[3].hi, 1.0);
}

TEST(Histogram, CountsSumToInputSize) {
  Rng rng(3);
  std::vector<double> v;
  for (int i = 0; i < 5000; ++i) v.push_back(rng.normal());
  for (auto mode : {AggregateMode::kSigned, AggregateMode::kAbsolute}) {
    HistogramSpec spec;
    spec.mode = mode;
    const auto bins = histogram(v, spec);
    std::size_t total = 0;
    for (const auto& b : bins) total += b.count;
    EXPECT_EQ(total, v.size());
    EXPECT_EQ(bins.size(), 30u);
    if (mode == AggregateMode::kAbsolute) {
      EXPECT_GE(bins.front().lo, 0.0);
    }
  }
}

TEST(Histogram, DegenerateAutoRangeIsWidened) {
  const auto bins = histogram({2.0, 2.0, 2.0}, {3, std::nullopt, AggregateMode::kSigned});
  EXPECT_DOUBLE_EQ(bins.front().lo, 1.5);
  EXPECT_DOUBLE_EQ(bins.back().hi, 2.5);
  EXPECT_EQ(bins[1].count, 3u);
  EXPECT_EQ(histogram_csv(bins).substr(0, 19), "bin_lo,bin_hi,count");
}

TEST(Histogram, InvalidInputs) {
  EXPECT_THROW(histogram({}, {}), Error);
  EXPECT_THROW(histogram({1.0}, {0, std::nullopt, AggregateMode::kSigned}), Error);
  EXPECT_THROW(histogram({1.0}, {3, std::make_pair(1.0, 1.0), AggregateMode::kSigned}), Error);
  EXPECT_THROW(histogram({std::nan("")}, {}), Error);
}

TEST(Frequencies, CountsTokenOccurrences) {
  const auto corpus = testing::corpus_of({sample("1", "Idiot idiot fool", 1, {0, 0, 0}),
                                          sample("2", "a fool and a clown", 1, {0, 0, 0}),
                                          sample("3", "idiot", 1, {0, 0, 0})});
  LexiconSet set;
  set.words = {"idiot", "fool", "clown", "absent"};
  const auto table = word_frequencies(corpus, set);
  EXPECT_EQ(table, (FrequencyTable{{"idiot", 3}, {"fool", 2}, {"clown", 1}}));
  EXPECT_EQ(frequency_csv(table), "word,count\nidiot,3\nfool,2\nclown,1\n");
}

TEST(Comparative, RejectsMixedSchemas) {
  AggregateReport a;
  a.concepts = {"x", "y"};
  for (auto& row : a.table) row.assign(2, std::nullopt);
  AggregateReport b = a;
  b.method = AttributionMethod::kCav;
  const auto text = comparative_table({a, b});
  EXPECT_NE(text.find("# method=cg_independent mode=signed"), std::string::npos);
  EXPECT_NE(text.find("# method=cav"), std::string::npos);
  b.concepts = {"x"};
  EXPECT_THROW(comparative_table({a, b}), Error);
  EXPECT_THROW(comparative_table({}), Error);
}

TEST(Folds, AssignmentPartitionsWithBalancedSizes) {
  for (std::size_t n : {10u, 11u, 97u, 1000u}) {
    for (std::size_t k : {2u, 5u, 10u}) {
      const auto folds = fold_assignment(n, k, 9);
      ASSERT_EQ(folds.size(), k);
      std::set<std::size_t> seen;
      std::size_t total = 0;
      for (std::size_t f = 0; f < k; ++f) {
        EXPECT_EQ(folds[f].size(), n / k + (f < n % k ? 1 : 0));
        total += folds[f].size();
        seen.insert(folds[f].begin(), folds[f].end());
      }
      EXPECT_EQ(total, n);
      EXPECT_EQ(seen.size(), n);
      EXPECT_EQ(*seen.rbegin(), n - 1);
    }
  }
  EXPECT_EQ(fold_assignment(50, 5, 1), fold_assignment(50, 5, 1));
  EXPECT_NE(fold_assignment(50, 5, 1), fold_assignment(50, 5, 2));
  EXPECT_THROW(fold_assignment(10, 1, 0), Error);
  EXPECT_THROW(fold_assignment(3, 5, 0), Error);
}

TEST(Summary, SampleStandardDeviation) {
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stddev, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(summarize({7.0}).stddev, 0.0);
}

TEST(Kfold, AugmentedSamplesOnlyEverTrain) {
  const auto corpus = testing::small_synth(300, 41, 0.05);
  KfoldSetup setup;
  setup.k = 3;
  setup.target = {4, 64, 2e-5, 20000.0, 2, 3, false, true};
  setup.featurizer = {{1}, 256, true};
  setup.shape = {8, 8};
  setup.seed = 5;
  AugmentationBatch batch;
  batch.set_id = 1;
  batch.requested = 3;
  batch.candidates = {{"you vile creep", true, ""}, {"what a fraud", true, ""}, {"useless dimwit", true, ""}};
  batch.accepted_count = 3;
  const auto report = kfold(corpus, setup, batch);
  ASSERT_EQ(report.folds.size(), 3u);
  std::set<std::string> all_eval;
  for (const auto& f : report.folds) {
    for (const auto& id : f.eval_ids) {
      EXPECT_EQ(id.rfind("gen-", 0), std::string::npos) << id;
      EXPECT_TRUE(all_eval.insert(id).second) << id;
    }
    ASSERT_TRUE(f.after.has_value());
    const auto rest = corpus.size() - f.eval_ids.size();
    const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(rest)));
    EXPECT_EQ(f.train_size, rest - n_val);
  }
  EXPECT_EQ(all_eval.size(), corpus.size());
  const auto lines = split_lines(kfold_csv(report));
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "stage,mean_macro_f1,std_macro_f1,mean_accuracy,std_accuracy");
  EXPECT_TRUE(istarts_with(lines[1], "before_augmentation,"));
  EXPECT_TRUE(istarts_with(lines[2], "after_augmentation,"));
  std::vector<double> f1s;
  for (const auto& f : report.folds) f1s.push_back(f.before.macro_f1);
  EXPECT_NEAR(report.f1_before.mean, summarize(f1s).mean, 1e-15);

  const auto plain = kfold(corpus, setup);
  EXPECT_FALSE(plain.f1_after.has_value());
  const auto plain_csv = kfold_csv(plain);
  EXPECT_EQ(plain_csv.find("after_augmentation"), std::string::npos);
  EXPECT_EQ(std::count(plain_csv.begin(), plain_csv.end(), '\n'), 2);
  // The same folds and seeds give the same before-scores with or without a batch.
  EXPECT_EQ(plain.f1_before.mean, report.f1_before.mean);
}

TEST(Manifest, RecordsHashesAndRelativeInputs) {
  testing::TempDir dir("manifest");
  std::filesystem::create_directories(dir / "stage");
  write_file(dir / "input.txt", "abc");
  ArtifactWriter w(dir / "stage", "demo");
  w.set_seed(42);
  w.write("out.csv", "x\n1\n");
  w.add_input("source", dir / "input.txt", dir.path());
  const auto j = w.manifest();
  EXPECT_EQ(j["stage"], "demo");
  EXPECT_EQ(j["seed"], 42);
  EXPECT_EQ(j["files"]["out.csv"], sha256_hex("x\n1\n"));
  EXPECT_EQ(j["inputs"]["source"]["path"], "input.txt");
  EXPECT_EQ(j["inputs"]["source"]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto path = w.finish();
  EXPECT_EQ(read_file(path), j.dump(2) + "\n");
}

}  // namespace
}  // namespace toxcg
