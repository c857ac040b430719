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

// Lexicon-free augmentation: generate toxic sentences that avoid a lexicon
// set, validate the exclusion, merge, retrain and compare.

#ifndef TOXCG_AUGMENT_HPP_
#define TOXCG_AUGMENT_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "toxcg/attribution.hpp"
#include "toxcg/core.hpp"
#include "toxcg/corpus.hpp"
#include "toxcg/lexicon.hpp"
#include "toxcg/llmclient.hpp"
#include "toxcg/metrics.hpp"
#include "toxcg/nnet.hpp"

namespace toxcg {

struct Validation {
  bool accepted = true;
  std::string reason;  // names the offending token on rejection
};

/// Rejects the text iff one of its case-folded tokens is in the set.
inline Validation validate_lexicon_free(std::string_view text, const LexiconSet& set) {
  if (set.words.empty()) return {};
  const std::unordered_set<std::string> words(set.words.begin(), set.words.end());
  for (const auto& token : tokenize(text, true)) {
    if (words.count(token) != 0) return {false, "contains lexicon word '" + token + "'"};
  }
  return {};
}

struct Candidate {
  std::string text;
  bool accepted = false;
  std::string rejection_reason;
};

enum class GeneratorKind { kLlm, kTemplateFallback };

inline GeneratorKind generator_kind_from_string(std::string_view s) {
  if (s == "llm") return GeneratorKind::kLlm;
  if (s == "template_fallback" || s == "fallback") return GeneratorKind::kTemplateFallback;
  fail(ErrorKind::kConfig, "unknown generator: " + std::string(s));
}

inline std::string_view to_string(GeneratorKind g) { return g == GeneratorKind::kLlm ? "llm" : "template_fallback"; }

struct AugmentationBatch {
  int set_id = 0;
  GeneratorKind generator = GeneratorKind::kTemplateFallback;
  std::size_t requested = 0;
  std::vector<Candidate> candidates;
  std::size_t accepted_count = 0;

  std::size_t shortfall() const { return requested > accepted_count ? requested - accepted_count : 0; }

  std::vector<std::string> accepted_texts() const {
    std::vector<std::string> out;
    for (const auto& c : candidates) {
      if (c.accepted) out.push_back(c.text);
    }
    return out;
  }
};

namespace detail {

// Validates and appends one candidate; duplicates of earlier candidates
// are rejected.
inline void offer(AugmentationBatch& batch, std::unordered_set<std::string>& seen, std::string text,
                  const LexiconSet& set) {
  Candidate c;
  c.text = std::move(text);
  if (!seen.insert(c.text).second) {
    c.rejection_reason = "duplicate";
  } else if (const auto v = validate_lexicon_free(c.text, set); !v.accepted) {
    c.rejection_reason = v.reason;
  } else if (batch.accepted_count < batch.requested) {
    c.accepted = true;
    ++batch.accepted_count;
  } else {
    c.rejection_reason = "surplus";
  }
  batch.candidates.push_back(std::move(c));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Template grammar
// ---------------------------------------------------------------------------

/// Slot vocabularies and sentence frames. Frames reference slots as
/// {adjective}, {noun}, {verb} and {target}.
struct TemplateGrammar {
  std::vector<std::string> frames;
  std::vector<std::string> adjectives;
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;
  std::vector<std::string> targets;
};

inline TemplateGrammar default_template_grammar() {
  TemplateGrammar g;
  g.frames = {
      "you are a {adjective} {noun}",
      "{target} is a {adjective} {noun}",
      "shut your mouth, you {adjective} {noun}",
      "i will {verb} you, {noun}",
      "{target} deserves to get {verb}ed",
      "nobody cares what a {adjective} {noun} like you thinks",
      "go away, {noun}, before someone has to {verb} you",
      "what a {adjective} comment from {target}",
      "only a {noun} would write something this {adjective}",
      "{target} should be ashamed of being such a {noun}",
  };
  g.adjectives = {"pathetic",  "worthless", "disgusting", "miserable", "brainless", "filthy",
                  "useless",   "clueless",  "spineless",  "vile",      "repulsive", "ignorant"};
  g.nouns = {"imbecile", "dimwit", "buffoon", "fraud",   "coward", "parasite",
             "lowlife",  "creep",  "hypocrite", "nitwit", "jerk",   "scumbag"};
  g.verbs = {"crush", "bash", "wreck", "hunt", "smash", "kick"};
  g.targets = {"your mother", "this senator", "the mayor", "that reporter", "your boss", "the author"};
  return g;
}

namespace detail {

inline std::vector<std::string> filter_vocabulary(const std::vector<std::string>& words, const LexiconSet& set) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    if (validate_lexicon_free(w, set).accepted) out.push_back(w);
  }
  return out;
}

}  // namespace detail

struct GenerationConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 0;  // template candidates; 0 = 10 * n
  std::size_t batch_size = 50;   // sentences requested per LLM prompt
  std::size_t max_requests = 0;  // LLM prompts; 0 = 2 * ceil(n / batch_size) + 2
};

/// Fills frames from the grammar with vocabulary filtered against the set.
/// Stops at n accepted candidates or when the attempt budget runs out.
inline AugmentationBatch generate_from_templates(const LexiconSet& set, const GenerationConfig& config,
                                                 const TemplateGrammar& grammar = default_template_grammar()) {
  if (config.n < 1) fail(ErrorKind::kConfig, "augmentation needs n >= 1");
  AugmentationBatch batch;
  batch.set_id = set.set_id;
  batch.generator = GeneratorKind::kTemplateFallback;
  batch.requested = config.n;
  const std::array<std::pair<std::string_view, std::vector<std::string>>, 4> slots = {{
      {"{adjective}", detail::filter_vocabulary(grammar.adjectives, set)},
      {"{noun}", detail::filter_vocabulary(grammar.nouns, set)},
      {"{verb}", detail::filter_vocabulary(grammar.verbs, set)},
      {"{target}", detail::filter_vocabulary(grammar.targets, set)},
  }};
  std::vector<std::string> frames;
  for (const auto& f : grammar.frames) {
    bool fillable = true;
    for (const auto& [name, vocab] : slots) {
      if (f.find(name) != std::string::npos && vocab.empty()) fillable = false;
    }
    if (fillable) frames.push_back(f);
  }
  if (frames.empty()) return batch;

  Rng rng(derive_seed(config.seed, "augment-templates"));
  std::unordered_set<std::string> seen;
  const std::size_t budget = config.max_attempts > 0 ? config.max_attempts : 10 * config.n;
  for (std::size_t attempt = 0; attempt < budget && batch.accepted_count < config.n; ++attempt) {
    std::string text = frames[rng.index(frames.size())];
    for (const auto& [name, vocab] : slots) {
      for (auto pos = text.find(name); pos != std::string::npos; pos = text.find(name)) {
        text.replace(pos, name.size(), vocab[rng.index(vocab.size())]);
      }
    }
    detail::offer(batch, seen, std::move(text), set);
  }
  return batch;
}

/// Requests batch_size sentences per prompt until n are accepted or the
/// request budget runs out. Every response is validated.
inline AugmentationBatch generate_with_llm(const LexiconSet& set, const GenerationConfig& config, LlmClient& client,
                                           const PromptTemplate& prompt) {
  if (config.n < 1) fail(ErrorKind::kConfig, "augmentation needs n >= 1");
  if (config.batch_size < 1) fail(ErrorKind::kConfig, "augmentation batch_size must be >= 1");
  AugmentationBatch batch;
  batch.set_id = set.set_id;
  batch.generator = GeneratorKind::kLlm;
  batch.requested = config.n;
  std::string joined;
  for (const auto& w : set.words) {
    if (!joined.empty()) joined += ", ";
    joined += w;
  }
  const std::size_t rounds = (config.n + config.batch_size - 1) / config.batch_size;
  const std::size_t budget = config.max_requests > 0 ? config.max_requests : 2 * rounds + 2;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < budget && batch.accepted_count < config.n; ++r) {
    const std::size_t want = std::min(config.batch_size, config.n - batch.accepted_count);
    const std::string text = render(prompt, {{"n", std::to_string(want)}, {"words", joined}});
    std::vector<std::string> sentences;
    try {
      sentences = parse_sentences(client.complete(text));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kParse) throw;
      continue;
    }
    for (auto& s : sentences) detail::offer(batch, seen, std::move(s), set);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Merge
// ---------------------------------------------------------------------------

/// Appends accepted candidates as toxic samples with all concept labels 0,
/// tagged kAug. Ids that collide with existing ones get an "aug-" prefix.
inline Corpus merge(const Corpus& train, const AugmentationBatch& batch) {
  Corpus out = train;
  std::unordered_set<std::string> ids;
  for (const auto& s : train.samples) ids.insert(s.id);
  const std::size_t m = train.schema.size();
  std::size_t k = 0;
  for (const auto& c : batch.candidates) {
    if (!c.accepted) continue;
    Sample s;
    s.id = "gen-" + std::to_string(batch.set_id) + "-" + std::to_string(k++);
    while (ids.count(s.id) != 0) s.id = "aug-" + s.id;
    ids.insert(s.id);
    s.text = c.text;
    s.raw_toxicity = 1.0;
    s.raw_concepts.assign(m, 0.0);
    s.label = 1;
    s.concept_labels.assign(m, 0);
    s.origin = SplitTag::kAug;
    out.samples.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retrain and compare
// ---------------------------------------------------------------------------

struct BeforeAfterReport {
  BinaryMetrics before;
  BinaryMetrics after;
  double delta_f1 = 0.0;  // after - before, macro F1
  std::string test_hash;
  std::size_t train_size_before = 0;
  std::size_t train_size_after = 0;
  std::size_t accepted_count = 0;
  std::optional<AggregateReport> aggregate_after;  // signed MeanCG of the retrained model
};

struct RetrainSetup {
  TrainConfig target;
  TrainConfig concepts;
  Featurizer featurizer;
  ModelShape shape;
  AttributionOptions attribution;
  bool with_aggregate = true;
};

struct RetrainOutcome {
  BeforeAfterReport report;
  Model before;
  Model after;
};

/// Trains on train and on train + batch with identical settings and
/// evaluates both on the same test corpus.
inline RetrainOutcome retrain_and_compare(const Corpus& train, const Corpus& val, const AugmentationBatch& batch,
                                          const Corpus& test, const RetrainSetup& setup) {
  if (!(train.schema == test.schema) || !(train.schema == val.schema)) {
    fail(ErrorKind::kSchema, "train, val and test corpora must share a concept schema");
  }
  const Corpus merged = merge(train, batch);
  RetrainOutcome out;
  out.before = train_target(train, val, setup.target, setup.featurizer, setup.shape).model;
  out.after = train_target(merged, val, setup.target, setup.featurizer, setup.shape).model;
  auto& r = out.report;
  r.before = evaluate_target(out.before, test);
  r.after = evaluate_target(out.after, test);
  r.delta_f1 = r.after.macro_f1 - r.before.macro_f1;
  r.test_hash = corpus_hash(test);
  r.train_size_before = train.size();
  r.train_size_after = merged.size();
  r.accepted_count = batch.accepted_count;
  if (setup.with_aggregate) {
    const Model concept_model = derive_concept_model(out.after, train, val, setup.concepts).model;
    AttributionOptions options = setup.attribution;
    options.methods = {AttributionMethod::kCgIndependent};
    const auto run = attribute_corpus(out.after, concept_model, test, options);
    r.aggregate_after = mean_cg(run.for_method(AttributionMethod::kCgIndependent),
                                condition_slices(test, run.predictions), AggregateMode::kSigned,
                                test.schema.names());
  }
  return out;
}

/// Two rows: F1 before and after augmentation.
inline std::string before_after_f1_csv(const BeforeAfterReport& r) {
  return "stage,macro_f1,accuracy\n"
         "before_augmentation," + format_double(r.before.macro_f1) + "," + format_double(r.before.accuracy) + "\n"
         "after_augmentation," + format_double(r.after.macro_f1) + "," + format_double(r.after.accuracy) + "\n";
}

inline nlohmann::ordered_json to_json(const BeforeAfterReport& r) {
  nlohmann::ordered_json j;
  j["test_hash"] = r.test_hash;
  j["train_size_before"] = r.train_size_before;
  j["train_size_after"] = r.train_size_after;
  j["accepted_count"] = r.accepted_count;
  j["before"] = to_json(r.before);
  j["after"] = to_json(r.after);
  j["delta_f1"] = r.delta_f1;
  return j;
}

inline std::string batch_to_jsonl(const AugmentationBatch& batch) {
  std::string out;
  for (const auto& c : batch.candidates) {
    nlohmann::ordered_json j;
    j["set_id"] = batch.set_id;
    j["generator"] = std::string(to_string(batch.generator));
    j["text"] = c.text;
    j["accepted"] = c.accepted;
    j["rejection_reason"] = c.rejection_reason;
    j["label"] = 1;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline AugmentationBatch batch_from_jsonl(std::string_view text, std::size_t requested = 0) {
  AugmentationBatch batch;
  batch.requested = requested;
  bool first = true;
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (first) {
      batch.set_id = j.at("set_id").get<int>();
      batch.generator = generator_kind_from_string(j.at("generator").get<std::string>());
      first = false;
    }
    Candidate c;
    c.text = j.at("text").get<std::string>();
    c.accepted = j.at("accepted").get<bool>();
    c.rejection_reason = j.value("rejection_reason", "");
    batch.accepted_count += c.accepted ? 1 : 0;
    batch.candidates.push_back(std::move(c));
  }
  if (batch.requested == 0) batch.requested = batch.accepted_count;
  return batch;
}

}  // namespace toxcg

#endif  // TOXCG_AUGMENT_HPP_
