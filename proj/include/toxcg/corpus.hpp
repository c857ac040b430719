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

// Labeled toxicity corpora with per-concept annotations: loading (CSV and
// JSONL), binarization, seeded splitting, synthetic planted-concept corpora
// and class weights.

#ifndef TOXCG_CORPUS_HPP_
#define TOXCG_CORPUS_HPP_

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "toxcg/core.hpp"

namespace toxcg {

/// Ordered concept identifiers. Index j names concept c_j everywhere.
class ConceptSchema {
 public:
  ConceptSchema() = default;
  explicit ConceptSchema(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) fail(ErrorKind::kConfig, "concept schema needs at least one concept");
    std::unordered_set<std::string> seen;
    for (const auto& name : names_) {
      if (trim(name).empty()) fail(ErrorKind::kConfig, "concept names must be non-empty");
      if (!seen.insert(name).second) fail(ErrorKind::kConfig, "duplicate concept name: " + name);
    }
  }

  static ConceptSchema civil_comments() {
    return ConceptSchema({"obscene", "threat", "insult", "identity_attack", "sexual_explicit"});
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t j) const { return names_.at(j); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t j = 0; j < names_.size(); ++j) {
      if (names_[j] == name) return j;
    }
    return std::nullopt;
  }

  bool operator==(const ConceptSchema&) const = default;

 private:
  std::vector<std::string> names_;
};

enum class SplitTag { kTrain, kVal, kTest, kAug, kUnsplit };

inline std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
    case SplitTag::kAug: return "aug";
    case SplitTag::kUnsplit: return "unsplit";
  }
  return "unsplit";
}

inline SplitTag split_tag_from_string(std::string_view s) {
  if (s == "train") return SplitTag::kTrain;
  if (s == "val") return SplitTag::kVal;
  if (s == "test") return SplitTag::kTest;
  if (s == "aug") return SplitTag::kAug;
  if (s == "unsplit") return SplitTag::kUnsplit;
  fail(ErrorKind::kData, "unknown split tag: " + std::string(s));
}

struct Sample {
  std::string id;
  std::string text;
  double raw_toxicity = 0.0;
  std::vector<double> raw_concepts;
  int label = 0;
  std::vector<int> concept_labels;
  // Where the sample came from; kAug marks generated samples after a merge.
  SplitTag origin = SplitTag::kUnsplit;

  bool operator==(const Sample&) const = default;
};

struct Corpus {
  ConceptSchema schema;
  std::vector<Sample> samples;
  SplitTag split_tag = SplitTag::kUnsplit;
  bool binarized = false;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Checks the corpus invariants; throws kData on violation.
  void validate() const {
    std::unordered_set<std::string> ids;
    const std::size_t m = schema.size();
    for (const auto& s : samples) {
      if (!ids.insert(s.id).second) fail(ErrorKind::kData, "duplicate sample id: " + s.id);
      if (trim(s.text).empty()) fail(ErrorKind::kData, "empty text for sample " + s.id);
      if (s.raw_concepts.size() != m || s.concept_labels.size() != m) {
        fail(ErrorKind::kData, "concept arity mismatch for sample " + s.id);
      }
      if (s.label != 0 && s.label != 1) fail(ErrorKind::kData, "non-binary label for " + s.id);
    }
  }

  std::size_t count_label(int label) const {
    std::size_t n = 0;
    for (const auto& s : samples) n += (s.label == label) ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

enum class CorpusFormat { kCsv, kJsonl };

inline CorpusFormat corpus_format_from_string(std::string_view s) {
  if (s == "csv") return CorpusFormat::kCsv;
  if (s == "jsonl") return CorpusFormat::kJsonl;
  fail(ErrorKind::kConfig, "unknown corpus format: " + std::string(s));
}

namespace detail {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the record starts
};

// RFC-4180: quoted fields may contain commas, doubled quotes and newlines.
inline std::vector<CsvRecord> parse_csv(std::string_view text) {
  std::vector<CsvRecord> records;
  CsvRecord record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  record.line = 1;
  auto end_field = [&] {
    record.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.fields.size() == 1 && record.fields[0].empty();
    if (!blank) records.push_back(std::move(record));
    record = CsvRecord{};
    record.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // swallowed; \n ends the record
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) fail(ErrorKind::kData, "unterminated quoted field starting near line " + std::to_string(record.line));
  if (!field.empty() || !record.fields.empty()) end_record();
  return records;
}

inline double parse_score(std::string_view raw, const std::string& id, std::size_t line,
                          std::string_view column) {
  const std::string_view s = trim(raw);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    fail(ErrorKind::kData, "unparsable score in column '" + std::string(column) + "' for row id " +
                               id + " at line " + std::to_string(line));
  }
  return value;
}

inline double json_score(const nlohmann::json& value, const std::string& id, std::size_t line,
                         std::string_view key) {
  if (value.is_number()) {
    const double v = value.get<double>();
    if (std::isfinite(v)) return v;
  } else if (value.is_string()) {
    return parse_score(value.get<std::string>(), id, line, key);
  }
  fail(ErrorKind::kData, "unparsable score in key '" + std::string(key) + "' for row id " + id +
                             " at line " + std::to_string(line));
}

}  // namespace detail

inline Sample make_sample(std::string id, std::string text, double toxicity,
                          std::vector<double> concepts) {
  Sample s;
  s.id = std::move(id);
  s.text = std::move(text);
  s.raw_toxicity = toxicity;
  s.concept_labels.assign(concepts.size(), 0);
  s.raw_concepts = std::move(concepts);
  return s;
}

/// Reads a CSV (with header) or JSONL corpus. Raw scores are copied
/// verbatim; labels stay unset until binarize().
inline Corpus load_corpus(const std::filesystem::path& path, const ConceptSchema& schema,
                          CorpusFormat format) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kIo, "corpus file not found: " + path.string());
  const std::string content = read_file(path);
  Corpus corpus;
  corpus.schema = schema;
  std::unordered_set<std::string> ids;
  auto add = [&](Sample s, std::size_t line) {
    if (trim(s.text).empty()) {
      fail(ErrorKind::kData, "empty text for row id " + s.id + " at line " + std::to_string(line));
    }
    if (!ids.insert(s.id).second) {
      fail(ErrorKind::kData, "duplicate id " + s.id + " at line " + std::to_string(line));
    }
    corpus.samples.push_back(std::move(s));
  };

  if (format == CorpusFormat::kCsv) {
    auto records = detail::parse_csv(content);
    if (records.empty()) fail(ErrorKind::kSchema, "CSV has no header row: " + path.string());
    const auto& header = records.front().fields;
    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (trim(header[c]) == name) return c;
      }
      return std::nullopt;
    };
    const auto id_col = column("id");
    const auto text_col = column("text");
    const auto tox_col = column("toxicity");
    if (!text_col) fail(ErrorKind::kSchema, "missing column: text");
    if (!tox_col) fail(ErrorKind::kSchema, "missing column: toxicity");
    std::vector<std::size_t> concept_cols;
    for (const auto& name : schema.names()) {
      const auto col = column(name);
      if (!col) fail(ErrorKind::kSchema, "missing concept column: " + name);
      concept_cols.push_back(*col);
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
      const auto& rec = records[r];
      const std::string id = id_col && *id_col < rec.fields.size() && !trim(rec.fields[*id_col]).empty()
                                 ? std::string(trim(rec.fields[*id_col]))
                                 : "row-" + std::to_string(r);
      if (rec.fields.size() != header.size()) {
        fail(ErrorKind::kData, "row id " + id + " at line " + std::to_string(rec.line) + " has " +
                                   std::to_string(rec.fields.size()) + " fields, header has " +
                                   std::to_string(header.size()));
      }
      std::vector<double> concepts;
      for (std::size_t j = 0; j < concept_cols.size(); ++j) {
        concepts.push_back(detail::parse_score(rec.fields[concept_cols[j]], id, rec.line, schema.name(j)));
      }
      add(make_sample(id, rec.fields[*text_col],
                      detail::parse_score(rec.fields[*tox_col], id, rec.line, "toxicity"),
                      std::move(concepts)),
          rec.line);
    }
    return corpus;
  }

  const auto lines = split_lines(content);
  std::size_t row = 0;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    if (trim(lines[l]).empty()) continue;
    ++row;
    const std::size_t line_no = l + 1;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(lines[l]);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::kData, "invalid JSON at line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) fail(ErrorKind::kData, "line " + std::to_string(line_no) + " is not an object");
    std::string id = "row-" + std::to_string(row);
    if (obj.contains("id") && !obj["id"].is_null()) {
      id = obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump();
    }
    if (!obj.contains("text") || !obj["text"].is_string()) fail(ErrorKind::kSchema, "missing column: text");
    if (!obj.contains("toxicity")) fail(ErrorKind::kSchema, "missing column: toxicity");
    std::vector<double> concepts;
    for (const auto& name : schema.names()) {
      if (!obj.contains(name)) fail(ErrorKind::kSchema, "missing concept column: " + name);
      concepts.push_back(detail::json_score(obj[name], id, line_no, name));
    }
    add(make_sample(id, obj["text"].get<std::string>(),
                    detail::json_score(obj["toxicity"], id, line_no, "toxicity"), std::move(concepts)),
        line_no);
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Binarization, splitting, weights
// ---------------------------------------------------------------------------

/// label = 1 iff raw_toxicity > tox_threshold; concept label j = 1 iff
/// raw_concepts[j] > concept_threshold. Exactly-at-threshold is negative.
inline Corpus binarize(Corpus corpus, double tox_threshold = 0.5, double concept_threshold = 0.0) {
  for (auto& s : corpus.samples) {
    s.label = s.raw_toxicity > tox_threshold ? 1 : 0;
    s.concept_labels.resize(s.raw_concepts.size());
    for (std::size_t j = 0; j < s.raw_concepts.size(); ++j) {
      s.concept_labels[j] = s.raw_concepts[j] > concept_threshold ? 1 : 0;
    }
  }
  corpus.binarized = true;
  return corpus;
}

struct SplitSpec {
  double train_fraction = 0.72;
  double val_fraction = 0.08;
  double test_fraction = 0.20;
  bool balance_classes = false;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train_fraction, val_fraction, test_fraction}) {
      if (!(f > 0.0 && f < 1.0)) fail(ErrorKind::kConfig, "split fractions must lie in (0,1)");
    }
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
      fail(ErrorKind::kConfig, "split fractions must sum to 1");
    }
  }
};

struct SplitResult {
  Corpus train;
  Corpus val;
  Corpus test;
};

/// Seeded partition into train/val/test. Sizes are round(fraction * N) for
/// train and val; test takes the remainder. With balance_classes the train
/// partition draws equal numbers of each class from the shuffled pool, and
/// the majority-class surplus flows to val/test, so the three parts still
/// cover the input.
inline SplitResult split(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  if (corpus.split_tag != SplitTag::kUnsplit) fail(ErrorKind::kConfig, "split expects an unsplit corpus");
  const std::size_t n = corpus.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    fail(ErrorKind::kSizing, "corpus of " + std::to_string(n) + " samples is too small for the split");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> rest;
  if (spec.balance_classes) {
    if (!corpus.binarized) fail(ErrorKind::kConfig, "balanced split needs a binarized corpus");
    const std::size_t per_class = n_train / 2;
    std::array<std::size_t, 2> taken{0, 0};
    for (std::size_t idx : order) {
      const int y = corpus.samples[idx].label;
      if (taken[y] < per_class) {
        ++taken[y];
        train_idx.push_back(idx);
      } else {
        rest.push_back(idx);
      }
    }
    if (taken[0] < per_class || taken[1] < per_class) {
      fail(ErrorKind::kSizing, "balanced train split needs " + std::to_string(per_class) +
                                   " samples per class; have " + std::to_string(taken[0]) +
                                   " negative and " + std::to_string(taken[1]) + " positive");
    }
    // Keep train in shuffled order (the loop already preserved it).
  } else {
    train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    rest.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  }
  if (rest.size() <= n_val) fail(ErrorKind::kSizing, "no samples left for the test partition");

  auto build = [&](auto first, auto last, SplitTag tag) {
    Corpus part;
    part.schema = corpus.schema;
    part.split_tag = tag;
    part.binarized = corpus.binarized;
    for (auto it = first; it != last; ++it) part.samples.push_back(corpus.samples[*it]);
    return part;
  };
  SplitResult result;
  result.train = build(train_idx.begin(), train_idx.end(), SplitTag::kTrain);
  result.val = build(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val), SplitTag::kVal);
  result.test = build(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end(), SplitTag::kTest);
  return result;
}

/// weight_c = N / (2 * count_c); multiplies the per-sample loss.
inline std::array<double, 2> class_weights(const Corpus& corpus) {
  const std::size_t positives = corpus.count_label(1);
  const std::size_t negatives = corpus.size() - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorKind::kDegenerate, "class weights need both classes; counts (" + std::to_string(negatives) +
                                     ", " + std::to_string(positives) + ")");
  }
  const double n = static_cast<double>(corpus.size());
  return {n / (2.0 * static_cast<double>(negatives)), n / (2.0 * static_cast<double>(positives))};
}

// ---------------------------------------------------------------------------
// Synthetic planted-concept corpus
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::vector<std::string> concept_names;
  std::vector<std::vector<std::string>> triggers;  // one vocabulary per concept
  std::vector<std::string> filler;
  std::size_t samples = 1000;
  double noise_rate = 0.0;
  double concept_rate = 0.2;  // per-concept probability of planting a trigger
  std::size_t min_length = 6;
  std::size_t max_length = 12;

  void validate() const {
    if (concept_names.empty()) fail(ErrorKind::kConfig, "synth: need at least one concept");
    if (triggers.size() != concept_names.size()) {
      fail(ErrorKind::kConfig, "synth: one trigger vocabulary per concept required");
    }
    for (std::size_t j = 0; j < triggers.size(); ++j) {
      if (triggers[j].empty()) fail(ErrorKind::kConfig, "synth: empty trigger vocabulary for " + concept_names[j]);
    }
    if (filler.empty()) fail(ErrorKind::kConfig, "synth: empty filler vocabulary");
    if (samples == 0) fail(ErrorKind::kConfig, "synth: sample count must be positive");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail(ErrorKind::kConfig, "synth: noise_rate outside [0,1]");
    if (!(concept_rate >= 0.0 && concept_rate <= 1.0)) fail(ErrorKind::kConfig, "synth: concept_rate outside [0,1]");
    if (min_length == 0 || max_length < min_length) fail(ErrorKind::kConfig, "synth: bad length range");
    if (max_length < concept_names.size() + 1) fail(ErrorKind::kConfig, "synth: max_length too small");
    std::unordered_set<std::string> trigger_set;
    for (const auto& vocab : triggers) {
      for (const auto& w : vocab) {
        if (tokenize(w).size() != 1) fail(ErrorKind::kConfig, "synth: trigger must be one token: " + w);
        if (!trigger_set.insert(ascii_lower(w)).second) {
          fail(ErrorKind::kConfig, "synth: trigger shared between concepts: " + w);
        }
      }
    }
    for (const auto& w : filler) {
      if (trigger_set.count(ascii_lower(w))) fail(ErrorKind::kConfig, "synth: filler word is a trigger: " + w);
    }
  }
};

/// Three mild planted concepts with small vocabularies; used by the
/// acceptance runs and as the `synth` default.
inline SynthConfig default_synth_config() {
  SynthConfig c;
  c.concept_names = {"obscene", "threat", "insult"};
  c.triggers = {
      {"crap", "damn", "bloody", "freaking", "screwed", "hell"},
      {"destroy", "hurt", "crush", "smash", "burn", "punish"},
      {"idiot", "moron", "stupid", "loser", "clown", "fool"},
  };
  c.filler = {"the",    "a",      "weather", "today",  "city",   "council", "meeting", "was",
              "about",  "new",    "park",    "plan",   "people", "really",  "think",   "this",
              "policy", "seems",  "long",    "road",   "project", "budget", "school",  "local",
              "news",   "report", "game",    "team",   "played", "well",    "yesterday", "afternoon",
              "market", "prices", "went",    "up",     "again",  "article", "writer",  "says",
              "comment", "section", "should", "read",  "before", "voting",  "next",    "week"};
  c.samples = 4000;
  c.noise_rate = 0.05;
  c.concept_rate = 0.25;
  return c;
}

struct SynthesisResult {
  Corpus corpus;
  std::size_t flipped = 0;  // samples whose label disagrees with OR(concepts)
};

/// Planted-concept corpus: concept j is labeled 1 iff one of its trigger
/// words occurs; label = OR(concept labels), flipped with noise_rate.
inline SynthesisResult synthesize(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t m = config.concept_names.size();
  std::vector<std::unordered_set<std::string>> trigger_sets(m);
  for (std::size_t j = 0; j < m; ++j) {
    for (const auto& w : config.triggers[j]) trigger_sets[j].insert(ascii_lower(w));
  }

  Rng rng(seed);
  SynthesisResult result;
  result.corpus.schema = ConceptSchema(config.concept_names);
  result.corpus.binarized = true;
  const std::size_t width = std::to_string(config.samples).size();
  for (std::size_t i = 0; i < config.samples; ++i) {
    const std::size_t length = config.min_length + rng.index(config.max_length - config.min_length + 1);
    std::vector<std::string> words;
    words.reserve(length);
    for (std::size_t k = 0; k < length; ++k) words.push_back(config.filler[rng.index(config.filler.size())]);
    std::vector<std::size_t> slots(length);
    for (std::size_t k = 0; k < length; ++k) slots[k] = k;
    rng.shuffle(slots);
    std::size_t next_slot = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (rng.bernoulli(config.concept_rate)) {
        words[slots[next_slot++]] = config.triggers[j][rng.index(config.triggers[j].size())];
      }
    }
    std::string text;
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (k) text.push_back(' ');
      text += words[k];
    }

    Sample s;
    std::string index = std::to_string(i);
    s.id = "syn-" + std::string(width - index.size(), '0') + index;
    s.text = std::move(text);
    s.concept_labels.assign(m, 0);
    for (const auto& token : tokenize(s.text)) {
      for (std::size_t j = 0; j < m; ++j) {
        if (trigger_sets[j].count(token)) s.concept_labels[j] = 1;
      }
    }
    int any = 0;
    for (int c : s.concept_labels) any |= c;
    const bool flip = rng.bernoulli(config.noise_rate);
    s.label = flip ? 1 - any : any;
    result.flipped += flip ? 1 : 0;
    s.raw_toxicity = s.label ? 1.0 : 0.0;
    s.raw_concepts.assign(s.concept_labels.begin(), s.concept_labels.end());
    result.corpus.samples.push_back(std::move(s));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// JSONL with raw scores, binarized labels and origin tags. The flat
/// id/text/toxicity/<concept> keys keep the file loadable by load_corpus.
inline std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.samples) {
    nlohmann::ordered_json obj;
    obj["id"] = s.id;
    obj["text"] = s.text;
    obj["toxicity"] = s.raw_toxicity;
    for (std::size_t j = 0; j < corpus.schema.size(); ++j) obj[corpus.schema.name(j)] = s.raw_concepts[j];
    if (corpus.binarized) {
      obj["label"] = s.label;
      obj["concept_labels"] = s.concept_labels;
    }
    obj["origin"] = std::string(to_string(s.origin));
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  write_file(path, corpus_to_jsonl(corpus));
}

/// Reads a corpus written by save_corpus, restoring labels and origins.
inline Corpus read_corpus(const std::filesystem::path& path, const ConceptSchema& schema,
                          SplitTag tag = SplitTag::kUnsplit) {
  Corpus corpus = load_corpus(path, schema, CorpusFormat::kJsonl);
  corpus.split_tag = tag;
  const auto lines = split_lines(read_file(path));
  std::size_t k = 0;
  bool all_labeled = !corpus.samples.empty();
  for (const auto& line : lines) {
    if (trim(line).empty()) continue;
    const auto obj = nlohmann::json::parse(line);
    Sample& s = corpus.samples.at(k++);
    if (obj.contains("label") && obj.contains("concept_labels")) {
      s.label = obj["label"].get<int>();
      s.concept_labels = obj["concept_labels"].get<std::vector<int>>();
    } else {
      all_labeled = false;
    }
    if (obj.contains("origin")) s.origin = split_tag_from_string(obj["origin"].get<std::string>());
  }
  corpus.binarized = all_labeled;
  corpus.validate();
  return corpus;
}

/// Content hash of a corpus, used to prove two evaluations saw the same data.
inline std::string corpus_hash(const Corpus& corpus) { return sha256_hex(corpus_to_jsonl(corpus)); }

}  // namespace toxcg

#endif  // TOXCG_CORPUS_HPP_
