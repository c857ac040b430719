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

// Run configuration and the stage runners behind the command-line tool.
// Every stage reads its inputs from upstream stage directories under the
// output directory and writes its own directory plus a manifest.

#ifndef TOXCG_PIPELINE_HPP_
#define TOXCG_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "toxcg/attribution.hpp"
#include "toxcg/augment.hpp"
#include "toxcg/core.hpp"
#include "toxcg/corpus.hpp"
#include "toxcg/lexicon.hpp"
#include "toxcg/llmclient.hpp"
#include "toxcg/metrics.hpp"
#include "toxcg/nnet.hpp"
#include "toxcg/report.hpp"

namespace toxcg {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Defaults are sized for the synthetic corpus on one CPU core.
struct RunConfig {
  std::uint64_t seed = 7;

  struct Paths {
    std::string corpus;  // empty: the corpus written by `synth`
    std::string corpus_format = "auto";
    std::string output_dir = "out";
    std::string prompts_dir;  // empty: built-in prompt bodies
    std::string stopwords;    // empty: built-in English list
  } paths;

  std::vector<std::string> concepts{"obscene", "threat", "insult"};
  double toxicity_threshold = 0.5;
  double concept_threshold = 0.0;
  SplitSpec split;

  Featurizer features{{1}, 4096, true};
  ModelShape model{128, 128};
  TrainConfig target_training{30, 64, 2e-5, 20000.0, 5, 0, false, true};
  TrainConfig concept_training{300, 64, 2e-5, 100000.0, 5, 0, true, false};

  struct Attribution {
    std::vector<std::string> methods{"cg_independent", "cg_joint", "cav"};
    std::string output = "predicted";
    double svd_tolerance = 1e-10;
    double degeneracy_eps = 1e-12;
  } attribution;

  struct Lexicon {
    std::string extractor = "gradient_fallback";
    std::string grouper = "cluster_fallback";
    std::size_t target_sets = 8;
    std::size_t keep_top = 5;
    std::size_t top_k = 3;
    double relative_threshold = 0.25;
  } lexicon;

  struct Augmentation {
    std::string generator = "template_fallback";
    std::size_t n = 1000;
    int set_id = 1;
    std::size_t batch_size = 50;
    std::size_t max_attempts = 0;
  } augmentation;

  struct Kfold {
    std::size_t k = 5;
    bool augment = true;
    double val_fraction = 0.1;
  } kfold;

  struct Histogram {
    std::size_t bins = 30;
  } histogram;

  struct Synth {
    std::size_t samples = 4000;
    double noise_rate = 0.05;
    double concept_rate = 0.25;
  } synth;

  ClientConfig llm;
};

inline nlohmann::ordered_json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"lr_multiplier", t.lr_multiplier},
          {"patience", t.patience},
          {"class_weighted", t.class_weighted}};
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["paths"] = {{"corpus", c.paths.corpus},
                {"corpus_format", c.paths.corpus_format},
                {"output_dir", c.paths.output_dir},
                {"prompts_dir", c.paths.prompts_dir},
                {"stopwords", c.paths.stopwords}};
  j["concepts"] = c.concepts;
  j["thresholds"] = {{"toxicity", c.toxicity_threshold}, {"concept", c.concept_threshold}};
  j["split"] = {{"train", c.split.train_fraction},
                {"val", c.split.val_fraction},
                {"test", c.split.test_fraction},
                {"balance_classes", c.split.balance_classes}};
  j["features"] = {{"ngram_orders", c.features.ngram_orders},
                   {"hash_dim", c.features.hash_dim},
                   {"lowercase", c.features.lowercase}};
  j["model"] = {{"embed_dim", c.model.embed_dim}, {"hidden_dim", c.model.hidden_dim}};
  j["target_training"] = to_json(c.target_training);
  j["concept_training"] = to_json(c.concept_training);
  j["attribution"] = {{"methods", c.attribution.methods},
                      {"output", c.attribution.output},
                      {"svd_tolerance", c.attribution.svd_tolerance},
                      {"degeneracy_eps", c.attribution.degeneracy_eps}};
  j["lexicon"] = {{"extractor", c.lexicon.extractor},
                  {"grouper", c.lexicon.grouper},
                  {"target_sets", c.lexicon.target_sets},
                  {"keep_top", c.lexicon.keep_top},
                  {"top_k", c.lexicon.top_k},
                  {"relative_threshold", c.lexicon.relative_threshold}};
  j["augmentation"] = {{"generator", c.augmentation.generator},
                       {"n", c.augmentation.n},
                       {"set_id", c.augmentation.set_id},
                       {"batch_size", c.augmentation.batch_size},
                       {"max_attempts", c.augmentation.max_attempts}};
  j["kfold"] = {{"k", c.kfold.k}, {"augment", c.kfold.augment}, {"val_fraction", c.kfold.val_fraction}};
  j["histogram"] = {{"bins", c.histogram.bins}};
  j["synth"] = {{"samples", c.synth.samples},
                {"noise_rate", c.synth.noise_rate},
                {"concept_rate", c.synth.concept_rate}};
  j["llm"] = {{"mode", std::string(to_string(c.llm.mode))},
              {"endpoint", c.llm.endpoint},
              {"model", c.llm.model},
              {"timeout_seconds", c.llm.timeout_seconds},
              {"max_retries", c.llm.max_retries},
              {"backoff_seconds", c.llm.backoff_seconds},
              {"max_concurrent", c.llm.max_concurrent},
              {"fixture_path", c.llm.fixture_path},
              {"record_path", c.llm.record_path},
              {"api_key_env", c.llm.api_key_env}};
  return j;
}

namespace detail {

// Lists keys of `given` that the default layout does not have.
inline void unknown_keys(const nlohmann::ordered_json& given, const nlohmann::ordered_json& layout,
                         const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!layout.contains(it.key())) {
      out.push_back("unknown config key: " + key);
    } else if (it.value().is_object() && layout.at(it.key()).is_object()) {
      unknown_keys(it.value(), layout.at(it.key()), key, out);
    }
  }
}

template <typename T>
void read_field(const nlohmann::ordered_json& j, const char* key, T& target, const std::string& path,
                std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.push_back("config key " + path + key + " has the wrong type");
  }
}

inline void read_training(const nlohmann::ordered_json& j, TrainConfig& t, const std::string& path,
                          std::vector<std::string>& errors) {
  read_field(j, "epochs", t.epochs, path, errors);
  read_field(j, "batch_size", t.batch_size, path, errors);
  read_field(j, "learning_rate", t.learning_rate, path, errors);
  read_field(j, "lr_multiplier", t.lr_multiplier, path, errors);
  read_field(j, "patience", t.patience, path, errors);
  read_field(j, "class_weighted", t.class_weighted, path, errors);
}

inline std::vector<std::string> training_violations(const TrainConfig& t, const std::string& name) {
  std::vector<std::string> v;
  if (t.epochs < 1) v.push_back(name + ".epochs must be >= 1");
  if (t.batch_size < 1) v.push_back(name + ".batch_size must be >= 1");
  if (!(t.learning_rate >= 0.0) || !(t.lr_multiplier >= 0.0)) v.push_back(name + " learning rate must be >= 0");
  if (t.patience < 1) v.push_back(name + ".patience must be >= 1");
  return v;
}

}  // namespace detail

/// Every violation found, not just the first.
inline std::vector<std::string> config_violations(const RunConfig& c) {
  std::vector<std::string> v;
  auto add = [&](std::vector<std::string> more) { v.insert(v.end(), more.begin(), more.end()); };
  if (c.concepts.empty()) v.push_back("concepts must not be empty");
  try {
    ConceptSchema{c.concepts};
  } catch (const Error& e) {
    v.push_back(e.what());
  }
  for (double f : {c.split.train_fraction, c.split.val_fraction, c.split.test_fraction}) {
    if (!(f > 0.0 && f < 1.0)) {
      v.push_back("split fractions must lie in (0,1)");
      break;
    }
  }
  if (std::abs(c.split.train_fraction + c.split.val_fraction + c.split.test_fraction - 1.0) > 1e-9) {
    v.push_back("split fractions must sum to 1");
  }
  try {
    c.features.validate();
  } catch (const Error& e) {
    v.push_back(std::string("features: ") + e.what());
  }
  if (c.model.embed_dim < 1 || c.model.hidden_dim < 1) v.push_back("model dimensions must be >= 1");
  add(detail::training_violations(c.target_training, "target_training"));
  add(detail::training_violations(c.concept_training, "concept_training"));
  if (c.attribution.methods.empty()) v.push_back("attribution.methods must not be empty");
  for (const auto& m : c.attribution.methods) {
    if (m != "cg_independent" && m != "cg_joint" && m != "cav") v.push_back("unknown attribution method: " + m);
  }
  if (c.attribution.output != "predicted" && c.attribution.output != "toxic") {
    v.push_back("attribution.output must be predicted or toxic");
  }
  if (!(c.attribution.svd_tolerance >= 0.0)) v.push_back("attribution.svd_tolerance must be >= 0");
  if (c.lexicon.extractor != "llm" && c.lexicon.extractor != "gradient_fallback") {
    v.push_back("lexicon.extractor must be llm or gradient_fallback");
  }
  if (c.lexicon.grouper != "llm" && c.lexicon.grouper != "cluster_fallback") {
    v.push_back("lexicon.grouper must be llm or cluster_fallback");
  }
  if (c.lexicon.target_sets < 1 || c.lexicon.keep_top < 1 || c.lexicon.top_k < 1) {
    v.push_back("lexicon.target_sets, keep_top and top_k must be >= 1");
  }
  if (c.augmentation.generator != "llm" && c.augmentation.generator != "template_fallback") {
    v.push_back("augmentation.generator must be llm or template_fallback");
  }
  if (c.augmentation.n < 1) v.push_back("augmentation.n must be >= 1");
  if (c.augmentation.batch_size < 1) v.push_back("augmentation.batch_size must be >= 1");
  if (c.kfold.k < 2) v.push_back("kfold.k must be >= 2");
  if (!(c.kfold.val_fraction > 0.0 && c.kfold.val_fraction < 1.0)) v.push_back("kfold.val_fraction must lie in (0,1)");
  if (c.histogram.bins < 1) v.push_back("histogram.bins must be >= 1");
  if (!(c.synth.noise_rate >= 0.0 && c.synth.noise_rate <= 1.0)) v.push_back("synth.noise_rate must lie in [0,1]");
  if (!(c.synth.concept_rate >= 0.0 && c.synth.concept_rate <= 1.0)) {
    v.push_back("synth.concept_rate must lie in [0,1]");
  }
  if (c.synth.samples < 1) v.push_back("synth.samples must be >= 1");
  if (c.paths.corpus.empty() && c.concepts != default_synth_config().concept_names) {
    v.push_back("with no paths.corpus the synthetic corpus is used, whose concepts are obscene, threat, insult");
  }
  if (!c.paths.corpus.empty() && !std::filesystem::exists(c.paths.corpus)) {
    v.push_back("paths.corpus does not exist: " + c.paths.corpus);
  }
  if (!c.paths.prompts_dir.empty() && !std::filesystem::is_directory(c.paths.prompts_dir)) {
    v.push_back("paths.prompts_dir is not a directory: " + c.paths.prompts_dir);
  }
  if (!c.paths.stopwords.empty() && !std::filesystem::exists(c.paths.stopwords)) {
    v.push_back("paths.stopwords does not exist: " + c.paths.stopwords);
  }
  const bool uses_llm = c.lexicon.extractor == "llm" || c.lexicon.grouper == "llm" || c.augmentation.generator == "llm";
  if (uses_llm) {
    const auto llm = effective_client_config(c.llm);
    for (auto& s : llm.violations()) v.push_back(std::move(s));
    if (llm.mode == ClientMode::kOffline && !llm.fixture_path.empty() && !std::filesystem::exists(llm.fixture_path)) {
      v.push_back("llm.fixture_path does not exist: " + llm.fixture_path);
    }
  }
  return v;
}

/// Parses a JSON config over the defaults. Unknown keys, wrong types and
/// invalid values are all reported together as one config error.
inline RunConfig config_from_json(const nlohmann::ordered_json& j, bool validate = true) {
  RunConfig c;
  std::vector<std::string> errors;
  if (!j.is_object()) fail(ErrorKind::kConfig, "config must be a JSON object");
  detail::unknown_keys(j, to_json(c), "", errors);
  const nlohmann::ordered_json empty = nlohmann::ordered_json::object();
  auto section = [&](const char* key) -> const nlohmann::ordered_json& {
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_object()) {
      errors.push_back(std::string("config key ") + key + " must be an object");
      return empty;
    }
    return j.at(key);
  };
  detail::read_field(j, "seed", c.seed, "", errors);
  detail::read_field(j, "concepts", c.concepts, "", errors);
  const auto& paths = section("paths");
  detail::read_field(paths, "corpus", c.paths.corpus, "paths.", errors);
  detail::read_field(paths, "corpus_format", c.paths.corpus_format, "paths.", errors);
  detail::read_field(paths, "output_dir", c.paths.output_dir, "paths.", errors);
  detail::read_field(paths, "prompts_dir", c.paths.prompts_dir, "paths.", errors);
  detail::read_field(paths, "stopwords", c.paths.stopwords, "paths.", errors);
  const auto& thresholds = section("thresholds");
  detail::read_field(thresholds, "toxicity", c.toxicity_threshold, "thresholds.", errors);
  detail::read_field(thresholds, "concept", c.concept_threshold, "thresholds.", errors);
  const auto& split = section("split");
  detail::read_field(split, "train", c.split.train_fraction, "split.", errors);
  detail::read_field(split, "val", c.split.val_fraction, "split.", errors);
  detail::read_field(split, "test", c.split.test_fraction, "split.", errors);
  detail::read_field(split, "balance_classes", c.split.balance_classes, "split.", errors);
  const auto& features = section("features");
  detail::read_field(features, "ngram_orders", c.features.ngram_orders, "features.", errors);
  detail::read_field(features, "hash_dim", c.features.hash_dim, "features.", errors);
  detail::read_field(features, "lowercase", c.features.lowercase, "features.", errors);
  const auto& model = section("model");
  detail::read_field(model, "embed_dim", c.model.embed_dim, "model.", errors);
  detail::read_field(model, "hidden_dim", c.model.hidden_dim, "model.", errors);
  detail::read_training(section("target_training"), c.target_training, "target_training.", errors);
  detail::read_training(section("concept_training"), c.concept_training, "concept_training.", errors);
  const auto& attribution = section("attribution");
  detail::read_field(attribution, "methods", c.attribution.methods, "attribution.", errors);
  detail::read_field(attribution, "output", c.attribution.output, "attribution.", errors);
  detail::read_field(attribution, "svd_tolerance", c.attribution.svd_tolerance, "attribution.", errors);
  detail::read_field(attribution, "degeneracy_eps", c.attribution.degeneracy_eps, "attribution.", errors);
  const auto& lexicon = section("lexicon");
  detail::read_field(lexicon, "extractor", c.lexicon.extractor, "lexicon.", errors);
  detail::read_field(lexicon, "grouper", c.lexicon.grouper, "lexicon.", errors);
  detail::read_field(lexicon, "target_sets", c.lexicon.target_sets, "lexicon.", errors);
  detail::read_field(lexicon, "keep_top", c.lexicon.keep_top, "lexicon.", errors);
  detail::read_field(lexicon, "top_k", c.lexicon.top_k, "lexicon.", errors);
  detail::read_field(lexicon, "relative_threshold", c.lexicon.relative_threshold, "lexicon.", errors);
  const auto& augmentation = section("augmentation");
  detail::read_field(augmentation, "generator", c.augmentation.generator, "augmentation.", errors);
  detail::read_field(augmentation, "n", c.augmentation.n, "augmentation.", errors);
  detail::read_field(augmentation, "set_id", c.augmentation.set_id, "augmentation.", errors);
  detail::read_field(augmentation, "batch_size", c.augmentation.batch_size, "augmentation.", errors);
  detail::read_field(augmentation, "max_attempts", c.augmentation.max_attempts, "augmentation.", errors);
  const auto& kfold = section("kfold");
  detail::read_field(kfold, "k", c.kfold.k, "kfold.", errors);
  detail::read_field(kfold, "augment", c.kfold.augment, "kfold.", errors);
  detail::read_field(kfold, "val_fraction", c.kfold.val_fraction, "kfold.", errors);
  detail::read_field(section("histogram"), "bins", c.histogram.bins, "histogram.", errors);
  const auto& synth = section("synth");
  detail::read_field(synth, "samples", c.synth.samples, "synth.", errors);
  detail::read_field(synth, "noise_rate", c.synth.noise_rate, "synth.", errors);
  detail::read_field(synth, "concept_rate", c.synth.concept_rate, "synth.", errors);
  const auto& llm = section("llm");
  std::string mode = std::string(to_string(c.llm.mode));
  detail::read_field(llm, "mode", mode, "llm.", errors);
  if (mode == "live" || mode == "offline") {
    c.llm.mode = client_mode_from_string(mode);
  } else {
    errors.push_back("llm.mode must be live or offline");
  }
  detail::read_field(llm, "endpoint", c.llm.endpoint, "llm.", errors);
  detail::read_field(llm, "model", c.llm.model, "llm.", errors);
  detail::read_field(llm, "timeout_seconds", c.llm.timeout_seconds, "llm.", errors);
  detail::read_field(llm, "max_retries", c.llm.max_retries, "llm.", errors);
  detail::read_field(llm, "backoff_seconds", c.llm.backoff_seconds, "llm.", errors);
  detail::read_field(llm, "max_concurrent", c.llm.max_concurrent, "llm.", errors);
  detail::read_field(llm, "fixture_path", c.llm.fixture_path, "llm.", errors);
  detail::read_field(llm, "record_path", c.llm.record_path, "llm.", errors);
  detail::read_field(llm, "api_key_env", c.llm.api_key_env, "llm.", errors);
  c.llm.seed = derive_seed(c.seed, "llm");
  c.split.seed = derive_seed(c.seed, "split");
  c.target_training.seed = derive_seed(c.seed, "train-target");
  c.concept_training.seed = derive_seed(c.seed, "train-concepts");
  c.concept_training.freeze_encoder = true;
  if (validate) {
    for (auto& s : config_violations(c)) errors.push_back(std::move(s));
  }
  if (!errors.empty()) {
    std::string message = "invalid config (" + std::to_string(errors.size()) + " problem" +
                          (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) message += "\n  - " + e;
    fail(ErrorKind::kConfig, message);
  }
  return c;
}

/// Applies "a.b.c=value" to a JSON object. The value is parsed as JSON when
/// it parses, and taken as a string otherwise.
inline void apply_override(nlohmann::ordered_json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(ErrorKind::kConfig, "override must look like key=value: " + std::string(assignment));
  }
  const std::string key(trim(assignment.substr(0, eq)));
  const std::string raw(assignment.substr(eq + 1));
  nlohmann::ordered_json value;
  try {
    value = nlohmann::ordered_json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::ordered_json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorKind::kConfig, "malformed override key: " + key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = nlohmann::ordered_json::object();
    node = &(*node)[part];
    if (!node->is_object()) fail(ErrorKind::kConfig, "override key " + key + " descends into a non-object");
    start = dot + 1;
  }
}

/// Reads a config file (or defaults when path is empty) and applies
/// overrides. Relative paths stay relative to the working directory.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::kConfig, "config file not found: " + path);
    try {
      j = nlohmann::ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kConfig, "config " + path + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

using LogSink = std::function<void(const std::string&)>;

inline void stderr_log(const std::string& line) { std::clog << "[toxcg] " << line << '\n'; }

/// Runs individual stages against one output directory.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, LogSink log = stderr_log,
                    std::shared_ptr<Transport> transport = nullptr)
      : c_(std::move(config)), out_(c_.paths.output_dir), log_(std::move(log)), transport_(std::move(transport)) {}

  const RunConfig& config() const { return c_; }
  const std::filesystem::path& output_dir() const { return out_; }

  static const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"synth",  "prepare", "train-target", "train-concepts", "eval",
                                                "attribute", "curate", "augment",      "kfold"};
    return names;
  }

  void run(const std::string& stage) {
    if (stage == "synth") return synth();
    if (stage == "prepare") return prepare();
    if (stage == "train-target") return train_target_stage();
    if (stage == "train-concepts") return train_concepts_stage();
    if (stage == "eval") return eval();
    if (stage == "attribute") return attribute();
    if (stage == "curate") return curate();
    if (stage == "augment") return augment();
    if (stage == "kfold") return kfold_stage();
    fail(ErrorKind::kConfig, "unknown stage: " + stage);
  }

  /// synth (when no corpus is configured), then every stage in order.
  void run_all() {
    for (const auto& s : stage_names()) {
      if (s == "synth" && !c_.paths.corpus.empty()) continue;
      run(s);
    }
  }

  // -- synth ----------------------------------------------------------------

  void synth() {
    SynthConfig sc = default_synth_config();
    sc.samples = c_.synth.samples;
    sc.noise_rate = c_.synth.noise_rate;
    sc.concept_rate = c_.synth.concept_rate;
    const auto seed = derive_seed(c_.seed, "synth");
    const auto result = synthesize(sc, seed);
    ArtifactWriter w = writer("synth", seed);
    w.write("corpus.jsonl", corpus_to_jsonl(result.corpus));
    nlohmann::ordered_json info;
    info["samples"] = result.corpus.size();
    info["positives"] = result.corpus.count_label(1);
    info["flipped"] = result.flipped;
    info["noise_rate"] = sc.noise_rate;
    info["concept_rate"] = sc.concept_rate;
    w.write("synth.json", info.dump(2) + "\n");
    w.finish();
    log_("synth: " + std::to_string(result.corpus.size()) + " samples, " + std::to_string(result.flipped) +
         " labels flipped");
  }

  // -- prepare --------------------------------------------------------------

  void prepare() {
    const ConceptSchema schema(c_.concepts);
    std::filesystem::path source;
    Corpus corpus;
    if (c_.paths.corpus.empty()) {
      source = require("synth", "corpus.jsonl");
      corpus = load_corpus(source, schema, CorpusFormat::kJsonl);
    } else {
      source = c_.paths.corpus;
      corpus = load_corpus(source, schema, corpus_format());
    }
    corpus = binarize(std::move(corpus), c_.toxicity_threshold, c_.concept_threshold);
    const auto parts = split(corpus, c_.split);
    ArtifactWriter w = writer("prepare", c_.split.seed);
    if (c_.paths.corpus.empty()) {
      w.add_input("synth/corpus.jsonl", source, out_);
    } else {
      w.add_input("corpus", source);
    }
    w.write("train.jsonl", corpus_to_jsonl(parts.train));
    w.write("val.jsonl", corpus_to_jsonl(parts.val));
    w.write("test.jsonl", corpus_to_jsonl(parts.test));
    nlohmann::ordered_json sizes;
    for (const auto* p : {&parts.train, &parts.val, &parts.test}) {
      sizes[std::string(to_string(p->split_tag))] = {{"samples", p->size()}, {"toxic", p->count_label(1)}};
    }
    w.write("splits.json", sizes.dump(2) + "\n");
    w.finish();
    log_("prepare: train " + std::to_string(parts.train.size()) + ", val " + std::to_string(parts.val.size()) +
         ", test " + std::to_string(parts.test.size()));
  }

  // -- train-target ---------------------------------------------------------

  void train_target_stage() {
    const auto train = load_split("train");
    const auto val = load_split("val");
    const auto result = train_target(train, val, c_.target_training, c_.features, c_.model);
    ArtifactWriter w = writer("train-target", c_.target_training.seed);
    add_upstream(w, "prepare", {"train.jsonl", "val.jsonl"});
    w.write("model.json", model_to_json(result.model));
    w.write("history.csv", history_csv(result));
    w.finish();
    log_("train-target: best epoch " + std::to_string(result.best_epoch) + " of " +
         std::to_string(result.history.size() - 1));
  }

  // -- train-concepts -------------------------------------------------------

  void train_concepts_stage() {
    const auto target = load_model(require("train-target", "model.json"));
    const auto train = load_split("train");
    const auto val = load_split("val");
    const auto result = derive_concept_model(target, train, val, c_.concept_training);
    ArtifactWriter w = writer("train-concepts", c_.concept_training.seed);
    add_upstream(w, "prepare", {"train.jsonl", "val.jsonl"});
    add_upstream(w, "train-target", {"model.json"});
    w.write("concept_model.json", model_to_json(result.model));
    w.write("history.csv", history_csv(result));
    w.finish();
    log_("train-concepts: best epoch " + std::to_string(result.best_epoch));
  }

  // -- eval -----------------------------------------------------------------

  void eval() {
    const auto target = load_model(require("train-target", "model.json"));
    const auto test = load_split("test");
    const auto metrics = evaluate_target(target, test);
    ArtifactWriter w = writer("eval", c_.seed);
    add_upstream(w, "prepare", {"test.jsonl"});
    add_upstream(w, "train-target", {"model.json"});
    nlohmann::ordered_json j;
    j["target"] = to_json(metrics);
    w.write("metrics.csv", metrics_csv(metrics));
    w.write("confusion.csv", confusion_csv(metrics.confusion));
    const auto concept_path = out_ / "train-concepts" / "concept_model.json";
    if (std::filesystem::exists(concept_path)) {
      const auto concept_model = load_model(concept_path);
      const auto cm = evaluate_concepts(concept_model, test);
      j["concepts"] = to_json(cm);
      w.write("concept_metrics.csv", concept_metrics_csv(cm));
      add_upstream(w, "train-concepts", {"concept_model.json"});
    }
    w.write("metrics.json", j.dump(2) + "\n");
    w.finish();
    log_("eval: accuracy " + format_double(metrics.accuracy) + ", macro F1 " + format_double(metrics.macro_f1));
  }

  // -- attribute ------------------------------------------------------------

  void attribute() {
    const auto target = load_model(require("train-target", "model.json"));
    const auto concept_model = load_model(require("train-concepts", "concept_model.json"));
    const auto test = load_split("test");
    AttributionOptions options;
    options.methods.clear();
    for (const auto& m : c_.attribution.methods) options.methods.push_back(attribution_method_from_string(m));
    options.output = attribution_output_from_string(c_.attribution.output);
    options.svd_tolerance = c_.attribution.svd_tolerance;
    options.degeneracy_eps = c_.attribution.degeneracy_eps;

    const auto seed = derive_seed(c_.seed, "attribute");
    ArtifactWriter w = writer("attribute", seed);
    add_upstream(w, "prepare", {"test.jsonl"});
    add_upstream(w, "train-target", {"model.json"});
    add_upstream(w, "train-concepts", {"concept_model.json"});

    std::vector<CavVector> cavs;
    if (std::find(options.methods.begin(), options.methods.end(), AttributionMethod::kCav) != options.methods.end()) {
      const auto train = load_split("train");
      add_upstream(w, "prepare", {"train.jsonl"});
      cavs = train_cavs(target, train, derive_seed(seed, "cav"));
      nlohmann::ordered_json cj = nlohmann::ordered_json::array();
      for (const auto& cav : cavs) {
        cj.push_back({{"concept", c_.concepts[cav.concept_index]},
                      {"probe_accuracy", cav.probe_accuracy},
                      {"v", std::vector<double>(cav.v.data(), cav.v.data() + cav.v.size())}});
      }
      w.write("cavs.json", cj.dump(2) + "\n");
    }
    const auto run = attribute_corpus(target, concept_model, test, options, cavs);
    const auto slices = condition_slices(test, run.predictions);
    std::vector<AggregateReport> reports;
    for (const auto& [method, records] : run.records) {
      const std::string name(to_string(method));
      w.write("records_" + name + ".jsonl", records_to_jsonl(records, c_.concepts));
      for (auto mode : {AggregateMode::kSigned, AggregateMode::kAbsolute}) {
        auto report = mean_cg(records, slices, mode, c_.concepts);
        report.method = method;
        w.write("aggregate_" + name + "_" + std::string(to_string(mode)) + ".csv", aggregate_csv(report));
        reports.push_back(std::move(report));
      }
    }
    w.write("comparative.csv", comparative_table(reports));
    w.set_defaults({{"output", c_.attribution.output},
                    {"misclassified_nontoxic", "true 0, predicted 1"},
                    {"misclassified_toxic", "true 1, predicted 0"}});
    w.finish();
    log_("attribute: " + std::to_string(test.size()) + " samples, " + std::to_string(run.records.size()) +
         " method(s)");
  }

  // -- curate ---------------------------------------------------------------

  void curate() {
    const auto target = load_model(require("train-target", "model.json"));
    const auto records_path = require("attribute", "records_cg_independent.jsonl");
    const auto test = load_split("test");
    const auto train = load_split("train");
    const auto records = records_from_jsonl(read_file(records_path), c_.concepts);
    const WordSet stopwords =
        c_.paths.stopwords.empty() ? english_stopwords() : parse_stopwords(read_file(c_.paths.stopwords));

    const auto seed = derive_seed(c_.seed, "curate");
    ArtifactWriter w = writer("curate", seed);
    add_upstream(w, "prepare", {"train.jsonl", "test.jsonl"});
    add_upstream(w, "train-target", {"model.json"});
    add_upstream(w, "attribute", {"records_cg_independent.jsonl"});
    if (!c_.paths.stopwords.empty()) w.add_input("stopwords", c_.paths.stopwords);

    const auto mis = mine_misclassified(target, test);
    std::string mis_jsonl;
    for (const auto& e : mis.entries) {
      nlohmann::ordered_json j{{"id", e.sample.id}, {"text", e.sample.text}, {"label", e.sample.label},
                               {"predicted", e.predicted}};
      mis_jsonl += j.dump() + "\n";
    }
    w.write("misclassified.jsonl", mis_jsonl);

    ExtractionResult extraction;
    if (c_.lexicon.extractor == "llm") {
      extraction = extract_words_llm(mis, client(), prompt(PromptId::kExtractWords));
    } else {
      extraction = extract_words_gradient(mis, target, stopwords, {c_.lexicon.top_k, c_.lexicon.relative_threshold});
    }
    for (const auto& [id, reason] : extraction.skipped) log_("curate: skipped " + id + ": " + reason);
    const WordList cleaned = clean(extraction.raw, stopwords);
    nlohmann::ordered_json words;
    words["extractor"] = c_.lexicon.extractor;
    words["misclassified"] = mis.size();
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const auto& [id, ws] : extraction.per_sample) per.push_back({{"id", id}, {"words", ws}});
    words["per_sample"] = per;
    nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
    for (const auto& [id, reason] : extraction.skipped) skipped.push_back({{"id", id}, {"reason", reason}});
    words["skipped"] = skipped;
    words["raw"] = extraction.raw.words;
    words["cleaned"] = cleaned.words;
    w.write("words.json", words.dump(2) + "\n");

    GroupingResult grouping;
    if (!cleaned.words.empty()) {
      const GroupingConfig gc{c_.lexicon.target_sets, c_.lexicon.keep_top, derive_seed(seed, "group")};
      if (c_.lexicon.grouper == "llm") {
        grouping = group_words_llm(cleaned, client(), prompt(PromptId::kGroupWords), train, gc);
      } else {
        grouping = group_words_cluster(cleaned, train, train, gc);
      }
    } else {
      grouping.warnings.push_back("no words survived extraction and cleaning; no lexicon sets formed");
    }
    for (const auto& warning : grouping.warnings) log_("curate: " + warning);
    save_lexicon_to(w, grouping.sets);

    const TokenIndex test_index(test);
    std::vector<WcaResult> signed_results;
    std::vector<WcaResult> absolute_results;
    std::string histograms = "set_id,concept,mode,bin_lo,bin_hi,count\n";
    for (const auto& set : grouping.sets) {
      const auto members = test_index.sentences_containing(set);
      const auto tag = "set" + std::to_string(set.set_id);
      signed_results.push_back(wca(records, members, AggregateMode::kSigned, c_.concepts.size(), set.set_id));
      absolute_results.push_back(wca(records, members, AggregateMode::kAbsolute, c_.concepts.size(), set.set_id));
      w.write("wca_sentences_" + tag + "_signed.csv",
              wca_sentence_csv(records, members, set.set_id, c_.concepts, AggregateMode::kSigned));
      w.write("wca_sentences_" + tag + "_absolute.csv",
              wca_sentence_csv(records, members, set.set_id, c_.concepts, AggregateMode::kAbsolute));
      w.write("frequencies_" + tag + ".csv", frequency_csv(word_frequencies(train, set)));
      if (!members.empty()) {
        const auto by_id = detail::index_records(records);
        for (std::size_t j = 0; j < c_.concepts.size(); ++j) {
          std::vector<double> scores;
          for (const auto& id : members) scores.push_back(by_id.at(id)->scores[j]);
          for (auto mode : {AggregateMode::kSigned, AggregateMode::kAbsolute}) {
            for (const auto& b : histogram(scores, {c_.histogram.bins, std::nullopt, mode})) {
              histograms += std::to_string(set.set_id) + "," + csv_field(c_.concepts[j]) + "," +
                            std::string(to_string(mode)) + "," + format_double(b.lo) + "," + format_double(b.hi) +
                            "," + std::to_string(b.count) + "\n";
            }
          }
        }
      }
    }
    w.write("wca_signed.csv", wca_csv(signed_results, c_.concepts));
    w.write("wca_absolute.csv", wca_csv(absolute_results, c_.concepts));
    w.write("histograms.csv", histograms);
    w.set_defaults({{"extractor", c_.lexicon.extractor},
                    {"grouper", c_.lexicon.grouper},
                    {"histogram_bins", c_.histogram.bins},
                    {"histogram_range", "auto"},
                    {"wca_corpus", "test"},
                    {"member_count_corpus", "train"}});
    w.finish();
    log_("curate: " + std::to_string(mis.size()) + " misclassified, " + std::to_string(cleaned.words.size()) +
         " words, " + std::to_string(grouping.sets.size()) + " lexicon set(s)");
  }

  // -- augment --------------------------------------------------------------

  void augment() {
    const auto sets = load_lexicon(require("curate", "lexicon.json"));
    const LexiconSet* chosen = nullptr;
    for (const auto& s : sets) {
      if (s.set_id == c_.augmentation.set_id) chosen = &s;
    }
    if (chosen == nullptr && !sets.empty()) {
      fail(ErrorKind::kConfig, "lexicon has no set " + std::to_string(c_.augmentation.set_id) + " (found " +
                                   std::to_string(sets.size()) + " set(s))");
    }
    const auto train = load_split("train");
    const auto val = load_split("val");
    const auto test = load_split("test");
    const auto seed = derive_seed(c_.seed, "augment");
    ArtifactWriter w = writer("augment", seed);
    add_upstream(w, "prepare", {"train.jsonl", "val.jsonl", "test.jsonl"});
    add_upstream(w, "curate", {"lexicon.json"});

    AugmentationBatch batch;
    if (chosen != nullptr) {
      batch = generate(*chosen, seed);
    } else {
      // Nothing was misclassified, so there is no lexicon to avoid.
      log_("augment: lexicon is empty; retraining with an empty batch");
      batch.set_id = c_.augmentation.set_id;
      batch.generator = generator_kind_from_string(c_.augmentation.generator);
      batch.requested = c_.augmentation.n;
    }
    if (batch.shortfall() > 0) {
      log_("augment: shortfall of " + std::to_string(batch.shortfall()) + " (accepted " +
           std::to_string(batch.accepted_count) + " of " + std::to_string(batch.requested) + ")");
    }
    w.write("batch.jsonl", batch_to_jsonl(batch));

    RetrainSetup setup;
    setup.target = c_.target_training;
    setup.concepts = c_.concept_training;
    setup.featurizer = c_.features;
    setup.shape = c_.model;
    setup.attribution.output = attribution_output_from_string(c_.attribution.output);
    setup.attribution.degeneracy_eps = c_.attribution.degeneracy_eps;
    const auto outcome = retrain_and_compare(train, val, batch, test, setup);
    const auto& r = outcome.report;
    auto j = to_json(r);
    j["set_id"] = batch.set_id;
    j["requested"] = batch.requested;
    j["shortfall"] = batch.shortfall();
    j["generator"] = std::string(to_string(batch.generator));
    w.write("report.json", j.dump(2) + "\n");
    w.write("f1.csv", before_after_f1_csv(r));
    w.write("confusion_before.csv", confusion_csv(r.before.confusion));
    w.write("confusion_after.csv", confusion_csv(r.after.confusion));
    if (r.aggregate_after) w.write("aggregate_after_signed.csv", aggregate_csv(*r.aggregate_after));
    w.write("model_after.json", model_to_json(outcome.after));
    w.finish();
    log_("augment: accepted " + std::to_string(batch.accepted_count) + ", macro F1 " +
         format_double(r.before.macro_f1) + " -> " + format_double(r.after.macro_f1));
  }

  // -- kfold ----------------------------------------------------------------

  void kfold_stage() {
    Corpus all = load_split("train");
    for (const auto* name : {"val", "test"}) {
      auto part = load_split(name);
      all.samples.insert(all.samples.end(), part.samples.begin(), part.samples.end());
    }
    all.split_tag = SplitTag::kUnsplit;
    const auto seed = derive_seed(c_.seed, "kfold");
    ArtifactWriter w = writer("kfold", seed);
    add_upstream(w, "prepare", {"train.jsonl", "val.jsonl", "test.jsonl"});
    std::optional<AugmentationBatch> batch;
    if (c_.kfold.augment) {
      batch = batch_from_jsonl(read_file(require("augment", "batch.jsonl")));
      add_upstream(w, "augment", {"batch.jsonl"});
    }
    KfoldSetup setup;
    setup.k = c_.kfold.k;
    setup.target = c_.target_training;
    setup.featurizer = c_.features;
    setup.shape = c_.model;
    setup.val_fraction = c_.kfold.val_fraction;
    setup.seed = seed;
    const auto report = kfold(all, setup, batch);
    w.write("kfold.csv", kfold_csv(report));
    w.write("folds.csv", kfold_folds_csv(report));
    w.finish();
    log_("kfold: mean macro F1 " + format_double(report.f1_before.mean) +
         (report.f1_after ? " -> " + format_double(report.f1_after->mean) : std::string()));
  }

 private:
  CorpusFormat corpus_format() const {
    if (c_.paths.corpus_format != "auto") return corpus_format_from_string(c_.paths.corpus_format);
    const auto ext = std::filesystem::path(c_.paths.corpus).extension().string();
    return ext == ".jsonl" || ext == ".json" ? CorpusFormat::kJsonl : CorpusFormat::kCsv;
  }

  // Paths inside the output directory are recorded relative to it, so
  // manifests do not depend on where the run was written.
  ArtifactWriter writer(const std::string& stage, std::uint64_t seed) const {
    ArtifactWriter w(out_ / stage, stage);
    w.set_seed(seed);
    auto cfg = to_json(c_);
    cfg["paths"].erase("output_dir");
    w.set_config(std::move(cfg));
    return w;
  }

  std::filesystem::path require(const std::string& stage, const std::string& file) const {
    const auto path = out_ / stage / file;
    if (!std::filesystem::exists(path)) {
      fail(ErrorKind::kDependency, "missing " + (std::filesystem::path(stage) / file).generic_string() +
                                       "; run `toxcg " + stage + "` first");
    }
    return path;
  }

  void add_upstream(ArtifactWriter& w, const std::string& stage, const std::vector<std::string>& files) const {
    w.add_input(stage + "/manifest.json", require(stage, "manifest.json"), out_);
    for (const auto& f : files) w.add_input(stage + "/" + f, require(stage, f), out_);
  }

  Corpus load_split(const std::string& name) const {
    return read_corpus(require("prepare", name + ".jsonl"), ConceptSchema(c_.concepts),
                       split_tag_from_string(name));
  }

  static std::string history_csv(const TrainResult& r) {
    std::string out = "epoch,train_loss,val_loss,best\n";
    for (const auto& e : r.history) {
      out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "," +
             (e.epoch == r.best_epoch ? "1" : "0") + "\n";
    }
    return out;
  }

  void save_lexicon_to(ArtifactWriter& w, const std::vector<LexiconSet>& sets) const {
    w.write("lexicon.json", lexicon_to_json(sets).dump(2) + "\n");
  }

  PromptTemplate prompt(PromptId id) const {
    return c_.paths.prompts_dir.empty() ? builtin_prompt(id) : load_prompt(id, c_.paths.prompts_dir);
  }

  LlmClient& client() {
    if (!client_) client_ = std::make_unique<LlmClient>(c_.llm, transport_);
    return *client_;
  }

  AugmentationBatch generate(const LexiconSet& set, std::uint64_t seed) {
    GenerationConfig gc;
    gc.n = c_.augmentation.n;
    gc.seed = seed;
    gc.max_attempts = c_.augmentation.max_attempts;
    gc.batch_size = c_.augmentation.batch_size;
    if (c_.augmentation.generator == "llm") {
      return generate_with_llm(set, gc, client(), prompt(PromptId::kGenerateSentences));
    }
    return generate_from_templates(set, gc);
  }

  RunConfig c_;
  std::filesystem::path out_;
  LogSink log_;
  std::shared_ptr<Transport> transport_;
  std::unique_ptr<LlmClient> client_;
};

}  // namespace toxcg

#endif  // TOXCG_PIPELINE_HPP_
