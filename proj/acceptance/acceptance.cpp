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


// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "test_support.hpp"
#include "toxcg/pipeline.hpp"

namespace {

using namespace toxcg;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!ok || notes.size() < 8) notes.push_back((ok ? "" : "FAILED: ") + what);
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  return m;
}

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng) { return random_matrix(n, 1, rng).col(0); }

GradientBundle bundle_of(Eigen::VectorXd grad_f, Eigen::MatrixXd jac) {
  GradientBundle b;
  b.grad_f = std::move(grad_f);
  b.jac_g = std::move(jac);
  b.x = Eigen::VectorXd::Zero(b.grad_f.size());
  return b;
}

void silent(const std::string&) {}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  const auto start = Clock::now();
  double worst = 0.0;
  auto numeric = [](const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd up = x, down = x;
      up(i) += h;
      down(i) -= h;
      g(i) = (f(up) - f(down)) / (2.0 * h);
    }
    return g;
  };
  auto rel = [](const Eigen::VectorXd& a, const Eigen::VectorXd& n) {
    return (a - n).norm() / std::max({a.norm(), n.norm(), 1e-12});
  };
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(trial, "acceptance-gradients"));
    const std::size_t d = 3 + rng.index(10);
    const std::size_t h = 3 + rng.index(10);
    const Model target = init_model({{1, 2}, 64, true}, {d, h}, {"a", "b", "c"}, 2 * trial + 1);
    const Model concepts = init_model({{1, 2}, 64, true}, {d, h}, {"a", "b", "c"}, 2 * trial + 2);
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-1.5, 1.5);
    const auto b = gradients(target.params, concepts.params, x);
    worst = std::max(worst, rel(b.grad_f, numeric([&](const auto& v) { return target_logit(target.params, v); }, x)));
    for (Eigen::Index j = 0; j < b.jac_g.rows(); ++j) {
      const auto row = numeric([&](const auto& v) { return concept_logits(concepts.params, v)(j); }, x);
      worst = std::max(worst, rel(b.jac_g.row(j).transpose(), row));
    }
    // Training gradient of the weighted loss with respect to the target head.
    const auto feats = target.featurizer.features("acceptance gradient sample " + std::to_string(trial));
    Model copy = target;
    TargetGradient g(copy.params);
    const int y = static_cast<int>(trial % 2);
    accumulate_target_gradient(copy.params, feats, y, 1.0, g);
    Eigen::VectorXd analytic = g.target_w;
    Eigen::VectorXd fd(analytic.size());
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      const double saved = copy.params.target_w(i);
      copy.params.target_w(i) = saved + 1e-6;
      const double up = bce_from_logit(target_logit(copy.params, project(feats, copy.params.embed)), y);
      copy.params.target_w(i) = saved - 1e-6;
      const double down = bce_from_logit(target_logit(copy.params, project(feats, copy.params.embed)), y);
      copy.params.target_w(i) = saved;
      fd(i) = (up - down) / 2e-6;
    }
    worst = std::max(worst, rel(analytic, fd));
  }
  const double elapsed = seconds_since(start);
  o.require(worst < 1e-4, "max relative error " + num(worst) + " < 1e-4 over 100 models");
  o.require(elapsed < 10.0, "runtime " + num(elapsed) + " s < 10 s");
  return o;
}

Outcome cg_identities() {
  Outcome o;
  Rng rng(101);
  double err_a = 0.0;
  std::size_t checked_a = 0;
  for (int t = 0; t < 200; ++t) {
    const auto g = random_vector(1 + static_cast<Eigen::Index>(rng.index(16)), rng);
    if (g.norm() <= 1e-6) continue;
    ++checked_a;
    err_a = std::max(err_a, std::abs(cg_independent(bundle_of(g, g.transpose())).scores[0] - 1.0));
  }
  // Through real models: a concept head copied from the target head.
  Model target = init_model({{1}, 256, true}, {12, 10}, {"a", "b"}, 5);
  Model concept_model = target;
  concept_model.params.concept_w.row(0) = target.params.target_w.transpose();
  concept_model.params.concept_b(0) = target.params.target_b;
  for (const char* text : {"you absolute fool", "the park is open", "crush them all", "nice"}) {
    const auto b = gradients(target.params, concept_model.params, target.represent(text));
    if (b.grad_f.norm() <= 1e-6) continue;
    ++checked_a;
    err_a = std::max(err_a, std::abs(cg_independent(b).scores[0] - 1.0));
  }
  o.require(err_a < 1e-8, "(a) self-CG max |CG-1| = " + num(err_a) + " over " + std::to_string(checked_a));

  bool exact = true;
  for (int t = 0; t < 200; ++t) {
    const auto b = bundle_of(random_vector(9, rng), random_matrix(1, 9, rng));
    exact = exact && cg_joint(b)[0] == cg_independent(b).scores[0];
  }
  o.require(exact, "(b) m=1 joint == independent bit-for-bit on 200 draws");

  double err_c = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto rows = static_cast<Eigen::Index>(1 + rng.index(6));
    const auto cols = static_cast<Eigen::Index>(1 + rng.index(24));
    Eigen::MatrixXd j = random_matrix(rows, cols, rng);
    if (t % 5 == 0 && rows > 1) j.row(rows - 1) = -0.5 * j.row(0);
    err_c = std::max(err_c, (j * pseudo_inverse(j) * j - j).norm());
  }
  o.require(err_c < 1e-8, "(c) max ||J J+ J - J||_F = " + num(err_c) + " on 100 Jacobians");

  double err_d = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(12, 12, rng));
    const Eigen::MatrixXd q = qr.householderQ();
    const auto m = static_cast<Eigen::Index>(2 + rng.index(5));
    const auto b = bundle_of(random_vector(12, rng), q.leftCols(m).transpose());
    const auto joint = cg_joint(b);
    const auto indep = cg_independent(b).scores;
    for (Eigen::Index k = 0; k < m; ++k) err_d = std::max(err_d, std::abs(joint[k] - indep[k]));
  }
  o.require(err_d < 1e-8, "(d) orthonormal rows max |joint-indep| = " + num(err_d));
  return o;
}

Outcome planted_oracle() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  for (int s = 0; s < 5000; ++s) {
    const double a = rng.uniform(-5.0, 5.0);
    const double b = rng.uniform(-5.0, 5.0);
    const auto d = static_cast<Eigen::Index>(2 + rng.index(30));
    const Eigen::MatrixXd jac = random_matrix(2, d, rng);
    const Eigen::VectorXd f = a * jac.row(0).transpose() + b * jac.row(1).transpose();
    const auto joint = cg_joint(bundle_of(f, jac));
    worst = std::max({worst, std::abs(joint[0] - a), std::abs(joint[1] - b)});
  }
  const double elapsed = seconds_since(start);
  o.require(worst < 1e-6, "max |(a,b) error| = " + num(worst) + " over 5000 samples");
  o.require(elapsed < 5.0, "runtime " + num(elapsed) + " s < 5 s");
  return o;
}

// Parses an aggregate CSV into concept -> condition cells (NaN for NA).
std::map<std::string, std::vector<double>> read_aggregate(const std::filesystem::path& path) {
  std::map<std::string, std::vector<double>> table;
  const auto lines = split_lines(read_file(path));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss{std::string(lines[i])};
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.front() == "count") continue;
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(cells[c] == "NA" ? std::nan("") : std::stod(cells[c]));
    table[cells.front()] = row;
  }
  return table;
}

Outcome sign_pattern(const std::filesystem::path& work) {
  Outcome o;
  const auto start = Clock::now();
  nlohmann::ordered_json j;
  j["seed"] = 7;
  j["paths"] = {{"output_dir", (work / "sign").string()}};
  j["synth"] = {{"samples", 4000}, {"noise_rate", 0.05}};
  j["llm"] = {{"mode", "offline"}};
  const auto config = config_from_json(j);
  o.require(config.concepts.size() == 3, "m = 3 planted toxic concepts");
  Pipeline p(config, silent);
  for (const char* stage : {"synth", "prepare", "train-target", "train-concepts", "eval", "attribute"}) p.run(stage);
  const double elapsed = seconds_since(start);
  const auto metrics = nlohmann::json::parse(read_file(work / "sign/eval/metrics.json"));
  o.notes.push_back("test accuracy " + num(metrics.at("target").at("accuracy").get<double>()) +
                    ", concept accuracy " + num(metrics.at("concepts").at("mean_accuracy").get<double>()));
  for (const char* method : {"cg_independent", "cg_joint"}) {
    const auto table = read_aggregate(work / "sign/attribute" / ("aggregate_" + std::string(method) + "_signed.csv"));
    for (const auto& concept_name : config.concepts) {
      const auto& row = table.at(concept_name);
      o.require(row[0] < 0.0, std::string(method) + " " + concept_name + " correct_nontoxic " + num(row[0]) + " < 0");
      o.require(row[2] > 0.0, std::string(method) + " " + concept_name + " correct_toxic " + num(row[2]) + " > 0");
    }
  }
  o.require(elapsed < 300.0, "end-to-end runtime " + num(elapsed) + " s < 300 s");
  return o;
}

Outcome cav_baseline() {
  Outcome o;
  Rng rng(303);
  Eigen::VectorXd axis = random_vector(16, rng);
  axis.normalize();
  std::vector<std::pair<Eigen::VectorXd, int>> data;
  // Shifted representations; the concept is the side of a hyperplane.
  Eigen::VectorXd shift(16);
  for (Eigen::Index i = 0; i < 16; ++i) shift(i) = rng.uniform(-2.0, 2.0);
  while (data.size() < 3000) {
    const Eigen::VectorXd x = random_vector(16, rng) + shift;
    data.emplace_back(x, (x - shift).dot(axis) > 0.0 ? 1 : 0);
  }
  const auto cav = train_cav(data, 0, 17);
  const double angle = std::acos(std::clamp(cav.v.normalized().dot(axis), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  o.require(cav.probe_accuracy >= 0.95, "held-out accuracy " + num(cav.probe_accuracy) + " >= 0.95");
  o.require(angle < 8.0, "angle to planted axis " + num(angle) + " deg < 8");
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    CavVector c;
    c.v = random_vector(16, rng);
    const auto g = random_vector(16, rng);
    const double base = cav_score(g, c);
    for (double k : {1e-8, 0.25, 7.0, 1e8}) {
      CavVector scaled = c;
      scaled.v *= k;
      worst = std::max(worst, std::abs(cav_score(g, scaled) - base) / std::max(1.0, std::abs(base)));
    }
  }
  o.require(worst <= 1e-12, "scale invariance max deviation " + num(worst) + " <= 1e-12");
  return o;
}

Outcome wca_consistency() {
  Outcome o;
  auto cfg = default_synth_config();
  cfg.samples = 10000;
  cfg.noise_rate = 0.05;
  const auto corpus = synthesize(cfg, 404).corpus;
  Rng rng(405);
  std::vector<AttributionRecord> records;
  std::vector<std::string> all;
  for (const auto& s : corpus.samples) {
    AttributionRecord r;
    r.sample_id = s.id;
    for (int j = 0; j < 3; ++j) r.scores.push_back(rng.normal());
    records.push_back(std::move(r));
    all.push_back(s.id);
  }
  ConditionSlices slices;
  slices[0].sample_ids = all;
  double worst = 0.0;
  for (auto mode : {AggregateMode::kSigned, AggregateMode::kAbsolute}) {
    const auto w = wca(records, all, mode, 3, 1);
    const auto report = mean_cg(records, slices, mode, corpus.schema.names());
    for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, std::abs((*w.scores)[j] - *report.table[0][j]));
  }
  o.require(worst <= 1e-12, "full-corpus WCA vs MeanCG max diff " + num(worst));

  std::vector<std::string> vocab = cfg.filler;
  for (const auto& t : cfg.triggers) vocab.insert(vocab.end(), t.begin(), t.end());
  const TokenIndex index(corpus);
  auto naive = [&](const std::vector<std::string>& words) {
    const std::set<std::string> set(words.begin(), words.end());
    std::vector<std::string> ids;
    for (const auto& s : corpus.samples) {
      for (const auto& t : tokenize(s.text)) {
        if (set.count(t) != 0) {
          ids.push_back(s.id);
          break;
        }
      }
    }
    return ids;
  };
  std::size_t mismatches = 0;
  std::size_t non_monotone = 0;
  for (int t = 0; t < 100; ++t) {
    LexiconSet a, b;
    for (std::size_t k = 0, n = 1 + rng.index(3); k < n; ++k) a.words.push_back(vocab[rng.index(vocab.size())]);
    b.words = a.words;
    for (std::size_t k = 0, n = rng.index(4); k < n; ++k) b.words.push_back(vocab[rng.index(vocab.size())]);
    const auto za = index.sentences_containing(a);
    const auto zb = index.sentences_containing(b);
    mismatches += za == naive(a.words) ? 0 : 1;
    mismatches += zb == naive(b.words) ? 0 : 1;
    const std::set<std::string> sa(za.begin(), za.end()), sb(zb.begin(), zb.end());
    non_monotone += std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()) ? 0 : 1;
  }
  o.require(mismatches == 0, "membership vs naive scan on 10k samples: " + std::to_string(mismatches) + " mismatches");
  o.require(non_monotone == 0, "monotonicity on 100 set pairs: " + std::to_string(non_monotone) + " violations");
  return o;
}

// Two disjoint word blocks, each sample drawing only from one block.
Corpus block_corpus(std::size_t n, std::uint64_t seed) {
  const std::vector<std::vector<std::string>> blocks{{"idiot", "moron", "clown", "loser", "fool", "dunce"},
                                                     {"smash", "burn", "crush", "wreck", "punish", "destroy"}};
  const std::vector<std::string> filler{"the", "park", "road", "news", "plan", "city", "team", "market"};
  Rng rng(seed);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& block = blocks[rng.index(2)];
    std::string text;
    for (int k = 0; k < 3; ++k) text += block[rng.index(block.size())] + " ";
    for (int k = 0; k < 4; ++k) text += filler[rng.index(filler.size())] + " ";
    samples.push_back(testing::sample("b" + std::to_string(i), text, 1, {0, 0, 0}));
  }
  return testing::corpus_of(std::move(samples));
}

nlohmann::ordered_json small_run(const std::filesystem::path& out, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["paths"] = {{"output_dir", out.string()}};
  j["synth"] = {{"samples", 1500}, {"noise_rate", 0.05}};
  j["features"] = {{"hash_dim", 2048}};
  j["model"] = {{"embed_dim", 48}, {"hidden_dim", 48}};
  j["target_training"] = {{"epochs", 15}};
  j["concept_training"] = {{"epochs", 120}};
  j["augmentation"] = {{"n", 200}};
  j["llm"] = {{"mode", "offline"}};
  return j;
}

Outcome lexicon_offline(const std::filesystem::path& work) {
  Outcome o;
  const auto base = work / "lexicon";
  auto j = small_run(base, 11);
  Pipeline upstream(config_from_json(j), silent);
  for (const char* stage : {"synth", "prepare", "train-target", "train-concepts", "attribute"}) upstream.run(stage);

  // Record: a scripted stand-in for the chat endpoint answers every prompt.
  const auto fixtures = work / "fixtures.jsonl";
  auto responder = [](const std::string& prompt) -> std::string {
    if (prompt.find("Group 1:") != std::string::npos) {
      return "Group 1: damn, hell, crap\nGroup 2: kill, hurt, destroy\nGroup 3: idiot, stupid, moron, fool";
    }
    const auto start = prompt.find("Sentence: ");
    const auto end = prompt.find('\n', start);
    const auto sentence = prompt.substr(start + 10, end - start - 10);
    std::string words;
    for (const auto& t : tokenize(sentence)) {
      if (english_stopwords().count(t) != 0) continue;
      words += (words.empty() ? "" : ", ") + t;
      if (words.size() > 20) break;
    }
    return "Words: " + words;
  };
  auto live = j;
  live["lexicon"] = {{"extractor", "llm"}, {"grouper", "llm"}};
  live["llm"] = {{"mode", "live"}, {"record_path", fixtures.string()}, {"max_concurrent", 2}};
  {
    Pipeline recorder(config_from_json(live), silent, std::make_shared<testing::FakeTransport>(responder));
    recorder.run("curate");
  }
  const auto recorded_lexicon = read_file(base / "curate/lexicon.json");
  o.require(std::filesystem::exists(fixtures), "live run recorded fixtures");

  // Replay twice with networking disabled.
  ::setenv("NO_NETWORK", "1", 1);
  auto replay = live;
  replay["llm"] = {{"mode", "offline"}, {"fixture_path", fixtures.string()}};
  std::vector<std::string> runs;
  for (int r = 0; r < 2; ++r) {
    Pipeline p(config_from_json(replay), silent);
    p.run("curate");
    std::string bytes;
    for (const char* f : {"lexicon.json", "wca_signed.csv", "wca_absolute.csv"}) bytes += read_file(base / "curate" / f);
    runs.push_back(bytes);
  }
  o.require(runs[0] == runs[1], "two offline replays are byte-identical (lexicon + WCA CSVs)");
  o.require(read_file(base / "curate/lexicon.json") == recorded_lexicon, "replay matches the recorded live run");
  const auto sets = load_lexicon(base / "curate/lexicon.json");
  o.require(!sets.empty() && sets.front().provenance == Provenance::kLlm, std::to_string(sets.size()) + " LLM sets");

  // Fallbacks: no transport, no fixtures, offline.
  Pipeline fallback(config_from_json(j), silent);
  fallback.run("curate");
  const auto fb = load_lexicon(base / "curate/lexicon.json");
  o.require(!fb.empty() && fb.front().provenance == Provenance::kFallback,
            "fallback extractor + grouper offline: " + std::to_string(fb.size()) + " sets");
  ::unsetenv("NO_NETWORK");

  const auto blocks = block_corpus(1000, 12);
  const WordList cleaned{{"idiot", "smash", "moron", "burn", "clown", "crush", "loser", "wreck", "fool", "punish",
                          "dunce", "destroy"},
                         WordStage::kCleaned};
  const std::set<std::set<std::string>> expected{{"idiot", "moron", "clown", "loser", "fool", "dunce"},
                                                 {"smash", "burn", "crush", "wreck", "punish", "destroy"}};
  std::size_t recovered = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto result = group_words_cluster(cleaned, blocks, blocks, {2, 5, seed});
    std::set<std::set<std::string>> got;
    for (const auto& s : result.sets) got.insert(std::set<std::string>(s.words.begin(), s.words.end()));
    recovered += got == expected ? 1 : 0;
  }
  o.require(recovered == 10, "fallback grouper recovers both planted blocks for " + std::to_string(recovered) +
                                 "/10 seeds");
  return o;
}

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
    const auto c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      token.push_back(c);
    } else if (flush()) {
      return true;
    }
  }
  return flush();
}

Outcome augmentation_loop() {
  Outcome o;
  const auto grammar = default_template_grammar();
  LexiconSet set;
  set.set_id = 1;
  set.words = {"pathetic", "worthless", "fraud", "coward", "crush", "you", "mayor"};
  const std::set<std::string> lexicon(set.words.begin(), set.words.end());
  // Candidates straight from the unfiltered grammar, so the validator sees
  // many offending sentences.
  Rng rng(505);
  std::size_t disagreements = 0;
  std::size_t rejected = 0;
  for (int k = 0; k < 1000; ++k) {
    std::string text = grammar.frames[rng.index(grammar.frames.size())];
    for (const auto& [name, vocab] : std::vector<std::pair<std::string, const std::vector<std::string>*>>{
             {"{adjective}", &grammar.adjectives}, {"{noun}", &grammar.nouns},
             {"{verb}", &grammar.verbs}, {"{target}", &grammar.targets}}) {
      for (auto pos = text.find(name); pos != std::string::npos; pos = text.find(name)) {
        text.replace(pos, name.size(), (*vocab)[rng.index(vocab->size())]);
      }
    }
    const bool accepted = validate_lexicon_free(text, set).accepted;
    rejected += accepted ? 0 : 1;
    disagreements += accepted == !leaks(text, lexicon) ? 0 : 1;
  }
  o.require(disagreements == 0, "validator vs intersection oracle on 1000 candidates: " +
                                    std::to_string(disagreements) + " disagreements (" + std::to_string(rejected) +
                                    " rejected)");
  GenerationConfig gen;
  gen.n = 1000;
  gen.seed = 9;
  const auto batch = generate_from_templates(set, gen);
  std::size_t leaked = 0;
  for (const auto& c : batch.candidates) leaked += c.accepted && leaks(c.text, lexicon) ? 1 : 0;
  o.require(leaked == 0 && batch.accepted_count > 0,
            "generated batch: " + std::to_string(batch.accepted_count) + " accepted, " + std::to_string(leaked) +
                " leaking");

  auto cfg = default_synth_config();
  cfg.samples = 1200;
  cfg.noise_rate = 0.05;
  const auto parts = split(synthesize(cfg, 506).corpus, {0.72, 0.08, 0.2, false, 507});
  const auto merged = merge(parts.train, batch);
  bool arithmetic = merged.size() == parts.train.size() + batch.accepted_count &&
                    merged.count_label(1) == parts.train.count_label(1) + batch.accepted_count;
  for (std::size_t i = parts.train.size(); i < merged.size(); ++i) {
    const auto& s = merged.samples[i];
    arithmetic = arithmetic && s.label == 1 && s.origin == SplitTag::kAug &&
                 std::all_of(s.concept_labels.begin(), s.concept_labels.end(), [](int v) { return v == 0; });
  }
  o.require(arithmetic, "merge: " + std::to_string(parts.train.size()) + " + " +
                            std::to_string(batch.accepted_count) + " = " + std::to_string(merged.size()));

  RetrainSetup setup;
  setup.target = {12, 64, 2e-5, 20000.0, 4, 5, false, true};
  setup.concepts = {60, 64, 2e-5, 100000.0, 5, 5, true, false};
  setup.featurizer = {{1}, 2048, true};
  setup.shape = {32, 32};
  setup.with_aggregate = false;
  AugmentationBatch empty;
  empty.set_id = 1;
  empty.requested = 100;
  const auto same = retrain_and_compare(parts.train, parts.val, empty, parts.test, setup).report;
  o.require(to_json(same.before).dump() == to_json(same.after).dump() &&
                confusion_csv(same.before.confusion) == confusion_csv(same.after.confusion),
            "empty batch: before/after reports bitwise identical");

  const auto real = retrain_and_compare(parts.train, parts.val, batch, parts.test, setup).report;
  const auto f1_lines = split_lines(before_after_f1_csv(real));
  o.require(f1_lines.size() >= 3 && f1_lines[0] == "stage,macro_f1,accuracy" &&
                istarts_with(f1_lines[1], "before_augmentation,") && istarts_with(f1_lines[2], "after_augmentation,"),
            "F1 CSV has two rows (before/after)");
  bool matrices = true;
  for (const auto* m : {&real.before.confusion, &real.after.confusion}) {
    const auto lines = split_lines(confusion_csv(*m));
    std::size_t rows = 0;
    for (const auto& l : lines) rows += trim(l).empty() ? 0 : 1;
    matrices = matrices && rows == 3 && lines[0] == "actual,predicted_negative,predicted_positive";
  }
  o.require(matrices, "two 2x2 confusion matrices");
  o.notes.push_back("macro F1 " + num(real.before.macro_f1) + " -> " + num(real.after.macro_f1));
  return o;
}

Outcome metrics_arithmetic() {
  Outcome o;
  const Confusion c{4929, 71, 161, 4839};
  const auto m = metrics_from_confusion(c);
  o.require(m.accuracy == 0.9768, "accuracy from (4929, 71, 161, 4839) = " + format_double(m.accuracy));
  Confusion perfect;
  for (int i = 0; i < 40; ++i) perfect.add(i % 3 == 0 ? 1 : 0, i % 3 == 0 ? 1 : 0);
  o.require(metrics_from_confusion(perfect).macro_f1 == 1.0, "all-correct macro-F1 = 1");
  return o;
}

std::map<std::string, std::string> manifest_hashes(const std::filesystem::path& out) {
  std::map<std::string, std::string> hashes;
  for (const auto& stage : Pipeline::stage_names()) {
    const auto path = out / stage / "manifest.json";
    if (!std::filesystem::exists(path)) continue;
    const auto m = nlohmann::json::parse(read_file(path));
    for (const auto& [name, hash] : m.at("files").items()) hashes[stage + "/" + name] = hash.get<std::string>();
    for (const auto& [label, entry] : m.at("inputs").items()) {
      hashes[stage + "/<" + label + ">"] = entry.at("sha256").get<std::string>();
    }
    hashes[stage + "/manifest.json"] = sha256_hex(read_file(path));
  }
  return hashes;
}

Outcome reproducibility(const std::filesystem::path& work) {
  Outcome o;
  ::setenv("NO_NETWORK", "1", 1);
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"repro-a", "repro-b"}) {
    Pipeline p(config_from_json(small_run(work / name, 21)), silent);
    p.run_all();
    runs.push_back(manifest_hashes(work / name));
  }
  ::unsetenv("NO_NETWORK");
  std::size_t differing = 0;
  for (const auto& [k, v] : runs[0]) {
    const auto it = runs[1].find(k);
    if (it == runs[1].end() || it->second != v) {
      ++differing;
      o.notes.push_back("differs: " + k);
    }
  }
  o.require(runs[0].size() == runs[1].size() && differing == 0,
            std::to_string(runs[0].size()) + " artifact hashes compared, " + std::to_string(differing) + " differ");
  o.require(runs[0].size() > 40 && runs[0].count("kfold/kfold.csv") != 0, "all stages produced manifests");
  return o;
}

Outcome kfold_criterion(const std::filesystem::path& work) {
  Outcome o;
  auto cfg = default_synth_config();
  cfg.samples = 1000;
  cfg.noise_rate = 0.05;
  const auto corpus = synthesize(cfg, 606).corpus;
  const auto folds = fold_assignment(corpus.size(), 5, 607);
  std::vector<int> seen(corpus.size(), 0);
  for (const auto& f : folds) {
    for (auto i : f) ++seen[i];
  }
  o.require(folds.size() == 5 && std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }),
            "5 folds cover every sample exactly once");

  LexiconSet set;
  set.set_id = 1;
  set.words = {"pathetic"};
  GenerationConfig gen;
  gen.n = 100;
  const auto batch = generate_from_templates(set, gen);
  KfoldSetup setup;
  setup.k = 5;
  setup.target = {10, 64, 2e-5, 20000.0, 3, 8, false, true};
  setup.featurizer = {{1}, 2048, true};
  setup.shape = {32, 32};
  setup.seed = 607;
  const auto report = kfold(corpus, setup, batch);
  std::set<std::string> corpus_ids;
  for (const auto& s : corpus.samples) corpus_ids.insert(s.id);
  std::size_t eval_total = 0;
  std::size_t foreign = 0;
  std::set<std::string> eval_ids;
  for (const auto& f : report.folds) {
    eval_total += f.eval_ids.size();
    for (const auto& id : f.eval_ids) {
      foreign += corpus_ids.count(id) == 0 ? 1 : 0;
      eval_ids.insert(id);
    }
  }
  o.require(eval_total == corpus.size() && eval_ids == corpus_ids, "evaluation folds partition the corpus");
  o.require(foreign == 0, "augmented samples in evaluation folds: " + std::to_string(foreign));
  const auto lines = split_lines(kfold_csv(report));
  o.require(lines.size() >= 3 && istarts_with(lines[1], "before_augmentation,") &&
                istarts_with(lines[2], "after_augmentation,"),
            "two-row before/after layout");
  o.notes.push_back("mean macro F1 " + num(report.f1_before.mean) + " -> " + num(report.f1_after->mean));

  // The pipeline stage writes the same layout.
  const auto stage_csv = work / "repro-a/kfold/kfold.csv";
  if (std::filesystem::exists(stage_csv)) {
    const auto stage_lines = split_lines(read_file(stage_csv));
    o.require(stage_lines.size() >= 3 && stage_lines[0] == lines[0], "pipeline kfold.csv uses the same layout");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toxcg acceptance suite"};
  std::vector<std::string> only;
  bool list = false;
  app.add_option("--only", only, "Run only the named criteria");
  app.add_flag("--list", list, "List criteria and exit");
  CLI11_PARSE(app, argc, argv);

  testing::TempDir work("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-correctness", gradient_correctness},
      {"cg-identities", cg_identities},
      {"planted-concept-oracle", planted_oracle},
      {"sign-pattern", [&] { return sign_pattern(work.path()); }},
      {"cav-baseline", cav_baseline},
      {"wca-consistency", wca_consistency},
      {"lexicon-offline-fixtures", [&] { return lexicon_offline(work.path()); }},
      {"augmentation-loop", augmentation_loop},
      {"metrics-arithmetic", metrics_arithmetic},
      {"reproducibility", [&] { return reproducibility(work.path()); }},
      {"k-fold", [&] { return kfold_criterion(work.path()); }},
  };
  if (list) {
    for (const auto& [name, fn] : criteria) std::cout << name << '\n';
    return 0;
  }
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << num(seconds_since(start)) << " s)\n";
    for (const auto& note : o.notes) std::cout << "     " << note << '\n';
    std::cout.flush();
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
