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

// Tabular outputs: histograms, word frequencies, comparative tables,
// k-fold summaries and artifact manifests.

#ifndef TOXCG_REPORT_HPP_
#define TOXCG_REPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "toxcg/attribution.hpp"
#include "toxcg/augment.hpp"
#include "toxcg/core.hpp"
#include "toxcg/corpus.hpp"
#include "toxcg/lexicon.hpp"
#include "toxcg/metrics.hpp"
#include "toxcg/nnet.hpp"

namespace toxcg {

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

struct HistogramSpec {
  std::size_t bin_count = 30;
  std::optional<std::pair<double, double>> range;  // nullopt = auto
  AggregateMode mode = AggregateMode::kSigned;

  void validate() const {
    if (bin_count < 1) fail(ErrorKind::kConfig, "histogram bin_count must be >= 1");
    if (range && !(range->first < range->second)) fail(ErrorKind::kConfig, "histogram range needs lo < hi");
  }
};

struct Bin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Bins are [lo, hi) except the last, which is closed. With a fixed range,
/// values outside it are counted in the nearest edge bin. An auto range with
/// max == min is widened by 0.5 on both sides.
inline std::vector<Bin> histogram(const std::vector<double>& scores, const HistogramSpec& spec) {
  spec.validate();
  if (scores.empty()) fail(ErrorKind::kEmptyInput, "histogram of no scores");
  std::vector<double> values;
  values.reserve(scores.size());
  for (double v : scores) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "histogram input is not finite");
    values.push_back(spec.mode == AggregateMode::kAbsolute ? std::abs(v) : v);
  }
  double lo;
  double hi;
  if (spec.range) {
    std::tie(lo, hi) = *spec.range;
  } else {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  const std::size_t k = spec.bin_count;
  const double width = (hi - lo) / static_cast<double>(k);
  std::vector<Bin> bins(k);
  for (std::size_t b = 0; b < k; ++b) {
    bins[b].lo = lo + width * static_cast<double>(b);
    bins[b].hi = b + 1 == k ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    std::size_t b;
    if (v <= lo) {
      b = 0;
    } else if (v >= hi) {
      b = k - 1;
    } else {
      b = std::min(static_cast<std::size_t>((v - lo) / width), k - 1);
      // Guard against rounding at interior edges.
      while (b > 0 && v < bins[b].lo) --b;
      while (b + 1 < k && v >= bins[b].hi) ++b;
    }
    ++bins[b].count;
  }
  return bins;
}

inline std::string histogram_csv(const std::vector<Bin>& bins) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (const auto& b : bins) out += format_double(b.lo) + "," + format_double(b.hi) + "," + std::to_string(b.count) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Word frequencies
// ---------------------------------------------------------------------------

using FrequencyTable = std::vector<std::pair<std::string, std::size_t>>;

/// Token occurrences of the set's words across the corpus, sorted by count
/// descending then word. Absent words are omitted.
inline FrequencyTable word_frequencies(const Corpus& corpus, const LexiconSet& set) {
  if (set.words.empty()) fail(ErrorKind::kEmptyInput, "word frequencies of an empty lexicon set");
  std::map<std::string, std::size_t> counts;
  for (const auto& w : set.words) counts.emplace(ascii_lower(w), 0);
  for (const auto& s : corpus.samples) {
    for (const auto& t : tokenize(s.text, true)) {
      const auto it = counts.find(t);
      if (it != counts.end()) ++it->second;
    }
  }
  FrequencyTable table;
  for (const auto& [w, c] : counts) {
    if (c > 0) table.emplace_back(w, c);
  }
  std::stable_sort(table.begin(), table.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return table;
}

inline std::string frequency_csv(const FrequencyTable& table) {
  std::string out = "word,count\n";
  for (const auto& [w, c] : table) out += csv_field(w) + "," + std::to_string(c) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Comparative table
// ---------------------------------------------------------------------------

/// One section per report, each headed by "# method=<m> mode=<mode>".
inline std::string comparative_table(const std::vector<AggregateReport>& reports) {
  if (reports.empty()) fail(ErrorKind::kEmptyInput, "comparative table of no reports");
  std::string out;
  for (std::size_t r = 0; r < reports.size(); ++r) {
    if (reports[r].concepts != reports.front().concepts) {
      fail(ErrorKind::kSchema, "cannot compose reports over different concept schemas");
    }
    if (r > 0) out += "\n";
    out += "# method=" + std::string(to_string(reports[r].method)) + " mode=" + std::string(to_string(reports[r].mode)) +
           "\n";
    out += aggregate_csv(reports[r]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// k-fold
// ---------------------------------------------------------------------------

struct KfoldSetup {
  std::size_t k = 5;
  TrainConfig target;
  Featurizer featurizer;
  ModelShape shape;
  double val_fraction = 0.1;  // of each training portion, for early stopping
  std::uint64_t seed = 0;
};

struct FoldResult {
  std::vector<std::string> eval_ids;
  std::size_t train_size = 0;
  BinaryMetrics before;
  std::optional<BinaryMetrics> after;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

struct KfoldReport {
  std::size_t k = 0;
  std::vector<FoldResult> folds;
  Summary f1_before, accuracy_before;
  std::optional<Summary> f1_after, accuracy_after;
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

/// Seeded fold assignment: shuffled positions cut into k contiguous runs,
/// the first n % k runs one longer.
inline std::vector<std::vector<std::size_t>> fold_assignment(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::kConfig, "k-fold needs k >= 2");
  if (k > n) fail(ErrorKind::kSizing, "k-fold needs at least k samples (k=" + std::to_string(k) + ", n=" +
                                          std::to_string(n) + ")");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "kfold"));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

/// Per fold: evaluate on the fold, train on the rest (minus an early-stopping
/// carve-out). With a batch, its accepted samples join every fold's training
/// portion only.
inline KfoldReport kfold(const Corpus& corpus, const KfoldSetup& setup,
                         const std::optional<AugmentationBatch>& batch = std::nullopt) {
  const auto folds = fold_assignment(corpus.size(), setup.k, setup.seed);
  KfoldReport report;
  report.k = setup.k;
  std::vector<double> f1_before, acc_before, f1_after, acc_after;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<bool> in_fold(corpus.size(), false);
    for (auto i : folds[f]) in_fold[i] = true;
    Corpus eval{corpus.schema, {}, SplitTag::kTest, corpus.binarized};
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (in_fold[i]) {
        eval.samples.push_back(corpus.samples[i]);
      } else {
        rest.push_back(i);
      }
    }
    Rng rng(derive_seed(setup.seed, "kfold-val-" + std::to_string(f)));
    rng.shuffle(rest);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(setup.val_fraction * static_cast<double>(rest.size()))));
    if (n_val >= rest.size()) fail(ErrorKind::kSizing, "k-fold training portion too small for a validation carve-out");
    std::sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::sort(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    Corpus val{corpus.schema, {}, SplitTag::kVal, corpus.binarized};
    Corpus train{corpus.schema, {}, SplitTag::kTrain, corpus.binarized};
    for (std::size_t r = 0; r < rest.size(); ++r) {
      (r < n_val ? val : train).samples.push_back(corpus.samples[rest[r]]);
    }

    FoldResult result;
    for (const auto& s : eval.samples) result.eval_ids.push_back(s.id);
    result.train_size = train.size();
    TrainConfig config = setup.target;
    config.seed = derive_seed(setup.target.seed, "fold-" + std::to_string(f));
    result.before = evaluate_target(train_target(train, val, config, setup.featurizer, setup.shape).model, eval);
    f1_before.push_back(result.before.macro_f1);
    acc_before.push_back(result.before.accuracy);
    if (batch) {
      const Corpus merged = merge(train, *batch);
      result.after = evaluate_target(train_target(merged, val, config, setup.featurizer, setup.shape).model, eval);
      f1_after.push_back(result.after->macro_f1);
      acc_after.push_back(result.after->accuracy);
    }
    report.folds.push_back(std::move(result));
  }
  report.f1_before = summarize(f1_before);
  report.accuracy_before = summarize(acc_before);
  if (batch) {
    report.f1_after = summarize(f1_after);
    report.accuracy_after = summarize(acc_after);
  }
  return report;
}

/// Two-row before/after layout (one row without a batch).
inline std::string kfold_csv(const KfoldReport& r) {
  std::string out = "stage,mean_macro_f1,std_macro_f1,mean_accuracy,std_accuracy\n";
  out += "before_augmentation," + format_double(r.f1_before.mean) + "," + format_double(r.f1_before.stddev) + "," +
         format_double(r.accuracy_before.mean) + "," + format_double(r.accuracy_before.stddev) + "\n";
  if (r.f1_after) {
    out += "after_augmentation," + format_double(r.f1_after->mean) + "," + format_double(r.f1_after->stddev) + "," +
           format_double(r.accuracy_after->mean) + "," + format_double(r.accuracy_after->stddev) + "\n";
  }
  return out;
}

inline std::string kfold_folds_csv(const KfoldReport& r) {
  std::string out = "fold,eval_size,train_size,before_macro_f1,before_accuracy,after_macro_f1,after_accuracy\n";
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    const auto& fr = r.folds[f];
    out += std::to_string(f) + "," + std::to_string(fr.eval_ids.size()) + "," + std::to_string(fr.train_size) + "," +
           format_double(fr.before.macro_f1) + "," + format_double(fr.before.accuracy) + "," +
           (fr.after ? format_double(fr.after->macro_f1) : "NA") + "," +
           (fr.after ? format_double(fr.after->accuracy) : "NA") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

/// Writes a stage's files under one directory and records their hashes.
/// Nothing time- or host-dependent goes into the manifest.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, std::string stage) : dir_(std::move(dir)), stage_(std::move(stage)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path write(const std::string& name, std::string_view content) {
    const auto path = dir_ / name;
    write_file(path, content);
    files_[name] = sha256_hex(content);
    return path;
  }

  void add_input(const std::string& label, const std::filesystem::path& path) {
    inputs_[label] = {path.generic_string(), sha256_file(path)};
  }

  /// Records the path relative to `base`.
  void add_input(const std::string& label, const std::filesystem::path& path, const std::filesystem::path& base) {
    inputs_[label] = {std::filesystem::relative(path, base).generic_string(), sha256_file(path)};
  }

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_config(nlohmann::ordered_json config) { config_ = std::move(config); }
  void set_defaults(nlohmann::ordered_json defaults) { defaults_ = std::move(defaults); }

  nlohmann::ordered_json manifest() const {
    nlohmann::ordered_json j;
    j["stage"] = stage_;
    j["tool"] = "toxcg";
    j["tool_version"] = std::string(kVersion);
    j["seed"] = seed_;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    for (const auto& [label, entry] : inputs_) inputs[label] = {{"path", entry.first}, {"sha256", entry.second}};
    j["inputs"] = inputs;
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const auto& [name, hash] : files_) files[name] = hash;
    j["files"] = files;
    if (!config_.is_null()) j["config"] = config_;
    if (!defaults_.is_null()) j["defaults"] = defaults_;
    return j;
  }

  std::filesystem::path finish() const {
    const auto path = dir_ / "manifest.json";
    write_file(path, manifest().dump(2) + "\n");
    return path;
  }

 private:
  std::filesystem::path dir_;
  std::string stage_;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> files_;
  std::map<std::string, std::pair<std::string, std::string>> inputs_;
  nlohmann::ordered_json config_;
  nlohmann::ordered_json defaults_;
};

}  // namespace toxcg

#endif  // TOXCG_REPORT_HPP_
