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

#ifndef TOXCG_METRICS_HPP_
#define TOXCG_METRICS_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxcg/core.hpp"

namespace toxcg {

/// 2x2 confusion matrix. Rows are actual (negative, positive), columns are
/// predicted (negative, positive).
struct Confusion {
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tp = 0;

  std::int64_t total() const { return tn + fp + fn + tp; }
  void add(int actual, int predicted) {
    if (actual == 0) {
      (predicted == 0 ? tn : fp) += 1;
    } else {
      (predicted == 0 ? fn : tp) += 1;
    }
  }
  bool operator==(const Confusion&) const = default;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct BinaryMetrics {
  Confusion confusion;
  double accuracy = 0.0;
  std::array<ClassScores, 2> per_class{};  // index 0 = negative, 1 = positive
  double macro_f1 = 0.0;
  double loss = 0.0;  // mean unweighted BCE, when computed from probabilities
};

namespace detail {

// A class that never occurs in either the labels or the predictions has
// nothing to get wrong; its precision/recall/F1 are reported as 1.
inline ClassScores class_scores(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  ClassScores s;
  s.support = tp + fn;
  if (tp + fp + fn == 0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace detail

inline BinaryMetrics metrics_from_confusion(const Confusion& c) {
  if (c.total() == 0) fail(ErrorKind::kEmptyInput, "metrics of an empty confusion matrix");
  BinaryMetrics m;
  m.confusion = c;
  m.accuracy = static_cast<double>(c.tn + c.tp) / static_cast<double>(c.total());
  // Negative class: its "true positives" are the true negatives.
  m.per_class[0] = detail::class_scores(c.tn, c.fn, c.fp);
  m.per_class[1] = detail::class_scores(c.tp, c.fp, c.fn);
  m.macro_f1 = 0.5 * (m.per_class[0].f1 + m.per_class[1].f1);
  return m;
}

/// Per-concept metrics of the multi-label concept head.
struct ConceptMetrics {
  std::vector<std::string> names;
  std::vector<BinaryMetrics> per_concept;
  double mean_accuracy = 0.0;
  double macro_f1 = 0.0;  // mean over concepts of the positive-class F1
  double loss = 0.0;
};

inline nlohmann::ordered_json to_json(const Confusion& c) {
  return {{"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}, {"tp", c.tp}};
}

inline nlohmann::ordered_json to_json(const BinaryMetrics& m) {
  nlohmann::ordered_json j;
  j["confusion"] = to_json(m.confusion);
  j["accuracy"] = m.accuracy;
  j["macro_f1"] = m.macro_f1;
  j["loss"] = m.loss;
  for (int c = 0; c < 2; ++c) {
    j[c == 0 ? "negative" : "positive"] = {{"precision", m.per_class[c].precision},
                                           {"recall", m.per_class[c].recall},
                                           {"f1", m.per_class[c].f1},
                                           {"support", m.per_class[c].support}};
  }
  return j;
}

inline nlohmann::ordered_json to_json(const ConceptMetrics& m) {
  nlohmann::ordered_json j;
  j["mean_accuracy"] = m.mean_accuracy;
  j["macro_f1"] = m.macro_f1;
  j["loss"] = m.loss;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < m.names.size(); ++k) per[m.names[k]] = to_json(m.per_concept[k]);
  j["concepts"] = per;
  return j;
}

/// Table-3 style: one row per metric.
inline std::string metrics_csv(const BinaryMetrics& m) {
  std::string out = "metric,value\n";
  out += "loss," + format_double(m.loss) + "\n";
  out += "accuracy," + format_double(m.accuracy) + "\n";
  out += "macro_f1," + format_double(m.macro_f1) + "\n";
  out += "precision_negative," + format_double(m.per_class[0].precision) + "\n";
  out += "recall_negative," + format_double(m.per_class[0].recall) + "\n";
  out += "f1_negative," + format_double(m.per_class[0].f1) + "\n";
  out += "precision_positive," + format_double(m.per_class[1].precision) + "\n";
  out += "recall_positive," + format_double(m.per_class[1].recall) + "\n";
  out += "f1_positive," + format_double(m.per_class[1].f1) + "\n";
  return out;
}

/// Table-4 style: one row per concept with precision/recall/F1 of the
/// positive class.
inline std::string concept_metrics_csv(const ConceptMetrics& m) {
  std::string out = "concept,precision,recall,f1,accuracy,tn,fp,fn,tp\n";
  for (std::size_t k = 0; k < m.names.size(); ++k) {
    const auto& b = m.per_concept[k];
    out += csv_field(m.names[k]) + "," + format_double(b.per_class[1].precision) + "," +
           format_double(b.per_class[1].recall) + "," + format_double(b.per_class[1].f1) + "," +
           format_double(b.accuracy) + "," + std::to_string(b.confusion.tn) + "," +
           std::to_string(b.confusion.fp) + "," + std::to_string(b.confusion.fn) + "," +
           std::to_string(b.confusion.tp) + "\n";
  }
  return out;
}

/// Confusion matrix in the "Predicted: Negative / Predicted: Positive" layout.
inline std::string confusion_csv(const Confusion& c) {
  return "actual,predicted_negative,predicted_positive\n"
         "negative," + std::to_string(c.tn) + "," + std::to_string(c.fp) + "\n"
         "positive," + std::to_string(c.fn) + "," + std::to_string(c.tp) + "\n";
}

}  // namespace toxcg

#endif  // TOXCG_METRICS_HPP_
