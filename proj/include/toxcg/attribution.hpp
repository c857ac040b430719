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

// Concept attribution: per-sample Concept Gradients (independent and joint
// modes), the CAV baseline, and condition-sliced mean aggregates.

#ifndef TOXCG_ATTRIBUTION_HPP_
#define TOXCG_ATTRIBUTION_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "toxcg/core.hpp"
#include "toxcg/corpus.hpp"
#include "toxcg/nnet.hpp"

namespace toxcg {

enum class AttributionMethod { kCgIndependent, kCgJoint, kCav };
enum class AggregateMode { kSigned, kAbsolute };

inline std::string_view to_string(AttributionMethod m) {
  switch (m) {
    case AttributionMethod::kCgIndependent: return "cg_independent";
    case AttributionMethod::kCgJoint: return "cg_joint";
    case AttributionMethod::kCav: return "cav";
  }
  return "cg_independent";
}

inline AttributionMethod attribution_method_from_string(std::string_view s) {
  if (s == "cg_independent") return AttributionMethod::kCgIndependent;
  if (s == "cg_joint") return AttributionMethod::kCgJoint;
  if (s == "cav") return AttributionMethod::kCav;
  fail(ErrorKind::kConfig, "unknown attribution method: " + std::string(s));
}

inline std::string_view to_string(AggregateMode m) { return m == AggregateMode::kSigned ? "signed" : "absolute"; }

inline AggregateMode aggregate_mode_from_string(std::string_view s) {
  if (s == "signed") return AggregateMode::kSigned;
  if (s == "absolute") return AggregateMode::kAbsolute;
  fail(ErrorKind::kConfig, "unknown aggregate mode: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Concept Gradients
// ---------------------------------------------------------------------------

struct CgScores {
  std::vector<double> scores;
  std::vector<bool> degenerate;  // per concept: gradient row norm below eps

  bool any_degenerate() const {
    for (bool d : degenerate) {
      if (d) return true;
    }
    return false;
  }
};

/// Independent mode: each concept row is pseudo-inverted on its own,
/// score_j = (row_j . grad_f) / ||row_j||^2. Rows with norm below eps score 0
/// and are flagged.
inline CgScores cg_independent(const GradientBundle& bundle, double eps = 1e-12) {
  if (bundle.jac_g.cols() != bundle.grad_f.size()) fail(ErrorKind::kShape, "Jacobian and gradient disagree on d");
  const auto m = static_cast<std::size_t>(bundle.jac_g.rows());
  CgScores out;
  out.scores.assign(m, 0.0);
  out.degenerate.assign(m, false);
  for (std::size_t j = 0; j < m; ++j) {
    const auto row = bundle.jac_g.row(static_cast<Eigen::Index>(j));
    const double norm = row.norm();
    if (norm < eps) {
      out.degenerate[j] = true;
      continue;
    }
    out.scores[j] = row.dot(bundle.grad_f) / (norm * norm);
  }
  return out;
}

/// Moore-Penrose pseudo-inverse via SVD. Singular values below
/// relative_tolerance * sigma_max are treated as zero.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double relative_tolerance = 1e-10) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  if (!sigma.allFinite()) fail(ErrorKind::kNumeric, "SVD produced non-finite singular values");
  const double cutoff = sigma.size() > 0 ? relative_tolerance * sigma(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sigma.size());
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (sigma(k) > cutoff && sigma(k) > 0.0) inv(k) = 1.0 / sigma(k);
  }
  Eigen::MatrixXd result = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  if (!result.allFinite()) fail(ErrorKind::kNumeric, "pseudo-inverse is not finite");
  return result;
}

/// Joint mode: scores = pinv(grad g)^T-applied gradient, i.e. the
/// least-squares coefficients of grad_f in the span of the concept rows.
/// With jac_g being m x d, grad g = jac_g^T and (jac_g^T)^+ = (jac_g^+)^T.
inline std::vector<double> cg_joint(const GradientBundle& bundle, double svd_tolerance = 1e-10) {
  if (bundle.jac_g.cols() != bundle.grad_f.size()) fail(ErrorKind::kShape, "Jacobian and gradient disagree on d");
  if (bundle.jac_g.rows() == 1) {
    // One row: the pseudo-inverse is row^T / ||row||^2 in closed form.
    const auto row = bundle.jac_g.row(0);
    const double norm = row.norm();
    return {norm > 0.0 ? row.dot(bundle.grad_f) / (norm * norm) : 0.0};
  }
  const Eigen::MatrixXd pinv = pseudo_inverse(bundle.jac_g, svd_tolerance);  // d x m
  const Eigen::VectorXd scores = pinv.transpose() * bundle.grad_f;
  return {scores.data(), scores.data() + scores.size()};
}

// ---------------------------------------------------------------------------
// CAV baseline
// ---------------------------------------------------------------------------

struct CavVector {
  std::size_t concept_index = 0;
  Eigen::VectorXd v;            // representation-space direction
  double probe_accuracy = 0.0;  // on the held-out split
};

struct ProbeConfig {
  double l2 = 1e-3;
  int max_iterations = 100;
  double holdout_fraction = 0.2;
};

/// Logistic probe on representations for one concept, fitted by Newton's
/// method on standardized features with an L2 penalty. v is the weight
/// vector mapped back to the raw representation space.
inline CavVector train_cav(const std::vector<std::pair<Eigen::VectorXd, int>>& data, std::size_t concept_index,
                           std::uint64_t seed, const ProbeConfig& config = {}) {
  std::size_t positives = 0;
  for (const auto& [x, y] : data) positives += y ? 1 : 0;
  if (positives == 0 || positives == data.size()) {
    fail(ErrorKind::kDegenerate, "CAV probe for concept " + std::to_string(concept_index) + " needs both classes");
  }
  const auto d = data.front().first.size();
  for (const auto& [x, y] : data) {
    if (x.size() != d) fail(ErrorKind::kShape, "CAV probe representations differ in length");
  }

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  auto n_hold = static_cast<std::size_t>(std::llround(config.holdout_fraction * static_cast<double>(data.size())));
  n_hold = std::clamp<std::size_t>(n_hold, 1, data.size() - 1);
  const std::size_t n_fit = data.size() - n_hold;

  std::size_t fit_pos = 0;
  for (std::size_t k = 0; k < n_fit; ++k) fit_pos += data[order[k]].second ? 1 : 0;
  if (fit_pos == 0 || fit_pos == n_fit) {
    fail(ErrorKind::kDegenerate, "CAV probe fitting split lost a class for concept " + std::to_string(concept_index));
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 0; k < n_fit; ++k) mean += data[order[k]].first;
  mean /= static_cast<double>(n_fit);
  Eigen::VectorXd stddev = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 0; k < n_fit; ++k) stddev += (data[order[k]].first - mean).array().square().matrix();
  stddev = (stddev / static_cast<double>(n_fit)).array().sqrt().matrix();
  for (Eigen::Index c = 0; c < d; ++c) {
    if (stddev(c) < 1e-12) stddev(c) = 1.0;
  }

  // Design matrix with a trailing intercept column.
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n_fit), d + 1);
  Eigen::VectorXd labels(static_cast<Eigen::Index>(n_fit));
  for (std::size_t k = 0; k < n_fit; ++k) {
    const auto& [x, y] = data[order[k]];
    design.row(static_cast<Eigen::Index>(k)).head(d) = ((x - mean).array() / stddev.array()).matrix().transpose();
    design(static_cast<Eigen::Index>(k), d) = 1.0;
    labels(static_cast<Eigen::Index>(k)) = y;
  }
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, config.l2);
  penalty(d) = 0.0;
  const double n = static_cast<double>(n_fit);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  for (int it = 0; it < config.max_iterations; ++it) {
    const Eigen::VectorXd logits = design * w;
    Eigen::VectorXd p(logits.size());
    Eigen::VectorXd curvature(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      p(i) = sigmoid(logits(i));
      curvature(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad = design.transpose() * (p - labels) / n + penalty.cwiseProduct(w);
    Eigen::MatrixXd hessian = design.transpose() * curvature.asDiagonal() * design / n;
    hessian.diagonal() += penalty + Eigen::VectorXd::Constant(d + 1, 1e-12);
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);
    if (!step.allFinite()) fail(ErrorKind::kNumeric, "CAV probe Newton step is not finite");
    w -= step;
    if (step.norm() < 1e-10 * (1.0 + w.norm())) break;
  }

  CavVector cav;
  cav.concept_index = concept_index;
  cav.v = (w.head(d).array() / stddev.array()).matrix();
  if (!(cav.v.norm() > 0.0)) fail(ErrorKind::kDegenerate, "CAV probe produced a zero direction");
  std::size_t correct = 0;
  for (std::size_t k = n_fit; k < data.size(); ++k) {
    const auto& [x, y] = data[order[k]];
    const Eigen::VectorXd standardized = ((x - mean).array() / stddev.array()).matrix();
    const int predicted = sigmoid(w.head(d).dot(standardized) + w(d)) > 0.5 ? 1 : 0;
    correct += predicted == y ? 1 : 0;
  }
  cav.probe_accuracy = static_cast<double>(correct) / static_cast<double>(n_hold);
  return cav;
}

/// grad_f . (v / ||v||)
inline double cav_score(const Eigen::VectorXd& grad_f, const CavVector& cav) {
  if (grad_f.size() != cav.v.size()) fail(ErrorKind::kShape, "gradient and CAV differ in length");
  const double norm = cav.v.norm();
  if (!(norm > 0.0)) fail(ErrorKind::kDegenerate, "CAV has zero norm");
  return grad_f.dot(cav.v) / norm;
}

// ---------------------------------------------------------------------------
// Records, slices, aggregates
// ---------------------------------------------------------------------------

struct AttributionRecord {
  std::string sample_id;
  AttributionMethod method = AttributionMethod::kCgIndependent;
  std::vector<double> scores;
  int true_label = 0;
  int predicted_label = 0;
  bool degenerate = false;
};

/// Four classification conditions. The misclassified slices follow the
/// true label: kMisNonToxic is true 0 predicted 1, kMisToxic is true 1
/// predicted 0.
enum class Condition { kCorrectNonToxic = 0, kMisNonToxic = 1, kCorrectToxic = 2, kMisToxic = 3 };
inline constexpr std::array<Condition, 4> kConditions = {Condition::kCorrectNonToxic, Condition::kMisNonToxic,
                                                         Condition::kCorrectToxic, Condition::kMisToxic};

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::kCorrectNonToxic: return "correct_nontoxic";
    case Condition::kMisNonToxic: return "mis_nontoxic_true0_pred1";
    case Condition::kCorrectToxic: return "correct_toxic";
    case Condition::kMisToxic: return "mis_toxic_true1_pred0";
  }
  return "";
}

inline Condition condition_of(int true_label, int predicted_label) {
  if (true_label == 0) return predicted_label == 0 ? Condition::kCorrectNonToxic : Condition::kMisNonToxic;
  return predicted_label == 1 ? Condition::kCorrectToxic : Condition::kMisToxic;
}

struct ConditionSlice {
  Condition condition = Condition::kCorrectNonToxic;
  std::vector<std::string> sample_ids;
};

using ConditionSlices = std::array<ConditionSlice, 4>;

inline ConditionSlices condition_slices(const Corpus& corpus, std::span<const int> predictions) {
  if (predictions.size() != corpus.size()) {
    fail(ErrorKind::kPairing, "have " + std::to_string(predictions.size()) + " predictions for " +
                                  std::to_string(corpus.size()) + " samples");
  }
  ConditionSlices slices;
  for (std::size_t c = 0; c < 4; ++c) slices[c].condition = kConditions[c];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto c = condition_of(corpus.samples[i].label, predictions[i]);
    slices[static_cast<std::size_t>(c)].sample_ids.push_back(corpus.samples[i].id);
  }
  return slices;
}

struct AggregateReport {
  AttributionMethod method = AttributionMethod::kCgIndependent;
  AggregateMode mode = AggregateMode::kSigned;
  std::vector<std::string> concepts;
  // table[condition][concept]; nullopt marks an empty slice.
  std::array<std::vector<std::optional<double>>, 4> table;
  std::array<std::size_t, 4> counts{};
};

namespace detail {

inline std::unordered_map<std::string, const AttributionRecord*> index_records(
    const std::vector<AttributionRecord>& records) {
  std::unordered_map<std::string, const AttributionRecord*> by_id;
  by_id.reserve(records.size());
  for (const auto& r : records) by_id.emplace(r.sample_id, &r);
  return by_id;
}

// Mean of scores (or |scores|) over the given ids; nullopt when empty.
inline std::vector<std::optional<double>> mean_scores(
    const std::unordered_map<std::string, const AttributionRecord*>& by_id, const std::vector<std::string>& ids,
    std::size_t m, AggregateMode mode) {
  if (ids.empty()) return std::vector<std::optional<double>>(m, std::nullopt);
  std::vector<double> sums(m, 0.0);
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorKind::kPairing, "no attribution record for sample " + id);
    const auto& scores = it->second->scores;
    if (scores.size() != m) fail(ErrorKind::kShape, "record for " + id + " has the wrong concept count");
    for (std::size_t j = 0; j < m; ++j) sums[j] += mode == AggregateMode::kAbsolute ? std::abs(scores[j]) : scores[j];
  }
  std::vector<std::optional<double>> out(m);
  for (std::size_t j = 0; j < m; ++j) out[j] = sums[j] / static_cast<double>(ids.size());
  return out;
}

}  // namespace detail

/// Per-condition, per-concept mean of the scores (signed) or of their
/// absolute values (absolute). An empty slice yields "not available".
inline AggregateReport mean_cg(const std::vector<AttributionRecord>& records, const ConditionSlices& slices,
                               AggregateMode mode, const std::vector<std::string>& concepts) {
  AggregateReport report;
  report.mode = mode;
  report.concepts = concepts;
  if (!records.empty()) report.method = records.front().method;
  const auto by_id = detail::index_records(records);
  for (std::size_t c = 0; c < 4; ++c) {
    report.counts[c] = slices[c].sample_ids.size();
    report.table[c] = detail::mean_scores(by_id, slices[c].sample_ids, concepts.size(), mode);
  }
  return report;
}

/// Rows are concepts, columns the four conditions, with a counts footer.
inline std::string aggregate_csv(const AggregateReport& report) {
  std::string out = "concept";
  for (auto c : kConditions) out += "," + std::string(to_string(c));
  out += "\n";
  for (std::size_t j = 0; j < report.concepts.size(); ++j) {
    out += csv_field(report.concepts[j]);
    for (std::size_t c = 0; c < 4; ++c) {
      const auto& cell = report.table[c][j];
      out += "," + (cell ? format_double(*cell) : std::string("NA"));
    }
    out += "\n";
  }
  out += "count";
  for (std::size_t c = 0; c < 4; ++c) out += "," + std::to_string(report.counts[c]);
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-level driver
// ---------------------------------------------------------------------------

/// Which target logit is differentiated: the predicted class's logit (s for
/// predicted toxic, -s for predicted non-toxic), or always the toxic logit.
enum class AttributionOutput { kPredicted, kToxic };

inline AttributionOutput attribution_output_from_string(std::string_view s) {
  if (s == "predicted") return AttributionOutput::kPredicted;
  if (s == "toxic") return AttributionOutput::kToxic;
  fail(ErrorKind::kConfig, "unknown attribution output: " + std::string(s));
}

struct AttributionOptions {
  std::vector<AttributionMethod> methods{AttributionMethod::kCgIndependent};
  AttributionOutput output = AttributionOutput::kPredicted;
  double degeneracy_eps = 1e-12;
  double svd_tolerance = 1e-10;
};

struct AttributionRun {
  std::vector<int> predictions;
  // One record list per requested method, in options.methods order.
  std::vector<std::pair<AttributionMethod, std::vector<AttributionRecord>>> records;

  const std::vector<AttributionRecord>& for_method(AttributionMethod m) const {
    for (const auto& [method, recs] : records) {
      if (method == m) return recs;
    }
    fail(ErrorKind::kConfig, "attribution run has no records for " + std::string(to_string(m)));
  }
};

/// Trains one CAV per concept on the representations of a corpus.
inline std::vector<CavVector> train_cavs(const Model& model, const Corpus& corpus, std::uint64_t seed,
                                         const ProbeConfig& config = {}) {
  std::vector<Eigen::VectorXd> reps;
  reps.reserve(corpus.size());
  for (const auto& s : corpus.samples) reps.push_back(model.represent(s.text));
  std::vector<CavVector> cavs;
  for (std::size_t j = 0; j < corpus.schema.size(); ++j) {
    std::vector<std::pair<Eigen::VectorXd, int>> data;
    data.reserve(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) data.emplace_back(reps[i], corpus.samples[i].concept_labels[j]);
    cavs.push_back(train_cav(data, j, derive_seed(seed, "cav-" + corpus.schema.name(j)), config));
  }
  return cavs;
}

/// Per-sample attribution over a corpus. Each sample is scored
/// independently, so results do not depend on corpus order.
inline AttributionRun attribute_corpus(const Model& target, const Model& concept_model, const Corpus& corpus,
                                       const AttributionOptions& options, const std::vector<CavVector>& cavs = {}) {
  AttributionRun run;
  for (auto m : options.methods) {
    if (m == AttributionMethod::kCav && cavs.size() != corpus.schema.size()) {
      fail(ErrorKind::kConfig, "CAV attribution needs one CAV per concept");
    }
    run.records.emplace_back(m, std::vector<AttributionRecord>{});
  }
  for (const auto& s : corpus.samples) {
    const Eigen::VectorXd x = target.represent(s.text);
    const int predicted = decide(sigmoid(target_logit(target.params, x)));
    run.predictions.push_back(predicted);
    const OutputClass output = options.output == AttributionOutput::kToxic || predicted == 1 ? OutputClass::kToxic
                                                                                           : OutputClass::kNonToxic;
    const GradientBundle bundle = gradients(target.params, concept_model.params, x, s.id, output);
    for (auto& [method, recs] : run.records) {
      AttributionRecord r;
      r.sample_id = s.id;
      r.method = method;
      r.true_label = s.label;
      r.predicted_label = predicted;
      switch (method) {
        case AttributionMethod::kCgIndependent: {
          auto cg = cg_independent(bundle, options.degeneracy_eps);
          r.scores = std::move(cg.scores);
          r.degenerate = cg.any_degenerate();
          break;
        }
        case AttributionMethod::kCgJoint:
          r.scores = cg_joint(bundle, options.svd_tolerance);
          break;
        case AttributionMethod::kCav:
          for (const auto& cav : cavs) r.scores.push_back(cav_score(bundle.grad_f, cav));
          break;
      }
      for (double v : r.scores) {
        if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "non-finite attribution score for sample " + s.id);
      }
      recs.push_back(std::move(r));
    }
  }
  return run;
}

inline std::string records_to_jsonl(const std::vector<AttributionRecord>& records,
                                    const std::vector<std::string>& concepts) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["sample_id"] = r.sample_id;
    j["method"] = std::string(to_string(r.method));
    nlohmann::ordered_json scores = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < r.scores.size() && k < concepts.size(); ++k) scores[concepts[k]] = r.scores[k];
    j["scores"] = scores;
    j["true_label"] = r.true_label;
    j["predicted_label"] = r.predicted_label;
    j["degenerate"] = r.degenerate;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<AttributionRecord> records_from_jsonl(std::string_view text,
                                                         const std::vector<std::string>& concepts) {
  std::vector<AttributionRecord> out;
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    AttributionRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.method = attribution_method_from_string(j.at("method").get<std::string>());
    for (const auto& name : concepts) r.scores.push_back(j.at("scores").at(name).get<double>());
    r.true_label = j.at("true_label").get<int>();
    r.predicted_label = j.at("predicted_label").get<int>();
    r.degenerate = j.value("degenerate", false);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace toxcg

#endif  // TOXCG_ATTRIBUTION_HPP_
