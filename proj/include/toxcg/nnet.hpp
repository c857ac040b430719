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

// A small differentiable text classifier with hand-written backprop.
//
//   h = L2-normalized hashed n-gram counts          (length d_in)
//   x = embed^T h                                   (length d, the shared representation)
//   z = tanh(encoder_w x + encoder_b)               (length h)
//   target logit   s = target_w . z + target_b      (f)
//   concept logits c = concept_w z + concept_b      (g, length m)
//
// All attribution is taken with respect to x.

#ifndef TOXCG_NNET_HPP_
#define TOXCG_NNET_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "toxcg/core.hpp"
#include "toxcg/corpus.hpp"
#include "toxcg/metrics.hpp"

namespace toxcg {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;  // sorted by bucket

// ---------------------------------------------------------------------------
// Featurizer
// ---------------------------------------------------------------------------

struct Featurizer {
  std::vector<int> ngram_orders{1, 2};
  std::size_t hash_dim = 4096;
  bool lowercase = true;

  void validate() const {
    if (hash_dim == 0 || (hash_dim & (hash_dim - 1)) != 0) {
      fail(ErrorKind::kConfig, "hash_dim must be a power of two");
    }
    if (ngram_orders.empty()) fail(ErrorKind::kConfig, "at least one n-gram order required");
    for (int n : ngram_orders) {
      if (n < 1) fail(ErrorKind::kConfig, "n-gram orders must be >= 1");
    }
  }

  std::uint32_t bucket(std::string_view ngram) const {
    return static_cast<std::uint32_t>(fnv1a64(ngram) & (hash_dim - 1));
  }

  /// Hashed n-gram counts, L2-normalized. N-gram keys are tokens joined by a
  /// single space.
  // Raw n-gram counts per bucket, before normalization.
  SparseFeatures counts(std::string_view text) const {
    const auto tokens = tokenize(text, lowercase);
    if (tokens.empty()) fail(ErrorKind::kEmptyInput, "text has no tokens");
    std::vector<std::pair<std::uint32_t, double>> raw;
    for (int n : ngram_orders) {
      const auto order = static_cast<std::size_t>(n);
      if (tokens.size() < order) continue;
      for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < order; ++k) {
          key.push_back(' ');
          key += tokens[i + k];
        }
        raw.emplace_back(bucket(key), 1.0);
      }
    }
    std::sort(raw.begin(), raw.end());
    SparseFeatures merged;
    for (const auto& [b, v] : raw) {
      if (!merged.empty() && merged.back().first == b) {
        merged.back().second += v;
      } else {
        merged.emplace_back(b, v);
      }
    }
    return merged;
  }

  SparseFeatures features(std::string_view text) const {
    SparseFeatures merged = counts(text);
    double norm = 0.0;
    for (const auto& [b, v] : merged) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& [b, v] : merged) v /= norm;
    return merged;
  }

  bool operator==(const Featurizer&) const = default;
};

/// x = embed^T h for a sparse h.
inline Eigen::VectorXd project(const SparseFeatures& h, const RowMatrix& embed) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(embed.cols());
  for (const auto& [b, v] : h) x.noalias() += v * embed.row(b).transpose();
  return x;
}

/// The representation x of a text: hashed features projected by embed.
inline Eigen::VectorXd featurize(std::string_view text, const Featurizer& featurizer,
                                 const RowMatrix& embed) {
  if (embed.rows() != static_cast<Eigen::Index>(featurizer.hash_dim)) {
    fail(ErrorKind::kShape, "embed rows do not match hash_dim");
  }
  return project(featurizer.features(text), embed);
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ModelParams {
  RowMatrix embed;             // d_in x d
  Eigen::MatrixXd encoder_w;   // h x d
  Eigen::VectorXd encoder_b;   // h
  Eigen::VectorXd target_w;    // h
  double target_b = 0.0;
  Eigen::MatrixXd concept_w;   // m x h
  Eigen::VectorXd concept_b;   // m

  Eigen::Index input_dim() const { return embed.rows(); }
  Eigen::Index repr_dim() const { return embed.cols(); }
  Eigen::Index hidden_dim() const { return encoder_w.rows(); }
  Eigen::Index concept_count() const { return concept_w.rows(); }

  void check_shapes() const {
    const bool ok = encoder_w.cols() == repr_dim() && encoder_b.size() == hidden_dim() &&
                    target_w.size() == hidden_dim() && concept_w.cols() == hidden_dim() &&
                    concept_b.size() == concept_count();
    if (!ok) fail(ErrorKind::kShape, "model parameter dimensions are inconsistent");
  }

  bool all_finite() const {
    return embed.allFinite() && encoder_w.allFinite() && encoder_b.allFinite() && target_w.allFinite() &&
           std::isfinite(target_b) && concept_w.allFinite() && concept_b.allFinite();
  }

  bool operator==(const ModelParams& o) const {
    return embed == o.embed && encoder_w == o.encoder_w && encoder_b == o.encoder_b &&
           target_w == o.target_w && target_b == o.target_b && concept_w == o.concept_w &&
           concept_b == o.concept_b;
  }
};

struct ModelShape {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
};

/// Parameters plus everything needed to turn text into x.
struct Model {
  Featurizer featurizer;
  std::vector<std::string> concept_names;
  ModelParams params;

  Eigen::VectorXd represent(std::string_view text) const { return featurize(text, featurizer, params.embed); }
  bool operator==(const Model&) const = default;
};

namespace detail {

inline void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double scale, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-scale, scale);
  }
}

inline void init_concept_heads(ModelParams& p, std::size_t m, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(p.hidden_dim()));
  p.concept_w.resize(static_cast<Eigen::Index>(m), p.hidden_dim());
  p.concept_b.resize(static_cast<Eigen::Index>(m));
  fill_uniform(p.concept_w, s, rng);
  fill_uniform(p.concept_b, s, rng);
}

}  // namespace detail

/// Uniform(-s, s) initialization with s = 1/sqrt(fan_in), seeded. The
/// embedding's fan-in is taken as 1 (see below).
inline Model init_model(const Featurizer& featurizer, const ModelShape& shape,
                        std::vector<std::string> concept_names, std::uint64_t seed) {
  featurizer.validate();
  if (shape.embed_dim == 0 || shape.hidden_dim == 0) fail(ErrorKind::kConfig, "model dimensions must be positive");
  if (concept_names.empty()) fail(ErrorKind::kConfig, "model needs at least one concept");
  Model model;
  model.featurizer = featurizer;
  model.concept_names = std::move(concept_names);
  const auto d_in = static_cast<Eigen::Index>(featurizer.hash_dim);
  const auto d = static_cast<Eigen::Index>(shape.embed_dim);
  const auto h = static_cast<Eigen::Index>(shape.hidden_dim);
  Rng rng(seed);
  ModelParams& p = model.params;
  p.embed.resize(d_in, d);
  // h has unit L2 norm, so the embedding sees an effective fan-in of 1.
  const double s_embed = 1.0;
  for (Eigen::Index r = 0; r < d_in; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) p.embed(r, c) = rng.uniform(-s_embed, s_embed);
  }
  const double s_enc = 1.0 / std::sqrt(static_cast<double>(d));
  p.encoder_w.resize(h, d);
  p.encoder_b.resize(h);
  detail::fill_uniform(p.encoder_w, s_enc, rng);
  detail::fill_uniform(p.encoder_b, s_enc, rng);
  const double s_head = 1.0 / std::sqrt(static_cast<double>(h));
  p.target_w.resize(h);
  detail::fill_uniform(p.target_w, s_head, rng);
  p.target_b = rng.uniform(-s_head, s_head);
  detail::init_concept_heads(p, model.concept_names.size(), rng);
  return model;
}

// ---------------------------------------------------------------------------
// Forward pass, prediction, gradients
// ---------------------------------------------------------------------------

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// Binary cross-entropy from a logit, stable for large |s|.
inline double bce_from_logit(double s, int y) {
  return std::max(s, 0.0) - s * static_cast<double>(y) + std::log1p(std::exp(-std::abs(s)));
}

/// Mean of class-weighted BCE over a batch.
inline double weighted_bce(std::span<const double> logits, std::span<const int> labels,
                           const std::array<double, 2>& weights) {
  if (logits.size() != labels.size()) fail(ErrorKind::kShape, "logit/label count mismatch");
  if (logits.empty()) fail(ErrorKind::kEmptyInput, "empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += weights[labels[i]] * bce_from_logit(logits[i], labels[i]);
  return total / static_cast<double>(logits.size());
}

inline Eigen::VectorXd hidden(const ModelParams& p, const Eigen::VectorXd& x) {
  return (p.encoder_w * x + p.encoder_b).array().tanh().matrix();
}

inline double target_logit(const ModelParams& p, const Eigen::VectorXd& x) {
  return p.target_w.dot(hidden(p, x)) + p.target_b;
}

inline Eigen::VectorXd concept_logits(const ModelParams& p, const Eigen::VectorXd& x) {
  return p.concept_w * hidden(p, x) + p.concept_b;
}

enum class Head { kTarget, kConcepts };

/// Sigmoid probabilities: one for the target head, m for the concept head.
inline std::vector<double> predict(const ModelParams& p, const Eigen::VectorXd& x, Head head) {
  if (x.size() != p.repr_dim()) {
    fail(ErrorKind::kShape, "representation has length " + std::to_string(x.size()) + ", model expects " +
                                std::to_string(p.repr_dim()));
  }
  if (head == Head::kTarget) return {sigmoid(target_logit(p, x))};
  const Eigen::VectorXd c = concept_logits(p, x);
  std::vector<double> out(static_cast<std::size_t>(c.size()));
  for (Eigen::Index j = 0; j < c.size(); ++j) out[static_cast<std::size_t>(j)] = sigmoid(c(j));
  return out;
}

inline int decide(double probability) { return probability > 0.5 ? 1 : 0; }

/// Which target output the attribution differentiates: the toxic logit s, or
/// the non-toxic logit -s.
enum class OutputClass { kToxic, kNonToxic };

struct GradientBundle {
  std::string sample_id;
  Eigen::VectorXd x;
  Eigen::VectorXd grad_f;   // d
  Eigen::MatrixXd jac_g;    // m x d
};

/// d(target logit)/dx, in logit space.
inline Eigen::VectorXd target_gradient(const ModelParams& p, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = hidden(p, x);
  const Eigen::VectorXd da = p.target_w.cwiseProduct((1.0 - z.array().square()).matrix());
  return p.encoder_w.transpose() * da;
}

/// Rows j = d(concept logit j)/dx.
inline Eigen::MatrixXd concept_jacobian(const ModelParams& p, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = hidden(p, x);
  const Eigen::VectorXd slope = (1.0 - z.array().square()).matrix();
  return (p.concept_w * slope.asDiagonal()) * p.encoder_w;
}

inline GradientBundle gradients(const ModelParams& target, const ModelParams& concept_model, const Eigen::VectorXd& x,
                                std::string sample_id = {}, OutputClass output = OutputClass::kToxic) {
  if (target.repr_dim() != concept_model.repr_dim() || x.size() != target.repr_dim()) {
    fail(ErrorKind::kShape, "target and concept models must share the representation dimension");
  }
  GradientBundle b;
  b.sample_id = std::move(sample_id);
  b.x = x;
  b.grad_f = target_gradient(target, x);
  if (output == OutputClass::kNonToxic) b.grad_f = -b.grad_f;
  b.jac_g = concept_jacobian(concept_model, x);
  if (!b.grad_f.allFinite() || !b.jac_g.allFinite()) {
    fail(ErrorKind::kNumeric, "non-finite gradient for sample " + b.sample_id);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 3;
  int batch_size = 64;
  double learning_rate = 2e-5;
  double lr_multiplier = 1.0;  // 2e-5 is tuned for transformer fine-tuning
  int patience = 3;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
  bool class_weighted = true;  // target head only

  double effective_rate() const { return learning_rate * lr_multiplier; }

  void validate() const {
    if (epochs < 1) fail(ErrorKind::kConfig, "epochs must be >= 1");
    if (batch_size < 1) fail(ErrorKind::kConfig, "batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !(lr_multiplier >= 0.0) || !std::isfinite(effective_rate())) {
      fail(ErrorKind::kConfig, "learning rate must be finite and non-negative");
    }
    if (patience < 1) fail(ErrorKind::kConfig, "patience must be >= 1");
  }
};

struct EpochLog {
  int epoch = 0;        // 0 = initialization
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> history;
  int best_epoch = 0;
};

namespace detail {

inline std::vector<SparseFeatures> featurize_all(const Corpus& corpus, const Featurizer& f) {
  std::vector<SparseFeatures> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus.samples) {
    try {
      out.push_back(f.features(s.text));
    } catch (const Error& e) {
      fail(e.kind(), std::string(e.what()) + " (sample " + s.id + ")");
    }
  }
  return out;
}

inline double target_loss(const ModelParams& p, const std::vector<SparseFeatures>& feats, const Corpus& corpus,
                          const std::array<double, 2>& weights) {
  if (feats.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const int y = corpus.samples[i].label;
    total += weights[y] * bce_from_logit(target_logit(p, project(feats[i], p.embed)), y);
  }
  return total / static_cast<double>(feats.size());
}

inline double concept_loss(const ModelParams& p, const std::vector<Eigen::VectorXd>& hiddens, const Corpus& corpus) {
  if (hiddens.empty()) return 0.0;
  const auto m = static_cast<std::size_t>(p.concept_count());
  double total = 0.0;
  for (std::size_t i = 0; i < hiddens.size(); ++i) {
    const Eigen::VectorXd c = p.concept_w * hiddens[i] + p.concept_b;
    for (std::size_t j = 0; j < m; ++j) {
      total += bce_from_logit(c(static_cast<Eigen::Index>(j)), corpus.samples[i].concept_labels[j]);
    }
  }
  return total / static_cast<double>(hiddens.size() * m);
}

inline void require_trainable(const Corpus& corpus, std::string_view name) {
  if (!corpus.binarized) fail(ErrorKind::kConfig, std::string(name) + " corpus must be binarized");
  if (corpus.empty()) fail(ErrorKind::kEmptyInput, std::string(name) + " corpus is empty");
}

// Early stopping bookkeeping shared by both trainers: keeps the params of
// the best validation epoch and reports when patience runs out.
class EarlyStopping {
 public:
  EarlyStopping(int patience, const ModelParams& initial, double initial_loss)
      : patience_(patience), best_(initial), best_loss_(initial_loss) {}

  bool update(int epoch, const ModelParams& current, double val_loss) {
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_ = current;
      best_epoch_ = epoch;
      waited_ = 0;
      return false;
    }
    return ++waited_ >= patience_;
  }

  const ModelParams& best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  ModelParams best_;
  double best_loss_;
  int best_epoch_ = 0;
  int waited_ = 0;
};

inline void check_loss(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    fail(ErrorKind::kNumeric, "training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch));
  }
}

}  // namespace detail

/// Accumulated gradient of the target loss over every target-path
/// parameter. Embedding rows are touched sparsely.
class TargetGradient {
 public:
  explicit TargetGradient(const ModelParams& p)
      : embed(RowMatrix::Zero(p.input_dim(), p.repr_dim())),
        encoder_w(Eigen::MatrixXd::Zero(p.hidden_dim(), p.repr_dim())),
        encoder_b(Eigen::VectorXd::Zero(p.hidden_dim())),
        target_w(Eigen::VectorXd::Zero(p.hidden_dim())),
        touched_flag_(static_cast<std::size_t>(p.input_dim()), 0) {}

  RowMatrix embed;
  Eigen::MatrixXd encoder_w;
  Eigen::VectorXd encoder_b;
  Eigen::VectorXd target_w;
  double target_b = 0.0;

  void touch(std::uint32_t b) {
    if (!touched_flag_[b]) {
      touched_flag_[b] = 1;
      touched_.push_back(b);
    }
  }

  /// p -= rate * gradient, then resets to zero.
  void apply(ModelParams& p, double rate) {
    p.target_w.noalias() -= rate * target_w;
    p.target_b -= rate * target_b;
    p.encoder_w.noalias() -= rate * encoder_w;
    p.encoder_b.noalias() -= rate * encoder_b;
    for (std::uint32_t b : touched_) {
      p.embed.row(b).noalias() -= rate * embed.row(b);
      embed.row(b).setZero();
      touched_flag_[b] = 0;
    }
    touched_.clear();
    encoder_w.setZero();
    encoder_b.setZero();
    target_w.setZero();
    target_b = 0.0;
  }

 private:
  std::vector<char> touched_flag_;
  std::vector<std::uint32_t> touched_;
};

/// Adds coef * d BCE(s, y) / d params for one sample; returns the BCE.
inline double accumulate_target_gradient(const ModelParams& p, const SparseFeatures& feats, int y, double coef,
                                         TargetGradient& g) {
  const Eigen::VectorXd x = project(feats, p.embed);
  const Eigen::VectorXd z = hidden(p, x);
  const double s = p.target_w.dot(z) + p.target_b;
  const double delta = coef * (sigmoid(s) - static_cast<double>(y));
  g.target_w.noalias() += delta * z;
  g.target_b += delta;
  const Eigen::VectorXd da = (delta * p.target_w).cwiseProduct((1.0 - z.array().square()).matrix());
  g.encoder_w.noalias() += da * x.transpose();
  g.encoder_b += da;
  const Eigen::VectorXd dx = p.encoder_w.transpose() * da;
  for (const auto& [b, v] : feats) {
    g.touch(b);
    g.embed.row(b).noalias() += v * dx.transpose();
  }
  return bce_from_logit(s, y);
}

/// Adds scale * d sum_j BCE(c_j, y_j) / d(concept head) for one hidden
/// vector; returns the summed BCE.
inline double accumulate_concept_gradient(const ModelParams& p, const Eigen::VectorXd& z, const std::vector<int>& labels,
                                          double scale, Eigen::MatrixXd& grad_w, Eigen::VectorXd& grad_b) {
  const auto m = p.concept_count();
  const Eigen::VectorXd c = p.concept_w * z + p.concept_b;
  Eigen::VectorXd delta(m);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    loss += bce_from_logit(c(j), y);
    delta(j) = (sigmoid(c(j)) - static_cast<double>(y)) * scale;
  }
  grad_w.noalias() += delta * z.transpose();
  grad_b += delta;
  return loss;
}

/// Class-weighted BCE on the toxicity label, plain mini-batch gradient
/// descent over every parameter feeding the target head. Early stopping on
/// validation loss restores the best epoch (epoch 0 = initialization).
inline TrainResult train_target(const Corpus& train, const Corpus& val, const TrainConfig& config,
                                const Featurizer& featurizer, const ModelShape& shape = {}) {
  config.validate();
  detail::require_trainable(train, "train");
  detail::require_trainable(val, "validation");
  const std::array<double, 2> weights = config.class_weighted ? class_weights(train) : std::array<double, 2>{1.0, 1.0};

  TrainResult result;
  result.model = init_model(featurizer, shape, train.schema.names(), derive_seed(config.seed, "init"));
  ModelParams& p = result.model.params;
  const auto train_feats = detail::featurize_all(train, featurizer);
  const auto val_feats = detail::featurize_all(val, featurizer);

  result.history.push_back({0, detail::target_loss(p, train_feats, train, weights),
                            detail::target_loss(p, val_feats, val, weights)});
  detail::EarlyStopping stopper(config.patience, p, result.history.back().val_loss);

  const double rate = config.effective_rate();
  TargetGradient grad(p);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffler(derive_seed(config.seed, "shuffle"));
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffler.shuffle(order);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const int y = train.samples[i].label;
        batch_loss += weights[y] * accumulate_target_gradient(p, train_feats[i], y, weights[y] * scale, grad);
      }
      detail::check_loss(batch_loss, epoch, batch_index);
      grad.apply(p, rate);
    }
    if (!p.all_finite()) detail::check_loss(std::numeric_limits<double>::quiet_NaN(), epoch, batch_index);
    const EpochLog log{epoch, detail::target_loss(p, train_feats, train, weights),
                       detail::target_loss(p, val_feats, val, weights)};
    detail::check_loss(log.val_loss, epoch, batch_index);
    result.history.push_back(log);
    if (stopper.update(epoch, p, log.val_loss)) break;
  }
  p = stopper.best();
  result.best_epoch = stopper.best_epoch();
  return result;
}

/// Concept model: a copy of the target's embed + encoder, frozen, with fresh
/// concept heads trained by multi-label BCE (one sigmoid per concept).
inline TrainResult derive_concept_model(const Model& target, const Corpus& train, const Corpus& val,
                                        const TrainConfig& config) {
  config.validate();
  if (!config.freeze_encoder) {
    fail(ErrorKind::kConfig, "derive_concept_model requires freeze_encoder = true");
  }
  detail::require_trainable(train, "train");
  detail::require_trainable(val, "validation");
  if (train.schema.size() != target.concept_names.size()) {
    fail(ErrorKind::kShape, "concept schema does not match the model's concept count");
  }

  TrainResult result;
  result.model = target;
  ModelParams& p = result.model.params;
  Rng init_rng(derive_seed(config.seed, "concept-init"));
  detail::init_concept_heads(p, target.concept_names.size(), init_rng);

  // The encoder is frozen, so hidden activations are fixed for the run.
  auto hiddens_of = [&](const Corpus& corpus) {
    const auto feats = detail::featurize_all(corpus, target.featurizer);
    std::vector<Eigen::VectorXd> out;
    out.reserve(feats.size());
    for (const auto& f : feats) out.push_back(hidden(p, project(f, p.embed)));
    return out;
  };
  const auto train_h = hiddens_of(train);
  const auto val_h = hiddens_of(val);

  result.history.push_back({0, detail::concept_loss(p, train_h, train), detail::concept_loss(p, val_h, val)});
  detail::EarlyStopping stopper(config.patience, p, result.history.back().val_loss);

  const double rate = config.effective_rate();
  const auto m = p.concept_count();
  Eigen::MatrixXd grad_w(m, p.hidden_dim());
  Eigen::VectorXd grad_b(m);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffler(derive_seed(config.seed, "concept-shuffle"));
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffler.shuffle(order);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>((end - start) * static_cast<std::size_t>(m));
      grad_w.setZero();
      grad_b.setZero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        batch_loss += accumulate_concept_gradient(p, train_h[i], train.samples[i].concept_labels, scale, grad_w, grad_b);
      }
      detail::check_loss(batch_loss, epoch, batch_index);
      p.concept_w.noalias() -= rate * grad_w;
      p.concept_b.noalias() -= rate * grad_b;
    }
    const EpochLog log{epoch, detail::concept_loss(p, train_h, train), detail::concept_loss(p, val_h, val)};
    detail::check_loss(log.val_loss, epoch, batch_index);
    result.history.push_back(log);
    if (stopper.update(epoch, p, log.val_loss)) break;
  }
  p = stopper.best();
  result.best_epoch = stopper.best_epoch();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct TargetPredictions {
  std::vector<double> probabilities;
  std::vector<int> labels;
};

inline TargetPredictions predict_corpus(const Model& model, const Corpus& corpus) {
  TargetPredictions out;
  out.probabilities.reserve(corpus.size());
  for (const auto& s : corpus.samples) {
    const double p = sigmoid(target_logit(model.params, model.represent(s.text)));
    out.probabilities.push_back(p);
    out.labels.push_back(decide(p));
  }
  return out;
}

inline BinaryMetrics evaluate_target(const Model& model, const Corpus& corpus) {
  if (corpus.empty()) fail(ErrorKind::kEmptyInput, "cannot evaluate on an empty corpus");
  if (!corpus.binarized) fail(ErrorKind::kConfig, "evaluation corpus must be binarized");
  Confusion c;
  double loss = 0.0;
  for (const auto& s : corpus.samples) {
    const double logit = target_logit(model.params, model.represent(s.text));
    c.add(s.label, decide(sigmoid(logit)));
    loss += bce_from_logit(logit, s.label);
  }
  BinaryMetrics m = metrics_from_confusion(c);
  m.loss = loss / static_cast<double>(corpus.size());
  return m;
}

inline ConceptMetrics evaluate_concepts(const Model& model, const Corpus& corpus) {
  if (corpus.empty()) fail(ErrorKind::kEmptyInput, "cannot evaluate on an empty corpus");
  if (!corpus.binarized) fail(ErrorKind::kConfig, "evaluation corpus must be binarized");
  const std::size_t m = model.concept_names.size();
  std::vector<Confusion> confusions(m);
  double loss = 0.0;
  for (const auto& s : corpus.samples) {
    const Eigen::VectorXd c = concept_logits(model.params, model.represent(s.text));
    for (std::size_t j = 0; j < m; ++j) {
      const double logit = c(static_cast<Eigen::Index>(j));
      confusions[j].add(s.concept_labels[j], decide(sigmoid(logit)));
      loss += bce_from_logit(logit, s.concept_labels[j]);
    }
  }
  ConceptMetrics out;
  out.names = model.concept_names;
  for (const auto& c : confusions) {
    out.per_concept.push_back(metrics_from_confusion(c));
    out.mean_accuracy += out.per_concept.back().accuracy / static_cast<double>(m);
    out.macro_f1 += out.per_concept.back().per_class[1].f1 / static_cast<double>(m);
  }
  out.loss = loss / static_cast<double>(corpus.size() * m);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <typename Derived>
nlohmann::json flatten(const Eigen::DenseBase<Derived>& m) {
  nlohmann::json values = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  }
  return values;
}

template <typename MatrixType>
void unflatten(const nlohmann::json& values, MatrixType& m, Eigen::Index rows, Eigen::Index cols,
               std::string_view name) {
  if (!values.is_array() || values.size() != static_cast<std::size_t>(rows * cols)) {
    fail(ErrorKind::kData, "checkpoint field '" + std::string(name) + "' has the wrong size");
  }
  m.resize(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[k++].get<double>();
  }
}

}  // namespace detail

/// Versioned JSON checkpoint. Doubles are written in shortest round-trip
/// form, so save/load is bit-exact.
inline std::string model_to_json(const Model& model) {
  const ModelParams& p = model.params;
  nlohmann::ordered_json j;
  j["format"] = "toxcg.model";
  j["version"] = kCheckpointVersion;
  j["featurizer"] = {{"ngram_orders", model.featurizer.ngram_orders},
                     {"hash_dim", model.featurizer.hash_dim},
                     {"lowercase", model.featurizer.lowercase}};
  j["concepts"] = model.concept_names;
  j["dims"] = {{"input", p.input_dim()}, {"repr", p.repr_dim()}, {"hidden", p.hidden_dim()},
               {"concepts", p.concept_count()}};
  j["embed"] = detail::flatten(p.embed);
  j["encoder_w"] = detail::flatten(p.encoder_w);
  j["encoder_b"] = detail::flatten(p.encoder_b);
  j["target_w"] = detail::flatten(p.target_w);
  j["target_b"] = p.target_b;
  j["concept_w"] = detail::flatten(p.concept_w);
  j["concept_b"] = detail::flatten(p.concept_b);
  return j.dump();
}

inline Model model_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kData, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "toxcg.model") fail(ErrorKind::kData, "not a toxcg model checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    fail(ErrorKind::kData, "unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  Model model;
  try {
    model.featurizer.ngram_orders = j.at("featurizer").at("ngram_orders").get<std::vector<int>>();
    model.featurizer.hash_dim = j.at("featurizer").at("hash_dim").get<std::size_t>();
    model.featurizer.lowercase = j.at("featurizer").at("lowercase").get<bool>();
    model.featurizer.validate();
    model.concept_names = j.at("concepts").get<std::vector<std::string>>();
    const auto& dims = j.at("dims");
    const auto d_in = dims.at("input").get<Eigen::Index>();
    const auto d = dims.at("repr").get<Eigen::Index>();
    const auto h = dims.at("hidden").get<Eigen::Index>();
    const auto m = dims.at("concepts").get<Eigen::Index>();
    ModelParams& p = model.params;
    detail::unflatten(j.at("embed"), p.embed, d_in, d, "embed");
    detail::unflatten(j.at("encoder_w"), p.encoder_w, h, d, "encoder_w");
    detail::unflatten(j.at("encoder_b"), p.encoder_b, h, 1, "encoder_b");
    detail::unflatten(j.at("target_w"), p.target_w, h, 1, "target_w");
    p.target_b = j.at("target_b").get<double>();
    detail::unflatten(j.at("concept_w"), p.concept_w, m, h, "concept_w");
    detail::unflatten(j.at("concept_b"), p.concept_b, m, 1, "concept_b");
    p.check_shapes();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed checkpoint: ") + e.what());
  }
  if (static_cast<std::size_t>(model.params.input_dim()) != model.featurizer.hash_dim) {
    fail(ErrorKind::kData, "checkpoint embed rows do not match hash_dim");
  }
  return model;
}

inline void save_model(const std::filesystem::path& path, const Model& model) {
  write_file(path, model_to_json(model));
}

inline Model load_model(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

}  // namespace toxcg

#endif  // TOXCG_NNET_HPP_
