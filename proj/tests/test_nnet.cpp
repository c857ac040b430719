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

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "toxcg/nnet.hpp"

namespace toxcg {
namespace {

Model random_model(std::uint64_t seed, std::size_t d = 6, std::size_t h = 5, std::size_t m = 3) {
  Featurizer f{{1, 2}, 64, true};
  std::vector<std::string> names;
  for (std::size_t j = 0; j < m; ++j) names.push_back("c" + std::to_string(j));
  Model model = init_model(f, {d, h}, names, seed);
  Rng rng(derive_seed(seed, "perturb"));
  // Larger weights push tanh out of its linear regime.
  for (Eigen::Index i = 0; i < model.params.encoder_w.size(); ++i) model.params.encoder_w(i) *= 1.0 + rng.uniform();
  return model;
}

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double step = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x, down = x;
    up(i) += step;
    down(i) -= step;
    g(i) = (f(up) - f(down)) / (2.0 * step);
  }
  return g;
}

TEST(Featurizer, L2NormalizedCountsInRange) {
  Featurizer f{{1, 2}, 256, true};
  const auto h = f.features("the cat saw THE cat");
  double norm = 0.0;
  for (const auto& [b, v] : h) {
    EXPECT_LT(b, 256u);
    norm += v * v;
  }
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(f.features("The Cat saw the cat"), h);
  EXPECT_THROW(f.features("!!!"), Error);
  EXPECT_THROW((Featurizer{{1}, 100, true}.validate()), Error);
  EXPECT_EQ(f.bucket("cat"), fnv1a64("cat") & 255u);
}

TEST(Gradients, InputGradientsMatchFiniteDifferences) {
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const Model target = random_model(trial);
    const Model concepts = random_model(trial + 1000);
    Rng rng(trial);
    Eigen::VectorXd x(target.params.repr_dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-1.5, 1.5);

    const auto analytic = target_gradient(target.params, x);
    const auto numeric = numeric_gradient([&](const Eigen::VectorXd& v) { return target_logit(target.params, v); }, x);
    ASSERT_LT(rel_error(analytic, numeric), 1e-4) << "trial " << trial;

    const auto jac = concept_jacobian(concepts.params, x);
    for (Eigen::Index j = 0; j < jac.rows(); ++j) {
      const auto row = numeric_gradient(
          [&](const Eigen::VectorXd& v) { return concept_logits(concepts.params, v)(j); }, x);
      ASSERT_LT(rel_error(jac.row(j).transpose(), row), 1e-4) << "trial " << trial << " concept " << j;
    }
    const auto bundle = gradients(target.params, concepts.params, x, "s", OutputClass::kNonToxic);
    ASSERT_TRUE(bundle.grad_f.isApprox(-analytic));
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
}

TEST(Gradients, ParameterGradientsMatchFiniteDifferences) {
  const std::vector<std::string> texts{"you damn fool", "the park was nice today", "crush the plan"};
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Model model = random_model(trial, 4, 3, 2);
    for (std::size_t t = 0; t < texts.size(); ++t) {
      const auto feats = model.featurizer.features(texts[t]);
      const int y = static_cast<int>((trial + t) % 2);
      const double w = 1.7;
      TargetGradient g(model.params);
      accumulate_target_gradient(model.params, feats, y, w, g);
      auto loss = [&](const ModelParams& p) { return w * bce_from_logit(target_logit(p, project(feats, p.embed)), y); };

      // Walk every scalar parameter of the target path.
      auto check = [&](double& param, double analytic, const char* name) {
        const double saved = param;
        const double step = 1e-6;
        param = saved + step;
        const double up = loss(model.params);
        param = saved - step;
        const double down = loss(model.params);
        param = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
        ASSERT_LT(std::abs(analytic - numeric) / denom, 1e-4) << name << " trial " << trial;
      };
      auto& p = model.params;
      for (Eigen::Index i = 0; i < p.target_w.size(); ++i) check(p.target_w(i), g.target_w(i), "target_w");
      check(p.target_b, g.target_b, "target_b");
      for (Eigen::Index i = 0; i < p.encoder_w.size(); ++i) check(p.encoder_w(i), g.encoder_w(i), "encoder_w");
      for (Eigen::Index i = 0; i < p.encoder_b.size(); ++i) check(p.encoder_b(i), g.encoder_b(i), "encoder_b");
      for (const auto& [b, v] : feats) {
        for (Eigen::Index c = 0; c < p.embed.cols(); ++c) check(p.embed(b, c), g.embed(b, c), "embed");
      }
    }
  }
}

TEST(Gradients, ConceptHeadGradientMatchesFiniteDifferences) {
  Model model = random_model(5, 4, 3, 3);
  Eigen::VectorXd z(3);
  z << 0.3, -0.7, 0.5;
  const std::vector<int> labels{1, 0, 1};
  Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd gb = Eigen::VectorXd::Zero(3);
  accumulate_concept_gradient(model.params, z, labels, 1.0, gw, gb);
  auto loss = [&] {
    const Eigen::VectorXd c = model.params.concept_w * z + model.params.concept_b;
    double total = 0.0;
    for (int j = 0; j < 3; ++j) total += bce_from_logit(c(j), labels[j]);
    return total;
  };
  for (Eigen::Index i = 0; i < gw.size(); ++i) {
    double& w = model.params.concept_w(i);
    const double saved = w;
    w = saved + 1e-6;
    const double up = loss();
    w = saved - 1e-6;
    const double down = loss();
    w = saved;
    EXPECT_NEAR(gw(i), (up - down) / 2e-6, 1e-6);
  }
}

TEST(Numerics, StableSigmoidAndBce) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(-800.0), -1.0);
  EXPECT_TRUE(std::isfinite(bce_from_logit(-800.0, 1)));
  EXPECT_NEAR(bce_from_logit(800.0, 1), 0.0, 1e-12);
  EXPECT_NEAR(bce_from_logit(0.0, 0), std::log(2.0), 1e-15);
  EXPECT_EQ(decide(0.5), 0);
  EXPECT_EQ(decide(0.5000001), 1);
}

class TrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto corpus = testing::small_synth(1200, 21);
    SplitSpec spec;
    spec.seed = 4;
    parts_ = new SplitResult(split(corpus, spec));
  }
  static void TearDownTestSuite() { delete parts_; }

  static TrainConfig target_config() { return {30, 64, 2e-5, 20000.0, 4, 17, false, true}; }

  static SplitResult* parts_;
};
SplitResult* TrainingTest::parts_ = nullptr;

TEST_F(TrainingTest, TargetTrainingLearnsTheSeparableCorpus) {
  const auto r = train_target(parts_->train, parts_->val, target_config(), {{1}, 2048, true}, {32, 32});
  ASSERT_GE(r.history.size(), 2u);
  EXPECT_LT(r.history[static_cast<std::size_t>(r.best_epoch)].val_loss, r.history.front().val_loss);
  EXPECT_GE(evaluate_target(r.model, parts_->test).accuracy, 0.9);
  const auto again = train_target(parts_->train, parts_->val, target_config(), {{1}, 2048, true}, {32, 32});
  EXPECT_EQ(again.model, r.model);
}

TEST_F(TrainingTest, ConceptModelFreezesTheEncoder) {
  const auto target = train_target(parts_->train, parts_->val, target_config(), {{1}, 4096, true}, {128, 128}).model;
  const TrainConfig cc{100, 64, 2e-5, 100000.0, 5, 3, true, false};
  const auto concept_model = derive_concept_model(target, parts_->train, parts_->val, cc).model;
  EXPECT_EQ(concept_model.params.embed, target.params.embed);
  EXPECT_EQ(concept_model.params.encoder_w, target.params.encoder_w);
  EXPECT_EQ(concept_model.params.encoder_b, target.params.encoder_b);
  EXPECT_NE(concept_model.params.concept_w, target.params.concept_w);
  EXPECT_GE(evaluate_concepts(concept_model, parts_->test).mean_accuracy, 0.9);
  TrainConfig unfrozen = cc;
  unfrozen.freeze_encoder = false;
  EXPECT_THROW(derive_concept_model(target, parts_->train, parts_->val, unfrozen), Error);
}

TEST_F(TrainingTest, DivergenceIsANumericError) {
  TrainConfig cfg = target_config();
  cfg.lr_multiplier = 1e300;
  try {
    train_target(parts_->train, parts_->val, cfg, {{1}, 1024, true}, {8, 8});
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST_F(TrainingTest, RejectsUnbinarizedAndEmptyInput) {
  Corpus raw = parts_->train;
  raw.binarized = false;
  EXPECT_THROW(train_target(raw, parts_->val, target_config(), {{1}, 1024, true}), Error);
  Corpus empty = parts_->val;
  empty.samples.clear();
  EXPECT_THROW(train_target(parts_->train, empty, target_config(), {{1}, 1024, true}), Error);
  TrainConfig bad = target_config();
  bad.epochs = 0;
  EXPECT_THROW(train_target(parts_->train, parts_->val, bad, {{1}, 1024, true}), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  testing::TempDir dir("ckpt");
  const Model m = random_model(77);
  save_model(dir / "m.json", m);
  EXPECT_EQ(load_model(dir / "m.json"), m);
  EXPECT_EQ(model_to_json(load_model(dir / "m.json")), model_to_json(m));
  write_file(dir / "bad.json", "{\"version\": 99}");
  EXPECT_THROW(load_model(dir / "bad.json"), Error);
}

TEST(Predict, ProbabilitiesAndLabelsAgree) {
  const Model m = random_model(8);
  const auto corpus = testing::small_synth(30, 1);
  const auto p = predict_corpus(m, corpus);
  ASSERT_EQ(p.labels.size(), corpus.size());
  for (std::size_t i = 0; i < p.labels.size(); ++i) EXPECT_EQ(p.labels[i], decide(p.probabilities[i]));
}

}  // namespace
}  // namespace toxcg
