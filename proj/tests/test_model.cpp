// Copyright 2026 The SOMNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "somnet/model.hpp"
#include "test_util.hpp"

namespace somnet {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

/// Random parameters (encoder on) for gradient checks.
ModelParams random_params(int in, int hidden, int classes, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.enc_w = Eigen::MatrixXd(hidden, in);
  for (Eigen::Index i = 0; i < p.enc_w.size(); ++i) p.enc_w.data()[i] = gaussian_vector(rng, 1, 0.5)(0);
  p.enc_b = gaussian_vector(rng, hidden, 0.1);
  p.cls_w = Eigen::MatrixXd(classes, hidden);
  for (Eigen::Index i = 0; i < p.cls_w.size(); ++i) p.cls_w.data()[i] = gaussian_vector(rng, 1, 0.5)(0);
  p.cls_b = gaussian_vector(rng, classes, 0.1);
  return p;
}

Bag random_bag(int n, int dim, int label, Rng& rng) {
  Bag b;
  b.label = label;
  for (int i = 0; i < n; ++i) b.instances.push_back(testing::image("r" + std::to_string(i), gaussian_vector(rng, dim)));
  b.weights = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) b.weights(i) = 0.1 + std::abs(gaussian_vector(rng, 1)(0));
  b.weights /= b.weights.sum();
  return b;
}

TEST(Encode, DisabledEncoderIsIdentity) {
  const auto s = ClassifierState::create(3, 2, 0, 0.01, 0.9, 1);
  EXPECT_FALSE(s.params.has_encoder());
  const Eigen::VectorXd x = vec({1.5, -2.0, 0.25});
  EXPECT_TRUE(encode(s, x) == x);
  EXPECT_THROW(encode(s, vec({1, 2})), DataError);
}

TEST(Encode, ZeroWeightsGiveZeroFeature) {
  auto s = ClassifierState::create(4, 2, 3, 0.01, 0.9, 1);
  s.params.enc_w.setZero();
  EXPECT_TRUE(encode(s, vec({1, 2, 3, 4})).isZero());
}

TEST(Encode, JacobianMatchesFiniteDifferences) {
  const ModelParams p = random_params(5, 4, 3, 2);
  const Eigen::VectorXd x = vec({0.1, -0.4, 0.8, 0.3, -1.0});
  const Eigen::VectorXd h = encode(p, x);
  const Eigen::MatrixXd J = (1.0 - h.array().square()).matrix().asDiagonal() * p.enc_w;
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < 5; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += eps;
    xm(i) -= eps;
    const Eigen::VectorXd fd = (encode(p, xp) - encode(p, xm)) / (2 * eps);
    EXPECT_LT((fd - J.col(i)).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Classify, ZeroClassifierIsUniform) {
  const auto s = ClassifierState::create(3, 4, 0, 0.01, 0.9, 1);
  const Eigen::VectorXd probs = classify(s, vec({5, -1, 2}));
  for (Eigen::Index c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(probs(c), 0.25);
}

TEST(Classify, SoftmaxValuesAndShiftInvariance) {
  const Eigen::VectorXd s = softmax(vec({1, 2, 3}));
  EXPECT_NEAR(s(0), 0.0900, 1e-4);
  EXPECT_NEAR(s(1), 0.2447, 1e-4);
  EXPECT_NEAR(s(2), 0.6652, 1e-4);
  EXPECT_LT((softmax(vec({1001, 1002, 1003})) - s).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(s.sum(), 1.0, 1e-15);
  EXPECT_THROW(softmax(vec({1, std::nan("")})), NumericError);
}

TEST(ClsLoss, UniformPredictionCostsLogC) {
  auto s = ClassifierState::create(3, 5, 0, 0.01, 0.9, 1);
  Rng rng(1);
  const Bag bag = random_bag(4, 3, 2, rng);
  const BagSample sample{&bag, &bag.weights, bag.label};
  EXPECT_NEAR(cls_loss_and_grads(s.params, std::span(&sample, 1)).loss, std::log(5.0), 1e-12);
}

TEST(ClsLoss, ConfidentCorrectPredictionApproachesZero) {
  auto s = ClassifierState::create(2, 2, 0, 0.01, 0.9, 1);
  s.params.cls_w << 50, 0, -50, 0;
  Bag bag;
  bag.label = 0;
  bag.instances.push_back(testing::image("a", vec({1, 0})));
  bag.weights = vec({1.0});
  const BagSample sample{&bag, &bag.weights, 0};
  EXPECT_LT(cls_loss_and_grads(s.params, std::span(&sample, 1)).loss, 1e-12);
}

TEST(ClsLoss, GradientsMatchFiniteDifferences) {
  ModelParams p = random_params(4, 3, 3, 7);
  Rng rng(3);
  const Bag a = random_bag(5, 4, 0, rng);
  const Bag b = random_bag(5, 4, 2, rng);
  const std::vector<BagSample> batch{{&a, &a.weights, a.label}, {&b, &b.weights, b.label}};
  const auto analytic = cls_loss_and_grads(p, batch).grads;
  const double eps = 1e-6;
  auto check = [&](Eigen::MatrixXd& theta, const Eigen::MatrixXd& grad) {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double keep = theta.data()[i];
      theta.data()[i] = keep + eps;
      const double up = cls_loss_and_grads(p, batch).loss;
      theta.data()[i] = keep - eps;
      const double down = cls_loss_and_grads(p, batch).loss;
      theta.data()[i] = keep;
      EXPECT_NEAR((up - down) / (2 * eps), grad.data()[i], 1e-4);
    }
  };
  auto check_vec = [&](Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double keep = theta(i);
      theta(i) = keep + eps;
      const double up = cls_loss_and_grads(p, batch).loss;
      theta(i) = keep - eps;
      const double down = cls_loss_and_grads(p, batch).loss;
      theta(i) = keep;
      EXPECT_NEAR((up - down) / (2 * eps), grad(i), 1e-4);
    }
  };
  check(p.enc_w, analytic.enc_w);
  check_vec(p.enc_b, analytic.enc_b);
  check(p.cls_w, analytic.cls_w);
  check_vec(p.cls_b, analytic.cls_b);
}

TEST(ClsLoss, EmptyBatchThrows) {
  const auto s = ClassifierState::create(3, 2, 0, 0.01, 0.9, 1);
  EXPECT_THROW(cls_loss_and_grads(s.params, std::span<const BagSample>{}), Error);
}

ModelParams constant_grads(const ClassifierState& s, double value) {
  ModelParams g = s.params.zeros_like();
  g.cls_w.setConstant(value);
  g.cls_b.setConstant(value);
  return g;
}

TEST(SgdStep, PlainStepWithoutMomentum) {
  auto s = ClassifierState::create(2, 2, 0, 0.1, 0.0, 1);
  sgd_step(s, constant_grads(s, 2.0));
  EXPECT_TRUE(s.params.cls_w.isApproxToConstant(-0.2));
  EXPECT_TRUE(s.params.cls_b.isApproxToConstant(-0.2));
}

TEST(SgdStep, ZeroGradientAndZeroVelocityIsNoOp) {
  auto s = ClassifierState::create(3, 2, 4, 0.1, 0.9, 1);
  const ModelParams before = s.params;
  sgd_step(s, s.params.zeros_like());
  EXPECT_TRUE(s.params.enc_w == before.enc_w);
  EXPECT_TRUE(s.params.cls_w == before.cls_w);
}

TEST(SgdStep, MomentumRecurrenceOverTwoSteps) {
  auto s = ClassifierState::create(2, 2, 0, 0.1, 0.9, 1);
  sgd_step(s, constant_grads(s, 1.0));  // v = 1, theta = -0.1
  sgd_step(s, constant_grads(s, 1.0));  // v = 1.9, theta = -0.29
  EXPECT_TRUE(s.velocity.cls_w.isApproxToConstant(1.9));
  EXPECT_NEAR(s.params.cls_w(0, 0), -0.29, 1e-14);
}

TEST(SgdStep, ShapeMismatchThrows) {
  auto s = ClassifierState::create(2, 2, 0, 0.1, 0.9, 1);
  ModelParams g = s.params.zeros_like();
  g.cls_b = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(sgd_step(s, g), Error);
}

std::vector<BagSample> samples(const Dataset& ds, std::vector<Bag>& bags) {
  bags = ds.bags;
  for (auto& b : bags) b.weights = init_weights(b, ds.n_g);
  std::vector<BagSample> out;
  for (const auto& b : bags) out.push_back({&b, &b.weights, b.label});
  return out;
}

TEST(Training, FullBatchLossDecreasesMonotonically) {
  const Dataset ds = testing::toy_dataset(3, 8, 2, 2, 6, 2.0, 0.3, 4);
  std::vector<Bag> bags;
  const auto batch = samples(ds, bags);
  auto s = ClassifierState::create(6, 3, 0, 0.05, 0.0, 1);
  double last = cls_loss_and_grads(s.params, batch).loss;
  for (int step = 0; step < 50; ++step) {
    sgd_step(s, cls_loss_and_grads(s.params, batch).grads);
    const double now = cls_loss_and_grads(s.params, batch).loss;
    EXPECT_LT(now, last) << "step " << step;
    last = now;
  }
}

TEST(Training, SeparableDataReachesFullAccuracy) {
  const Dataset ds = testing::toy_dataset(4, 10, 2, 2, 8, 3.0, 0.2, 5);
  std::vector<Bag> bags;
  const auto batch = samples(ds, bags);
  auto s = ClassifierState::create(8, 4, 16, 0.1, 0.9, 2);
  for (int step = 0; step < 300; ++step) sgd_step(s, cls_loss_and_grads(s.params, batch).grads);
  int correct = 0;
  for (const auto& t : ds.test_images) correct += predict_one(s.params, t.feature) == t.label ? 1 : 0;
  EXPECT_EQ(correct, static_cast<int>(ds.test_images.size()));
}

TEST(PredictOne, TiesGoToLowestClass) {
  const auto s = ClassifierState::create(2, 3, 0, 0.1, 0.9, 1);
  EXPECT_EQ(predict_one(s.params, vec({1, 1})), 0);
}

TEST(Checkpoint, RoundTripIsExactAndRowMajor) {
  auto s = ClassifierState::create(3, 2, 4, 0.02, 0.8, 9);
  s.params.cls_w.setRandom();
  const auto j = to_json(s);
  EXPECT_DOUBLE_EQ(j["cls_w"]["data"][1].get<double>(), s.params.cls_w(0, 1));
  const auto back = classifier_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_TRUE(back.params.enc_w == s.params.enc_w);
  EXPECT_TRUE(back.params.cls_w == s.params.cls_w);
  EXPECT_DOUBLE_EQ(back.lr, 0.02);
  EXPECT_DOUBLE_EQ(back.momentum, 0.8);
  const Eigen::VectorXd x = vec({0.3, -0.2, 1.0});
  EXPECT_EQ(predict_one(back.params, x), predict_one(s.params, x));
  nlohmann::json bad = j;
  bad["cls_w"]["rows"] = 5;
  EXPECT_THROW(classifier_from_json(bad), DataError);
}

}  // namespace
}  // namespace somnet
