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


#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "somnet/eval.hpp"
#include "somnet/kmeans.hpp"
#include "test_util.hpp"

namespace somnet {
namespace {

TEST(Accuracy, Examples) {
  const std::vector<int> labels{0, 1, 2, 1};
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 2, 1}, labels), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{1, 0, 0, 0}, labels), 0.0);
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 2, 0}, labels), 0.75);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), Error);
  EXPECT_THROW(accuracy(std::vector<int>{0}, labels), Error);
}

TEST(PerClassAccuracy, CountsPerLabel) {
  const auto acc = per_class_accuracy(std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 0, 1, 1}, 3);
  EXPECT_EQ(acc, (std::vector<double>{0.5, 1.0, 0.0}));
}

TEST(NoiseAuc, ConstantWeightsGiveHalf) {
  const std::vector<double> w(6, 0.2);
  const std::vector<NoiseFlag> f{NoiseFlag::Clean, NoiseFlag::LabelNoise, NoiseFlag::Clean,
                                 NoiseFlag::BackgroundNoise, NoiseFlag::Clean, NoiseFlag::Clean};
  EXPECT_DOUBLE_EQ(noise_auc(w, f), 0.5);
}

TEST(NoiseAuc, PerfectSeparationGivesOne) {
  const std::vector<double> w{0.9, 0.1, 0.8, 0.0};
  const std::vector<NoiseFlag> f{NoiseFlag::Clean, NoiseFlag::LabelNoise, NoiseFlag::Clean,
                                 NoiseFlag::BackgroundNoise};
  EXPECT_DOUBLE_EQ(noise_auc(w, f), 1.0);
  const std::vector<double> flipped{0.1, 0.9, 0.0, 0.8};
  EXPECT_DOUBLE_EQ(noise_auc(flipped, f), 0.0);
}

TEST(NoiseAuc, RandomWeightsNearHalfAndMonotoneInvariant) {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(2000);
  std::vector<NoiseFlag> f(2000);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = u(rng);
    f[i] = u(rng) < 0.3 ? NoiseFlag::LabelNoise : NoiseFlag::Clean;
  }
  const double auc = noise_auc(w, f);
  EXPECT_NEAR(auc, 0.5, 0.05);
  std::vector<double> transformed(w.size());
  std::transform(w.begin(), w.end(), transformed.begin(), [](double x) { return std::exp(3.0 * x) + 7.0; });
  EXPECT_DOUBLE_EQ(noise_auc(transformed, f), auc);
}

TEST(NoiseAuc, SingleClassThrows) {
  EXPECT_THROW(noise_auc(std::vector<double>{0.1, 0.2}, std::vector<NoiseFlag>{NoiseFlag::Clean, NoiseFlag::Clean}),
               Error);
}

TEST(RocAuc, MatchesPairCountingWithTies) {
  Rng rng(2);
  std::uniform_int_distribution<int> level(0, 4);
  std::vector<double> s(300);
  auto pos = std::make_unique<bool[]>(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = level(rng);
    pos[i] = level(rng) < 2;
  }
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  EXPECT_NEAR(roc_auc(s, std::span<const bool>(pos.get(), s.size())), wins / pairs, 1e-12);
}

TEST(DeadKeys, FractionOfUnusedSlots) {
  EXPECT_DOUBLE_EQ(dead_key_fraction(std::vector<int>{0, 0, 2}, 4), 0.5);
  EXPECT_DOUBLE_EQ(dead_key_fraction(std::vector<int>{}, 4), 1.0);
  EXPECT_DOUBLE_EQ(dead_key_fraction(std::vector<int>{3, 2, 1, 0}, 4), 0.0);
}

Eigen::MatrixXd two_clusters(std::vector<int>& labels, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd f(3, 40);
  labels.clear();
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    mean(i % 2) = 5.0;
    f.col(i) = mean + gaussian_vector(rng, 3, 0.2);
    labels.push_back(i % 2);
  }
  return f;
}

TEST(KMeans, SeparableClustersGivePureSlots) {
  std::vector<int> labels;
  const Eigen::MatrixXd f = two_clusters(labels, 4);
  const auto km = kmeans_memory(f, labels, 2, 2, 20, 1);
  EXPECT_NO_THROW(km.memory.check_invariants(1e-9));
  for (int l = 0; l < 4; ++l) {
    if (std::find(km.assignments.begin(), km.assignments.end(), l) == km.assignments.end()) continue;
    const int y = km.memory.d_values(0, l) > 0.5 ? 0 : 1;
    EXPECT_NEAR(km.memory.d_values(y, l), 1.0, 1e-12) << "slot " << l;
    EXPECT_GT(cosine(Eigen::VectorXd::Unit(3, y), km.memory.keys.col(l)), 0.99);
  }
  for (int y = 0; y < 2; ++y) EXPECT_NEAR(km.memory.r_values.row(y).sum(), 1.0, 1e-12);
}

TEST(KMeans, ZeroIterationsKeepsSampledKeys) {
  std::vector<int> labels;
  const Eigen::MatrixXd f = two_clusters(labels, 5);
  const Eigen::MatrixXd unit = normalized_columns(f);
  const auto km = kmeans_memory(f, labels, 2, 2, 0, 7);
  for (int l = 0; l < 4; ++l) {
    bool found = false;
    for (Eigen::Index n = 0; n < unit.cols(); ++n) found = found || km.memory.keys.col(l) == unit.col(n);
    EXPECT_TRUE(found) << "slot " << l;
  }
}

TEST(KMeans, TooFewFeaturesThrows) {
  std::vector<int> labels{0, 1, 0};
  EXPECT_THROW(kmeans_memory(Eigen::MatrixXd::Ones(3, 3), labels, 2, 2, 5, 1), Error);
}

TEST(Ablations, NamesMapToConfig) {
  const TrainConfig base;
  EXPECT_FALSE(apply_ablation(base, "wo_d").use_d_score);
  EXPECT_FALSE(apply_ablation(base, "wo_r").use_r_score);
  EXPECT_FALSE(apply_ablation(base, "wo_a").use_a_score);
  EXPECT_EQ(apply_ablation(base, "wo_som").effective_radius(), 0);
  EXPECT_FALSE(apply_ablation(base, "wo_roi").use_proposals);
  const TrainConfig fixed = apply_ablation(base, "fixed_p40");
  EXPECT_EQ(fixed.curriculum().size(), 1u);
  EXPECT_EQ(fixed.epochs_per_stage, 35);
  EXPECT_EQ(apply_ablation(base, "uniform").weighting, WeightingMode::Uniform);
  EXPECT_EQ(apply_ablation(base, "kmeans").weighting, WeightingMode::KMeans);
  EXPECT_THROW(apply_ablation(base, "wo_everything"), ConfigError);
}

TEST(Suite, NineRowsReproducibleAcrossThreads) {
  Dataset ds = testing::toy_dataset(3, 12, 2, 4, 6, 2.5, 0.6, 3);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.batch_size = 8;
  cfg.grid_w = 3;
  const auto a = run_suite(ds, cfg, 1);
  const auto b = run_suite(ds, cfg, 4);
  ASSERT_EQ(a.size(), 9u);
  const std::string csv = suite_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "name,seed,top1,auc,dead_key_frac");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  EXPECT_EQ(csv, suite_csv(b));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].variant, suite_variants()[i]);
    EXPECT_TRUE(a[i].delta_vs_uniform.has_value());
  }
  EXPECT_FALSE(a[7].dead_key_fraction.has_value());  // uniform has no memory
  EXPECT_EQ(suite_json(a).size(), 9u);
}

}  // namespace
}  // namespace somnet
