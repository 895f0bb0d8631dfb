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
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "somnet/data_model.hpp"
#include "test_util.hpp"

namespace somnet {
namespace {

using testing::image;
using testing::proposal;

Bag two_image_bag() {
  Bag bag;
  const Eigen::VectorXd f = Eigen::VectorXd::Ones(2);
  bag.instances = {image("a", f), proposal("a_p0", "a", 2500.0, f), proposal("a_p1", "a", 5000.0, f),
                   image("b", f), proposal("b_p0", "b", 100.0, f),  proposal("b_p1", "b", 400.0, f)};
  return bag;
}

TEST(InitWeights, TwoImagesGetHalfEach) {
  const Bag bag = two_image_bag();
  const Eigen::VectorXd w = init_weights(bag, 2);
  for (std::size_t i = 0; i < bag.size(); ++i)
    EXPECT_DOUBLE_EQ(w(static_cast<Eigen::Index>(i)), bag.instances[i].kind == RoiKind::Image ? 0.5 : 0.0);
  EXPECT_DOUBLE_EQ(w.sum(), 1.0);
}

TEST(InitWeights, SingleImageGetsOne) {
  Bag bag;
  bag.instances = {image("a", Eigen::VectorXd::Ones(3))};
  EXPECT_DOUBLE_EQ(init_weights(bag, 1)(0), 1.0);
}

TEST(InitWeights, RandomBagsSumToOneWithImageSupport) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_g = 1 + static_cast<int>(rng() % 4);
    const int n_p = static_cast<int>(rng() % 6);
    Bag bag;
    for (int g = 0; g < n_g; ++g) {
      const std::string id = "i" + std::to_string(g);
      bag.instances.push_back(image(id, Eigen::VectorXd::Ones(2)));
      for (int p = 0; p < n_p; ++p) bag.instances.push_back(proposal(id + "p", id, 10.0 + p, Eigen::VectorXd::Ones(2)));
    }
    const Eigen::VectorXd w = init_weights(bag, n_g);
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    for (std::size_t i = 0; i < bag.size(); ++i)
      EXPECT_EQ(w(static_cast<Eigen::Index>(i)) > 0.0, bag.instances[i].kind == RoiKind::Image);
  }
}

TEST(InitWeights, ImageCountMismatchThrows) { EXPECT_THROW(init_weights(two_image_bag(), 3), DataError); }

TEST(AreaScore, ImageScoresOne) {
  const Bag bag = two_image_bag();
  EXPECT_DOUBLE_EQ(area_score(bag.instances[0], bag), 1.0);
}

TEST(AreaScore, LargestProposalScoresOne) {
  const Bag bag = two_image_bag();
  EXPECT_DOUBLE_EQ(area_score(bag.instances[2], bag), 1.0);
  EXPECT_DOUBLE_EQ(area_score(bag.instances[5], bag), 1.0);
}

TEST(AreaScore, HalfOfSiblingMaximum) {
  const Bag bag = two_image_bag();
  EXPECT_DOUBLE_EQ(area_score(bag.instances[1], bag), 0.5);
  EXPECT_DOUBLE_EQ(area_score(bag.instances[4], bag), 0.25);
}

TEST(AreaScore, BatchMatchesSingle) {
  const Bag bag = two_image_bag();
  const Eigen::VectorXd s = area_scores(bag);
  for (std::size_t i = 0; i < bag.size(); ++i)
    EXPECT_DOUBLE_EQ(s(static_cast<Eigen::Index>(i)), area_score(bag.instances[i], bag));
}

TEST(AreaScore, ScaleInvariantPerImage) {
  Bag bag = two_image_bag();
  const Eigen::VectorXd before = area_scores(bag);
  for (auto& inst : bag.instances)
    if (inst.parent_image_id == "a") *inst.area *= 17.5;
  const Eigen::VectorXd after = area_scores(bag);
  for (Eigen::Index i = 0; i < before.size(); ++i) EXPECT_NEAR(before(i), after(i), 1e-15);
}

TEST(AreaScore, ZeroMaximumAreaIsDegenerate) {
  Bag bag;
  bag.instances = {image("a", Eigen::VectorXd::Ones(1)), proposal("p", "a", 0.0, Eigen::VectorXd::Ones(1))};
  EXPECT_THROW(area_score(bag.instances[1], bag), NumericError);
  EXPECT_THROW(area_scores(bag), NumericError);
}

std::vector<std::vector<ImageGroup>> groups(int classes, int images, int n_p) {
  return testing::toy_dataset(classes, images, 1, n_p, 4, 1.0, 0.1, 3).groups_by_class;
}

TEST(BuildBags, StandardBagHoldsFortyTwoRois) {
  const auto bags = build_bags(groups(2, 4, 20), 2, 20, 0);
  ASSERT_EQ(bags.size(), 4u);
  for (const auto& b : bags) EXPECT_EQ(b.size(), 42u);
}

TEST(BuildBags, DegenerateSingleImageBags) {
  const auto bags = build_bags(groups(2, 3, 0), 1, 0, 0);
  ASSERT_EQ(bags.size(), 6u);
  for (const auto& b : bags) {
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b.instances[0].kind, RoiKind::Image);
  }
}

TEST(BuildBags, ThreeImagesTwoProposals) {
  const auto bags = build_bags(groups(2, 6, 2), 3, 2, 0);
  ASSERT_EQ(bags.size(), 4u);
  for (const auto& b : bags) EXPECT_EQ(b.size(), 9u);
}

TEST(BuildBags, LeftoversDroppedAndLabelsHomogeneous) {
  const auto g = groups(3, 5, 2);
  const auto bags = build_bags(g, 2, 2, 11);
  ASSERT_EQ(bags.size(), 6u);
  for (const auto& b : bags) {
    for (const auto& inst : b.instances) {
      const auto cls = inst.id.substr(1, inst.id.find('_') - 1);
      EXPECT_EQ(std::stoi(cls), b.label);
    }
  }
}

TEST(BuildBags, PartitionIsSeeded) {
  const auto g = groups(2, 10, 1);
  auto first_ids = [](const std::vector<Bag>& bags) {
    std::vector<std::string> ids;
    for (const auto& b : bags) ids.push_back(b.instances.front().id);
    return ids;
  };
  EXPECT_EQ(first_ids(build_bags(g, 2, 1, 5)), first_ids(build_bags(g, 2, 1, 5)));
  EXPECT_NE(first_ids(build_bags(g, 2, 1, 5)), first_ids(build_bags(g, 2, 1, 6)));
}

TEST(BuildBags, ShortClassIsListed) {
  auto g = groups(3, 4, 1);
  g[1].resize(1);
  g[2].resize(1);
  try {
    build_bags(g, 2, 1, 0);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("1, 2"), std::string::npos) << e.what();
  }
}

TEST(NormalizeProposals, TruncatesSmallestArea) {
  ImageGroup g;
  g.image = image("a", Eigen::VectorXd::Ones(1));
  for (double area : {300.0, 100.0, 200.0, 400.0})
    g.proposals.push_back(proposal("p" + std::to_string(static_cast<int>(area)), "a", area, Eigen::VectorXd::Ones(1)));
  normalize_proposals(g, 2);
  ASSERT_EQ(g.proposals.size(), 2u);
  std::set<double> kept;
  for (const auto& p : g.proposals) kept.insert(*p.area);
  EXPECT_EQ(kept, (std::set<double>{300.0, 400.0}));
}

TEST(NormalizeProposals, PadsWithLargest) {
  ImageGroup g;
  g.image = image("a", Eigen::VectorXd::Ones(1));
  g.proposals = {proposal("small", "a", 10.0, Eigen::VectorXd::Ones(1)), proposal("big", "a", 90.0, Eigen::VectorXd::Ones(1))};
  normalize_proposals(g, 4);
  ASSERT_EQ(g.proposals.size(), 4u);
  EXPECT_EQ(g.proposals[2].id, "big#dup0");
  EXPECT_EQ(g.proposals[3].id, "big#dup1");
  EXPECT_DOUBLE_EQ(*g.proposals[3].area, 90.0);
}

TEST(NormalizeProposals, CannotPadFromNothing) {
  ImageGroup g;
  g.image = image("a", Eigen::VectorXd::Ones(1));
  EXPECT_THROW(normalize_proposals(g, 2), DataError);
}

TEST(SynthGenerate, ZeroRatesAreAllClean) {
  SynthConfig cfg;
  cfg.images_per_class = 10;
  cfg.test_images_per_class = 2;
  cfg.label_noise_rate = 0.0;
  cfg.background_proposal_rate = 0.0;
  const Dataset ds = synth_generate(cfg);
  for (const auto& bag : ds.bags)
    for (const auto& inst : bag.instances) EXPECT_EQ(inst.noise, NoiseFlag::Clean);
}

TEST(SynthGenerate, SeedIsBitReproducible) {
  SynthConfig cfg;
  cfg.images_per_class = 10;
  cfg.seed = 42;
  const Dataset a = synth_generate(cfg);
  const Dataset b = synth_generate(cfg);
  ASSERT_EQ(a.bags.size(), b.bags.size());
  for (std::size_t i = 0; i < a.bags.size(); ++i)
    for (std::size_t j = 0; j < a.bags[i].size(); ++j) {
      EXPECT_EQ(a.bags[i].instances[j].id, b.bags[i].instances[j].id);
      EXPECT_TRUE(a.bags[i].instances[j].feature == b.bags[i].instances[j].feature);
      EXPECT_EQ(a.bags[i].instances[j].area, b.bags[i].instances[j].area);
    }
  cfg.seed = 43;
  EXPECT_FALSE(synth_generate(cfg).bags[0].instances[0].feature == a.bags[0].instances[0].feature);
}

TEST(SynthGenerate, FlagCountsMatchRatesWithinThreeSigma) {
  SynthConfig cfg;  // 10 classes x 100 images, 25% label noise, 50% background
  cfg.seed = 9;
  const Dataset ds = synth_generate(cfg);
  int noisy = 0, images = 0, background = 0, clean_image_props = 0;
  for (const auto& gs : ds.groups_by_class) {
    int class_noisy = 0;
    for (const auto& g : gs) {
      ++images;
      const bool label_noise = g.image.noise == NoiseFlag::LabelNoise;
      class_noisy += label_noise;
      for (const auto& p : g.proposals) {
        if (label_noise) {
          EXPECT_EQ(p.noise, NoiseFlag::LabelNoise);
          continue;
        }
        ++clean_image_props;
        background += p.noise == NoiseFlag::BackgroundNoise;
      }
    }
    const double sd = std::sqrt(100 * 0.25 * 0.75);
    EXPECT_NEAR(class_noisy, 25.0, 3 * sd);
    noisy += class_noisy;
  }
  EXPECT_NEAR(noisy, 0.25 * images, 3 * std::sqrt(images * 0.25 * 0.75));
  EXPECT_NEAR(background, 0.5 * clean_image_props, 3 * std::sqrt(clean_image_props * 0.25));
}

TEST(SynthGenerate, ShapesAndAreas) {
  SynthConfig cfg;
  cfg.num_classes = 3;
  cfg.images_per_class = 5;
  cfg.n_g = 2;
  cfg.n_p = 4;
  const Dataset ds = synth_generate(cfg);
  EXPECT_EQ(ds.bags.size(), 6u);  // one leftover image per class
  validate_dataset(ds);
  for (const auto& bag : ds.bags)
    for (const auto& inst : bag.instances) {
      EXPECT_EQ(inst.feature.size(), 32);
      if (inst.kind == RoiKind::Proposal) {
        EXPECT_GE(*inst.area, 1000.0);
        EXPECT_LE(*inst.area, 10000.0);
      }
    }
  EXPECT_EQ(ds.test_images.size(), 300u);
}

TEST(SynthConfig, RejectsBadValues) {
  auto bad = [](auto mutate) {
    SynthConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](SynthConfig& c) { c.num_classes = 1; });
  bad([](SynthConfig& c) { c.n_g = 0; });
  bad([](SynthConfig& c) { c.label_noise_rate = 1.5; });
  bad([](SynthConfig& c) { c.background_proposal_rate = -0.1; });
  bad([](SynthConfig& c) { c.background_modes = 0; });
}

TEST(WithoutProposals, BagsOfImagesOnly) {
  const Dataset ds = testing::toy_dataset(2, 4, 2, 3, 4, 1.0, 0.1, 1);
  const Dataset img = without_proposals(ds, 0);
  for (const auto& b : img.bags) {
    ASSERT_EQ(b.size(), 2u);
    for (const auto& inst : b.instances) EXPECT_EQ(inst.kind, RoiKind::Image);
  }
}

}  // namespace
}  // namespace somnet
