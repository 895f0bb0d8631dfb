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

/**
 * @file data_model.hpp
 * @brief Instances, bags and datasets for multi-instance denoising.
 *
 * A bag groups n_g images of one category together with n_p region
 * proposals per image, so every bag holds n_b = n_g * (n_p + 1) ROIs.
 * Instances carry the feature vector plus the metadata needed to score
 * them (area for the a-score, parent image for sibling lookup) and, for
 * synthetic data, the ground-truth noise flag.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "somnet/error.hpp"
#include "somnet/random.hpp"

namespace somnet {

enum class RoiKind { Image, Proposal };

enum class NoiseFlag { Clean, LabelNoise, BackgroundNoise };

using Box = std::array<double, 4>;  // x, y, w, h

inline const char* to_string(RoiKind kind) {
  return kind == RoiKind::Image ? "image" : "proposal";
}

inline const char* to_string(NoiseFlag flag) {
  switch (flag) {
    case NoiseFlag::Clean: return "clean";
    case NoiseFlag::LabelNoise: return "label_noise";
    case NoiseFlag::BackgroundNoise: return "background_noise";
  }
  return "clean";
}

inline NoiseFlag noise_flag_from_string(const std::string& s) {
  if (s == "clean") return NoiseFlag::Clean;
  if (s == "label_noise") return NoiseFlag::LabelNoise;
  if (s == "background_noise") return NoiseFlag::BackgroundNoise;
  throw DataError("unknown noise flag '" + s + "'");
}

/// One ROI: a whole image or one of its region proposals.
struct Instance {
  std::string id;
  Eigen::VectorXd feature;
  RoiKind kind = RoiKind::Image;
  std::optional<double> area;
  std::string parent_image_id;  // set for proposals only
  std::optional<NoiseFlag> noise;
  std::optional<Box> bbox;
};

/// An image with its proposals, before bagging.
struct ImageGroup {
  Instance image;
  std::vector<Instance> proposals;
  int label = 0;
};

struct Bag {
  std::vector<Instance> instances;
  int label = 0;
  Eigen::VectorXd weights;

  std::size_t size() const { return instances.size(); }
};

struct TestImage {
  std::string id;
  Eigen::VectorXd feature;
  int label = 0;
};

struct Dataset {
  std::vector<Bag> bags;
  std::vector<TestImage> test_images;
  int num_classes = 0;
  int feature_dim = 0;
  int n_g = 1;
  int n_p = 0;
  /// Source images grouped by class; kept so bags can be re-partitioned or
  /// rebuilt without proposals.
  std::vector<std::vector<ImageGroup>> groups_by_class;
  nlohmann::json metadata = nlohmann::json::object();

  int bag_size() const { return n_g * (n_p + 1); }
};

/// Parameters of the synthetic webly-noisy benchmark generator.
struct SynthConfig {
  int num_classes = 10;
  int feature_dim = 32;
  int images_per_class = 100;
  int test_images_per_class = 100;
  int n_g = 2;
  int n_p = 20;
  double label_noise_rate = 0.25;
  double background_proposal_rate = 0.5;
  /// Norm of each class mean; per-dimension feature noise is unit variance.
  double class_separation = 3.0;
  /// Proposal jitter std as a multiple of class_separation.
  double proposal_jitter = 0.3;
  /// How strongly small proposals are favoured as background, in [0, 1].
  /// 0 makes background selection independent of area.
  double background_area_bias = 1.0;
  /// Number of equally likely modes in the shared background mixture.
  int background_modes = 10;
  std::uint64_t seed = 0;

  void validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (n_g < 1) throw ConfigError("n_g must be >= 1");
    if (n_p < 0) throw ConfigError("n_p must be >= 0");
    if (images_per_class < n_g)
      throw ConfigError("images_per_class must be >= n_g");
    if (background_modes < 1) throw ConfigError("background_modes must be >= 1");
    if (test_images_per_class < 0)
      throw ConfigError("test_images_per_class must be >= 0");
    if (!in_unit(label_noise_rate))
      throw ConfigError("label_noise_rate must lie in [0, 1]");
    if (!in_unit(background_proposal_rate))
      throw ConfigError("background_proposal_rate must lie in [0, 1]");
    if (!in_unit(background_area_bias))
      throw ConfigError("background_area_bias must lie in [0, 1]");
    if (!(class_separation >= 0.0)) throw ConfigError("class_separation must be >= 0");
    if (!(proposal_jitter >= 0.0)) throw ConfigError("proposal_jitter must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Weights and scores
// ---------------------------------------------------------------------------

/// Initial ROI weights: every image gets 1/n_g, every proposal 0.
inline Eigen::VectorXd init_weights(const Bag& bag, int n_g) {
  if (n_g < 1) throw ConfigError("n_g must be >= 1");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bag.size()));
  int images = 0;
  for (std::size_t i = 0; i < bag.size(); ++i) {
    if (bag.instances[i].kind == RoiKind::Image) {
      w(static_cast<Eigen::Index>(i)) = 1.0 / n_g;
      ++images;
    }
  }
  if (images != n_g)
    throw DataError(detail::concat("bag holds ", images, " images, expected n_g=", n_g));
  return w;
}

/// Area score of one instance relative to the largest proposal of the same
/// image inside the bag. Whole images score 1.
inline double area_score(const Instance& instance, const Bag& bag) {
  if (instance.kind == RoiKind::Image) return 1.0;
  if (!instance.area) throw DataError("proposal '" + instance.id + "' has no area");
  double max_area = 0.0;
  for (const auto& other : bag.instances) {
    if (other.kind == RoiKind::Proposal && other.parent_image_id == instance.parent_image_id &&
        other.area) {
      max_area = std::max(max_area, *other.area);
    }
  }
  if (!(max_area > 0.0))
    throw NumericError("degenerate geometry: image '" + instance.parent_image_id +
                       "' has zero maximum proposal area");
  return *instance.area / max_area;
}

/// Area scores of a whole bag; one pass over siblings instead of n_b^2.
inline Eigen::VectorXd area_scores(const Bag& bag) {
  std::vector<std::pair<std::string, double>> max_by_parent;
  auto find = [&](const std::string& parent) -> double* {
    for (auto& [p, m] : max_by_parent)
      if (p == parent) return &m;
    return nullptr;
  };
  for (const auto& inst : bag.instances) {
    if (inst.kind != RoiKind::Proposal) continue;
    if (!inst.area) throw DataError("proposal '" + inst.id + "' has no area");
    if (double* m = find(inst.parent_image_id)) {
      *m = std::max(*m, *inst.area);
    } else {
      max_by_parent.emplace_back(inst.parent_image_id, *inst.area);
    }
  }
  Eigen::VectorXd sigma(static_cast<Eigen::Index>(bag.size()));
  for (std::size_t i = 0; i < bag.size(); ++i) {
    const auto& inst = bag.instances[i];
    if (inst.kind == RoiKind::Image) {
      sigma(static_cast<Eigen::Index>(i)) = 1.0;
      continue;
    }
    const double m = *find(inst.parent_image_id);
    if (!(m > 0.0))
      throw NumericError("degenerate geometry: image '" + inst.parent_image_id +
                         "' has zero maximum proposal area");
    sigma(static_cast<Eigen::Index>(i)) = *inst.area / m;
  }
  return sigma;
}

// ---------------------------------------------------------------------------
// Bagging
// ---------------------------------------------------------------------------

/// Forces exactly n_p proposals: drops the smallest-area ones, or pads by
/// duplicating the largest-area one.
inline void normalize_proposals(ImageGroup& group, int n_p) {
  auto& props = group.proposals;
  const auto target = static_cast<std::size_t>(n_p);
  if (props.size() > target) {
    std::stable_sort(props.begin(), props.end(), [](const Instance& a, const Instance& b) {
      return a.area.value_or(0.0) > b.area.value_or(0.0);
    });
    props.resize(target);
    return;
  }
  if (props.size() == target) return;
  if (props.empty())
    throw DataError(detail::concat("image '", group.image.id, "' has no proposals to pad to n_p=", n_p));
  const auto largest = std::max_element(props.begin(), props.end(),
      [](const Instance& a, const Instance& b) { return a.area.value_or(0.0) < b.area.value_or(0.0); });
  const Instance copy = *largest;
  for (std::size_t k = 0; props.size() < target; ++k) {
    Instance dup = copy;
    dup.id = copy.id + "#dup" + std::to_string(k);
    props.push_back(std::move(dup));
  }
}

/// Groups n_g same-class images and their proposals into bags. The
/// assignment of images to bags is a seeded random partition per class;
/// leftover images (count mod n_g) are dropped.
inline std::vector<Bag> build_bags(std::vector<std::vector<ImageGroup>> images_by_class, int n_g,
                                   int n_p, std::uint64_t seed) {
  if (n_g < 1) throw ConfigError("n_g must be >= 1");
  if (n_p < 0) throw ConfigError("n_p must be >= 0");
  std::string short_classes;
  for (std::size_t c = 0; c < images_by_class.size(); ++c) {
    if (images_by_class[c].size() < static_cast<std::size_t>(n_g)) {
      if (!short_classes.empty()) short_classes += ", ";
      short_classes += std::to_string(c);
    }
  }
  if (!short_classes.empty())
    throw DataError(detail::concat("classes with fewer than n_g=", n_g, " images: ", short_classes));

  Rng rng(derive_seed(seed, "build_bags"));
  std::vector<Bag> bags;
  for (std::size_t c = 0; c < images_by_class.size(); ++c) {
    auto& groups = images_by_class[c];
    for (auto& g : groups) normalize_proposals(g, n_p);
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t full = groups.size() / static_cast<std::size_t>(n_g);
    for (std::size_t b = 0; b < full; ++b) {
      Bag bag;
      bag.label = static_cast<int>(c);
      for (int k = 0; k < n_g; ++k) {
        const auto& g = groups[order[b * static_cast<std::size_t>(n_g) + static_cast<std::size_t>(k)]];
        bag.instances.push_back(g.image);
        bag.instances.insert(bag.instances.end(), g.proposals.begin(), g.proposals.end());
      }
      bag.weights = init_weights(bag, n_g);
      bags.push_back(std::move(bag));
    }
  }
  return bags;
}

/// Rebuilds the bags of a dataset from its image groups (e.g. a per-epoch
/// re-partition).
inline void rebuild_bags(Dataset& ds, std::uint64_t seed) {
  ds.bags = build_bags(ds.groups_by_class, ds.n_g, ds.n_p, seed);
}

/// Same images without any proposals: bags of n_g whole images.
inline Dataset without_proposals(const Dataset& ds, std::uint64_t seed) {
  Dataset out = ds;
  for (auto& groups : out.groups_by_class)
    for (auto& g : groups) g.proposals.clear();
  out.n_p = 0;
  rebuild_bags(out, seed);
  return out;
}

inline void validate_dataset(const Dataset& ds) {
  if (ds.num_classes < 1) throw DataError("dataset has no classes");
  std::vector<int> per_class(static_cast<std::size_t>(ds.num_classes), 0);
  const auto n_b = static_cast<std::size_t>(ds.bag_size());
  for (std::size_t b = 0; b < ds.bags.size(); ++b) {
    const auto& bag = ds.bags[b];
    if (bag.label < 0 || bag.label >= ds.num_classes)
      throw DataError(detail::concat("bag ", b, " has label ", bag.label, " outside [0, ", ds.num_classes, ")"));
    if (bag.size() != n_b)
      throw DataError(detail::concat("bag ", b, " has ", bag.size(), " ROIs, expected ", n_b));
    for (const auto& inst : bag.instances) {
      if (inst.feature.size() != ds.feature_dim)
        throw DataError("instance '" + inst.id + "' has wrong feature length");
      if (!inst.feature.allFinite()) throw DataError("instance '" + inst.id + "' has non-finite feature");
      if (inst.kind == RoiKind::Proposal && (inst.parent_image_id.empty() || !inst.area))
        throw DataError("proposal '" + inst.id + "' lacks parent or area");
    }
    ++per_class[static_cast<std::size_t>(bag.label)];
  }
  for (int c = 0; c < ds.num_classes; ++c)
    if (per_class[static_cast<std::size_t>(c)] < 1)
      throw DataError(detail::concat("class ", c, " has no training bags"));
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

/**
 * Generates a webly-noisy dataset with ground-truth noise flags.
 *
 * Class c has unit direction mu_c; clean image features are
 * mu_c * class_separation plus unit isotropic Gaussian noise. A label-noise
 * image is drawn from a different, uniformly chosen class and all of its
 * proposals inherit the LabelNoise flag. A proposal of a clean image is a
 * background sample with probability background_proposal_rate, tilted
 * towards small areas by background_area_bias while keeping the overall
 * rate, drawn from one of background_modes shared Gaussian modes;
 * otherwise it is a jittered copy of its image.
 */
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const int C = cfg.num_classes;
  const int d = cfg.feature_dim;
  Rng rng(derive_seed(cfg.seed, "synth"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> area_dist(1000.0, 10000.0);

  std::vector<Eigen::VectorXd> means;
  for (int c = 0; c < C; ++c) means.push_back(random_unit_vector(rng, d) * cfg.class_separation);
  std::vector<Eigen::VectorXd> background_means;
  for (int k = 0; k < cfg.background_modes; ++k)
    background_means.push_back(random_unit_vector(rng, d) * cfg.class_separation);
  std::uniform_int_distribution<int> background_mode(0, cfg.background_modes - 1);

  const double rate = cfg.background_proposal_rate;
  double tilt = 0.0;
  if (rate > 0.0 && rate < 1.0)
    tilt = cfg.background_area_bias * std::min(1.0, (1.0 - rate) / rate);
  const double jitter = cfg.proposal_jitter * cfg.class_separation;

  Dataset ds;
  ds.num_classes = C;
  ds.feature_dim = d;
  ds.n_g = cfg.n_g;
  ds.n_p = cfg.n_p;
  ds.groups_by_class.resize(static_cast<std::size_t>(C));

  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < cfg.images_per_class; ++i) {
      ImageGroup g;
      g.label = c;
      const bool noisy = unit(rng) < cfg.label_noise_rate;
      int source = c;
      if (noisy) {
        std::uniform_int_distribution<int> other(0, C - 2);
        source = other(rng);
        if (source >= c) ++source;
      }
      g.image.id = detail::concat("c", c, "_i", i);
      g.image.kind = RoiKind::Image;
      g.image.feature = means[static_cast<std::size_t>(source)] + gaussian_vector(rng, d);
      g.image.noise = noisy ? NoiseFlag::LabelNoise : NoiseFlag::Clean;
      for (int j = 0; j < cfg.n_p; ++j) {
        Instance p;
        p.id = detail::concat(g.image.id, "_p", j);
        p.kind = RoiKind::Proposal;
        p.parent_image_id = g.image.id;
        const double area = area_dist(rng);
        p.area = area;
        const double u = (area - 1000.0) / 9000.0;
        const double p_background = std::clamp(rate * (1.0 + tilt * (1.0 - 2.0 * u)), 0.0, 1.0);
        const bool background = !noisy && unit(rng) < p_background;
        if (background) {
          const auto k = static_cast<std::size_t>(cfg.background_modes > 1 ? background_mode(rng) : 0);
          p.feature = background_means[k] + gaussian_vector(rng, d);
          p.noise = NoiseFlag::BackgroundNoise;
        } else {
          p.feature = g.image.feature + gaussian_vector(rng, d, jitter);
          p.noise = noisy ? NoiseFlag::LabelNoise : NoiseFlag::Clean;
        }
        g.proposals.push_back(std::move(p));
      }
      ds.groups_by_class[static_cast<std::size_t>(c)].push_back(std::move(g));
    }
  }
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < cfg.test_images_per_class; ++i) {
      TestImage t;
      t.id = detail::concat("test_c", c, "_i", i);
      t.label = c;
      t.feature = means[static_cast<std::size_t>(c)] + gaussian_vector(rng, d);
      ds.test_images.push_back(std::move(t));
    }
  }
  ds.bags = build_bags(ds.groups_by_class, cfg.n_g, cfg.n_p, cfg.seed);
  ds.metadata = {{"source", "synthetic"},
                 {"num_classes", cfg.num_classes},
                 {"feature_dim", cfg.feature_dim},
                 {"images_per_class", cfg.images_per_class},
                 {"test_images_per_class", cfg.test_images_per_class},
                 {"n_g", cfg.n_g},
                 {"n_p", cfg.n_p},
                 {"label_noise_rate", cfg.label_noise_rate},
                 {"background_proposal_rate", cfg.background_proposal_rate},
                 {"class_separation", cfg.class_separation},
                 {"proposal_jitter", cfg.proposal_jitter},
                 {"background_area_bias", cfg.background_area_bias},
                 {"background_modes", cfg.background_modes},
                 {"seed", cfg.seed}};
  return ds;
}

}  // namespace somnet
