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
 * @file trainer.hpp
 * @brief Warm-up, curriculum training and prediction.
 *
 * Training alternates three things:
 *   1. ROI weights of every bag are refreshed from the memory at the start
 *      of each epoch: w(x) = s_{y,z} * sigma(x), top ceil(p * n_b) kept,
 *      then L1-normalized.
 *   2. Each mini-batch of bag features takes one classifier SGD step.
 *   3. The same bag features drive the memory updates.
 * Instance weights are constants for the classifier and bag features are
 * constants for the memory. The keep-fraction p follows the curriculum
 * p_start, p_start + p_step, ... up to p_end.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "somnet/data_model.hpp"
#include "somnet/error.hpp"
#include "somnet/kmeans.hpp"
#include "somnet/memory.hpp"
#include "somnet/metrics.hpp"
#include "somnet/model.hpp"
#include "somnet/random.hpp"

namespace somnet {

enum class WeightingMode {
  Memory,   // learned self-organizing memory
  Uniform,  // every ROI weighted 1/n_b, never refreshed
  KMeans,   // spherical k-means memory, refit once per curriculum stage
};

inline const char* to_string(WeightingMode m) {
  switch (m) {
    case WeightingMode::Memory: return "memory";
    case WeightingMode::Uniform: return "uniform";
    case WeightingMode::KMeans: return "kmeans";
  }
  return "memory";
}

inline WeightingMode weighting_from_string(const std::string& s) {
  if (s == "memory") return WeightingMode::Memory;
  if (s == "uniform") return WeightingMode::Uniform;
  if (s == "kmeans") return WeightingMode::KMeans;
  throw ConfigError("weighting must be one of memory|uniform|kmeans, got '" + s + "'");
}

enum class KeyInit {
  Gaussian,  // isotropic Gaussian columns, unit length
  Data,      // unit-length bag features of randomly chosen training bags
};

inline const char* to_string(KeyInit k) { return k == KeyInit::Gaussian ? "gaussian" : "data"; }

inline KeyInit key_init_from_string(const std::string& s) {
  if (s == "gaussian") return KeyInit::Gaussian;
  if (s == "data") return KeyInit::Data;
  throw ConfigError("key_init must be gaussian|data, got '" + s + "'");
}

/// Which factors of w(x) = d * r * sigma are active.
struct ScoreToggles {
  bool use_d = true;
  bool use_r = true;
  bool use_a = true;
};

struct TrainConfig {
  int grid_w = 0;  // 0: smallest square grid with L >= 10 * C
  int radius = 1;
  double p_start = 0.10;
  double p_step = 0.05;
  double p_end = 0.40;
  int warmup_epochs_cls = 5;
  int warmup_epochs_mem = 5;
  int epochs_per_stage = 5;
  int batch_size = 32;
  double lr_cls = 0.01;
  double momentum = 0.9;
  double lr_key = 0.5;
  double lr_value = 0.05;
  double lr_decay = 1.0;  // memory rates multiplied by this at each stage boundary
  bool use_d_score = true;
  bool use_r_score = true;
  bool use_a_score = true;
  bool use_som = true;
  bool use_proposals = true;
  WeightingMode weighting = WeightingMode::Memory;
  int kmeans_iters = 20;
  bool repartition_bags = false;
  int encoder_dim = 0;  // 0 disables the encoder
  KeyInit key_init = KeyInit::Gaussian;
  std::uint64_t seed = 0;

  void validate() const {
    if (grid_w < 0) throw ConfigError("grid_w must be >= 0");
    if (radius < 0) throw ConfigError("radius must be >= 0");
    if (!(p_start > 0.0) || !(p_end <= 1.0) || !(p_start <= p_end))
      throw ConfigError("need 0 < p_start <= p_end <= 1");
    if (!(p_step > 0.0)) throw ConfigError("p_step must be > 0");
    if (warmup_epochs_cls < 1 || warmup_epochs_mem < 1 || epochs_per_stage < 1)
      throw ConfigError("epoch counts must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_cls > 0.0) || !(lr_key > 0.0) || !(lr_value > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (kmeans_iters < 0) throw ConfigError("kmeans_iters must be >= 0");
    if (encoder_dim < 0) throw ConfigError("encoder_dim must be >= 0");
  }

  int resolved_grid_w(int num_classes) const {
    if (grid_w > 0) return grid_w;
    int w = 1;
    while (w * w < 10 * num_classes) ++w;
    return w;
  }

  int effective_radius() const { return use_som ? radius : 0; }

  ScoreToggles toggles() const { return {use_d_score, use_r_score, use_a_score}; }

  /// p_start, p_start + p_step, ... while p <= p_end.
  std::vector<double> curriculum() const {
    std::vector<double> ps;
    for (int s = 0;; ++s) {
      const double p = p_start + s * p_step;
      if (p > p_end + 1e-9) break;
      ps.push_back(p);
    }
    return ps;
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"grid_w", c.grid_w},
          {"radius", c.radius},
          {"p_start", c.p_start},
          {"p_step", c.p_step},
          {"p_end", c.p_end},
          {"warmup_epochs_cls", c.warmup_epochs_cls},
          {"warmup_epochs_mem", c.warmup_epochs_mem},
          {"epochs_per_stage", c.epochs_per_stage},
          {"batch_size", c.batch_size},
          {"lr_cls", c.lr_cls},
          {"momentum", c.momentum},
          {"lr_key", c.lr_key},
          {"lr_value", c.lr_value},
          {"lr_decay", c.lr_decay},
          {"use_d_score", c.use_d_score},
          {"use_r_score", c.use_r_score},
          {"use_a_score", c.use_a_score},
          {"use_som", c.use_som},
          {"use_proposals", c.use_proposals},
          {"weighting", to_string(c.weighting)},
          {"kmeans_iters", c.kmeans_iters},
          {"repartition_bags", c.repartition_bags},
          {"encoder_dim", c.encoder_dim},
          {"key_init", to_string(c.key_init)},
          {"seed", c.seed}};
}

/// Number of ROIs kept per bag: ceil(p * n_b), at least 1.
inline int top_m(double p, std::size_t n_b) {
  const double raw = std::ceil(p * static_cast<double>(n_b) - 1e-9);
  return std::clamp(static_cast<int>(raw), 1, static_cast<int>(n_b));
}

// ---------------------------------------------------------------------------
// Bag features and ROI weights
// ---------------------------------------------------------------------------

/// Weighted average of the bag's encoded instance features.
inline Eigen::VectorXd bag_feature(const Bag& bag, const Eigen::VectorXd& weights, const ModelParams* model = nullptr) {
  if (static_cast<std::size_t>(weights.size()) != bag.size()) throw DataError("bag_feature: weights/bag size mismatch");
  if (!(weights.sum() > 0.0)) throw NumericError("bag_feature: all-zero weights");
  if (model) return weighted_feature(*model, bag, weights);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(bag.instances.front().feature.size());
  for (std::size_t i = 0; i < bag.size(); ++i) {
    const double w = weights(static_cast<Eigen::Index>(i));
    if (w != 0.0) x += w * bag.instances[i].feature;
  }
  return x;
}

struct RoiWeights {
  Eigen::VectorXd weights;
  Eigen::VectorXd raw;        // s_{y,z} * sigma with disabled factors set to 1
  std::vector<int> winners;   // per instance
  bool fallback = false;      // all raw weights were zero
};

/**
 * Memory-driven ROI weights for one bag.
 *
 * @param unit_features encoded instance features, one unit-norm column each
 * @param sigma area score per instance
 * @param unit_keys key matrix with unit-norm columns
 *
 * Survivors of the top-m cut keep weight proportional to their raw score;
 * a survivor whose raw score is exactly zero gets a floor of 1e-6 times the
 * bag's largest raw score, so exactly m ROIs stay active.
 */
inline RoiWeights compute_roi_weights(const Eigen::MatrixXd& unit_features, const Eigen::VectorXd& sigma, int label,
                                      const MemoryState& m, const Eigen::MatrixXd& unit_keys, double p,
                                      ScoreToggles toggles, const Bag& bag) {
  const auto n = static_cast<std::size_t>(unit_features.cols());
  if (sigma.size() != unit_features.cols() || bag.size() != n) throw DataError("compute_roi_weights: size mismatch");
  RoiWeights out;
  out.raw.resize(static_cast<Eigen::Index>(n));
  const auto wins = winners(unit_features, unit_keys);
  out.winners.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int z = wins[i].index;
    out.winners[i] = z;
    const double d = toggles.use_d ? m.d_values(label, z) : 1.0;
    const double r = toggles.use_r ? m.r_values(label, z) : 1.0;
    const double a = toggles.use_a ? sigma(static_cast<Eigen::Index>(i)) : 1.0;
    out.raw(static_cast<Eigen::Index>(i)) = d * r * a;
  }
  const double max_raw = out.raw.maxCoeff();
  if (!(max_raw > 0.0)) {
    int images = 0;
    for (const auto& inst : bag.instances) images += inst.kind == RoiKind::Image ? 1 : 0;
    out.weights = init_weights(bag, images);
    out.fallback = true;
    return out;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.raw(static_cast<Eigen::Index>(a)) > out.raw(static_cast<Eigen::Index>(b)); });
  const auto m_keep = static_cast<std::size_t>(top_m(p, n));
  out.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const double floor = 1e-6 * max_raw;
  for (std::size_t k = 0; k < m_keep; ++k) {
    const auto i = static_cast<Eigen::Index>(order[k]);
    out.weights(i) = std::max(out.raw(i), floor);
  }
  out.weights /= out.weights.sum();
  return out;
}

/// Convenience overload that encodes, normalizes and scores the bag itself.
inline RoiWeights compute_roi_weights(const Bag& bag, const MemoryState& m, double p, ScoreToggles toggles,
                                      const ModelParams* model = nullptr) {
  Eigen::MatrixXd feats(m.dim(), static_cast<Eigen::Index>(bag.size()));
  for (std::size_t i = 0; i < bag.size(); ++i)
    feats.col(static_cast<Eigen::Index>(i)) = model ? encode(*model, bag.instances[i].feature) : bag.instances[i].feature;
  return compute_roi_weights(normalized_columns(feats), area_scores(bag), bag.label, m, normalized_columns(m.keys), p,
                             toggles, bag);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct StageReport {
  double p = 0.0;
  int top_m = 0;
  double lr_key = 0.0;
  double lr_value = 0.0;
  std::vector<double> cls_loss;     // mean per epoch
  std::vector<double> memory_loss;  // mean per bag per epoch
  int fallback_bags = 0;
};

struct RunReport {
  std::string run_id;
  std::string variant = "full";
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<double> p_trace;
  std::vector<double> warmup_cls_loss;
  std::vector<double> warmup_memory_loss;
  double warmup_train_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::vector<StageReport> stages;
  std::optional<double> test_accuracy;
  std::optional<double> noise_auc;
  std::optional<double> dead_key_fraction;
  int fallback_bags = 0;
  int weight_refreshes = 0;
};

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages)
    stages.push_back({{"p", s.p},
                      {"top_m", s.top_m},
                      {"lr_key", s.lr_key},
                      {"lr_value", s.lr_value},
                      {"cls_loss", s.cls_loss},
                      {"memory_loss", s.memory_loss},
                      {"fallback_bags", s.fallback_bags}});
  return {{"run_id", r.run_id},
          {"variant", r.variant},
          {"seed", r.seed},
          {"config", r.config},
          {"p_trace", r.p_trace},
          {"warmup",
           {{"cls_loss", r.warmup_cls_loss},
            {"memory_loss", r.warmup_memory_loss},
            {"train_accuracy", std::isnan(r.warmup_train_accuracy) ? nlohmann::json(nullptr)
                                                                   : nlohmann::json(r.warmup_train_accuracy)}}},
          {"stages", stages},
          {"metrics",
           {{"test_accuracy", detail::optional_json(r.test_accuracy)},
            {"noise_auc", detail::optional_json(r.noise_auc)},
            {"dead_key_fraction", detail::optional_json(r.dead_key_fraction)}}},
          {"anomalies", {{"fallback_bags", r.fallback_bags}, {"weight_refreshes", r.weight_refreshes}}}};
}

// ---------------------------------------------------------------------------
// Training state
// ---------------------------------------------------------------------------

struct TrainState {
  ClassifierState classifier;
  MemoryState memory;
  std::vector<Bag> bags;  // active ROI weights live in Bag::weights
  std::vector<Eigen::VectorXd> sigma;
  std::vector<Eigen::MatrixXd> unit_cache;  // normalized raw features, encoder disabled only
  int n_g = 1;
  double p = 0.0;
  int epoch = 0;
  std::vector<int> last_epoch_winners;
  RunReport report;
};

namespace detail {

inline const ModelParams* encoder_of(const TrainState& st) {
  return st.classifier.params.has_encoder() ? &st.classifier.params : nullptr;
}

inline Eigen::MatrixXd unit_bag_features(const TrainState& st, std::size_t b) {
  if (!st.classifier.params.has_encoder()) return st.unit_cache[b];
  return normalized_columns(encode_bag(st.classifier.params, st.bags[b]));
}

inline void prepare_bags(TrainState& st) {
  st.sigma.clear();
  st.unit_cache.clear();
  for (const auto& bag : st.bags) {
    st.sigma.push_back(area_scores(bag));
    if (!st.classifier.params.has_encoder()) {
      Eigen::MatrixXd f(bag.instances.front().feature.size(), static_cast<Eigen::Index>(bag.size()));
      for (std::size_t i = 0; i < bag.size(); ++i) f.col(static_cast<Eigen::Index>(i)) = bag.instances[i].feature;
      st.unit_cache.push_back(normalized_columns(f));
    }
  }
}

inline void reset_init_weights(TrainState& st) {
  for (auto& bag : st.bags) bag.weights = init_weights(bag, st.n_g);
}

inline void set_uniform_weights(TrainState& st) {
  for (auto& bag : st.bags)
    bag.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(bag.size()), 1.0 / static_cast<double>(bag.size()));
}

/// Encoded bag features (d x B) under the bags' current weights.
inline Eigen::MatrixXd all_bag_features(const TrainState& st) {
  Eigen::MatrixXd x(st.classifier.feature_dim(), static_cast<Eigen::Index>(st.bags.size()));
  for (std::size_t b = 0; b < st.bags.size(); ++b)
    x.col(static_cast<Eigen::Index>(b)) = bag_feature(st.bags[b], st.bags[b].weights, encoder_of(st));
  return x;
}

inline std::vector<int> bag_labels(const TrainState& st) {
  std::vector<int> y;
  for (const auto& bag : st.bags) y.push_back(bag.label);
  return y;
}

inline void refit_kmeans(TrainState& st, const TrainConfig& cfg, int num_classes, std::uint64_t tag) {
  const auto labels = bag_labels(st);
  const int grid_w = st.memory.grid_w;
  auto km = kmeans_memory(all_bag_features(st), labels, num_classes, grid_w, cfg.kmeans_iters,
                          derive_seed(cfg.seed, "kmeans") + tag);
  km.memory.radius = st.memory.radius;
  km.memory.lr_key = st.memory.lr_key;
  km.memory.lr_value = st.memory.lr_value;
  st.memory = std::move(km.memory);
}

/// Replaces the keys by unit bag features of distinct random bags; slots
/// beyond the bag count keep their Gaussian init.
inline void seed_keys_from_bags(TrainState& st, const TrainConfig& cfg) {
  std::vector<std::size_t> order(st.bags.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, "key_init"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = std::min(order.size(), static_cast<std::size_t>(st.memory.slots()));
  for (std::size_t l = 0; l < n; ++l) {
    const auto& bag = st.bags[order[l]];
    const Eigen::VectorXd x = bag_feature(bag, bag.weights, encoder_of(st));
    const double norm = x.norm();
    if (norm > kNormEpsilon) st.memory.keys.col(static_cast<Eigen::Index>(l)) = x / norm;
  }
}

/// Refreshes every bag's weights from the memory; returns the fallback count.
inline int refresh_weights(TrainState& st, const TrainConfig& cfg) {
  const Eigen::MatrixXd unit_keys = normalized_columns(st.memory.keys);
  int fallbacks = 0;
  for (std::size_t b = 0; b < st.bags.size(); ++b) {
    auto& bag = st.bags[b];
    auto rw = compute_roi_weights(unit_bag_features(st, b), st.sigma[b], bag.label, st.memory, unit_keys, st.p,
                                  cfg.toggles(), bag);
    bag.weights = std::move(rw.weights);
    fallbacks += rw.fallback ? 1 : 0;
  }
  ++st.report.weight_refreshes;
  st.report.fallback_bags += fallbacks;
  return fallbacks;
}

struct EpochStats {
  double cls_loss = 0.0;
  double memory_loss = 0.0;
};

/// One pass over all bags in a seeded random order.
inline EpochStats run_epoch(TrainState& st, const TrainConfig& cfg, bool train_cls, bool train_mem, bool track_winners) {
  Rng rng(derive_seed(cfg.seed, "epoch") + static_cast<std::uint64_t>(st.epoch));
  std::vector<std::size_t> order(st.bags.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  EpochStats stats;
  st.last_epoch_winners.clear();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < order.size(); start += B) {
    const std::size_t end = std::min(order.size(), start + B);
    std::vector<Eigen::VectorXd> feats;
    feats.reserve(end - start);
    for (std::size_t k = start; k < end; ++k) {
      const auto& bag = st.bags[order[k]];
      feats.push_back(bag_feature(bag, bag.weights, encoder_of(st)));
    }
    if (train_cls) {
      std::vector<BagSample> batch;
      for (std::size_t k = start; k < end; ++k) {
        const auto& bag = st.bags[order[k]];
        batch.push_back({&bag, &bag.weights, bag.label});
      }
      const auto lg = cls_loss_and_grads(st.classifier.params, batch);
      if (!std::isfinite(lg.loss))
        throw NumericError(concat("non-finite classification loss at epoch ", st.epoch, ", p=", st.p));
      stats.cls_loss += lg.loss * static_cast<double>(end - start);
      sgd_step(st.classifier, lg.grads);
    }
    for (std::size_t k = start; k < end; ++k) {
      const int label = st.bags[order[k]].label;
      if (train_mem) {
        const auto res = memory_update(feats[k - start], label, st.memory);
        if (!std::isfinite(res.loss.total()))
          throw NumericError(concat("non-finite memory loss at epoch ", st.epoch, ", p=", st.p));
        stats.memory_loss += res.loss.total();
        st.last_epoch_winners.push_back(res.winner.index);
      } else if (track_winners) {
        st.last_epoch_winners.push_back(winner(feats[k - start], st.memory.keys).index);
      }
    }
  }
  const double n = static_cast<double>(st.bags.size());
  stats.cls_loss /= n;
  stats.memory_loss /= n;
  ++st.epoch;
  return stats;
}

}  // namespace detail

/// Bag-level training accuracy of the classifier under current weights.
inline double bag_accuracy(const TrainState& st) {
  std::vector<int> preds;
  std::vector<int> labels;
  for (const auto& bag : st.bags) {
    const Eigen::VectorXd x = bag_feature(bag, bag.weights, detail::encoder_of(st));
    const Eigen::VectorXd probs = classify(st.classifier.params, x);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.size(); ++c)
      if (probs(c) > probs(best)) best = c;
    preds.push_back(static_cast<int>(best));
    labels.push_back(bag.label);
  }
  return accuracy(preds, labels);
}

/**
 * Initializes classifier and memory with the initial weights: classifier
 * first (warmup_epochs_cls epochs), then memory with the classifier frozen.
 */
inline TrainState warmup(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  validate_dataset(ds);
  TrainState st;
  st.n_g = ds.n_g;
  st.bags = cfg.use_proposals ? ds.bags : without_proposals(ds, cfg.seed).bags;
  st.classifier = ClassifierState::create(ds.feature_dim, ds.num_classes, cfg.encoder_dim, cfg.lr_cls, cfg.momentum,
                                          derive_seed(cfg.seed, "classifier"));
  const int grid_w = cfg.resolved_grid_w(ds.num_classes);
  st.memory = MemoryState::create(st.classifier.feature_dim(), ds.num_classes, grid_w, cfg.effective_radius(),
                                  cfg.lr_key, cfg.lr_value, derive_seed(cfg.seed, "memory"));
  detail::prepare_bags(st);

  auto& rep = st.report;
  rep.seed = cfg.seed;
  rep.config = to_json(cfg);
  if (cfg.weighting == WeightingMode::Uniform) {
    detail::set_uniform_weights(st);
  } else {
    detail::reset_init_weights(st);
  }
  for (int e = 0; e < cfg.warmup_epochs_cls; ++e)
    rep.warmup_cls_loss.push_back(detail::run_epoch(st, cfg, true, false, false).cls_loss);
  rep.warmup_train_accuracy = bag_accuracy(st);

  switch (cfg.weighting) {
    case WeightingMode::Memory:
      if (cfg.key_init == KeyInit::Data) detail::seed_keys_from_bags(st, cfg);
      for (int e = 0; e < cfg.warmup_epochs_mem; ++e)
        rep.warmup_memory_loss.push_back(detail::run_epoch(st, cfg, false, true, false).memory_loss);
      break;
    case WeightingMode::KMeans:
      detail::refit_kmeans(st, cfg, ds.num_classes, 0);
      break;
    case WeightingMode::Uniform:
      break;
  }
  return st;
}

/// Curriculum stages on a warmed-up state.
inline RunReport train(TrainState& st, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  auto& rep = st.report;
  const auto ps = cfg.curriculum();
  const bool online_memory = cfg.weighting == WeightingMode::Memory;
  for (std::size_t s = 0; s < ps.size(); ++s) {
    st.p = ps[s];
    if (s > 0) {
      st.memory.lr_key *= cfg.lr_decay;
      st.memory.lr_value *= cfg.lr_decay;
    }
    if (cfg.weighting == WeightingMode::KMeans && s > 0)
      detail::refit_kmeans(st, cfg, ds.num_classes, static_cast<std::uint64_t>(s));
    StageReport stage;
    stage.p = st.p;
    stage.top_m = top_m(st.p, st.bags.empty() ? 1 : st.bags.front().size());
    stage.lr_key = st.memory.lr_key;
    stage.lr_value = st.memory.lr_value;
    rep.p_trace.push_back(st.p);
    for (int e = 0; e < cfg.epochs_per_stage; ++e) {
      if (cfg.repartition_bags) {
        Dataset fresh = ds;
        rebuild_bags(fresh, derive_seed(cfg.seed, "repartition") + static_cast<std::uint64_t>(st.epoch));
        st.bags = cfg.use_proposals ? std::move(fresh.bags) : without_proposals(fresh, cfg.seed + static_cast<std::uint64_t>(st.epoch)).bags;
        detail::prepare_bags(st);
        if (cfg.weighting == WeightingMode::Uniform) detail::set_uniform_weights(st);
      }
      if (cfg.weighting != WeightingMode::Uniform) stage.fallback_bags += detail::refresh_weights(st, cfg);
      const bool last = s + 1 == ps.size() && e + 1 == cfg.epochs_per_stage;
      const auto stats = detail::run_epoch(st, cfg, true, online_memory,
                                           last && cfg.weighting == WeightingMode::KMeans);
      stage.cls_loss.push_back(stats.cls_loss);
      if (online_memory) stage.memory_loss.push_back(stats.memory_loss);
    }
    rep.stages.push_back(std::move(stage));
  }

  if (cfg.weighting != WeightingMode::Uniform)
    rep.dead_key_fraction = dead_key_fraction(st.last_epoch_winners, st.memory.slots());

  std::vector<double> weights;
  std::vector<NoiseFlag> flags;
  bool flagged = true;
  for (const auto& bag : st.bags) {
    for (std::size_t i = 0; i < bag.size(); ++i) {
      if (!bag.instances[i].noise) flagged = false;
      weights.push_back(bag.weights(static_cast<Eigen::Index>(i)));
      flags.push_back(bag.instances[i].noise.value_or(NoiseFlag::Clean));
    }
  }
  const bool both = std::any_of(flags.begin(), flags.end(), [](NoiseFlag f) { return f == NoiseFlag::Clean; }) &&
                    std::any_of(flags.begin(), flags.end(), [](NoiseFlag f) { return f != NoiseFlag::Clean; });
  if (flagged && both) rep.noise_auc = noise_auc(weights, flags);

  if (!ds.test_images.empty()) {
    std::vector<int> preds;
    std::vector<int> labels;
    for (const auto& t : ds.test_images) {
      preds.push_back(predict_one(st.classifier.params, t.feature));
      labels.push_back(t.label);
    }
    rep.test_accuracy = accuracy(preds, labels);
  }
  const std::string fingerprint = rep.config.dump() + ds.metadata.dump();
  rep.run_id = detail::concat(std::hex, fnv1a64(fingerprint));
  return rep;
}

struct TrainResult {
  TrainState state;
  RunReport report;
};

/// Warm-up followed by the full curriculum.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  TrainResult out{warmup(ds, cfg), {}};
  out.report = train(out.state, ds, cfg);
  return out;
}

/// Test-time prediction from image-level features; the memory is not used.
inline std::vector<int> predict(const ClassifierState& classifier, std::span<const TestImage> images) {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& t : images) out.push_back(predict_one(classifier.params, t.feature));
  return out;
}

}  // namespace somnet
