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

// Ablation harness: named variants of the training configuration, run
// with shared seeds and collected into one comparison table.

#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "somnet/metrics.hpp"
#include "somnet/trainer.hpp"

namespace somnet {

inline const std::vector<std::string>& suite_variants() {
  static const std::vector<std::string> names = {"full",   "wo_d",      "wo_r",    "wo_a",  "wo_som",
                                                 "wo_roi", "fixed_p40", "uniform", "kmeans"};
  return names;
}

/// Maps an ablation name onto a configuration; no code path changes.
inline TrainConfig apply_ablation(TrainConfig cfg, const std::string& name) {
  if (name == "full") return cfg;
  if (name == "wo_d") {
    cfg.use_d_score = false;
  } else if (name == "wo_r") {
    cfg.use_r_score = false;
  } else if (name == "wo_a") {
    cfg.use_a_score = false;
  } else if (name == "wo_som") {
    cfg.use_som = false;
  } else if (name == "wo_roi") {
    cfg.use_proposals = false;
  } else if (name == "fixed_p40") {
    // Same total epoch budget as the curriculum, p held at 40%.
    const auto stages = static_cast<int>(cfg.curriculum().size());
    cfg.p_start = 0.40;
    cfg.p_end = 0.40;
    cfg.epochs_per_stage *= stages;
  } else if (name == "uniform") {
    cfg.weighting = WeightingMode::Uniform;
  } else if (name == "kmeans") {
    cfg.weighting = WeightingMode::KMeans;
  } else {
    throw ConfigError("unknown ablation '" + name + "'");
  }
  return cfg;
}

struct EvalReport {
  std::string variant;
  std::uint64_t seed = 0;
  double top1 = 0.0;
  std::vector<double> per_class_accuracy;
  std::optional<double> noise_auc;
  std::optional<double> dead_key_fraction;
  /// Mean weight mass per bag on Clean instances (synthetic data only).
  std::optional<double> clean_weight_mass;
  std::optional<double> delta_vs_uniform;
  RunReport run;
};

inline std::vector<double> per_class_accuracy(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  std::vector<double> hits(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    totals[static_cast<std::size_t>(labels[i])] += 1.0;
    if (preds[i] == labels[i]) hits[static_cast<std::size_t>(labels[i])] += 1.0;
  }
  for (std::size_t c = 0; c < hits.size(); ++c) hits[c] = totals[c] > 0.0 ? hits[c] / totals[c] : 0.0;
  return hits;
}

/// Test-set evaluation of a trained state; memory is not consulted.
inline EvalReport evaluate(const TrainState& st, const Dataset& ds, const RunReport& run, const std::string& variant) {
  EvalReport r;
  r.variant = variant;
  r.seed = run.seed;
  r.run = run;
  if (ds.test_images.empty()) throw DataError("evaluation needs a test split");
  const auto preds = predict(st.classifier, ds.test_images);
  std::vector<int> labels;
  for (const auto& t : ds.test_images) labels.push_back(t.label);
  r.top1 = accuracy(preds, labels);
  r.per_class_accuracy = per_class_accuracy(preds, labels, ds.num_classes);
  r.noise_auc = run.noise_auc;
  r.dead_key_fraction = run.dead_key_fraction;
  double mass = 0.0;
  bool flagged = true;
  for (const auto& bag : st.bags)
    for (std::size_t i = 0; i < bag.size(); ++i) {
      if (!bag.instances[i].noise) flagged = false;
      if (bag.instances[i].noise == NoiseFlag::Clean) mass += bag.weights(static_cast<Eigen::Index>(i));
    }
  if (flagged && !st.bags.empty()) r.clean_weight_mass = mass / static_cast<double>(st.bags.size());
  return r;
}

inline EvalReport run_variant(const Dataset& ds, const TrainConfig& base, const std::string& variant) {
  const TrainConfig cfg = apply_ablation(base, variant);
  auto result = train(ds, cfg);
  result.report.variant = variant;
  return evaluate(result.state, ds, result.report, variant);
}

/// Runs every suite variant with the base seed; `threads` > 1 fans runs out
/// over worker threads, each owning its state.
inline std::vector<EvalReport> run_suite(const Dataset& ds, const TrainConfig& base, int threads = 1,
                                         const std::vector<std::string>& variants = suite_variants()) {
  std::vector<EvalReport> rows(variants.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < variants.size(); ++i) rows[i] = run_variant(ds, base, variants[i]);
  } else {
    for (std::size_t start = 0; start < variants.size(); start += static_cast<std::size_t>(threads)) {
      std::vector<std::future<EvalReport>> jobs;
      const std::size_t end = std::min(variants.size(), start + static_cast<std::size_t>(threads));
      for (std::size_t i = start; i < end; ++i)
        jobs.push_back(std::async(std::launch::async, [&, i] { return run_variant(ds, base, variants[i]); }));
      for (std::size_t i = start; i < end; ++i) rows[i] = jobs[i - start].get();
    }
  }
  const auto uniform = std::find_if(rows.begin(), rows.end(), [](const EvalReport& r) { return r.variant == "uniform"; });
  if (uniform != rows.end()) {
    const double base_top1 = uniform->top1;
    for (auto& r : rows) r.delta_vs_uniform = r.top1 - base_top1;
  }
  return rows;
}

namespace detail {

inline std::string csv_number(const std::optional<double>& v) {
  if (!v) return "nan";
  std::ostringstream oss;
  oss.precision(6);
  oss << std::fixed << *v;
  return oss.str();
}

}  // namespace detail

/// name,seed,top1,auc,dead_key_frac per variant.
inline std::string suite_csv(std::span<const EvalReport> rows) {
  std::string out = "name,seed,top1,auc,dead_key_frac\n";
  for (const auto& r : rows)
    out += r.variant + "," + std::to_string(r.seed) + "," + detail::csv_number(r.top1) + "," +
           detail::csv_number(r.noise_auc) + "," + detail::csv_number(r.dead_key_fraction) + "\n";
  return out;
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"variant", r.variant},
          {"seed", r.seed},
          {"top1", r.top1},
          {"per_class_accuracy", r.per_class_accuracy},
          {"noise_auc", detail::optional_json(r.noise_auc)},
          {"dead_key_fraction", detail::optional_json(r.dead_key_fraction)},
          {"clean_weight_mass", detail::optional_json(r.clean_weight_mass)},
          {"delta_vs_uniform", detail::optional_json(r.delta_vs_uniform)},
          {"run_id", r.run.run_id}};
}

inline nlohmann::json suite_json(std::span<const EvalReport> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  return arr;
}

}  // namespace somnet
