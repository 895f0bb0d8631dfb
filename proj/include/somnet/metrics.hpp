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

#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "somnet/data_model.hpp"
#include "somnet/error.hpp"

namespace somnet {

/// Fraction of positions where predictions equal labels.
inline double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw Error("accuracy: length mismatch");
  if (preds.empty()) throw Error("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// ROC-AUC of `scores` for separating positives from negatives, via the
/// Mann-Whitney U statistic with average ranks for ties.
inline double roc_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw Error("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw Error("roc_auc: needs both positive and negative examples");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// AUC of instance weights for predicting Clean against either noise type.
inline double noise_auc(std::span<const double> weights, std::span<const NoiseFlag> flags) {
  if (weights.size() != flags.size()) throw Error("noise_auc: length mismatch");
  // std::vector<bool> is not contiguous, so use a plain array for the span.
  auto clean = std::make_unique<bool[]>(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) clean[i] = flags[i] == NoiseFlag::Clean;
  try {
    return roc_auc(weights, std::span<const bool>(clean.get(), flags.size()));
  } catch (const Error&) {
    throw Error("noise_auc: all instances share one class (need clean and noisy)");
  }
}

/// Fraction of the L slots that never appear in `winner_indices`.
inline double dead_key_fraction(std::span<const int> winner_indices, int slots) {
  if (slots < 1) throw Error("dead_key_fraction: no slots");
  std::vector<char> alive(static_cast<std::size_t>(slots), 0);
  for (int z : winner_indices)
    if (z >= 0 && z < slots) alive[static_cast<std::size_t>(z)] = 1;
  const auto live = std::count(alive.begin(), alive.end(), 1);
  return static_cast<double>(slots - live) / static_cast<double>(slots);
}

}  // namespace somnet
