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

// Spherical k-means stand-in for the learned memory: cosine-metric
// clustering for the keys, and value slots filled directly with the
// counting targets d~ and r~.

#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "somnet/memory.hpp"

namespace somnet {

struct KMeansMemory {
  MemoryState memory;
  std::vector<int> assignments;
};

/// Counting targets from (cluster, label) pairs: d~ = n_{y,l} / sum_y n_{y,l}
/// and r~ = n_{y,l} / sum_l n_{y,l}. Empty columns/rows become uniform.
inline void fill_counting_targets(MemoryState& m, std::span<const int> clusters, std::span<const int> labels) {
  const int C = m.classes();
  const int L = m.slots();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(C, L);
  for (std::size_t i = 0; i < clusters.size(); ++i) counts(labels[i], clusters[i]) += 1.0;
  for (int l = 0; l < L; ++l) {
    const double s = counts.col(l).sum();
    m.d_values.col(l) = s > 0.0 ? Eigen::VectorXd(counts.col(l) / s) : Eigen::VectorXd::Constant(C, 1.0 / C);
  }
  for (int y = 0; y < C; ++y) {
    const double s = counts.row(y).sum();
    if (s > 0.0) {
      m.r_values.row(y) = counts.row(y) / s;
    } else {
      m.r_values.row(y).setConstant(1.0 / L);
    }
  }
}

/// Spherical k-means over the columns of `features` (d x N).
inline KMeansMemory kmeans_memory(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                                  int grid_w, int iters, std::uint64_t seed) {
  const int L = grid_w * grid_w;
  const auto N = static_cast<std::size_t>(features.cols());
  if (labels.size() != N) throw Error("kmeans_memory: label count mismatch");
  if (N < static_cast<std::size_t>(L))
    throw Error(detail::concat("kmeans_memory: ", N, " features for ", L, " clusters"));
  if (iters < 0) throw ConfigError("kmeans_memory: iters must be >= 0");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw Error("kmeans_memory: label out of range");

  const Eigen::MatrixXd unit = normalized_columns(features);
  Rng rng(derive_seed(seed, "kmeans_init"));
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  KMeansMemory out;
  MemoryState& m = out.memory;
  m.grid_w = grid_w;
  m.radius = 0;
  m.keys.resize(features.rows(), L);
  for (int l = 0; l < L; ++l) m.keys.col(l) = unit.col(static_cast<Eigen::Index>(order[static_cast<std::size_t>(l)]));
  m.d_values = Eigen::MatrixXd::Constant(num_classes, L, 1.0 / num_classes);
  m.r_values = Eigen::MatrixXd::Constant(num_classes, L, 1.0 / L);

  auto assign = [&](std::vector<WinnerResult>& w) { w = winners(unit, m.keys); };
  std::vector<WinnerResult> w;
  assign(w);
  for (int it = 0; it < iters; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(features.rows(), L);
    std::vector<int> sizes(static_cast<std::size_t>(L), 0);
    for (std::size_t n = 0; n < N; ++n) {
      sums.col(w[n].index) += unit.col(static_cast<Eigen::Index>(n));
      ++sizes[static_cast<std::size_t>(w[n].index)];
    }
    // Empty clusters take the points farthest from their current centroid.
    std::vector<std::size_t> far(N);
    std::iota(far.begin(), far.end(), 0);
    std::stable_sort(far.begin(), far.end(), [&](std::size_t a, std::size_t b) { return w[a].similarity < w[b].similarity; });
    std::size_t next_far = 0;
    for (int l = 0; l < L; ++l) {
      const double norm = sums.col(l).norm();
      if (sizes[static_cast<std::size_t>(l)] > 0 && norm > kNormEpsilon) {
        m.keys.col(l) = sums.col(l) / norm;
      } else {
        m.keys.col(l) = unit.col(static_cast<Eigen::Index>(far[next_far++ % N]));
      }
    }
    assign(w);
  }
  out.assignments.resize(N);
  for (std::size_t n = 0; n < N; ++n) out.assignments[n] = w[n].index;
  fill_counting_targets(m, out.assignments, labels);
  return out;
}

}  // namespace somnet
