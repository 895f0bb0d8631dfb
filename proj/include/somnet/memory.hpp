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
 * @file memory.hpp
 * @brief Self-organizing key/value memory.
 *
 * Key slots K (d x L) are cluster centers laid out on a grid_w x grid_w
 * grid. Each key slot l owns two value columns:
 *   - D(:, l), the category distribution inside cluster l (discriminative);
 *   - R(y, l), read along rows: the distribution of category y over
 *     clusters (representative).
 *
 * A bag feature x with label y first selects its winner slot z by cosine
 * similarity. The winner and its grid neighbours are then pulled towards x
 * by gradient ascent on eta * cos(x, k_i), d_z is pushed towards the one-hot
 * label and r_y towards the one-hot cluster indicator. Value updates are
 * projected back onto the probability simplex (clamp, then L1-normalize).
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "somnet/error.hpp"
#include "somnet/random.hpp"

namespace somnet {

inline constexpr double kNormEpsilon = 1e-12;

struct MemoryState {
  Eigen::MatrixXd keys;      // d x L
  Eigen::MatrixXd d_values;  // C x L, columns on the simplex
  Eigen::MatrixXd r_values;  // C x L, rows on the simplex
  int grid_w = 1;
  int radius = 1;
  double lr_key = 0.05;
  double lr_value = 0.05;

  int slots() const { return static_cast<int>(keys.cols()); }
  int dim() const { return static_cast<int>(keys.rows()); }
  int classes() const { return static_cast<int>(d_values.rows()); }

  /// Gaussian keys normalized to unit length; D columns uniform 1/C and
  /// R rows uniform 1/L.
  static MemoryState create(int dim, int num_classes, int grid_w, int radius, double lr_key,
                            double lr_value, std::uint64_t seed) {
    if (dim < 1 || num_classes < 1 || grid_w < 1)
      throw ConfigError("memory needs dim, num_classes and grid_w >= 1");
    if (radius < 0) throw ConfigError("neighbourhood radius must be >= 0");
    if (!(lr_key > 0.0) || !(lr_value > 0.0)) throw ConfigError("memory learning rates must be > 0");
    MemoryState m;
    m.grid_w = grid_w;
    m.radius = radius;
    m.lr_key = lr_key;
    m.lr_value = lr_value;
    const int L = grid_w * grid_w;
    Rng rng(derive_seed(seed, "memory_keys"));
    m.keys.resize(dim, L);
    for (int l = 0; l < L; ++l) m.keys.col(l) = random_unit_vector(rng, dim);
    m.d_values = Eigen::MatrixXd::Constant(num_classes, L, 1.0 / num_classes);
    m.r_values = Eigen::MatrixXd::Constant(num_classes, L, 1.0 / L);
    return m;
  }

  /// Throws if a D column or R row left the simplex or a key collapsed.
  void check_invariants(double tol = 1e-6) const {
    if (grid_w * grid_w != slots()) throw Error("grid_w^2 does not match the slot count");
    for (int l = 0; l < slots(); ++l) {
      if (d_values.col(l).minCoeff() < 0.0 || std::abs(d_values.col(l).sum() - 1.0) > tol)
        throw Error(detail::concat("d-value column ", l, " is not a distribution"));
      if (keys.col(l).norm() <= kNormEpsilon) throw Error(detail::concat("key ", l, " is zero"));
    }
    for (int y = 0; y < classes(); ++y)
      if (r_values.row(y).minCoeff() < 0.0 || std::abs(r_values.row(y).sum() - 1.0) > tol)
        throw Error(detail::concat("r-value row ", y, " is not a distribution"));
  }
};

inline double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw Error("cosine: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= kNormEpsilon || nb <= kNormEpsilon) throw NumericError("cosine: degenerate (near-zero) vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// d cos(x, k) / d k.
inline Eigen::VectorXd cosine_grad(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& k) {
  const double nx = x.norm();
  const double nk = k.norm();
  if (nx <= kNormEpsilon || nk <= kNormEpsilon) throw NumericError("cosine_grad: degenerate vector");
  const double c = x.dot(k) / (nx * nk);
  return x / (nx * nk) - c * k / (nk * nk);
}

struct WinnerResult {
  int index = 0;
  double similarity = 0.0;
};

/// Key slot with maximal cosine to x; ties go to the smallest index.
inline WinnerResult winner(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::MatrixXd& keys) {
  if (keys.cols() == 0) throw Error("winner: no key slots");
  WinnerResult best{0, cosine(x, keys.col(0))};
  for (Eigen::Index l = 1; l < keys.cols(); ++l) {
    const double c = cosine(x, keys.col(l));
    if (c > best.similarity) best = {static_cast<int>(l), c};
  }
  return best;
}

/// Columns scaled to unit length; throws on a zero column.
inline Eigen::MatrixXd normalized_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double n = m.col(c).norm();
    if (n <= kNormEpsilon) throw NumericError(detail::concat("degenerate (near-zero) vector in column ", c));
    out.col(c) /= n;
  }
  return out;
}

/// Winners of every column of `points` at once. Both inputs must already be
/// column-normalized.
inline std::vector<WinnerResult> winners(const Eigen::MatrixXd& unit_points, const Eigen::MatrixXd& unit_keys) {
  const Eigen::MatrixXd sims = unit_keys.transpose() * unit_points;  // L x N
  std::vector<WinnerResult> out(static_cast<std::size_t>(sims.cols()));
  for (Eigen::Index n = 0; n < sims.cols(); ++n) {
    Eigen::Index best = 0;
    double value = sims(0, n);
    for (Eigen::Index l = 1; l < sims.rows(); ++l) {
      if (sims(l, n) > value) {
        value = sims(l, n);
        best = l;
      }
    }
    out[static_cast<std::size_t>(n)] = {static_cast<int>(best), std::clamp(value, -1.0, 1.0)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid topology
// ---------------------------------------------------------------------------

/// Manhattan distance between two slots' grid coordinates.
inline int grid_geo(int i, int j, int grid_w) {
  const int L = grid_w * grid_w;
  if (grid_w < 1 || i < 0 || j < 0 || i >= L || j >= L)
    throw Error(detail::concat("grid_geo: slot index out of range [0, ", L, ")"));
  return std::abs(i / grid_w - j / grid_w) + std::abs(i % grid_w - j % grid_w);
}

inline double neighbor_weight(int z, int i, int grid_w) { return 1.0 / (1.0 + grid_geo(z, i, grid_w)); }

/// Slots within grid distance `radius` of z, in increasing index order.
inline std::vector<int> neighborhood(int z, int radius, int grid_w) {
  const int L = grid_w * grid_w;
  if (z < 0 || z >= L) throw Error("neighborhood: slot index out of range");
  std::vector<int> out;
  const int zr = z / grid_w;
  const int zc = z % grid_w;
  for (int r = std::max(0, zr - radius); r <= std::min(grid_w - 1, zr + radius); ++r) {
    const int span = radius - std::abs(r - zr);
    for (int c = std::max(0, zc - span); c <= std::min(grid_w - 1, zc + span); ++c) out.push_back(r * grid_w + c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Update rules
// ---------------------------------------------------------------------------

/// Clamp negatives to zero, then L1-normalize.
template <typename Derived>
void project_to_simplex(Eigen::DenseBase<Derived>& v) {
  v = v.derived().cwiseMax(0.0);
  const double s = v.sum();
  if (!(s > 0.0)) throw NumericError("simplex projection produced an all-zero vector");
  v /= s;
}

/// Pulls the winner z and its grid neighbours towards x.
inline void som_key_step(const Eigen::Ref<const Eigen::VectorXd>& x, int z, MemoryState& m) {
  const auto hood = neighborhood(z, m.radius, m.grid_w);
  // All gradients use the pre-step keys.
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(hood.size());
  for (int i : hood) grads.push_back(cosine_grad(x, m.keys.col(i)));
  for (std::size_t n = 0; n < hood.size(); ++n) {
    const int i = hood[n];
    m.keys.col(i) += m.lr_key * neighbor_weight(z, i, m.grid_w) * grads[n];
  }
}

/// One projected ascent step of cos(y, d_z) on column z of D.
inline void d_value_step(int y, int z, MemoryState& m) {
  if (y < 0 || y >= m.classes() || z < 0 || z >= m.slots()) throw Error("d_value_step: index out of range");
  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(m.classes());
  onehot(y) = 1.0;
  auto col = m.d_values.col(z);
  const Eigen::VectorXd g = cosine_grad(onehot, col);
  col += m.lr_value * g;
  project_to_simplex(col);
}

/// One projected ascent step of cos(onehot(z), r_y) on row y of R.
inline void r_value_step(int z, int y, MemoryState& m) {
  if (y < 0 || y >= m.classes() || z < 0 || z >= m.slots()) throw Error("r_value_step: index out of range");
  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(m.slots());
  onehot(z) = 1.0;
  const Eigen::VectorXd row = m.r_values.row(y).transpose();
  Eigen::VectorXd next = row + m.lr_value * cosine_grad(onehot, row);
  project_to_simplex(next);
  m.r_values.row(y) = next.transpose();
}

/// s_{y,z} = d_{y,z} * r_{y,z}.
inline double prototypical_score(const MemoryState& m, int y, int z) {
  if (y < 0 || y >= m.classes() || z < 0 || z >= m.slots())
    throw Error("prototypical_score: index out of range");
  return m.d_values(y, z) * m.r_values(y, z);
}

inline Eigen::MatrixXd prototypical_scores(const MemoryState& m) { return m.d_values.cwiseProduct(m.r_values); }

struct MemoryLoss {
  double key = 0.0;
  double d_value = 0.0;
  double r_value = 0.0;
  double total() const { return key + d_value + r_value; }
};

struct LabeledFeature {
  Eigen::VectorXd feature;
  int label = 0;
};

/// Memory loss summed over a batch; monitoring only.
inline MemoryLoss memory_loss(const MemoryState& m, std::span<const LabeledFeature> batch) {
  MemoryLoss loss;
  for (const auto& item : batch) {
    const int z = winner(item.feature, m.keys).index;
    for (int i : neighborhood(z, m.radius, m.grid_w))
      loss.key -= neighbor_weight(z, i, m.grid_w) * cosine(item.feature, m.keys.col(i));
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m.classes());
    y(item.label) = 1.0;
    loss.d_value -= cosine(y, m.d_values.col(z));
    Eigen::VectorXd zh = Eigen::VectorXd::Zero(m.slots());
    zh(z) = 1.0;
    loss.r_value -= cosine(zh, m.r_values.row(item.label).transpose());
  }
  return loss;
}

struct MemoryStepResult {
  WinnerResult winner;
  MemoryLoss loss;  // evaluated before the update
};

/// Applies the key, d-value and r-value updates for one bag feature.
inline MemoryStepResult memory_update(const Eigen::Ref<const Eigen::VectorXd>& x, int y, MemoryState& m) {
  MemoryStepResult out;
  out.winner = winner(x, m.keys);
  const int z = out.winner.index;
  for (int i : neighborhood(z, m.radius, m.grid_w))
    out.loss.key -= neighbor_weight(z, i, m.grid_w) * cosine(x, m.keys.col(i));
  out.loss.d_value = -m.d_values(y, z) / m.d_values.col(z).norm();
  out.loss.r_value = -m.r_values(y, z) / m.r_values.row(y).norm();
  som_key_step(x, z, m);
  d_value_step(y, z, m);
  r_value_step(z, y, m);
  return out;
}

// ---------------------------------------------------------------------------
// Snapshot
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> column_major(const Eigen::MatrixXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

inline Eigen::MatrixXd from_column_major(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                                         const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    throw DataError(concat("memory snapshot: '", what, "' has ", v.size(), " entries, expected ", rows * cols));
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

}  // namespace detail

/// {grid_w, dim, classes, radius, lr_key, lr_value, K, D, R}; matrices are
/// column-major float lists.
inline nlohmann::json to_json(const MemoryState& m) {
  return {{"grid_w", m.grid_w},
          {"dim", m.dim()},
          {"classes", m.classes()},
          {"radius", m.radius},
          {"lr_key", m.lr_key},
          {"lr_value", m.lr_value},
          {"K", detail::column_major(m.keys)},
          {"D", detail::column_major(m.d_values)},
          {"R", detail::column_major(m.r_values)}};
}

inline MemoryState memory_from_json(const nlohmann::json& j) {
  try {
    MemoryState m;
    m.grid_w = j.at("grid_w").get<int>();
    const int L = m.grid_w * m.grid_w;
    const int C = j.at("classes").get<int>();
    const int d = j.at("dim").get<int>();
    m.radius = j.value("radius", 1);
    m.lr_key = j.value("lr_key", 0.05);
    m.lr_value = j.value("lr_value", 0.05);
    m.keys = detail::from_column_major(j.at("K"), d, L, "K");
    m.d_values = detail::from_column_major(j.at("D"), C, L, "D");
    m.r_values = detail::from_column_major(j.at("R"), C, L, "R");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("memory snapshot: ") + e.what());
  }
}

}  // namespace somnet
