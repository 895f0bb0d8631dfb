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

// Figure data: per-category slot summaries of a trained memory, and ROI
// weight heatmaps over proposal boxes.

#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "somnet/data_model.hpp"
#include "somnet/memory.hpp"
#include "somnet/model.hpp"

namespace somnet {

struct SlotSummary {
  int slot = 0;
  int row = 0;
  int col = 0;
  double d = 0.0;
  double r = 0.0;
  double s = 0.0;
  std::vector<double> distribution;  // D column: category mix of the cluster
  std::vector<std::string> nearest;  // closest training ROIs by cosine
};

struct InspectResult {
  int category = 0;
  int requested_k = 0;
  std::vector<SlotSummary> slots;
  std::vector<std::string> warnings;
};

/// Top-k slots of `category` by prototypical score. `rois` supplies the
/// training ROIs searched for nearest neighbours; may be empty.
inline InspectResult inspect_memory(const MemoryState& m, int category, int k, std::span<const Instance> rois,
                                    const ModelParams* encoder = nullptr, int nearest = 5) {
  if (category < 0 || category >= m.classes())
    throw DataError(detail::concat("unknown category ", category, " (memory holds ", m.classes(), ")"));
  if (k < 1) throw ConfigError("k must be >= 1");
  InspectResult out;
  out.category = category;
  out.requested_k = k;
  const int L = m.slots();
  if (k > L) {
    out.warnings.push_back(detail::concat("k=", k, " exceeds the ", L, " slots; clamped to ", L));
    k = L;
  }
  std::vector<int> order(static_cast<std::size_t>(L));
  std::iota(order.begin(), order.end(), 0);
  auto score = [&](int l) { return m.d_values(category, l) * m.r_values(category, l); };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score(a) > score(b); });

  std::vector<std::string> ids;
  Eigen::MatrixXd unit;
  if (!rois.empty()) {
    const bool enc = encoder && encoder->has_encoder();
    const Eigen::Index dim = enc ? encoder->enc_w.rows() : rois.front().feature.size();
    Eigen::MatrixXd feats(dim, static_cast<Eigen::Index>(rois.size()));
    for (std::size_t i = 0; i < rois.size(); ++i) {
      feats.col(static_cast<Eigen::Index>(i)) = enc ? encode(*encoder, rois[i].feature) : rois[i].feature;
      ids.push_back(rois[i].id);
    }
    unit = normalized_columns(feats);
  }
  const Eigen::MatrixXd unit_keys = normalized_columns(m.keys);
  for (int i = 0; i < k; ++i) {
    const int l = order[static_cast<std::size_t>(i)];
    SlotSummary s;
    s.slot = l;
    s.row = l / m.grid_w;
    s.col = l % m.grid_w;
    s.d = m.d_values(category, l);
    s.r = m.r_values(category, l);
    s.s = s.d * s.r;
    s.distribution.assign(m.d_values.col(l).data(), m.d_values.col(l).data() + m.classes());
    if (unit.cols() > 0) {
      const Eigen::VectorXd sims = unit.transpose() * unit_keys.col(l);
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(sims.size()));
      std::iota(idx.begin(), idx.end(), 0);
      const auto n = std::min<std::size_t>(static_cast<std::size_t>(nearest), idx.size());
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                        [&](Eigen::Index a, Eigen::Index b) { return sims(a) > sims(b) || (sims(a) == sims(b) && a < b); });
      for (std::size_t j = 0; j < n; ++j) s.nearest.push_back(ids[static_cast<std::size_t>(idx[j])]);
    }
    out.slots.push_back(std::move(s));
  }
  return out;
}

/// Distinct training ROIs of a dataset; padded duplicates are skipped.
inline std::vector<Instance> training_rois(const Dataset& ds) {
  std::vector<Instance> out;
  for (const auto& bag : ds.bags)
    for (const auto& inst : bag.instances)
      if (inst.id.find("#dup") == std::string::npos) out.push_back(inst);
  return out;
}

inline nlohmann::json to_json(const InspectResult& r) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : r.slots)
    slots.push_back({{"slot", s.slot},
                     {"grid", {s.row, s.col}},
                     {"d_score", s.d},
                     {"r_score", s.r},
                     {"s_score", s.s},
                     {"category_distribution", s.distribution},
                     {"nearest_rois", s.nearest}});
  return {{"category", r.category}, {"k", r.requested_k}, {"slots", slots}, {"warnings", r.warnings}};
}

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

struct WeightedBox {
  Box box;
  double weight = 0.0;
};

/// Sums box weights on a rows x cols raster laid over `canvas`; a cell
/// takes the weight of every box containing its centre (half-open boxes).
inline Eigen::MatrixXd heatmap_raster(const Box& canvas, std::span<const WeightedBox> boxes, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ConfigError("heatmap raster must be at least 1x1");
  if (!(canvas[2] > 0.0 && canvas[3] > 0.0)) throw DataError("heatmap canvas has zero extent");
  Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const double y = canvas[1] + (r + 0.5) * canvas[3] / rows;
    for (int c = 0; c < cols; ++c) {
      const double x = canvas[0] + (c + 0.5) * canvas[2] / cols;
      for (const auto& b : boxes)
        if (x >= b.box[0] && x < b.box[0] + b.box[2] && y >= b.box[1] && y < b.box[1] + b.box[3])
          grid(r, c) += b.weight;
    }
  }
  return grid;
}

/// Counts of `weights` in `bins` equal bins over [0, 1]; 1.0 lands in the last.
inline std::vector<int> weight_histogram(std::span<const double> weights, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw DataError(detail::concat("weight ", w, " outside [0, 1]"));
    const int b = std::min(bins - 1, static_cast<int>(w * bins));
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

struct ImageHeatmap {
  std::string image_id;
  Box canvas{};
  Eigen::MatrixXd cells;
};

/// One heatmap per image of a bag. The canvas is the image's own box, or
/// the union of its proposal boxes when the image has none.
inline std::vector<ImageHeatmap> bag_heatmaps(const Bag& bag, const Eigen::VectorXd& weights, int resolution) {
  if (weights.size() != static_cast<Eigen::Index>(bag.size())) throw DataError("weight count differs from bag size");
  for (const auto& inst : bag.instances)
    if (inst.kind == RoiKind::Proposal && !inst.bbox)
      throw UnsupportedDataError("synthetic data has no geometry: ROI '" + inst.id + "' has no bbox");
  std::vector<ImageHeatmap> out;
  for (const auto& image : bag.instances) {
    if (image.kind != RoiKind::Image) continue;
    std::vector<WeightedBox> boxes;
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (std::size_t i = 0; i < bag.size(); ++i) {
      const auto& inst = bag.instances[i];
      if (inst.kind != RoiKind::Proposal || inst.parent_image_id != image.id) continue;
      const Box& b = *inst.bbox;
      boxes.push_back({b, weights(static_cast<Eigen::Index>(i))});
      x0 = std::min(x0, b[0]);
      y0 = std::min(y0, b[1]);
      x1 = std::max(x1, b[0] + b[2]);
      y1 = std::max(y1, b[1] + b[3]);
    }
    ImageHeatmap h;
    h.image_id = image.id;
    if (image.bbox) {
      h.canvas = *image.bbox;
    } else if (!boxes.empty()) {
      h.canvas = {x0, y0, x1 - x0, y1 - y0};
    } else {
      throw UnsupportedDataError("synthetic data has no geometry: image '" + image.id + "' has no boxes");
    }
    // The whole image is an ROI too and covers its full canvas.
    const auto self = static_cast<Eigen::Index>(&image - bag.instances.data());
    boxes.push_back({h.canvas, weights(self)});
    h.cells = heatmap_raster(h.canvas, boxes, resolution, resolution);
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace somnet
