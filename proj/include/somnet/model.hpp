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

// Optional tanh encoder followed by a softmax classifier over bag-level
// features, with hand-derived gradients and momentum SGD.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "somnet/data_model.hpp"
#include "somnet/error.hpp"
#include "somnet/random.hpp"

namespace somnet {

/// All trainable tensors. The encoder is disabled when enc_w is empty.
struct ModelParams {
  Eigen::MatrixXd enc_w;  // d x d_in
  Eigen::VectorXd enc_b;  // d
  Eigen::MatrixXd cls_w;  // C x d
  Eigen::VectorXd cls_b;  // C

  bool has_encoder() const { return enc_w.size() > 0; }

  ModelParams zeros_like() const {
    return {Eigen::MatrixXd::Zero(enc_w.rows(), enc_w.cols()), Eigen::VectorXd::Zero(enc_b.size()),
            Eigen::MatrixXd::Zero(cls_w.rows(), cls_w.cols()), Eigen::VectorXd::Zero(cls_b.size())};
  }

  bool same_shape(const ModelParams& o) const {
    return enc_w.rows() == o.enc_w.rows() && enc_w.cols() == o.enc_w.cols() && enc_b.size() == o.enc_b.size() &&
           cls_w.rows() == o.cls_w.rows() && cls_w.cols() == o.cls_w.cols() && cls_b.size() == o.cls_b.size();
  }

  bool all_finite() const {
    return enc_w.allFinite() && enc_b.allFinite() && cls_w.allFinite() && cls_b.allFinite();
  }
};

struct ClassifierState {
  ModelParams params;
  ModelParams velocity;
  double lr = 0.01;
  double momentum = 0.9;

  int input_dim() const {
    return static_cast<int>(params.has_encoder() ? params.enc_w.cols() : params.cls_w.cols());
  }
  int feature_dim() const { return static_cast<int>(params.cls_w.cols()); }
  int classes() const { return static_cast<int>(params.cls_w.rows()); }

  /// Zero classifier; encoder (if encoder_dim > 0) Xavier-uniform initialized.
  static ClassifierState create(int input_dim, int num_classes, int encoder_dim, double lr, double momentum,
                                std::uint64_t seed) {
    if (input_dim < 1 || num_classes < 2) throw ConfigError("classifier needs input_dim >= 1 and C >= 2");
    ClassifierState s;
    s.lr = lr;
    s.momentum = momentum;
    const int d = encoder_dim > 0 ? encoder_dim : input_dim;
    if (encoder_dim > 0) {
      Rng rng(derive_seed(seed, "encoder"));
      const double bound = std::sqrt(6.0 / (input_dim + encoder_dim));
      std::uniform_real_distribution<double> u(-bound, bound);
      s.params.enc_w.resize(encoder_dim, input_dim);
      for (Eigen::Index i = 0; i < s.params.enc_w.size(); ++i) s.params.enc_w.data()[i] = u(rng);
      s.params.enc_b = Eigen::VectorXd::Zero(encoder_dim);
    }
    s.params.cls_w = Eigen::MatrixXd::Zero(num_classes, d);
    s.params.cls_b = Eigen::VectorXd::Zero(num_classes);
    s.velocity = s.params.zeros_like();
    return s;
  }
};

inline Eigen::VectorXd encode(const ModelParams& p, const Eigen::Ref<const Eigen::VectorXd>& raw) {
  if (!p.has_encoder()) {
    if (raw.size() != p.cls_w.cols()) throw DataError("encode: feature length mismatch");
    return raw;
  }
  if (raw.size() != p.enc_w.cols()) throw DataError("encode: feature length mismatch");
  return (p.enc_w * raw + p.enc_b).array().tanh().matrix();
}

inline Eigen::VectorXd encode(const ClassifierState& s, const Eigen::Ref<const Eigen::VectorXd>& raw) {
  return encode(s.params, raw);
}

/// Encodes every instance of a bag into a d x n_b matrix.
inline Eigen::MatrixXd encode_bag(const ModelParams& p, const Bag& bag) {
  const auto d = p.cls_w.cols();
  Eigen::MatrixXd out(d, static_cast<Eigen::Index>(bag.size()));
  for (std::size_t i = 0; i < bag.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = encode(p, bag.instances[i].feature);
  return out;
}

inline Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  if (!logits.allFinite()) throw NumericError("softmax: non-finite logits");
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

inline Eigen::VectorXd classify(const ModelParams& p, const Eigen::Ref<const Eigen::VectorXd>& feature) {
  if (feature.size() != p.cls_w.cols()) throw DataError("classify: feature length mismatch");
  return softmax(p.cls_w * feature + p.cls_b);
}

inline Eigen::VectorXd classify(const ClassifierState& s, const Eigen::Ref<const Eigen::VectorXd>& feature) {
  return classify(s.params, feature);
}

/// One bag of a mini-batch: its instances, (constant) instance weights and label.
struct BagSample {
  const Bag* bag = nullptr;
  const Eigen::VectorXd* weights = nullptr;
  int label = 0;
};

/// Weighted average of encoded instance features.
inline Eigen::VectorXd weighted_feature(const ModelParams& p, const Bag& bag, const Eigen::VectorXd& weights) {
  if (static_cast<std::size_t>(weights.size()) != bag.size()) throw DataError("weights/bag size mismatch");
  if (!(weights.sum() > 0.0)) throw NumericError("bag feature: all-zero weights");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p.cls_w.cols());
  for (std::size_t i = 0; i < bag.size(); ++i) {
    const double w = weights(static_cast<Eigen::Index>(i));
    if (w != 0.0) x += w * encode(p, bag.instances[i].feature);
  }
  return x;
}

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean cross-entropy over the batch and its exact gradient. Instance
/// weights are treated as constants.
inline LossAndGrads cls_loss_and_grads(const ModelParams& p, std::span<const BagSample> batch) {
  if (batch.empty()) throw Error("cls_loss_and_grads: empty batch");
  LossAndGrads out;
  out.grads = p.zeros_like();
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const Bag& bag = *s.bag;
    const Eigen::VectorXd& w = *s.weights;
    if (static_cast<std::size_t>(w.size()) != bag.size()) throw DataError("weights/bag size mismatch");
    // Forward, caching encoded instances with nonzero weight.
    std::vector<std::pair<std::size_t, Eigen::VectorXd>> hidden;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p.cls_w.cols());
    for (std::size_t i = 0; i < bag.size(); ++i) {
      const double wi = w(static_cast<Eigen::Index>(i));
      if (wi == 0.0) continue;
      Eigen::VectorXd h = encode(p, bag.instances[i].feature);
      x += wi * h;
      if (p.has_encoder()) hidden.emplace_back(i, std::move(h));
    }
    const Eigen::VectorXd logits = p.cls_w * x + p.cls_b;
    if (!logits.allFinite()) throw NumericError("non-finite logits");
    out.loss += scale * (log_sum_exp(logits) - logits(s.label));

    Eigen::VectorXd dlogits = softmax(logits);
    dlogits(s.label) -= 1.0;
    dlogits *= scale;
    out.grads.cls_w += dlogits * x.transpose();
    out.grads.cls_b += dlogits;
    if (!p.has_encoder()) continue;
    const Eigen::VectorXd dx = p.cls_w.transpose() * dlogits;
    for (const auto& [i, h] : hidden) {
      const double wi = w(static_cast<Eigen::Index>(i));
      const Eigen::VectorXd dpre = (wi * dx).cwiseProduct((1.0 - h.array().square()).matrix());
      out.grads.enc_w += dpre * bag.instances[i].feature.transpose();
      out.grads.enc_b += dpre;
    }
  }
  return out;
}

/// Momentum SGD: v <- momentum * v + g; theta <- theta - lr * v.
inline void sgd_step(ClassifierState& s, const ModelParams& grads) {
  if (!s.params.same_shape(grads) || !s.velocity.same_shape(grads)) throw Error("sgd_step: shape mismatch");
  auto step = [&](auto& theta, auto& v, const auto& g) {
    v = s.momentum * v + g;
    theta -= s.lr * v;
  };
  step(s.params.enc_w, s.velocity.enc_w, grads.enc_w);
  step(s.params.enc_b, s.velocity.enc_b, grads.enc_b);
  step(s.params.cls_w, s.velocity.cls_w, grads.cls_w);
  step(s.params.cls_b, s.velocity.cls_b, grads.cls_b);
  if (!s.params.all_finite()) throw NumericError("sgd_step: parameters became non-finite");
}

/// Argmax class per feature; ties go to the lowest index.
inline int predict_one(const ModelParams& p, const Eigen::Ref<const Eigen::VectorXd>& raw) {
  const Eigen::VectorXd probs = classify(p, encode(p, raw));
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < probs.size(); ++c)
    if (probs(c) > probs(best)) best = c;
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Checkpoint: row-major float lists plus shapes.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json tensor_json(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", v}};
}

inline Eigen::MatrixXd tensor_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto v = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw DataError("checkpoint tensor size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const ClassifierState& s) {
  return {{"lr", s.lr},
          {"momentum", s.momentum},
          {"enc_w", detail::tensor_json(s.params.enc_w)},
          {"enc_b", detail::tensor_json(s.params.enc_b)},
          {"cls_w", detail::tensor_json(s.params.cls_w)},
          {"cls_b", detail::tensor_json(s.params.cls_b)}};
}

inline ClassifierState classifier_from_json(const nlohmann::json& j) {
  try {
    ClassifierState s;
    s.lr = j.value("lr", 0.01);
    s.momentum = j.value("momentum", 0.9);
    s.params.enc_w = detail::tensor_from_json(j.at("enc_w"));
    s.params.enc_b = detail::tensor_from_json(j.at("enc_b"));
    s.params.cls_w = detail::tensor_from_json(j.at("cls_w"));
    s.params.cls_b = detail::tensor_from_json(j.at("cls_b"));
    s.velocity = s.params.zeros_like();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model checkpoint: ") + e.what());
  }
}

}  // namespace somnet
