// Copyright 2026 The calikit Authors.
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

#ifndef CALIKIT_GCN_HPP_
#define CALIKIT_GCN_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "calikit/error.hpp"
#include "calikit/graph.hpp"
#include "calikit/model.hpp"
#include "calikit/random.hpp"

namespace calikit {

/// Lower clamp applied to probabilities before taking logarithms.
inline constexpr double kProbFloor = 1e-12;

/// Per-node logits, softmax probabilities, argmax label and its probability.
struct PredictionTable {
  Eigen::MatrixXd logits;
  Eigen::MatrixXd probs;
  std::vector<ClassId> pred;
  std::vector<double> confidence;

  std::size_t size() const { return pred.size(); }
  std::size_t class_count() const { return static_cast<std::size_t>(probs.cols()); }

  /// Row-wise softmax of logits / temperature. Ties in the argmax go to the
  /// smallest class index.
  static PredictionTable from_logits(Eigen::MatrixXd logits, double temperature = 1.0) {
    if (!logits.allFinite()) throw NumericError("non-finite logits");
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    PredictionTable t;
    const auto n = logits.rows();
    t.probs.resize(n, logits.cols());
    t.pred.resize(static_cast<std::size_t>(n));
    t.confidence.resize(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::RowVectorXd z = logits.row(r);
      if (temperature != 1.0) z /= temperature;
      const double m = z.maxCoeff();
      Eigen::RowVectorXd e = (z.array() - m).exp();
      t.probs.row(r) = e / e.sum();
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < z.size(); ++c) {
        if (t.probs(r, c) > t.probs(r, best)) best = c;
      }
      t.pred[static_cast<std::size_t>(r)] = static_cast<ClassId>(best);
      t.confidence[static_cast<std::size_t>(r)] = t.probs(r, best);
    }
    t.logits = std::move(logits);
    return t;
  }
};

/// Inverted-dropout masks for the input features and the hidden layer. Kept
/// entries hold 1/(1-q), dropped entries 0.
struct DropoutMasks {
  Eigen::MatrixXd input;
  Eigen::MatrixXd hidden;

  static DropoutMasks sample(std::size_t nodes, std::size_t input_dim, std::size_t hidden_dim,
                             double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout rate must lie in [0, 1)");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double keep = 1.0 / (1.0 - rate);
    auto draw = [&](std::size_t rows, std::size_t cols) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = unit(rng) < rate ? 0.0 : keep;
      }
      return m;
    };
    DropoutMasks masks;
    masks.input = draw(nodes, input_dim);
    masks.hidden = draw(nodes, hidden_dim);
    return masks;
  }
};

/// What the data term of the training loss is taken over.
struct LossSpec {
  std::span<const ClassId> labels;
  std::span<const NodeId> nodes;
  std::span<const double> class_weights;
  double weight_decay = 0.0;
  /// Optional N x C soft targets (label smoothing); one-hot labels otherwise.
  const Eigen::MatrixXd* soft_targets = nullptr;
};

namespace detail {

/// Intermediate values of one forward pass, kept for the backward pass.
struct Activations {
  Eigen::MatrixXd input;   // X, or X with input dropout applied
  Eigen::MatrixXd z1;      // A X W1
  Eigen::MatrixXd hidden;  // relu(z1), hidden dropout applied
  Eigen::MatrixXd agg;     // A hidden
  Eigen::MatrixXd logits;  // agg W2
};

inline void check_shapes(const ModelParams& params, const NormalizedAdjacency& adj,
                         const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != params.input_dim()) {
    throw ShapeError("features have " + std::to_string(x.cols()) +
                     " columns, model expects " + std::to_string(params.input_dim()));
  }
  if (adj.size() != static_cast<std::size_t>(x.rows())) {
    throw ShapeError("adjacency is " + std::to_string(adj.size()) + " x " +
                     std::to_string(adj.size()) + " but features have " +
                     std::to_string(x.rows()) + " rows");
  }
}

inline Activations forward_pass(const ModelParams& params, const NormalizedAdjacency& adj,
                                const Eigen::MatrixXd& x, const DropoutMasks* masks) {
  check_shapes(params, adj, x);
  const auto& a = adj.matrix();
  Activations act;
  act.input = masks ? Eigen::MatrixXd(x.cwiseProduct(masks->input)) : x;
  Eigen::MatrixXd xw = act.input * params.w1();
  act.z1 = a * xw;
  act.hidden = act.z1.cwiseMax(0.0);
  if (masks) act.hidden = act.hidden.cwiseProduct(masks->hidden);
  act.agg = a * act.hidden;
  act.logits = act.agg * params.w2();
  if (!act.logits.allFinite()) throw NumericError("non-finite logits in forward pass");
  return act;
}

/// Gradient of a scalar with respect to the parameters given its gradient
/// with respect to the logits. Weight decay is not included.
inline Eigen::VectorXd backward_pass(const ModelParams& params, const NormalizedAdjacency& adj,
                                     const Activations& act, const DropoutMasks* masks,
                                     const Eigen::MatrixXd& d_logits) {
  const auto& a = adj.matrix();
  Eigen::VectorXd g(static_cast<Eigen::Index>(params.size()));
  const auto d = static_cast<Eigen::Index>(params.input_dim());
  const auto h = static_cast<Eigen::Index>(params.hidden_dim());
  const auto c = static_cast<Eigen::Index>(params.class_count());
  Eigen::Map<Eigen::MatrixXd> g1(g.data(), d, h);
  Eigen::Map<Eigen::MatrixXd> g2(g.data() + d * h, h, c);

  g2.noalias() = act.agg.transpose() * d_logits;
  Eigen::MatrixXd d_agg = d_logits * params.w2().transpose();
  Eigen::MatrixXd d_hidden = a * d_agg;  // A is symmetric
  if (masks) d_hidden = d_hidden.cwiseProduct(masks->hidden);
  Eigen::MatrixXd d_z1 = (act.z1.array() > 0.0).select(d_hidden, 0.0);
  Eigen::MatrixXd d_xw = a * d_z1;
  g1.noalias() = act.input.transpose() * d_xw;
  return g;
}

inline double class_weight(std::span<const double> weights, ClassId y) {
  return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(y)];
}

inline Eigen::RowVectorXd target_row(const LossSpec& spec, NodeId v, Eigen::Index classes) {
  if (spec.soft_targets) return spec.soft_targets->row(static_cast<Eigen::Index>(v));
  Eigen::RowVectorXd t = Eigen::RowVectorXd::Zero(classes);
  t[spec.labels[v]] = 1.0;
  return t;
}

/// d(mean weighted CE)/d(logits), nonzero only on rows in spec.nodes.
inline Eigen::MatrixXd ce_logit_grad(const Eigen::MatrixXd& probs, const LossSpec& spec) {
  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
  const double inv_n = 1.0 / static_cast<double>(spec.nodes.size());
  for (auto v : spec.nodes) {
    const auto r = static_cast<Eigen::Index>(v);
    const double w = class_weight(spec.class_weights, spec.labels[v]) * inv_n;
    dz.row(r) = w * (probs.row(r) - target_row(spec, v, probs.cols()));
  }
  return dz;
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    Eigen::RowVectorXd e = (z.row(r).array() - m).exp();
    p.row(r) = e / e.sum();
  }
  return p;
}

}  // namespace detail

/// logits = A relu(A X W1) W2, softmax row-wise. Deterministic without masks.
inline PredictionTable forward(const ModelParams& params, const NormalizedAdjacency& adj,
                               const Eigen::MatrixXd& features,
                               const DropoutMasks* dropout = nullptr) {
  auto act = detail::forward_pass(params, adj, features, dropout);
  return PredictionTable::from_logits(std::move(act.logits));
}

/// Cost-sensitive cross-entropy -(1/|S|) sum_i w_{y_i} log p_i[y_i].
inline double cs_cross_entropy(const PredictionTable& preds, std::span<const ClassId> labels,
                               std::span<const NodeId> nodes,
                               std::span<const double> class_weights) {
  if (nodes.empty()) throw DomainError("cross-entropy over an empty node set");
  double sum = 0.0;
  for (auto v : nodes) {
    const double p = preds.probs(static_cast<Eigen::Index>(v), labels[v]);
    sum += detail::class_weight(class_weights, labels[v]) * -std::log(std::max(p, kProbFloor));
  }
  return sum / static_cast<double>(nodes.size());
}

/// Data term of the loss described by `spec` (soft targets honoured).
inline double data_loss(const PredictionTable& preds, const LossSpec& spec) {
  if (!spec.soft_targets) {
    return cs_cross_entropy(preds, spec.labels, spec.nodes, spec.class_weights);
  }
  if (spec.nodes.empty()) throw DomainError("cross-entropy over an empty node set");
  double sum = 0.0;
  for (auto v : spec.nodes) {
    const auto r = static_cast<Eigen::Index>(v);
    double node = 0.0;
    for (Eigen::Index c = 0; c < preds.probs.cols(); ++c) {
      node -= (*spec.soft_targets)(r, c) * std::log(std::max(preds.probs(r, c), kProbFloor));
    }
    sum += detail::class_weight(spec.class_weights, spec.labels[v]) * node;
  }
  return sum / static_cast<double>(spec.nodes.size());
}

/// Data term plus (weight_decay / 2) * ||theta||^2, whose gradient is
/// weight_decay * theta.
inline double objective(const ModelParams& params, const NormalizedAdjacency& adj,
                        const Eigen::MatrixXd& features, const LossSpec& spec) {
  const auto preds = forward(params, adj, features);
  return data_loss(preds, spec) + 0.5 * spec.weight_decay * params.flat().squaredNorm();
}

/// Exact gradient of `objective`.
inline Eigen::VectorXd grad(const ModelParams& params, const NormalizedAdjacency& adj,
                            const Eigen::MatrixXd& features, const LossSpec& spec) {
  if (spec.nodes.empty()) throw DomainError("gradient over an empty node set");
  const auto act = detail::forward_pass(params, adj, features, nullptr);
  const auto probs = detail::softmax_rows(act.logits);
  Eigen::VectorXd g =
      detail::backward_pass(params, adj, act, nullptr, detail::ce_logit_grad(probs, spec));
  if (spec.weight_decay != 0.0) g += spec.weight_decay * params.flat();
  return g;
}

/// Exact Hessian-vector product of `objective` (R-operator applied to the
/// backward pass). ReLU is treated as piecewise linear.
inline Eigen::VectorXd hessian_vector_product(const ModelParams& params,
                                              const NormalizedAdjacency& adj,
                                              const Eigen::MatrixXd& features,
                                              const LossSpec& spec, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != params.size()) {
    throw ShapeError("direction has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(params.size()));
  }
  const auto& a = adj.matrix();
  const auto d = static_cast<Eigen::Index>(params.input_dim());
  const auto h = static_cast<Eigen::Index>(params.hidden_dim());
  const auto c = static_cast<Eigen::Index>(params.class_count());
  Eigen::Map<const Eigen::MatrixXd> v1(v.data(), d, h);
  Eigen::Map<const Eigen::MatrixXd> v2(v.data() + d * h, h, c);

  const auto act = detail::forward_pass(params, adj, features, nullptr);
  const auto probs = detail::softmax_rows(act.logits);
  const auto active = (act.z1.array() > 0.0).eval();

  // Directional derivatives of the forward quantities.
  Eigen::MatrixXd r_xw = features * v1;
  Eigen::MatrixXd r_z1 = a * r_xw;
  Eigen::MatrixXd r_hidden = active.select(r_z1, 0.0);
  Eigen::MatrixXd r_agg = a * r_hidden;
  Eigen::MatrixXd r_logits = r_agg * params.w2() + act.agg * v2;

  // Directional derivatives of the backward quantities.
  Eigen::MatrixXd d_logits = detail::ce_logit_grad(probs, spec);
  Eigen::MatrixXd r_dlogits = Eigen::MatrixXd::Zero(probs.rows(), c);
  const double inv_n = 1.0 / static_cast<double>(spec.nodes.size());
  for (auto node : spec.nodes) {
    const auto r = static_cast<Eigen::Index>(node);
    const double w = detail::class_weight(spec.class_weights, spec.labels[node]) * inv_n;
    const double mean = probs.row(r).dot(r_logits.row(r));
    r_dlogits.row(r) = w * probs.row(r).cwiseProduct(
                               (r_logits.row(r).array() - mean).matrix());
  }

  Eigen::VectorXd out(static_cast<Eigen::Index>(params.size()));
  Eigen::Map<Eigen::MatrixXd> o1(out.data(), d, h);
  Eigen::Map<Eigen::MatrixXd> o2(out.data() + d * h, h, c);
  o2.noalias() = r_agg.transpose() * d_logits + act.agg.transpose() * r_dlogits;
  Eigen::MatrixXd r_dagg = r_dlogits * params.w2().transpose() + d_logits * v2.transpose();
  Eigen::MatrixXd r_dhidden = a * r_dagg;
  Eigen::MatrixXd r_dz1 = active.select(r_dhidden, 0.0);
  Eigen::MatrixXd r_dxw = a * r_dz1;
  o1.noalias() = features.transpose() * r_dxw;
  if (spec.weight_decay != 0.0) out += spec.weight_decay * v;
  return out;
}

}  // namespace calikit

#endif  // CALIKIT_GCN_HPP_
