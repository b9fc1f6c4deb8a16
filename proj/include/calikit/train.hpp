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

#ifndef CALIKIT_TRAIN_HPP_
#define CALIKIT_TRAIN_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "calikit/error.hpp"
#include "calikit/gcn.hpp"
#include "calikit/graph.hpp"
#include "calikit/metrics.hpp"
#include "calikit/model.hpp"
#include "calikit/random.hpp"

namespace calikit {

/// Graph plus its propagation operator, built once and shared read-only.
class GraphData {
 public:
  explicit GraphData(const Graph& g) : graph_(&g), adj_(normalize_adjacency(g)) {}

  const Graph& graph() const { return *graph_; }
  const NormalizedAdjacency& adj() const { return adj_; }
  const Eigen::MatrixXd& features() const { return graph_->features(); }
  std::span<const ClassId> labels() const { return graph_->labels(); }

 private:
  const Graph* graph_;
  NormalizedAdjacency adj_;
};

struct TrainConfig {
  std::size_t hidden_dim = 16;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  double dropout = 0.5;
  std::size_t max_epochs = 200;
  std::size_t patience = 30;
  /// Empty means inverse class frequency on the training set, mean 1.
  std::vector<double> class_weights;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden_dim == 0) throw DomainError("hidden dimension must be positive");
    if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw DomainError("weight decay must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must lie in [0, 1)");
    for (double w : class_weights) {
      if (!(w > 0.0)) throw DomainError("class weights must be positive");
    }
  }
};

/// Weights inversely proportional to each class's share of the training
/// nodes, rescaled to average 1 across classes.
inline std::vector<double> inverse_frequency_weights(std::span<const ClassId> labels,
                                                     std::span<const NodeId> train,
                                                     int class_count) {
  std::vector<double> counts(static_cast<std::size_t>(class_count), 0.0);
  for (auto v : train) counts[static_cast<std::size_t>(labels[v])] += 1.0;
  std::vector<double> w(counts.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0.0) {
      throw DomainError("class " + std::to_string(c) + " has no training nodes");
    }
    w[c] = static_cast<double>(train.size()) / counts[c];
    sum += w[c];
  }
  const double mean = sum / static_cast<double>(w.size());
  for (auto& x : w) x /= mean;
  return w;
}

inline std::vector<double> resolve_class_weights(const TrainConfig& cfg, const GraphData& data,
                                                  std::span<const NodeId> train) {
  if (!cfg.class_weights.empty()) {
    if (cfg.class_weights.size() != static_cast<std::size_t>(data.graph().class_count())) {
      throw ShapeError("expected one class weight per class");
    }
    return cfg.class_weights;
  }
  return inverse_frequency_weights(data.labels(), train, data.graph().class_count());
}

/// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
        v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& g) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * g;
    v_ = beta2_ * v_ + (1.0 - beta2_) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Eigen::VectorXd m_, v_;
};

/// Extra objective term mixed into training as (1 - lambda) CE + lambda R.
class Regularizer {
 public:
  virtual ~Regularizer() = default;

  /// Called at the start of every epoch with the current parameters.
  virtual void begin_epoch(std::size_t epoch, const ModelParams& params) = 0;

  /// Value of the term on the training-pass probabilities; adds its gradient
  /// with respect to the logits into `d_logits`.
  virtual double accumulate(const Eigen::MatrixXd& probs, Eigen::MatrixXd& d_logits) = 0;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_ce = 0.0;
  double loss_eice = 0.0;
  double val_macro_ace = 0.0;
  double val_macro_f1 = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
};

struct FitOptions {
  /// Soft training targets (N x C), e.g. smoothed labels.
  const Eigen::MatrixXd* soft_targets = nullptr;
  Regularizer* regularizer = nullptr;
  double lambda = 0.0;
  /// Stop once |L_t - L_{t-1}| < tol for `converge_window` epochs in a row.
  double converge_tol = 1e-5;
  std::size_t converge_window = 10;
  std::size_t ace_bins = 10;
};

namespace detail {

inline double val_macro_ace(const PredictionTable& preds, std::span<const ClassId> labels,
                            std::span<const NodeId> val, std::size_t bins) {
  try {
    return ace(preds, labels, val, bins).macro;
  } catch (const DomainError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

/// Full-batch training loop shared by every method. Keeps the parameters with
/// the lowest validation cost-sensitive CE; stops on patience, on loss
/// convergence, or at max_epochs.
inline TrainResult fit(const GraphData& data, const DatasetSplit& split, const TrainConfig& cfg,
                       const FitOptions& opts = {}) {
  cfg.validate();
  if (!(opts.lambda >= 0.0 && opts.lambda <= 1.0)) throw DomainError("lambda must lie in [0, 1]");
  validate_split(split, data.labels(), data.graph().class_count());
  const auto weights = resolve_class_weights(cfg, data, split.train);
  const auto n = data.graph().num_nodes();
  const auto d = data.graph().feature_dim();
  const auto classes = static_cast<std::size_t>(data.graph().class_count());

  auto init_rng = make_rng(cfg.seed, Stream::kInit);
  auto dropout_rng = make_rng(cfg.seed, Stream::kDropout);
  ModelParams params = ModelParams::glorot(d, cfg.hidden_dim, classes, init_rng);
  Adam adam(params.size(), cfg.learning_rate);

  LossSpec train_spec{data.labels(), split.train, weights, cfg.weight_decay, opts.soft_targets};
  const bool use_val = !split.val.empty();
  Regularizer* reg = opts.lambda > 0.0 ? opts.regularizer : nullptr;

  TrainResult result;
  result.params = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t flat_epochs = 0;
  double prev_total = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (reg) reg->begin_epoch(epoch, params);

    std::optional<DropoutMasks> masks;
    if (cfg.dropout > 0.0) {
      masks = DropoutMasks::sample(n, d, cfg.hidden_dim, cfg.dropout, dropout_rng);
    }
    const DropoutMasks* mask_ptr = masks ? &*masks : nullptr;
    const auto act = detail::forward_pass(params, data.adj(), data.features(), mask_ptr);
    auto preds = PredictionTable::from_logits(act.logits);
    const double loss_ce = data_loss(preds, train_spec);
    Eigen::MatrixXd d_logits = detail::ce_logit_grad(preds.probs, train_spec);
    double loss_reg = 0.0;
    if (reg) {
      d_logits *= 1.0 - opts.lambda;
      Eigen::MatrixXd d_reg = Eigen::MatrixXd::Zero(d_logits.rows(), d_logits.cols());
      loss_reg = reg->accumulate(preds.probs, d_reg);
      d_logits += opts.lambda * d_reg;
    }
    const double loss_total = (1.0 - opts.lambda) * loss_ce + opts.lambda * loss_reg;
    if (!std::isfinite(loss_total)) throw TrainingError("non-finite training loss", epoch);

    Eigen::VectorXd g = detail::backward_pass(params, data.adj(), act, mask_ptr, d_logits);
    if (cfg.weight_decay != 0.0) g += cfg.weight_decay * params.flat();
    adam.step(params.flat(), g);
    if (!params.all_finite()) throw TrainingError("non-finite parameters", epoch);

    TrainLogRow row{epoch, loss_total, loss_ce, loss_reg, 0.0, 0.0};
    double val_loss = 0.0;
    if (use_val) {
      const auto eval = forward(params, data.adj(), data.features());
      val_loss = cs_cross_entropy(eval, data.labels(), split.val, weights);
      row.val_macro_ace = detail::val_macro_ace(eval, data.labels(), split.val, opts.ace_bins);
      row.val_macro_f1 =
          classification_metrics(eval, data.labels(), split.val, 1 % static_cast<int>(classes))
              .macro_f1;
    }
    result.log.push_back(row);

    if (!use_val || val_loss < best_val) {
      best_val = val_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }

    flat_epochs = std::abs(loss_total - prev_total) < opts.converge_tol ? flat_epochs + 1 : 0;
    prev_total = loss_total;
    if (flat_epochs >= opts.converge_window) break;
  }
  return result;
}

/// Cost-sensitive GCN training.
inline ModelParams train(const Graph& g, const DatasetSplit& split, const TrainConfig& cfg) {
  GraphData data(g);
  return fit(data, split, cfg).params;
}

}  // namespace calikit

#endif  // CALIKIT_TRAIN_HPP_
