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

#ifndef CALIKIT_CALIRARE_HPP_
#define CALIKIT_CALIRARE_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "calikit/error.hpp"
#include "calikit/gcn.hpp"
#include "calikit/influence.hpp"
#include "calikit/jackknife.hpp"
#include "calikit/metrics.hpp"
#include "calikit/train.hpp"
#include "calikit/uncertainty.hpp"

namespace calikit {

struct CaliRareConfig {
  TrainConfig train;
  SolverConfig solver;
  CoverageConfig coverage;
  /// Weight of the EICE term in (1 - lambda) CE + lambda EICE.
  double lambda = 0.1;
  /// Epochs between recomputations of the jackknife uncertainty targets.
  std::size_t refresh_every = 10;
  std::size_t workers = 1;

  void validate() const {
    train.validate();
    solver.validate();
    coverage.validate();
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw DomainError("lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
    if (refresh_every == 0) throw DomainError("refresh interval must be at least one epoch");
  }
};

inline double joint_loss(double ce, double l_eice, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0, 1]");
  return (1.0 - lambda) * ce + lambda * l_eice;
}

struct RegularizerValue {
  double value = 0.0;
  std::vector<double> ice;          // per training node, in training-node order
  std::vector<double> uncertainty;  // per training node
  JackknifeResult jackknife;
};

/// Mean ICE over the training nodes, with the training nodes themselves as
/// the evaluation set of the jackknife.
inline RegularizerValue eice_regularizer(const ModelParams& params, const InfluenceProblem& prob,
                                         const SolverConfig& solver_cfg,
                                         const CoverageConfig& coverage,
                                         std::size_t workers = 1) {
  RegularizerValue out;
  out.jackknife = run_jackknife(params, prob, solver_cfg, prob.train(),
                                JackknifeOptions{coverage, 1.0, workers});
  double sum = 0.0;
  for (const auto& r : out.jackknife.records) {
    out.uncertainty.push_back(r.uncertainty);
    out.ice.push_back(ice(r.uncertainty, r.confidence));
    sum += out.ice.back();
  }
  out.value = sum / static_cast<double>(out.ice.size());
  return out;
}

/// EICE term for the training loop. Uncertainty targets are recomputed every
/// `refresh_every` epochs (dropout off) and held fixed in between, so the
/// gradient reaches the parameters only through each node's confidence.
class EiceRegularizer final : public Regularizer {
 public:
  EiceRegularizer(const InfluenceProblem& prob, const CaliRareConfig& cfg)
      : prob_(&prob), cfg_(&cfg) {}

  void begin_epoch(std::size_t epoch, const ModelParams& params) override {
    if ((epoch - 1) % cfg_->refresh_every == 0) {
      targets_ =
          eice_regularizer(params, *prob_, cfg_->solver, cfg_->coverage, cfg_->workers).uncertainty;
      refreshed_at_.push_back(epoch);
    }
    history_.push_back(targets_);
  }

  double accumulate(const Eigen::MatrixXd& probs, Eigen::MatrixXd& d_logits) override {
    const auto train = prob_->train();
    const double inv_n = 1.0 / static_cast<double>(train.size());
    double total = 0.0;
    for (std::size_t k = 0; k < train.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(train[k]);
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < probs.cols(); ++c) {
        if (probs(r, c) > probs(r, best)) best = c;
      }
      const double conf = probs(r, best);
      const double diff = conf - targets_[k];
      total += std::abs(diff);
      if (diff == 0.0) continue;  // subgradient 0 at the kink
      const double sign = diff > 0.0 ? 1.0 : -1.0;
      // d conf / d z = conf (e_best - p)
      Eigen::RowVectorXd dconf = -conf * probs.row(r);
      dconf[best] += conf;
      d_logits.row(r) += sign * inv_n * dconf;
    }
    return total * inv_n;
  }

  /// Targets in force at each epoch, in epoch order.
  const std::vector<std::vector<double>>& history() const { return history_; }
  const std::vector<std::size_t>& refreshed_at() const { return refreshed_at_; }

 private:
  const InfluenceProblem* prob_;
  const CaliRareConfig* cfg_;
  std::vector<double> targets_;
  std::vector<std::vector<double>> history_;
  std::vector<std::size_t> refreshed_at_;
};

struct CaliRareResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
  /// Uncertainty targets used at each epoch (empty when lambda = 0).
  std::vector<std::vector<double>> target_history;
  /// Metrics of the returned model on the validation nodes; left at zero when
  /// some class has no validation node.
  CalibrationReport report;
};

/// Joint training for classification and individual calibration. With
/// lambda = 0 the parameter trajectory is that of plain cost-sensitive
/// training.
inline CaliRareResult train_calirare(const GraphData& data, const DatasetSplit& split,
                                     const CaliRareConfig& cfg, ClassId minority = 1) {
  cfg.validate();
  validate_split(split, data.labels(), data.graph().class_count());
  const auto weights = resolve_class_weights(cfg.train, data, split.train);
  const InfluenceProblem prob(data, split.train, weights, cfg.train.weight_decay);
  EiceRegularizer reg(prob, cfg);
  FitOptions opts;
  opts.regularizer = &reg;
  opts.lambda = cfg.lambda;
  auto fitted = fit(data, split, cfg.train, opts);

  CaliRareResult out;
  out.params = std::move(fitted.params);
  out.log = std::move(fitted.log);
  out.best_epoch = fitted.best_epoch;
  out.target_history = reg.history();
  std::vector<bool> seen(static_cast<std::size_t>(data.graph().class_count()), false);
  for (auto v : split.val) seen[static_cast<std::size_t>(data.labels()[v])] = true;
  const bool val_has_every_class = std::find(seen.begin(), seen.end(), false) == seen.end();
  if (val_has_every_class) {
    const auto jk = run_jackknife(out.params, prob, cfg.solver, split.val,
                                  JackknifeOptions{cfg.coverage, 1.0, cfg.workers});
    out.report = calibration_report(jk.base_preds, data.labels(), split.val, minority, jk.records);
  }
  return out;
}

inline CaliRareResult train_calirare(const Graph& g, const DatasetSplit& split,
                                     const CaliRareConfig& cfg, ClassId minority = 1) {
  GraphData data(g);
  return train_calirare(data, split, cfg, minority);
}

// ---------------------------------------------------------------------------
// Calibration baselines.

/// Mean negative log-likelihood of softmax(logits / T).
inline double scaled_nll(const Eigen::MatrixXd& logits, std::span<const ClassId> labels,
                         double temperature) {
  double sum = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Eigen::RowVectorXd z = logits.row(r) / temperature;
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    sum += lse - z[labels[static_cast<std::size_t>(r)]];
  }
  return sum / static_cast<double>(logits.rows());
}

struct TemperatureFit {
  double temperature = 1.0;
  double nll = 0.0;
  bool at_bound = false;
};

/// Golden-section search for the temperature minimizing validation NLL on
/// [lo, hi]. Row r of `logits` belongs to labels[r].
inline TemperatureFit temperature_scale(const Eigen::MatrixXd& logits,
                                        std::span<const ClassId> labels, double lo = 0.05,
                                        double hi = 20.0, double tol = 1e-4) {
  if (logits.rows() == 0) throw DomainError("temperature scaling needs validation samples");
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw ShapeError("logits and labels differ in length");
  }
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto f = [&](double t) { return scaled_nll(logits, labels, t); };
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  TemperatureFit fit{(a + b) / 2.0, 0.0, false};
  fit.nll = f(fit.temperature);
  for (double edge : {lo, hi}) {
    const double fe = f(edge);
    if (fe < fit.nll) fit = {edge, fe, true};
  }
  if (fit.temperature - lo <= tol || hi - fit.temperature <= tol) fit.at_bound = true;
  return fit;
}

/// Fits T on the validation nodes of a trained model.
inline TemperatureFit temperature_scale(const PredictionTable& preds,
                                        std::span<const ClassId> labels,
                                        std::span<const NodeId> val) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(val.size()), preds.logits.cols());
  std::vector<ClassId> y;
  for (std::size_t k = 0; k < val.size(); ++k) {
    z.row(static_cast<Eigen::Index>(k)) = preds.logits.row(static_cast<Eigen::Index>(val[k]));
    y.push_back(labels[val[k]]);
  }
  return temperature_scale(z, y);
}

/// (1 - eps) one-hot + eps / C for every node.
inline Eigen::MatrixXd label_smooth(std::span<const ClassId> labels, double epsilon,
                                    int class_count) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw DomainError("smoothing must lie in [0, 1)");
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(labels.size()),
                                                class_count, epsilon / class_count);
  for (std::size_t v = 0; v < labels.size(); ++v) {
    t(static_cast<Eigen::Index>(v), labels[v]) += 1.0 - epsilon;
  }
  return t;
}

/// Cost-sensitive training against smoothed targets.
inline TrainResult train_label_smoothing(const GraphData& data, const DatasetSplit& split,
                                         const TrainConfig& cfg, double epsilon) {
  const auto targets = label_smooth(data.labels(), epsilon, data.graph().class_count());
  FitOptions opts;
  opts.soft_targets = &targets;
  return fit(data, split, cfg, opts);
}

}  // namespace calikit

#endif  // CALIKIT_CALIRARE_HPP_
