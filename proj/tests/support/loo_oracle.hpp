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


// Brute-force leave-one-out retraining on small graphs, used as a reference
// for the influence approximation.

#ifndef CALIKIT_TESTS_LOO_ORACLE_HPP_
#define CALIKIT_TESTS_LOO_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "calikit/calikit.hpp"

namespace calikit::testing {

/// Full-batch Adam on `spec`'s objective with a stepwise decaying rate, to
/// settle a trained model closer to its stationary point.
inline ModelParams anneal(ModelParams params, const GraphData& data, const LossSpec& spec,
                          double lr, int stages, int steps_per_stage) {
  for (int s = 0; s < stages; ++s, lr *= 0.1) {
    Adam adam(params.size(), lr);
    for (int k = 0; k < steps_per_stage; ++k) {
      adam.step(params.flat(), grad(params, data.adj(), data.features(), spec));
    }
  }
  return params;
}

/// Newton iterations on `spec`'s objective from a trained starting point.
/// Steps are halved until the objective does not increase.
inline ModelParams newton_polish(ModelParams params, const GraphData& data, const LossSpec& spec,
                                 int max_iter = 50, double grad_tol = 1e-11) {
  const auto p = static_cast<Eigen::Index>(params.size());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd g = grad(params, data.adj(), data.features(), spec);
    if (g.norm() < grad_tol) break;
    Eigen::MatrixXd h(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
      h.col(k) = hessian_vector_product(params, data.adj(), data.features(), spec,
                                        Eigen::VectorXd::Unit(p, k));
    }
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::VectorXd step = h.ldlt().solve(g);
    if (!step.allFinite() || step.dot(g) <= 0.0) step = g;
    const double f0 = objective(params, data.adj(), data.features(), spec);
    double t = 1.0;
    ModelParams next = params.shifted(-step);
    while (objective(next, data.adj(), data.features(), spec) > f0 && t > 1e-8) {
      t *= 0.5;
      next = params.shifted(-t * step);
    }
    params = std::move(next);
  }
  return params;
}

struct OracleConfig {
  std::vector<std::size_t> blocks{20, 10};
  double p_in = 0.3;
  double p_out = 0.05;
  std::size_t feat_dim = 13;
  double feat_shift = 1.0;
  std::size_t hidden_dim = 4;
  std::size_t lr_c = 8;
  std::size_t val_size = 14;
  double weight_decay = 0.01;
  std::size_t epochs = 2000;
  /// Start each removal run from the full model instead of the seed's init.
  bool warm_start = false;
  int anneal_stages = 3;
  int anneal_steps = 1000;
};

struct OracleRun {
  std::vector<double> predicted;  // grad(L_val) . delta_i
  std::vector<double> measured;   // L_val(theta_{-i}) - L_val(theta)
};

/// Trains on the full training set and once per removed training node (same
/// seed each time), polishing every model to a stationary point.
inline OracleRun run_loo_oracle(std::uint64_t seed, const OracleConfig& oc = {},
                                const SolverConfig& solver = {}) {
  auto graph = std::make_unique<Graph>(gen_synthetic(oc.blocks, oc.p_in, oc.p_out, oc.feat_dim,
                                                     oc.feat_shift, seed));
  GraphData data(*graph);
  const auto split = make_split(graph->labels(), oc.lr_c, oc.val_size, 0, seed);
  const auto weights = inverse_frequency_weights(graph->labels(), split.train,
                                                 graph->class_count());

  TrainConfig cfg;
  cfg.hidden_dim = oc.hidden_dim;
  cfg.dropout = 0.0;
  cfg.weight_decay = oc.weight_decay;
  cfg.max_epochs = oc.epochs;
  cfg.class_weights = weights;
  cfg.seed = seed;
  FitOptions fo;
  fo.converge_tol = 0.0;

  auto train_on = [&](const std::vector<NodeId>& nodes, const ModelParams* start) {
    DatasetSplit s;
    s.train = nodes;
    s.label_rate_per_class = oc.lr_c;
    auto params = start ? *start : fit(data, s, cfg, fo).params;
    const LossSpec spec{graph->labels(), nodes, weights, oc.weight_decay, nullptr};
    params = anneal(std::move(params), data, spec, 1e-3, oc.anneal_stages, oc.anneal_steps);
    return newton_polish(std::move(params), data, spec);
  };
  auto val_loss = [&](const ModelParams& m) {
    return cs_cross_entropy(forward(m, data.adj(), data.features()), graph->labels(), split.val,
                            weights);
  };

  const ModelParams full = train_on(split.train, nullptr);
  const double base_val = val_loss(full);
  const InfluenceProblem prob(data, split.train, weights, oc.weight_decay);
  const HessianSolver hs(full, prob, solver);
  const LossSpec val_spec{graph->labels(), split.val, weights, 0.0, nullptr};
  const Eigen::VectorXd val_grad = grad(full, data.adj(), data.features(), val_spec);

  OracleRun run;
  for (auto i : split.train) {
    std::vector<NodeId> rest;
    std::copy_if(split.train.begin(), split.train.end(), std::back_inserter(rest),
                 [i](NodeId v) { return v != i; });
    run.predicted.push_back(val_grad.dot(loo_delta(full, prob, hs, i)));
    run.measured.push_back(val_loss(train_on(rest, oc.warm_start ? &full : nullptr)) - base_val);
  }
  return run;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace calikit::testing

#endif  // CALIKIT_TESTS_LOO_ORACLE_HPP_
