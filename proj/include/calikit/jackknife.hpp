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

#ifndef CALIKIT_JACKKNIFE_HPP_
#define CALIKIT_JACKKNIFE_HPP_

#include <span>
#include <vector>

#include "calikit/gcn.hpp"
#include "calikit/influence.hpp"
#include "calikit/metrics.hpp"
#include "calikit/parallel.hpp"
#include "calikit/train.hpp"
#include "calikit/uncertainty.hpp"

namespace calikit {

/// Predictions of a trained model without dropout, optionally temperature
/// scaled.
inline PredictionTable predict(const ModelParams& params, const GraphData& data,
                               double temperature = 1.0) {
  return PredictionTable::from_logits(
      detail::forward_pass(params, data.adj(), data.features(), nullptr).logits, temperature);
}

struct JackknifeOptions {
  CoverageConfig coverage;
  double temperature = 1.0;
  std::size_t workers = 1;
};

/// Jackknife intervals of every evaluation node given an ensemble built for
/// those nodes.
inline std::vector<UncertaintyRecord> uncertainty_records(const PredictionTable& base_preds,
                                                          std::span<const LooResult> results,
                                                          std::span<const NodeId> eval_nodes,
                                                          const Eigen::MatrixXd& scalars,
                                                          const CoverageConfig& coverage) {
  std::vector<double> residuals(results.size());
  for (std::size_t k = 0; k < results.size(); ++k) residuals[k] = results[k].residual;
  std::vector<UncertaintyRecord> records;
  records.reserve(eval_nodes.size());
  std::vector<double> column(results.size());
  for (std::size_t j = 0; j < eval_nodes.size(); ++j) {
    for (std::size_t k = 0; k < results.size(); ++k) {
      column[k] = scalars(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    }
    records.push_back(interval(eval_nodes[j], base_preds, column, residuals, coverage));
  }
  return records;
}

struct JackknifeResult {
  PredictionTable base_preds;
  LooEnsemble ensemble;
  std::vector<UncertaintyRecord> records;
  double eice = 0.0;
};

/// LOO models by influence, residuals, intervals on `eval_nodes`, and the
/// mean individual calibration error over them.
inline JackknifeResult run_jackknife(const ModelParams& params, const InfluenceProblem& prob,
                                     const SolverConfig& solver_cfg,
                                     std::span<const NodeId> eval_nodes,
                                     const JackknifeOptions& opts = {}) {
  opts.coverage.validate();
  JackknifeResult out;
  out.base_preds = predict(params, prob.data(), opts.temperature);
  const HessianSolver solver(params, prob, solver_cfg);
  out.ensemble = loo_ensemble(params, prob, solver, out.base_preds, eval_nodes, opts.workers,
                              opts.temperature);
  out.records = uncertainty_records(out.base_preds, out.ensemble.results, eval_nodes,
                                    out.ensemble.scalars, opts.coverage);
  out.eice = eice(out.records);
  return out;
}

}  // namespace calikit

#endif  // CALIKIT_JACKKNIFE_HPP_
