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

#ifndef CALIKIT_INFLUENCE_HPP_
#define CALIKIT_INFLUENCE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "calikit/error.hpp"
#include "calikit/gcn.hpp"
#include "calikit/graph.hpp"
#include "calikit/graph_io.hpp"
#include "calikit/model.hpp"
#include "calikit/parallel.hpp"
#include "calikit/train.hpp"

namespace calikit {

struct SolverConfig {
  /// Added to the Hessian diagonal before solving.
  double damping = 0.01;
  /// Relative residual ||(H + dI)x - b|| / ||b|| every solution must meet.
  double cg_tol = 1e-6;
  std::size_t cg_max_iter = 200;
  /// Up to this many parameters the damped Hessian is assembled and factored.
  std::size_t explicit_hessian_threshold = 2000;
  /// Use theta - (1/n) H^{-1} g for the leave-one-out model instead of
  /// theta + (1/n) H^{-1} g.
  bool upweight_sign = false;

  void validate() const {
    if (!(damping >= 0.0)) throw DomainError("damping must be non-negative");
    if (!(cg_tol > 0.0)) throw DomainError("CG tolerance must be positive");
    if (cg_max_iter == 0) throw DomainError("CG iteration cap must be positive");
  }
};

/// Parameter shift from dropping one training node, and that node's error
/// under the shifted model.
struct LooResult {
  NodeId node_id = 0;
  Eigen::VectorXd delta;
  double residual = 0.0;
};

/// The training objective the influence computations differentiate: mean
/// cost-sensitive CE over the training nodes plus weight decay, no dropout.
class InfluenceProblem {
 public:
  InfluenceProblem(const GraphData& data, std::span<const NodeId> train,
                   std::vector<double> class_weights, double weight_decay)
      : data_(&data), train_(train.begin(), train.end()), weights_(std::move(class_weights)),
        weight_decay_(weight_decay) {
    if (train_.empty()) throw DomainError("influence computations need training nodes");
    std::sort(train_.begin(), train_.end());
  }

  const GraphData& data() const { return *data_; }
  std::span<const NodeId> train() const { return train_; }
  std::span<const double> class_weights() const { return weights_; }
  double weight_decay() const { return weight_decay_; }

  LossSpec loss() const { return {data_->labels(), train_, weights_, weight_decay_, nullptr}; }

  bool is_training_node(NodeId i) const {
    return std::binary_search(train_.begin(), train_.end(), i);
  }

  void require_training_node(NodeId i) const {
    if (!is_training_node(i)) {
      throw DomainError("node " + std::to_string(i) + " is not a training node");
    }
  }

 private:
  const GraphData* data_;
  std::vector<NodeId> train_;
  std::vector<double> weights_;
  double weight_decay_;
};

/// Gradient of node i's own weighted CE term, without weight decay.
inline Eigen::VectorXd per_node_grad(const ModelParams& params, const InfluenceProblem& prob,
                                     NodeId i) {
  prob.require_training_node(i);
  const NodeId node[] = {i};
  LossSpec spec{prob.data().labels(), node, prob.class_weights(), 0.0, nullptr};
  return grad(params, prob.data().adj(), prob.data().features(), spec);
}

/// (H + damping I) v with H the Hessian of the mean training loss.
inline Eigen::VectorXd hvp(const ModelParams& params, const InfluenceProblem& prob,
                           const Eigen::VectorXd& v, double damping) {
  Eigen::VectorXd out = hessian_vector_product(params, prob.data().adj(),
                                               prob.data().features(), prob.loss(), v);
  if (damping != 0.0) out += damping * v;
  if (!out.allFinite()) throw NumericError("non-finite Hessian-vector product");
  return out;
}

struct SolveResult {
  Eigen::VectorXd x;
  double relative_residual = 0.0;
  std::size_t iterations = 0;
};

/// Solves (H + damping I) x = b at fixed parameters. Small models assemble and
/// LU-factor the damped Hessian once; larger ones run conjugate gradient per
/// right-hand side. Every solution is checked with one extra product.
class HessianSolver {
 public:
  HessianSolver(const ModelParams& params, const InfluenceProblem& prob, SolverConfig cfg)
      : params_(params), prob_(&prob), cfg_(cfg) {
    cfg_.validate();
    if (params_.size() <= cfg_.explicit_hessian_threshold) {
      const auto p = static_cast<Eigen::Index>(params_.size());
      Eigen::MatrixXd h(p, p);
      Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
      for (Eigen::Index j = 0; j < p; ++j) {
        e[j] = 1.0;
        h.col(j) = hvp(params_, prob, e, 0.0);
        e[j] = 0.0;
      }
      Eigen::MatrixXd damped = 0.5 * (h + h.transpose());
      damped.diagonal().array() += cfg_.damping;
      lu_.emplace(damped);
    }
  }

  bool uses_explicit_hessian() const { return lu_.has_value(); }
  const SolverConfig& config() const { return cfg_; }

  SolveResult solve_checked(const Eigen::VectorXd& b) const {
    if (static_cast<std::size_t>(b.size()) != params_.size()) {
      throw ShapeError("right-hand side has the wrong length");
    }
    const double b_norm = b.norm();
    if (b_norm == 0.0) return {Eigen::VectorXd::Zero(b.size()), 0.0, 0};
    SolveResult out = lu_ ? SolveResult{lu_->solve(b), 0.0, 0} : conjugate_gradient(b, b_norm);
    if (!out.x.allFinite()) throw NumericError("non-finite solution of the Hessian system");
    out.relative_residual = (apply(out.x) - b).norm() / b_norm;
    if (!(out.relative_residual <= cfg_.cg_tol)) {
      throw ConvergenceError("Hessian solve missed its tolerance", out.relative_residual);
    }
    return out;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return solve_checked(b).x; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return hvp(params_, *prob_, v, cfg_.damping);
  }

 private:
  SolveResult conjugate_gradient(const Eigen::VectorXd& b, double b_norm) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd r = b;
    Eigen::VectorXd dir = r;
    double rs = r.squaredNorm();
    for (std::size_t it = 1; it <= cfg_.cg_max_iter; ++it) {
      const Eigen::VectorXd a_dir = apply(dir);
      const double curvature = dir.dot(a_dir);
      if (!(curvature > 0.0)) {
        throw ConvergenceError("conjugate gradient met non-positive curvature",
                               std::sqrt(rs) / b_norm);
      }
      const double step = rs / curvature;
      x += step * dir;
      r -= step * a_dir;
      double rs_next = r.squaredNorm();
      if (std::sqrt(rs_next) / b_norm <= cfg_.cg_tol) {
        // The recurrence drifts from the true residual; confirm before
        // returning, restart from the true residual otherwise.
        r = b - apply(x);
        rs_next = r.squaredNorm();
        if (std::sqrt(rs_next) / b_norm <= cfg_.cg_tol) return {x, 0.0, it};
        dir = r;
        rs = rs_next;
        continue;
      }
      dir = r + (rs_next / rs) * dir;
      rs = rs_next;
    }
    throw ConvergenceError(
        "conjugate gradient did not converge in " + std::to_string(cfg_.cg_max_iter) +
            " iterations",
        std::sqrt(rs) / b_norm);
  }

  ModelParams params_;
  const InfluenceProblem* prob_;
  SolverConfig cfg_;
  std::optional<Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
};

inline Eigen::VectorXd solve_hinv(const ModelParams& params, const InfluenceProblem& prob,
                                  const Eigen::VectorXd& b, const SolverConfig& cfg) {
  return HessianSolver(params, prob, cfg).solve(b);
}

/// theta_{-i} - theta for dropping training node i, to first order:
/// (1/n) (H + dI)^{-1} grad_i (sign flipped with `upweight_sign`).
inline Eigen::VectorXd loo_delta(const ModelParams& params, const InfluenceProblem& prob,
                                 const HessianSolver& solver, NodeId i) {
  const double n = static_cast<double>(prob.train().size());
  const double sign = solver.config().upweight_sign ? -1.0 : 1.0;
  return (sign / n) * solver.solve(per_node_grad(params, prob, i));
}

inline Eigen::VectorXd loo_delta(const ModelParams& params, const InfluenceProblem& prob,
                                 NodeId i, const SolverConfig& cfg) {
  return loo_delta(params, prob, HessianSolver(params, prob, cfg), i);
}

/// 1 - p(y_i) under the given model, clamped to [0, 1].
inline double residual_from(const PredictionTable& preds, std::span<const ClassId> labels,
                            NodeId i) {
  const double p = preds.probs(static_cast<Eigen::Index>(i), labels[i]);
  return std::clamp(1.0 - p, 0.0, 1.0);
}

inline double residual(const ModelParams& params_minus_i, const GraphData& data, NodeId i) {
  if (i >= data.graph().num_nodes()) throw BoundsError("node id out of range");
  return residual_from(forward(params_minus_i, data.adj(), data.features()), data.labels(), i);
}

/// Leave-one-out models for every training node plus what each predicts on a
/// set of evaluation nodes.
struct LooEnsemble {
  std::vector<LooResult> results;  // ordered as the training nodes
  std::vector<NodeId> eval_nodes;
  /// scalars(i, j): probability LOO model i gives eval node j's base class.
  Eigen::MatrixXd scalars;
};

/// Shared-state-free per-node work: each training node's solve, forward pass
/// and scalars land in their own slot, so the output does not depend on the
/// number of workers.
inline LooEnsemble loo_ensemble(const ModelParams& params, const InfluenceProblem& prob,
                                const HessianSolver& solver, const PredictionTable& base_preds,
                                std::span<const NodeId> eval_nodes, std::size_t workers,
                                double temperature = 1.0) {
  const auto train = prob.train();
  const auto& data = prob.data();
  LooEnsemble ens;
  ens.results.resize(train.size());
  ens.eval_nodes.assign(eval_nodes.begin(), eval_nodes.end());
  ens.scalars.resize(static_cast<Eigen::Index>(train.size()),
                     static_cast<Eigen::Index>(eval_nodes.size()));
  parallel_for(train.size(), workers, [&](std::size_t k) {
    const NodeId i = train[k];
    auto& rec = ens.results[k];
    rec.node_id = i;
    rec.delta = loo_delta(params, prob, solver, i);
    const auto loo_preds = PredictionTable::from_logits(
        detail::forward_pass(params.shifted(rec.delta), data.adj(), data.features(), nullptr)
            .logits,
        temperature);
    rec.residual = residual_from(loo_preds, data.labels(), i);
    for (std::size_t j = 0; j < eval_nodes.size(); ++j) {
      const auto v = eval_nodes[j];
      ens.scalars(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          loo_preds.probs(static_cast<Eigen::Index>(v), base_preds.pred[v]);
    }
  });
  return ens;
}

/// Recomputes the scalars of an ensemble from stored deltas (e.g. a cache).
inline Eigen::MatrixXd loo_scalars(const ModelParams& params, const GraphData& data,
                                   std::span<const LooResult> results,
                                   const PredictionTable& base_preds,
                                   std::span<const NodeId> eval_nodes, std::size_t workers,
                                   double temperature = 1.0) {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(results.size()),
                    static_cast<Eigen::Index>(eval_nodes.size()));
  parallel_for(results.size(), workers, [&](std::size_t k) {
    const auto loo_preds = PredictionTable::from_logits(
        detail::forward_pass(params.shifted(results[k].delta), data.adj(), data.features(),
                             nullptr)
            .logits,
        temperature);
    for (std::size_t j = 0; j < eval_nodes.size(); ++j) {
      const auto v = eval_nodes[j];
      s(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          loo_preds.probs(static_cast<Eigen::Index>(v), base_preds.pred[v]);
    }
  });
  return s;
}

// ---------------------------------------------------------------------------
// LOO cache: CSV "node_id,residual" plus a binary sidecar with the deltas.

namespace detail {

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h_ ^= p[k];
      h_ *= 0x100000001b3ull;
    }
  }
  template <class T>
  void value(const T& x) {
    bytes(&x, sizeof(T));
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace detail

/// Content hash over everything a LOO result depends on: parameters, graph,
/// training nodes, loss weights and solver settings.
inline std::uint64_t loo_cache_key(const ModelParams& params, const InfluenceProblem& prob,
                                   const SolverConfig& cfg) {
  detail::Fnv1a h;
  h.value(params.input_dim());
  h.value(params.hidden_dim());
  h.value(params.class_count());
  h.bytes(params.flat().data(), params.size() * sizeof(double));
  const auto& g = prob.data().graph();
  h.value(g.num_nodes());
  for (auto [u, v] : g.edges()) {
    h.value(u);
    h.value(v);
  }
  h.bytes(g.features().data(), static_cast<std::size_t>(g.features().size()) * sizeof(double));
  h.bytes(g.labels().data(), g.labels().size() * sizeof(ClassId));
  h.bytes(prob.train().data(), prob.train().size() * sizeof(NodeId));
  h.bytes(prob.class_weights().data(), prob.class_weights().size() * sizeof(double));
  h.value(prob.weight_decay());
  h.value(cfg.damping);
  h.value(cfg.upweight_sign);
  return h.digest();
}

inline std::string hex_key(std::uint64_t key) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = digits[key & 0xf];
    key >>= 4;
  }
  return s;
}

inline void write_loo_cache(std::span<const LooResult> results, std::uint64_t key,
                            const std::filesystem::path& csv_path,
                            const std::filesystem::path& bin_path) {
  {
    auto out = detail::open_output(csv_path);
    out << "node_id,residual\n";
    for (const auto& r : results) out << r.node_id << ',' << detail::format_double(r.residual) << '\n';
  }
  auto out = detail::open_output(bin_path);
  const std::size_t p = results.empty() ? 0 : static_cast<std::size_t>(results.front().delta.size());
  out << "calikit-loo v1 " << hex_key(key) << ' ' << results.size() << ' ' << p << '\n';
  for (const auto& r : results) {
    if (static_cast<std::size_t>(r.delta.size()) != p) throw ShapeError("ragged LOO deltas");
    detail::write_f64_le(out, r.delta.data(), p);
  }
  if (!out) throw IoError("failed writing " + bin_path.string());
}

/// Loads a cache written by write_loo_cache. Throws CompatibilityError when
/// the stored key differs from `expected_key`.
inline std::vector<LooResult> read_loo_cache(const std::filesystem::path& csv_path,
                                             const std::filesystem::path& bin_path,
                                             std::uint64_t expected_key) {
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string());
  std::string header;
  std::getline(bin, header);
  std::istringstream fields(header);
  std::string magic, version, key;
  std::size_t count = 0, p = 0;
  if (!(fields >> magic >> version >> key >> count >> p) || magic != "calikit-loo" ||
      version != "v1") {
    throw ParseError(bin_path.string() + ": not a calikit LOO cache", 1);
  }
  if (key != hex_key(expected_key)) {
    throw CompatibilityError("LOO cache " + bin_path.string() + " was built for different inputs");
  }
  std::vector<LooResult> results(count);
  for (auto& r : results) {
    r.delta.resize(static_cast<Eigen::Index>(p));
    detail::read_f64_le(bin, r.delta.data(), p);
  }

  auto csv = detail::open_input(csv_path);
  std::string line;
  std::size_t lineno = 0, k = 0;
  while (std::getline(csv, line)) {
    ++lineno;
    if (lineno == 1 && detail::trim(line) == "node_id,residual") continue;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(detail::trim(line), ',');
    if (f.size() != 2 || k >= count || !detail::parse_number(f[0], results[k].node_id) ||
        !detail::parse_number(f[1], results[k].residual)) {
      throw ParseError(csv_path.string() + ": expected node_id,residual", lineno);
    }
    ++k;
  }
  if (k != count) throw ParseError(csv_path.string() + ": row count does not match sidecar");
  return results;
}

}  // namespace calikit

#endif  // CALIKIT_INFLUENCE_HPP_
