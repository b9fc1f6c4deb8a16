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


#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "calikit/calikit.hpp"
#include "support/numeric.hpp"

namespace calikit {
namespace {

using testing::KernelFixture;

// Small trained model with p = 13 * 4 + 4 * 2 = 60.
struct TrainedFixture {
  KernelFixture f{14, 6, 13, 4, 5, 5};
  double wd = 0.01;
  std::unique_ptr<InfluenceProblem> prob;

  TrainedFixture() {
    TrainConfig cfg;
    cfg.hidden_dim = 4;
    cfg.dropout = 0.0;
    cfg.weight_decay = wd;
    cfg.max_epochs = 300;
    cfg.seed = 5;
    cfg.class_weights = f.weights;
    f.params = fit(*f.data, f.split, cfg).params;
    prob = std::make_unique<InfluenceProblem>(*f.data, f.split.train, f.weights, wd);
  }
};

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::kInit);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = normal(rng);
  return v;
}

TEST(PerNodeGrad, AveragesToFullGradient) {
  KernelFixture f(7, 3, 3, 4, 1);
  const double wd = 5e-4;
  const InfluenceProblem prob(*f.data, f.split.train, f.weights, wd);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.params.size()));
  for (auto i : prob.train()) sum += per_node_grad(f.params, prob, i);
  sum /= static_cast<double>(prob.train().size());
  sum += wd * f.params.flat();
  const auto full = grad(f.params, f.data->adj(), f.data->features(), prob.loss());
  EXPECT_LT((sum - full).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PerNodeGrad, MatchesCentralDifferences) {
  KernelFixture f(7, 3, 3, 4, 2);
  const InfluenceProblem prob(*f.data, f.split.train, f.weights, 0.0);
  for (auto i : prob.train()) {
    const NodeId node[] = {i};
    const LossSpec single{f.graph->labels(), node, f.weights, 0.0, nullptr};
    const auto numeric = testing::fd_gradient(f.params, *f.data, single);
    EXPECT_LT(testing::max_relative_error(per_node_grad(f.params, prob, i), numeric), 1e-4);
  }
}

// One node, one feature, hidden width one: logits are x * w1 * w2.
struct SaturatedNode {
  Graph g{{}, Eigen::MatrixXd::Ones(1, 1), {1}, 2};
  GraphData data{g};
  std::vector<NodeId> train{0};
  InfluenceProblem prob{data, train, {1.0, 1.0}, 0.0};

  ModelParams params(double margin) const {
    ModelParams p(1, 1, 2);
    p.w1()(0, 0) = 1.0;
    p.w2()(0, 0) = -margin;
    p.w2()(0, 1) = margin;
    return p;
  }
};

TEST(PerNodeGrad, SaturatedSoftmaxIsFlat) {
  SaturatedNode s;
  EXPECT_LT(per_node_grad(s.params(20.0), s.prob, 0).norm(), 1e-6);
}

TEST(PerNodeGrad, RejectsNonTrainingNode) {
  KernelFixture f(7, 3, 3, 4, 1);
  const InfluenceProblem prob(*f.data, f.split.train, f.weights, 0.0);
  NodeId outside = 0;
  while (prob.is_training_node(outside)) ++outside;
  EXPECT_THROW(per_node_grad(f.params, prob, outside), DomainError);
}

TEST(Hvp, ZeroDirection) {
  KernelFixture f(7, 3, 3, 4, 3);
  const InfluenceProblem prob(*f.data, f.split.train, f.weights, 1e-3);
  const auto p = static_cast<Eigen::Index>(f.params.size());
  EXPECT_EQ(hvp(f.params, prob, Eigen::VectorXd::Zero(p), 0.01), Eigen::VectorXd::Zero(p));
}

TEST(Hvp, DampingAddsScaledDirection) {
  KernelFixture f(7, 3, 3, 4, 3);
  const InfluenceProblem prob(*f.data, f.split.train, f.weights, 1e-3);
  const auto v = random_vector(static_cast<Eigen::Index>(f.params.size()), 1);
  const Eigen::VectorXd diff = hvp(f.params, prob, v, 0.01) - hvp(f.params, prob, v, 0.0);
  EXPECT_LT((diff - 0.01 * v).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Hvp, MatchesFiniteDifferenceHessian) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    KernelFixture f(14, 6, 13, 4, seed, 5);
    ASSERT_EQ(f.params.size(), 60u);
    const auto spec = f.spec(0.01);
    const auto exact = testing::hvp_columns(f.params, *f.data, spec);
    const auto numeric = testing::fd_hessian(f.params, *f.data, spec);
    EXPECT_LT((exact - numeric).cwiseAbs().maxCoeff(), 1e-3) << "seed " << seed;
  }
}

TEST(Hvp, Symmetric) {
  KernelFixture f(10, 5, 4, 6, 4);
  const InfluenceProblem prob(*f.data, f.split.train, f.weights, 1e-3);
  const auto n = static_cast<Eigen::Index>(f.params.size());
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto u = random_vector(n, 10 + k);
    const auto v = random_vector(n, 20 + k);
    const double a = hvp(f.params, prob, u, 0.0).dot(v);
    const double b = u.dot(hvp(f.params, prob, v, 0.0));
    EXPECT_LE(std::abs(a - b), 1e-6 * std::max(std::abs(a), std::abs(b)));
  }
}

TEST(Solve, ZeroRightHandSide) {
  TrainedFixture t;
  const auto p = static_cast<Eigen::Index>(t.f.params.size());
  EXPECT_EQ(solve_hinv(t.f.params, *t.prob, Eigen::VectorXd::Zero(p), {}),
            Eigen::VectorXd::Zero(p));
}

TEST(Solve, ExplicitAndConjugateGradientAgree) {
  TrainedFixture t;
  SolverConfig dense;
  dense.cg_tol = 1e-10;
  SolverConfig cg = dense;
  cg.explicit_hessian_threshold = 0;
  const HessianSolver a(t.f.params, *t.prob, dense);
  const HessianSolver b(t.f.params, *t.prob, cg);
  ASSERT_TRUE(a.uses_explicit_hessian());
  ASSERT_FALSE(b.uses_explicit_hessian());
  for (auto i : t.prob->train()) {
    const auto rhs = per_node_grad(t.f.params, *t.prob, i);
    EXPECT_LT((a.solve(rhs) - b.solve(rhs)).cwiseAbs().maxCoeff(), 1e-5) << "node " << i;
  }
}

TEST(Solve, PostconditionHolds) {
  TrainedFixture t;
  for (std::size_t threshold : {std::size_t{2000}, std::size_t{0}}) {
    SolverConfig cfg;
    cfg.explicit_hessian_threshold = threshold;
    const HessianSolver solver(t.f.params, *t.prob, cfg);
    for (auto i : t.prob->train()) {
      const auto rhs = per_node_grad(t.f.params, *t.prob, i);
      const auto r = solver.solve_checked(rhs);
      const double residual = (solver.apply(r.x) - rhs).norm() / rhs.norm();
      EXPECT_LE(residual, cfg.cg_tol);
      EXPECT_DOUBLE_EQ(residual, r.relative_residual);
    }
  }
}

TEST(Solve, Linear) {
  TrainedFixture t;
  const HessianSolver solver(t.f.params, *t.prob, {});
  const auto b = per_node_grad(t.f.params, *t.prob, t.prob->train()[0]);
  const auto x = solver.solve(b);
  EXPECT_LT((solver.solve(2.0 * b) - 2.0 * x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Solve, IterationCapRaisesConvergenceError) {
  TrainedFixture t;
  SolverConfig cfg;
  cfg.explicit_hessian_threshold = 0;
  cfg.cg_max_iter = 1;
  cfg.cg_tol = 1e-12;
  const HessianSolver solver(t.f.params, *t.prob, cfg);
  const auto b = per_node_grad(t.f.params, *t.prob, t.prob->train()[0]);
  try {
    solver.solve(b);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), cfg.cg_tol);
  }
}

TEST(SolverConfigValidation, RejectsBadValues) {
  SolverConfig cfg;
  cfg.damping = -1.0;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.cg_tol = 0.0;
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(LooDelta, ZeroGradientGivesZeroDelta) {
  SaturatedNode s;
  const auto params = s.params(400.0);
  ASSERT_EQ(per_node_grad(params, s.prob, 0).norm(), 0.0);
  const auto delta = loo_delta(params, s.prob, 0, SolverConfig{});
  EXPECT_EQ(delta.norm(), 0.0);
}

TEST(LooDelta, SignFlagNegates) {
  TrainedFixture t;
  SolverConfig flipped;
  flipped.upweight_sign = true;
  const auto i = t.prob->train()[1];
  const auto a = loo_delta(t.f.params, *t.prob, i, SolverConfig{});
  const auto b = loo_delta(t.f.params, *t.prob, i, flipped);
  EXPECT_LT((a + b).cwiseAbs().maxCoeff(), 1e-15);
}

// Scalar ridge regression, objective (1/n) sum (y - w x)^2 / 2 + (l/2) w^2,
// has closed-form minimizers with and without any one sample. Removing
// sample i keeps the 1/n weighting of the rest, which is what the first-order
// estimate (1/n) H^{-1} grad_i describes.
TEST(LooDelta, RidgeRemovalSignAndSize) {
  const int n = 50;
  const double lambda = 0.1;
  auto rng = make_rng(17, Stream::kSynthetic);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n), y(n);
  double sxx = 0.0, sxy = 0.0;
  for (int k = 0; k < n; ++k) {
    x[k] = normal(rng);
    y[k] = 2.0 * x[k] + 0.5 * normal(rng);
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  const double w = sxy / (sxx + n * lambda);
  const double h = sxx / n + lambda;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double exact = (sxy - x[i] * y[i]) / (sxx - x[i] * x[i] + n * lambda) - w;
    const double grad_i = -(y[i] - w * x[i]) * x[i];
    const double estimate = grad_i / (n * h);
    EXPECT_GT(estimate * exact, 0.0) << "sample " << i;
    total += std::abs(estimate - exact) / std::abs(exact);
  }
  EXPECT_LT(total / n, 0.05);
}

TEST(Residual, Definition) {
  Eigen::MatrixXd z(2, 2);
  z << 0.0, -1e6, std::log(0.4), std::log(0.6);
  const auto t = PredictionTable::from_logits(z);
  const std::vector<ClassId> labels{0, 1};
  EXPECT_EQ(residual_from(t, labels, 0), 0.0);
  EXPECT_NEAR(residual_from(t, labels, 1), 0.4, 1e-12);
}

TEST(Residual, ShrinksAsClassesSeparate) {
  const std::size_t blocks[] = {60, 20};
  std::vector<double> means;
  for (double shift : {0.25, 1.5, 6.0}) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto g = gen_synthetic(blocks, 0.1, 0.01, 4, shift, seed);
      const GraphData data(g);
      const auto split = make_split(g.labels(), 10, 20, 0, seed);
      TrainConfig cfg;
      cfg.seed = seed;
      const auto params = fit(data, split, cfg).params;
      const InfluenceProblem prob(data, split.train,
                                  inverse_frequency_weights(g.labels(), split.train, 2),
                                  cfg.weight_decay);
      const HessianSolver solver(params, prob, {});
      const auto base = forward(params, data.adj(), data.features());
      const auto ens = loo_ensemble(params, prob, solver, base, {}, 1);
      for (const auto& r : ens.results) {
        EXPECT_GE(r.residual, 0.0);
        EXPECT_LE(r.residual, 1.0);
        total += r.residual;
        ++count;
      }
    }
    means.push_back(total / static_cast<double>(count));
  }
  EXPECT_GT(means[0], means[1]);
  EXPECT_GT(means[1], means[2]);
}

TEST(LooEnsemble, IndependentOfWorkerCount) {
  TrainedFixture t;
  const HessianSolver solver(t.f.params, *t.prob, {});
  const auto base = forward(t.f.params, t.f.data->adj(), t.f.data->features());
  std::vector<NodeId> eval(t.f.graph->num_nodes());
  std::iota(eval.begin(), eval.end(), NodeId{0});
  const auto a = loo_ensemble(t.f.params, *t.prob, solver, base, eval, 1);
  const auto b = loo_ensemble(t.f.params, *t.prob, solver, base, eval, 4);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t k = 0; k < a.results.size(); ++k) {
    EXPECT_EQ(a.results[k].node_id, b.results[k].node_id);
    EXPECT_EQ(a.results[k].delta, b.results[k].delta);
    EXPECT_EQ(a.results[k].residual, b.results[k].residual);
  }
  EXPECT_EQ(a.scalars, b.scalars);
  EXPECT_EQ(loo_scalars(t.f.params, *t.f.data, a.results, base, eval, 3), a.scalars);
}

TEST(ParallelFor, RethrowsFirstFailure) {
  std::vector<int> hits(10, 0);
  EXPECT_THROW(parallel_for(10, 3,
                            [&](std::size_t k) {
                              hits[k] = 1;
                              if (k == 4 || k == 7) throw DomainError("boom " + std::to_string(k));
                            }),
               DomainError);
  try {
    parallel_for(10, 3, [](std::size_t k) {
      if (k >= 4) throw DomainError(std::to_string(k));
    });
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "4");
  }
}

}  // namespace
}  // namespace calikit
