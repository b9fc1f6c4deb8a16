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

#ifndef CALIKIT_GRAPH_HPP_
#define CALIKIT_GRAPH_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "calikit/error.hpp"
#include "calikit/random.hpp"

namespace calikit {

using NodeId = std::size_t;
using ClassId = int;
using Edge = std::pair<NodeId, NodeId>;

/// Undirected attributed graph with per-node class labels.
///
/// Edges are stored once each as (u, v) with u < v, sorted and deduplicated.
/// Self-loops are rejected at construction; the propagation operator adds them
/// itself.
class Graph {
 public:
  Graph() = default;

  /// Validates and canonicalizes. `edges` may contain both orientations and
  /// repeats. Throws BoundsError for endpoints or labels out of range and
  /// ShapeError when the feature rows do not match the label count.
  Graph(std::vector<Edge> edges, Eigen::MatrixXd features, std::vector<ClassId> labels,
        int class_count)
      : features_(std::move(features)), labels_(std::move(labels)), class_count_(class_count) {
    if (class_count_ < 2) {
      throw DomainError("class count must be at least 2, got " + std::to_string(class_count_));
    }
    const auto n = labels_.size();
    if (static_cast<std::size_t>(features_.rows()) != n) {
      throw ShapeError("feature matrix has " + std::to_string(features_.rows()) +
                       " rows but there are " + std::to_string(n) + " labels");
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (labels_[v] < 0 || labels_[v] >= class_count_) {
        throw BoundsError("label " + std::to_string(labels_[v]) + " of node " +
                          std::to_string(v) + " outside [0, " + std::to_string(class_count_) +
                          ")");
      }
    }
    edges_.reserve(edges.size());
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) {
        throw BoundsError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                          ") references a node outside [0, " + std::to_string(n) + ")");
      }
      if (u == v) {
        throw DomainError("self-loop on node " + std::to_string(u));
      }
      edges_.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  }

  std::size_t num_nodes() const { return labels_.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }
  int class_count() const { return class_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<ClassId>& labels() const { return labels_; }

  /// Number of nodes carrying each label.
  std::vector<std::size_t> class_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(class_count_), 0);
    for (auto y : labels_) ++sizes[static_cast<std::size_t>(y)];
    return sizes;
  }

 private:
  std::vector<Edge> edges_;
  Eigen::MatrixXd features_;
  std::vector<ClassId> labels_;
  int class_count_ = 2;
};

/// D^{-1/2}(A+I)D^{-1/2} in compressed row storage.
class NormalizedAdjacency {
 public:
  using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  NormalizedAdjacency() = default;
  explicit NormalizedAdjacency(Matrix m) : m_(std::move(m)) {}

  const Matrix& matrix() const { return m_; }
  std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }

  /// Dense value at (row, col); zero when not stored.
  double at(std::size_t row, std::size_t col) const {
    return m_.coeff(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  }

 private:
  Matrix m_;
};

inline NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const auto n = g.num_nodes();
  std::vector<double> degree(n, 1.0);  // self-loop
  for (auto [u, v] : g.edges()) {
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t v = 0; v < n; ++v) inv_sqrt[v] = 1.0 / std::sqrt(degree[v]);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(n + 2 * g.edges().size());
  for (std::size_t v = 0; v < n; ++v) {
    const auto i = static_cast<Eigen::Index>(v);
    triplets.emplace_back(i, i, inv_sqrt[v] * inv_sqrt[v]);
  }
  for (auto [u, v] : g.edges()) {
    const double w = inv_sqrt[u] * inv_sqrt[v];
    triplets.emplace_back(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v), w);
    triplets.emplace_back(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u), w);
  }
  NormalizedAdjacency::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return NormalizedAdjacency(std::move(m));
}

/// Scales every row to unit L1 norm. All-zero rows are left untouched, as are
/// rows already normalized up to summation rounding, so normalizing twice is
/// a no-op.
inline void row_normalize_l1(Eigen::MatrixXd& x) {
  const double slack = 4.0 * static_cast<double>(x.cols()) * std::numeric_limits<double>::epsilon();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double s = x.row(r).cwiseAbs().sum();
    if (s > 0.0 && std::abs(s - 1.0) > slack) x.row(r) /= s;
  }
}

/// Collapses all classes other than `minority` into class 0; `minority`
/// becomes class 1.
inline Graph binarize(const Graph& g, ClassId minority) {
  if (minority < 0 || minority >= g.class_count()) {
    throw BoundsError("minority class " + std::to_string(minority) + " outside [0, " +
                      std::to_string(g.class_count()) + ")");
  }
  std::vector<ClassId> labels(g.num_nodes());
  bool any = false;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    labels[v] = g.labels()[v] == minority ? 1 : 0;
    any = any || labels[v] == 1;
  }
  if (!any) {
    throw DomainError("minority class " + std::to_string(minority) + " has no nodes");
  }
  return Graph(g.edges(), g.features(), std::move(labels), 2);
}

/// Least frequent class; ties resolve to the smallest index.
inline ClassId rarest_class(const Graph& g) {
  const auto sizes = g.class_sizes();
  ClassId best = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    if (sizes[c] < sizes[static_cast<std::size_t>(best)]) best = static_cast<ClassId>(c);
  }
  return best;
}

struct DatasetSplit {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
  std::size_t label_rate_per_class = 0;
};

enum class SplitRole { kTrain, kVal, kTest };

/// Samples `lr_c` training nodes per class of `original_labels`, then draws the
/// validation and test sets uniformly from what remains. All id lists come
/// back sorted.
inline DatasetSplit make_split(std::span<const ClassId> original_labels, std::size_t lr_c,
                               std::size_t val_size, std::size_t test_size, std::uint64_t seed) {
  if (lr_c == 0) throw DomainError("label rate per class must be positive");
  ClassId max_class = -1;
  for (auto y : original_labels) {
    if (y < 0) throw BoundsError("negative class label");
    max_class = std::max(max_class, y);
  }
  const auto num_classes = static_cast<std::size_t>(max_class + 1);
  std::vector<std::vector<NodeId>> by_class(num_classes);
  for (std::size_t v = 0; v < original_labels.size(); ++v) {
    by_class[static_cast<std::size_t>(original_labels[v])].push_back(v);
  }

  auto rng = make_rng(seed, Stream::kSplit);
  DatasetSplit split;
  split.label_rate_per_class = lr_c;
  std::vector<bool> taken(original_labels.size(), false);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < lr_c) {
      throw DomainError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                        " nodes, fewer than the " + std::to_string(lr_c) +
                        " requested per class");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < lr_c; ++k) {
      split.train.push_back(members[k]);
      taken[members[k]] = true;
    }
  }

  std::vector<NodeId> rest;
  for (std::size_t v = 0; v < taken.size(); ++v) {
    if (!taken[v]) rest.push_back(v);
  }
  if (rest.size() < val_size + test_size) {
    throw DomainError("only " + std::to_string(rest.size()) +
                      " nodes remain after training selection; need " +
                      std::to_string(val_size) + " validation + " + std::to_string(test_size) +
                      " test");
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  split.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val_size));
  split.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(val_size),
                    rest.begin() + static_cast<std::ptrdiff_t>(val_size + test_size));
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

/// Checks disjointness, range, and that training covers every class of
/// `labels`.
inline void validate_split(const DatasetSplit& s, std::span<const ClassId> labels,
                           int class_count) {
  std::vector<int> seen(labels.size(), 0);
  auto mark = [&](const std::vector<NodeId>& ids, const char* name) {
    for (auto v : ids) {
      if (v >= labels.size()) {
        throw BoundsError(std::string(name) + " node " + std::to_string(v) + " out of range");
      }
      if (seen[v]++) {
        throw DomainError("node " + std::to_string(v) + " appears in more than one split role");
      }
    }
  };
  mark(s.train, "train");
  mark(s.val, "val");
  mark(s.test, "test");
  std::vector<bool> covered(static_cast<std::size_t>(class_count), false);
  for (auto v : s.train) covered[static_cast<std::size_t>(labels[v])] = true;
  for (int c = 0; c < class_count; ++c) {
    if (!covered[static_cast<std::size_t>(c)]) {
      throw DomainError("training set has no node of class " + std::to_string(c));
    }
  }
}

/// Stochastic block model with one class per block and Gaussian features
/// (unit variance) whose block means are spaced `feat_shift` apart along one
/// random unit direction. Nodes are numbered block by block.
inline Graph gen_synthetic(std::span<const std::size_t> n_per_block, double p_in, double p_out,
                           std::size_t feat_dim, double feat_shift, std::uint64_t seed) {
  if (n_per_block.size() < 2) throw DomainError("need at least two blocks");
  for (std::size_t b = 0; b < n_per_block.size(); ++b) {
    if (n_per_block[b] == 0) throw DomainError("block " + std::to_string(b) + " is empty");
  }
  if (!(p_in >= 0.0 && p_in <= 1.0) || !(p_out >= 0.0 && p_out <= 1.0)) {
    throw DomainError("edge probabilities must lie in [0, 1]");
  }
  if (feat_dim == 0) throw DomainError("feature dimension must be positive");

  auto rng = make_rng(seed, Stream::kSynthetic);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::VectorXd direction(static_cast<Eigen::Index>(feat_dim));
  do {
    for (Eigen::Index k = 0; k < direction.size(); ++k) direction[k] = normal(rng);
  } while (direction.norm() == 0.0);
  direction.normalize();

  const std::size_t n = std::accumulate(n_per_block.begin(), n_per_block.end(), std::size_t{0});
  std::vector<ClassId> labels;
  labels.reserve(n);
  for (std::size_t b = 0; b < n_per_block.size(); ++b) {
    labels.insert(labels.end(), n_per_block[b], static_cast<ClassId>(b));
  }

  // Block means are spaced feat_shift apart along the direction and centred
  // on the origin, so the classes are separable by a bias-free layer.
  const double centre = 0.5 * static_cast<double>(n_per_block.size() - 1);
  Eigen::MatrixXd features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feat_dim));
  for (std::size_t v = 0; v < n; ++v) {
    const double offset = feat_shift * (static_cast<double>(labels[v]) - centre);
    for (std::size_t k = 0; k < feat_dim; ++k) {
      const auto r = static_cast<Eigen::Index>(v);
      const auto c = static_cast<Eigen::Index>(k);
      features(r, c) = offset * direction[c] + normal(rng);
    }
  }

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = labels[u] == labels[v] ? p_in : p_out;
      if (unit(rng) < p) edges.emplace_back(u, v);
    }
  }
  return Graph(std::move(edges), std::move(features), std::move(labels),
               static_cast<int>(n_per_block.size()));
}

}  // namespace calikit

#endif  // CALIKIT_GRAPH_HPP_
