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

#ifndef CALIKIT_METRICS_HPP_
#define CALIKIT_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "calikit/error.hpp"
#include "calikit/gcn.hpp"
#include "calikit/graph.hpp"
#include "calikit/uncertainty.hpp"

namespace calikit {

enum class BinMode { kEqualWidth, kEqualCount };

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

/// Per-bin accuracy and mean confidence. In equal-count mode lo/hi are the
/// smallest and largest score that fell into the bin.
struct ReliabilityBins {
  BinMode mode = BinMode::kEqualWidth;
  std::vector<ReliabilityBin> bins;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& b : bins) n += b.count;
    return n;
  }
};

struct EceResult {
  double ece = 0.0;
  ReliabilityBins bins;
};

/// Equal-width binning on [0, 1]; a score c lands in bin floor(c M), with
/// c = 1 in the last bin.
inline EceResult ece_from_scores(std::span<const double> confidence, std::span<const int> correct,
                                 std::size_t num_bins) {
  if (num_bins == 0) throw DomainError("bin count must be positive");
  if (confidence.empty()) throw DomainError("calibration error over an empty set");
  if (confidence.size() != correct.size()) throw ShapeError("scores and outcomes differ in size");
  EceResult out;
  out.bins.mode = BinMode::kEqualWidth;
  out.bins.bins.resize(num_bins);
  const double m = static_cast<double>(num_bins);
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<double> acc_sum(num_bins, 0.0);
  for (std::size_t k = 0; k < num_bins; ++k) {
    out.bins.bins[k].lo = static_cast<double>(k) / m;
    out.bins.bins[k].hi = static_cast<double>(k + 1) / m;
  }
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const double c = std::clamp(confidence[i], 0.0, 1.0);
    const auto k = std::min(num_bins - 1, static_cast<std::size_t>(std::floor(c * m)));
    ++out.bins.bins[k].count;
    conf_sum[k] += confidence[i];
    acc_sum[k] += correct[i] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(confidence.size());
  for (std::size_t k = 0; k < num_bins; ++k) {
    auto& b = out.bins.bins[k];
    if (b.count == 0) continue;
    b.accuracy = acc_sum[k] / static_cast<double>(b.count);
    b.confidence = conf_sum[k] / static_cast<double>(b.count);
    out.ece += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.confidence);
  }
  return out;
}

inline EceResult ece(const PredictionTable& preds, std::span<const ClassId> labels,
                     std::span<const NodeId> nodes, std::size_t num_bins) {
  std::vector<double> conf;
  std::vector<int> correct;
  conf.reserve(nodes.size());
  correct.reserve(nodes.size());
  for (auto v : nodes) {
    conf.push_back(preds.confidence[v]);
    correct.push_back(preds.pred[v] == labels[v] ? 1 : 0);
  }
  return ece_from_scores(conf, correct, num_bins);
}

/// Sizes of M equal-count bins over n samples; the first n mod M bins take one
/// extra sample.
inline std::vector<std::size_t> equal_count_sizes(std::size_t n, std::size_t num_bins) {
  std::vector<std::size_t> sizes(num_bins, n / num_bins);
  for (std::size_t k = 0; k < n % num_bins; ++k) ++sizes[k];
  return sizes;
}

struct ClassAce {
  double ace = 0.0;
  ReliabilityBins bins;
};

/// Adaptive calibration error for one class: scores sorted ascending, split
/// into equal-count bins, mean |hit rate - mean score| over the M bins.
inline ClassAce ace_from_scores(std::span<const double> class_prob, std::span<const int> is_class,
                                std::size_t num_bins) {
  if (num_bins == 0) throw DomainError("bin count must be positive");
  if (class_prob.empty()) throw DomainError("calibration error over an empty set");
  if (class_prob.size() != is_class.size()) throw ShapeError("scores and outcomes differ in size");
  std::vector<std::pair<double, int>> order(class_prob.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = {class_prob[i], is_class[i] ? 1 : 0};
  // Sorting on the full pair keeps the result independent of input order.
  std::sort(order.begin(), order.end());

  ClassAce out;
  out.bins.mode = BinMode::kEqualCount;
  const auto sizes = equal_count_sizes(order.size(), num_bins);
  std::size_t pos = 0;
  double total = 0.0;
  for (auto size : sizes) {
    ReliabilityBin b;
    b.count = size;
    if (size > 0) {
      double conf = 0.0;
      double hits = 0.0;
      for (std::size_t j = pos; j < pos + size; ++j) {
        conf += order[j].first;
        hits += order[j].second;
      }
      b.lo = order[pos].first;
      b.hi = order[pos + size - 1].first;
      b.accuracy = hits / static_cast<double>(size);
      b.confidence = conf / static_cast<double>(size);
      total += std::abs(b.accuracy - b.confidence);
    }
    out.bins.bins.push_back(b);
    pos += size;
  }
  out.ace = total / static_cast<double>(num_bins);
  return out;
}

inline double macro_average(std::span<const double> values) {
  if (values.empty()) throw DomainError("mean of an empty set");
  double s = 0.0;
  for (double x : values) s += x;
  return s / static_cast<double>(values.size());
}

struct AceResult {
  std::vector<double> per_class;
  double macro = 0.0;
};

/// ACE of every class and their unweighted mean (Macro-ACE). Every class must
/// occur among the labels of `nodes`.
inline AceResult ace(const PredictionTable& preds, std::span<const ClassId> labels,
                     std::span<const NodeId> nodes, std::size_t num_bins) {
  const auto classes = preds.class_count();
  std::vector<bool> present(classes, false);
  for (auto v : nodes) present[static_cast<std::size_t>(labels[v])] = true;
  AceResult out;
  std::vector<double> prob(nodes.size());
  std::vector<int> hit(nodes.size());
  for (std::size_t c = 0; c < classes; ++c) {
    if (!present[c]) {
      throw DomainError("class " + std::to_string(c) + " does not occur in the scored set");
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      prob[i] = preds.probs(static_cast<Eigen::Index>(nodes[i]), static_cast<Eigen::Index>(c));
      hit[i] = labels[nodes[i]] == static_cast<ClassId>(c) ? 1 : 0;
    }
    out.per_class.push_back(ace_from_scores(prob, hit, num_bins).ace);
  }
  out.macro = macro_average(out.per_class);
  return out;
}

/// Individual calibration error |uncer - conf|.
inline double ice(double uncertainty, double confidence) {
  return std::abs(uncertainty - confidence);
}

inline double eice(std::span<const UncertaintyRecord> records) {
  if (records.empty()) throw DomainError("EICE over an empty set");
  double s = 0.0;
  for (const auto& r : records) s += ice(r.uncertainty, r.confidence);
  return s / static_cast<double>(records.size());
}

struct ClassificationMetrics {
  double accuracy = 0.0;
  double recall = 0.0;  // of the minority class
  double macro_f1 = 0.0;
  std::vector<double> f1_per_class;
};

inline ClassificationMetrics classification_metrics(std::span<const ClassId> predicted,
                                                    std::span<const ClassId> truth,
                                                    ClassId minority, int class_count) {
  if (predicted.empty()) throw DomainError("classification metrics over an empty set");
  if (predicted.size() != truth.size()) throw ShapeError("predictions and labels differ in size");
  const auto c = static_cast<std::size_t>(class_count);
  std::vector<double> tp(c, 0.0), fp(c, 0.0), fn(c, 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto p = static_cast<std::size_t>(predicted[i]);
    const auto y = static_cast<std::size_t>(truth[i]);
    if (p == y) {
      tp[y] += 1.0;
      correct += 1.0;
    } else {
      fp[p] += 1.0;
      fn[y] += 1.0;
    }
  }
  ClassificationMetrics m;
  m.accuracy = correct / static_cast<double>(predicted.size());
  const auto k = static_cast<std::size_t>(minority);
  m.recall = tp[k] + fn[k] > 0.0 ? tp[k] / (tp[k] + fn[k]) : 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    const double denom = 2.0 * tp[j] + fp[j] + fn[j];
    m.f1_per_class.push_back(denom > 0.0 ? 2.0 * tp[j] / denom : 0.0);
  }
  m.macro_f1 = macro_average(m.f1_per_class);
  return m;
}

inline ClassificationMetrics classification_metrics(const PredictionTable& preds,
                                                    std::span<const ClassId> labels,
                                                    std::span<const NodeId> nodes,
                                                    ClassId minority) {
  std::vector<ClassId> p, y;
  for (auto v : nodes) {
    p.push_back(preds.pred[v]);
    y.push_back(labels[v]);
  }
  return classification_metrics(p, y, minority, static_cast<int>(preds.class_count()));
}

struct CalibrationReport {
  double ece = 0.0;
  std::vector<double> ace_per_class;
  double ace_minority = 0.0;
  double macro_ace = 0.0;
  double eice = 0.0;
  double accuracy = 0.0;
  double recall_minority = 0.0;
  double macro_f1 = 0.0;
  ReliabilityBins bins;  // equal-width reliability diagram
};

struct ReportBins {
  std::size_t score = 10;    // ECE and ACE
  std::size_t diagram = 20;  // exported reliability diagram
};

/// Gathers every metric over `nodes`. `records` supplies the EICE term.
inline CalibrationReport calibration_report(const PredictionTable& preds,
                                            std::span<const ClassId> labels,
                                            std::span<const NodeId> nodes, ClassId minority,
                                            std::span<const UncertaintyRecord> records,
                                            ReportBins bins = {}) {
  CalibrationReport r;
  r.ece = ece(preds, labels, nodes, bins.score).ece;
  const auto a = ace(preds, labels, nodes, bins.score);
  r.ace_per_class = a.per_class;
  r.ace_minority = a.per_class[static_cast<std::size_t>(minority)];
  r.macro_ace = a.macro;
  r.eice = eice(records);
  const auto cm = classification_metrics(preds, labels, nodes, minority);
  r.accuracy = cm.accuracy;
  r.recall_minority = cm.recall;
  r.macro_f1 = cm.macro_f1;
  r.bins = ece(preds, labels, nodes, bins.diagram).bins;
  return r;
}

}  // namespace calikit

#endif  // CALIKIT_METRICS_HPP_
