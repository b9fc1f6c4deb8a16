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

#ifndef CALIKIT_UNCERTAINTY_HPP_
#define CALIKIT_UNCERTAINTY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "calikit/error.hpp"
#include "calikit/gcn.hpp"
#include "calikit/graph.hpp"

namespace calikit {

/// Jackknife interval for one node and its midpoint.
struct UncertaintyRecord {
  NodeId node_id = 0;
  double lower = 0.0;
  double upper = 0.0;
  double uncertainty = 0.0;
  double confidence = 0.0;
};

/// Target coverage of the jackknife interval. The lower bound uses the
/// (1 - coverage) order statistic and the upper bound the coverage one.
struct CoverageConfig {
  double coverage = 0.9;

  double miscoverage() const { return 1.0 - coverage; }

  void validate() const {
    if (!(coverage > 0.5 && coverage < 1.0)) {
      throw DomainError("coverage must lie in (0.5, 1), got " + std::to_string(coverage));
    }
  }
};

namespace detail {

// Absorbs representation error so that e.g. 0.1 * 10 lands on 1, not 0.
inline constexpr double kRankSlack = 1e-9;

inline double kth_smallest(std::span<const double> values, std::size_t k) {
  std::vector<double> copy(values.begin(), values.end());
  auto nth = copy.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(copy.begin(), nth, copy.end());
  return *nth;
}

inline void check_quantile_args(double miscoverage, std::span<const double> values) {
  if (values.empty()) throw DomainError("quantile of an empty set");
  if (!(miscoverage > 0.0 && miscoverage < 0.5)) {
    throw DomainError("miscoverage must lie in (0, 0.5), got " + std::to_string(miscoverage));
  }
}

}  // namespace detail

/// Rank used by q_lower: max(1, floor(m (n + 1))).
inline std::size_t lower_rank(double miscoverage, std::size_t n) {
  const double x = miscoverage * static_cast<double>(n + 1);
  const auto k = static_cast<std::size_t>(std::floor(x + detail::kRankSlack));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Rank used by q_upper: min(n, ceil((1 - m) (n + 1))).
inline std::size_t upper_rank(double miscoverage, std::size_t n) {
  const double x = (1.0 - miscoverage) * static_cast<double>(n + 1);
  const auto k = static_cast<std::size_t>(std::ceil(x - detail::kRankSlack));
  return std::clamp<std::size_t>(k, 1, n);
}

inline double q_lower(double miscoverage, std::span<const double> values) {
  detail::check_quantile_args(miscoverage, values);
  return detail::kth_smallest(values, lower_rank(miscoverage, values.size()));
}

inline double q_upper(double miscoverage, std::span<const double> values) {
  detail::check_quantile_args(miscoverage, values);
  return detail::kth_smallest(values, upper_rank(miscoverage, values.size()));
}

/// Unclamped bounds of the jackknife interval.
struct RawInterval {
  double lower;
  double upper;
};

/// Bounds before clamping: the low order statistic of {s_i - r_i} and the high
/// one of {s_i + r_i}.
inline RawInterval raw_interval(std::span<const double> loo_scalars,
                                std::span<const double> residuals,
                                const CoverageConfig& cfg) {
  if (loo_scalars.empty()) throw DomainError("jackknife interval needs at least one LOO model");
  if (loo_scalars.size() != residuals.size()) {
    throw ShapeError("LOO scalars and residuals differ in length");
  }
  cfg.validate();
  std::vector<double> lo(loo_scalars.size());
  std::vector<double> hi(loo_scalars.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    lo[i] = loo_scalars[i] - residuals[i];
    hi[i] = loo_scalars[i] + residuals[i];
  }
  return {q_lower(cfg.miscoverage(), lo), q_upper(cfg.miscoverage(), hi)};
}

/// Interval for node v. `loo_scalars[i]` is the probability the model without
/// training node i gives v's base-predicted class; `residuals[i]` is that
/// model's error on node i. Bounds are clamped to [0, 1].
inline UncertaintyRecord interval(NodeId v, const PredictionTable& base_preds,
                                  std::span<const double> loo_scalars,
                                  std::span<const double> residuals,
                                  const CoverageConfig& cfg) {
  const auto raw = raw_interval(loo_scalars, residuals, cfg);
  UncertaintyRecord rec;
  rec.node_id = v;
  rec.lower = std::clamp(raw.lower, 0.0, 1.0);
  rec.upper = std::clamp(raw.upper, 0.0, 1.0);
  rec.uncertainty = (rec.lower + rec.upper) / 2.0;
  rec.confidence = base_preds.confidence[v];
  return rec;
}

}  // namespace calikit

#endif  // CALIKIT_UNCERTAINTY_HPP_
