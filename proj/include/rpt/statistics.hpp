/* Copyright 2026 The RPT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Voting and clustering over superpixels: per-superpixel dominative category,
// complexity filtering by dominance ratio, feature pooling, k-means, and
// cluster-level majority voting. All ties resolve to the lowest index.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/random.hpp"
#include "rpt/tensor.hpp"

namespace rpt {

/// Per-pixel argmax; the first maximal class wins.
template <class Tag>
LabelMap argmax_labels(const Grid<double, Tag>& scores) {
  LabelMap out(scores.height(), scores.width(), 1);
  for (std::size_t p = 0; p < scores.pixels(); ++p) {
    auto px = scores.pixel(p);
    std::size_t best = 0;
    for (std::size_t k = 1; k < px.size(); ++k)
      if (px[k] > px[best]) best = k;
    out.data()[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

struct SuperpixelStat {
  std::size_t pixel_count = 0;  // M_i, all member pixels
  std::size_t voted_count = 0;  // members with a non-IGNORE label
  std::uint8_t dominant = 0;
  double dominance_ratio = 0.0;  // votes for `dominant` / voted_count
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  bool valid = false;  // false when every member is IGNORE

  friend bool operator==(const SuperpixelStat&, const SuperpixelStat&) = default;
};

using SuperpixelStats = std::vector<SuperpixelStat>;

/// Index of the largest count; ties go to the lowest index.
inline std::size_t vote(std::span<const std::size_t> counts) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < counts.size(); ++k)
    if (counts[k] > counts[best]) best = k;
  return best;
}

inline SuperpixelStats dominative_categories(const SuperpixelMap& sp, const LabelMap& labels, std::size_t classes) {
  if (!labels.same_extent(sp.ids)) throw InvalidArgument("superpixel map and labels differ in size");
  SuperpixelStats stats(sp.count);
  std::vector<std::size_t> hist(sp.count * classes, 0);
  std::vector<double> row_sum(sp.count, 0.0), col_sum(sp.count, 0.0);
  for (std::size_t p = 0; p < labels.pixels(); ++p) {
    const std::size_t id = sp.at(p);
    auto& s = stats[id];
    ++s.pixel_count;
    row_sum[id] += static_cast<double>(p / labels.width());
    col_sum[id] += static_cast<double>(p % labels.width());
    const std::uint8_t label = labels.data()[p];
    if (label == kIgnoreLabel) continue;
    if (label >= classes) throw InvalidArgument("label outside class range");
    ++hist[id * classes + label];
    ++s.voted_count;
  }
  for (std::size_t id = 0; id < sp.count; ++id) {
    auto& s = stats[id];
    if (s.pixel_count > 0) {
      s.centroid_row = row_sum[id] / static_cast<double>(s.pixel_count);
      s.centroid_col = col_sum[id] / static_cast<double>(s.pixel_count);
    }
    if (s.voted_count == 0) continue;
    const std::span<const std::size_t> h(hist.data() + id * classes, classes);
    s.dominant = static_cast<std::uint8_t>(vote(h));
    s.dominance_ratio = static_cast<double>(h[s.dominant]) / static_cast<double>(s.voted_count);
    s.valid = true;
  }
  return stats;
}

/// Per-superpixel flag: true when the superpixel is regularized.
using RetainedSet = std::vector<bool>;

/// Keeps the round(keep_fraction * N) superpixels with the highest dominance
/// ratio; invalid superpixels sort last and ties go to the lower id.
inline RetainedSet complexity_filter(const SuperpixelStats& stats, double keep_fraction) {
  require(keep_fraction > 0.0 && keep_fraction <= 1.0, "keep_fraction must be in (0,1]");
  const std::size_t n = stats.size();
  const auto keep = static_cast<std::size_t>(std::lround(keep_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (stats[a].valid != stats[b].valid) return stats[a].valid;
    return stats[a].dominance_ratio > stats[b].dominance_ratio;
  });
  RetainedSet retained(n, false);
  for (std::size_t i = 0; i < keep; ++i) retained[order[i]] = true;
  return retained;
}

/// Mean feature vector of each superpixel (N x F).
inline Matrix pool_features(const FeatureMap& features, const SuperpixelMap& sp) {
  if (!features.same_extent(sp.ids)) throw InvalidArgument("feature map and superpixel map differ in size");
  Matrix pooled(sp.count, features.depth());
  std::vector<std::size_t> count(sp.count, 0);
  for (std::size_t p = 0; p < features.pixels(); ++p) {
    const std::size_t id = sp.at(p);
    auto dst = pooled.row(id);
    auto src = features.pixel(p);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
    ++count[id];
  }
  for (std::size_t id = 0; id < sp.count; ++id)
    if (count[id] > 0)
      for (double& v : pooled.row(id)) v /= static_cast<double>(count[id]);
  return pooled;
}

// ---------------------------------------------------------------------------
// k-means

struct ClusterModel {
  std::size_t k = 0;
  Matrix centroids;                            // K x F
  std::vector<std::uint32_t> assignment;       // point -> cluster
  std::vector<std::uint8_t> dominant;          // cluster -> category, filled by cluster_dominative
  std::vector<bool> dominant_valid;            // false for clusters with no valid member

  friend bool operator==(const ClusterModel&, const ClusterModel&) = default;
};

struct KMeansTrace {
  std::vector<double> objective;  // after each assignment step
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Assigns each point to its nearest centroid; returns the objective and whether anything changed.
inline std::pair<double, bool> kmeans_assign(const Matrix& points, const Matrix& centroids,
                                             std::vector<std::uint32_t>& assignment, std::vector<double>& dist) {
  double objective = 0.0;
  bool changed = false;
  for (std::size_t i = 0; i < points.rows; ++i) {
    std::uint32_t best = 0;
    double best_d = squared_distance(points.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows; ++c) {
      const double d = squared_distance(points.row(i), centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(c);
      }
    }
    changed |= assignment[i] != best;
    assignment[i] = best;
    dist[i] = best_d;
    objective += best_d;
  }
  return {objective, changed};
}

}  // namespace detail

/// Sum of squared distances of points to their assigned centroids.
inline double kmeans_objective(const Matrix& points, const ClusterModel& model) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i)
    s += detail::squared_distance(points.row(i), model.centroids.row(model.assignment[i]));
  return s;
}

/// Seeded k-means++ followed by Lloyd iterations. An empty cluster is re-seeded
/// with the point farthest from its own centroid.
inline ClusterModel kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed,
                           KMeansTrace* trace = nullptr) {
  require(k >= 1, "k must be >= 1");
  if (points.rows < k) throw InvalidArgument("k-means needs at least K points");
  const std::size_t n = points.rows, f = points.cols;
  Rng rng(seed);

  ClusterModel model;
  model.k = k;
  model.centroids = Matrix(k, f);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double d : nearest) total += d;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += nearest[i];
          if (acc > target && nearest[i] > 0.0) {
            pick = i;
            break;
          }
        }
        while (nearest[pick] == 0.0 && pick > 0) --pick;  // guard against the rounding tail
      } else {
        pick = rng.index(n);
      }
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), model.centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], detail::squared_distance(points.row(i), model.centroids.row(c)));
  }

  model.assignment.assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> dist(n);
  if (trace) *trace = KMeansTrace{};
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
    const auto [objective, changed] = detail::kmeans_assign(points, model.centroids, model.assignment, dist);
    if (trace) {
      trace->objective.push_back(objective);
      trace->iterations = iter + 1;
    }
    if (!changed && iter > 0) {
      if (trace) trace->converged = true;
      break;
    }

    Matrix sum(k, f);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sum.row(model.assignment[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < f; ++j) dst[j] += src[j];
      ++count[model.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      for (std::size_t j = 0; j < f; ++j) model.centroids(c, j) = sum(c, j) / static_cast<double>(count[c]);
    }
    // Distances to the updated centroids pick the re-seed points for empty clusters.
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = detail::squared_distance(points.row(i), model.centroids.row(model.assignment[i]));
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] != 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      std::copy(points.row(far).begin(), points.row(far).end(), model.centroids.row(c).begin());
      dist[far] = 0.0;
    }
  }
  return model;
}

/// One vote per valid member superpixel, using its dominative category.
/// `stats` is indexed like the points handed to kmeans.
inline void cluster_dominative(ClusterModel& model, const SuperpixelStats& stats, std::size_t classes) {
  if (stats.size() != model.assignment.size()) throw InvalidArgument("stats and cluster assignment differ in length");
  std::vector<std::size_t> hist(model.k * classes, 0);
  std::vector<std::size_t> votes(model.k, 0);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (!stats[i].valid) continue;
    ++hist[model.assignment[i] * classes + stats[i].dominant];
    ++votes[model.assignment[i]];
  }
  model.dominant.assign(model.k, 0);
  model.dominant_valid.assign(model.k, false);
  for (std::size_t c = 0; c < model.k; ++c) {
    if (votes[c] == 0) continue;
    model.dominant[c] = static_cast<std::uint8_t>(vote({hist.data() + c * classes, classes}));
    model.dominant_valid[c] = true;
  }
}

/// Cluster category for each superpixel of one image, or nullopt when its
/// cluster has no valid vote. `assignment` is that image's slice.
inline std::vector<std::optional<std::uint8_t>> cluster_targets(const ClusterModel& model,
                                                                std::span<const std::uint32_t> assignment) {
  std::vector<std::optional<std::uint8_t>> out(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto c = assignment[i];
    if (c < model.dominant_valid.size() && model.dominant_valid[c]) out[i] = model.dominant[c];
  }
  return out;
}

}  // namespace rpt
