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

// SLIC superpixels over (L*, a*, b*, row, col).
//
// Centers start on a regular grid with spacing S = sqrt(area / n_target). Each
// iteration assigns every pixel to the closest center within a 2S x 2S window
// (plus its current center, which keeps the objective monotone) using
//   D = d_lab^2 + (m / S)^2 * d_xy^2,
// then moves every center to the mean of its pixels. A connectivity pass
// finally splits disconnected labels and folds components smaller than
// area / (4 * n_target) into their largest neighbor, preferring full-size
// neighbors over merged fragments. Ids are dense, in column-major order of
// first occurrence.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/tensor.hpp"

namespace rpt {

struct SlicParams {
  std::size_t n_target = 256;
  double compactness = 10.0;
  std::size_t max_iters = 10;
  double tol = 1e-3;
  std::uint64_t seed = 0;  // grid initialization is deterministic; kept for record keeping
};

/// Per-iteration bookkeeping; objective[i] is the sum of squared distances after iteration i.
struct SlicTrace {
  std::vector<double> objective;
  std::size_t iterations = 0;
  std::vector<std::uint32_t> raw_labels;  // assignment before the connectivity pass
};

namespace detail {

struct SlicCenter {
  double l, a, b, row, col;
};

/// Flood-fills 4-connected components of equal raw label; returns component id per pixel.
inline std::size_t label_components(const std::vector<std::uint32_t>& raw, std::size_t height, std::size_t width,
                                    std::vector<std::uint32_t>& component) {
  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  component.assign(raw.size(), kUnset);
  std::vector<std::size_t> stack;
  std::uint32_t next = 0;
  for (std::size_t start = 0; start < raw.size(); ++start) {
    if (component[start] != kUnset) continue;
    component[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t r = p / width, c = p % width;
      auto visit = [&](std::size_t q) {
        if (component[q] == kUnset && raw[q] == raw[p]) {
          component[q] = next;
          stack.push_back(q);
        }
      };
      if (r > 0) visit(p - width);
      if (r + 1 < height) visit(p + width);
      if (c > 0) visit(p - 1);
      if (c + 1 < width) visit(p + 1);
    }
    ++next;
  }
  return next;
}

inline std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace detail

/// Enforces 4-connectivity and dense ids on a raw per-pixel labeling.
inline SuperpixelMap enforce_connectivity(const std::vector<std::uint32_t>& raw, std::size_t height,
                                          std::size_t width, std::size_t min_size) {
  std::vector<std::uint32_t> component;
  const std::size_t n = detail::label_components(raw, height, width, component);

  std::vector<std::size_t> size(n, 0);
  for (auto c : component) ++size[c];

  // Adjacency between components, deduplicated per component.
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t p = 0; p < component.size(); ++p) {
    const std::size_t r = p / width, c = p % width;
    if (c + 1 < width && component[p] != component[p + 1]) {
      neighbors[component[p]].push_back(component[p + 1]);
      neighbors[component[p + 1]].push_back(component[p]);
    }
    if (r + 1 < height && component[p] != component[p + width]) {
      neighbors[component[p]].push_back(component[p + width]);
      neighbors[component[p + width]].push_back(component[p]);
    }
  }
  for (auto& nb : neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }

  // Fold small components (in component order) into a neighboring group, largest first.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> group_size = size;
  for (std::size_t c = 0; c < n; ++c) {
    if (size[c] >= min_size) continue;
    const std::size_t self = detail::find_root(parent, c);
    if (group_size[self] >= min_size) continue;
    std::size_t best = self;
    std::size_t best_size = 0;
    // Neighbors that are full-size components outrank fragment groups.
    bool best_solid = false;
    for (std::size_t nb : neighbors[c]) {
      const std::size_t root = detail::find_root(parent, nb);
      if (root == self) continue;
      const bool solid = size[nb] >= min_size;
      if (best_solid && !solid) continue;
      if ((solid && !best_solid) || group_size[root] > best_size ||
          (group_size[root] == best_size && root < best)) {
        best = root;
        best_size = group_size[root];
        best_solid = solid;
      }
    }
    if (best == self) continue;
    parent[self] = best;
    group_size[best] += group_size[self];
  }

  SuperpixelMap sp;
  sp.ids = Grid<std::uint16_t, SuperpixelTag>(height, width, 1);
  constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dense(n, kUnset);
  std::size_t next = 0;
  // Ids follow first occurrence in column-major order.
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t r = 0; r < height; ++r) {
      const std::size_t p = r * width + c;
      const std::size_t root = detail::find_root(parent, component[p]);
      if (dense[root] == kUnset) dense[root] = next++;
      if (dense[root] > std::numeric_limits<std::uint16_t>::max()) throw InvalidArgument("too many superpixels");
      sp.ids.data()[p] = static_cast<std::uint16_t>(dense[root]);
    }
  }
  sp.count = next;
  return sp;
}

/// Grid spacing and layout used to seed SLIC centers.
struct SlicGrid {
  double spacing;
  std::size_t rows, cols;
};

inline SlicGrid slic_grid(std::size_t height, std::size_t width, std::size_t n_target) {
  const double area = static_cast<double>(height * width);
  SlicGrid g;
  g.spacing = std::sqrt(area / static_cast<double>(n_target));
  g.rows = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n_target * height) / width))));
  g.rows = std::min(g.rows, height);
  g.cols = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(n_target) / static_cast<double>(g.rows))));
  g.cols = std::min(g.cols, width);
  return g;
}

inline SuperpixelMap slic(const FeatureMap& lab, const SlicParams& params, SlicTrace* trace = nullptr) {
  if (lab.depth() != 3) throw InvalidArgument("slic needs a 3-channel Lab feature map");
  require(params.n_target >= 1, "n_target must be >= 1");
  require(params.compactness > 0.0, "compactness must be > 0");
  const std::size_t height = lab.height(), width = lab.width();
  const std::size_t area = height * width;
  if (area < params.n_target) throw InvalidArgument("image area smaller than n_target");

  const SlicGrid grid = slic_grid(height, width, params.n_target);
  const double S = grid.spacing;
  const double spatial_weight = (params.compactness / S) * (params.compactness / S);

  std::vector<detail::SlicCenter> centers;
  const double step_r = static_cast<double>(height) / static_cast<double>(grid.rows);
  const double step_c = static_cast<double>(width) / static_cast<double>(grid.cols);
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      const double row = (static_cast<double>(i) + 0.5) * step_r - 0.5;
      const double col = (static_cast<double>(j) + 0.5) * step_c - 0.5;
      const auto pr = std::min<std::size_t>(height - 1, static_cast<std::size_t>(std::lround(row)));
      const auto pc = std::min<std::size_t>(width - 1, static_cast<std::size_t>(std::lround(col)));
      centers.push_back({lab(pr, pc, 0), lab(pr, pc, 1), lab(pr, pc, 2), row, col});
    }
  }
  const std::size_t k = centers.size();

  auto distance = [&](const detail::SlicCenter& ctr, std::size_t r, std::size_t c) {
    const double dl = lab(r, c, 0) - ctr.l, da = lab(r, c, 1) - ctr.a, db = lab(r, c, 2) - ctr.b;
    const double dr = static_cast<double>(r) - ctr.row, dc = static_cast<double>(c) - ctr.col;
    return dl * dl + da * da + db * db + spatial_weight * (dr * dr + dc * dc);
  };

  constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> label(area, kNone);
  std::vector<double> best(area);
  if (trace) *trace = SlicTrace{};

  for (std::size_t iter = 0; iter < params.max_iters; ++iter) {
    // Assignment: current center first, then window centers in index order; strict < keeps the lowest index on ties.
    for (std::size_t p = 0; p < area; ++p)
      best[p] = label[p] == kNone ? std::numeric_limits<double>::infinity()
                                  : distance(centers[label[p]], p / width, p % width);
    for (std::size_t ci = 0; ci < k; ++ci) {
      const auto& ctr = centers[ci];
      const auto r0 = static_cast<std::ptrdiff_t>(std::floor(ctr.row - S));
      const auto r1 = static_cast<std::ptrdiff_t>(std::ceil(ctr.row + S));
      const auto c0 = static_cast<std::ptrdiff_t>(std::floor(ctr.col - S));
      const auto c1 = static_cast<std::ptrdiff_t>(std::ceil(ctr.col + S));
      for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, r0); r <= std::min<std::ptrdiff_t>(height - 1, r1); ++r) {
        for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, c0); c <= std::min<std::ptrdiff_t>(width - 1, c1); ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c);
          const double d = distance(ctr, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
          if (d < best[p] || (d == best[p] && ci < label[p])) {
            best[p] = d;
            label[p] = static_cast<std::uint32_t>(ci);
          }
        }
      }
    }
    // Pixels outside every window fall back to the globally nearest center.
    for (std::size_t p = 0; p < area; ++p) {
      if (label[p] != kNone) continue;
      for (std::size_t ci = 0; ci < k; ++ci) {
        const double d = distance(centers[ci], p / width, p % width);
        if (d < best[p]) {
          best[p] = d;
          label[p] = static_cast<std::uint32_t>(ci);
        }
      }
    }

    // Update: reduce per center in index order.
    std::vector<detail::SlicCenter> sum(k, {0, 0, 0, 0, 0});
    std::vector<std::size_t> count(k, 0);
    for (std::size_t p = 0; p < area; ++p) {
      auto& s = sum[label[p]];
      const std::size_t r = p / width, c = p % width;
      s.l += lab(r, c, 0);
      s.a += lab(r, c, 1);
      s.b += lab(r, c, 2);
      s.row += static_cast<double>(r);
      s.col += static_cast<double>(c);
      ++count[label[p]];
    }
    double displacement = 0.0;
    for (std::size_t ci = 0; ci < k; ++ci) {
      if (count[ci] == 0) continue;
      const double n = static_cast<double>(count[ci]);
      const detail::SlicCenter next{sum[ci].l / n, sum[ci].a / n, sum[ci].b / n, sum[ci].row / n, sum[ci].col / n};
      const double dl = next.l - centers[ci].l, da = next.a - centers[ci].a, db = next.b - centers[ci].b;
      const double dr = next.row - centers[ci].row, dc = next.col - centers[ci].col;
      displacement += std::sqrt(dl * dl + da * da + db * db + spatial_weight * (dr * dr + dc * dc));
      centers[ci] = next;
    }
    displacement /= static_cast<double>(k);

    if (trace) {
      double objective = 0.0;
      for (std::size_t p = 0; p < area; ++p) objective += distance(centers[label[p]], p / width, p % width);
      trace->objective.push_back(objective);
      trace->iterations = iter + 1;
    }
    if (displacement < params.tol) break;
  }
  if (trace) trace->raw_labels = label;

  const std::size_t min_size = std::max<std::size_t>(1, area / (4 * params.n_target));
  return enforce_connectivity(label, height, width, min_size);
}

}  // namespace rpt
