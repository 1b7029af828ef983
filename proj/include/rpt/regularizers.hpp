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

// Segmentation loss and the three prediction-transfer regularizers, each with
// its analytic gradient with respect to the per-pixel logits.
//
//   patch consistency:   L_pc = -sum_{i,j} [P(y_i | p) > lambda_pc] log P(y_i | p)
//   cluster consistency: L_cc = -sum_{i,j} [P(y_k | p) > lambda_cc] log P(y_k | p)
//   spatial logic:       L_sl = +sum_{i,j} [P_logic(y_i | S_i) < lambda_sl] log P(y_i | p)
//
// Only retained superpixels are punished. Both thresholds are strict. The
// pixel indicator carries no gradient. By default it is evaluated on the
// current probabilities; passing a `frozen` mask (one byte per pixel, as
// returned in LossResult::mask) fixes the punished set instead. Targets
// (y_i, y_k, P_logic) are inputs and are treated as constants.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/statistics.hpp"
#include "rpt/tensor.hpp"

namespace rpt {

struct LossResult {
  double loss = 0.0;
  Logits grad;                     // d loss / d logits
  std::vector<std::uint8_t> mask;  // 1 where the pixel contributes
  std::size_t punished = 0;
  bool all_ignored = false;  // seg_loss only: nothing to supervise

  /// Loss divided by the number of punished pixels; reporting only.
  double normalized() const { return punished == 0 ? 0.0 : loss / static_cast<double>(punished); }
};

struct Thresholds {
  double pc = 0.25;
  double cc = 0.25;
  double sl = 0.25;
};

/// Spatial-logic probability per superpixel of one image.
struct LogicScores {
  std::vector<double> p_logic;
  std::vector<bool> covered;
};

namespace detail {

inline LossResult empty_loss(const Logits& logits) {
  LossResult r;
  r.grad = Logits(logits.height(), logits.width(), logits.depth(), 0.0);
  r.mask.assign(logits.pixels(), 0);
  return r;
}

/// Softmax of one pixel into `out`; returns log-sum-exp.
inline double pixel_softmax(std::span<const double> z, std::span<double> out) {
  double mx = z[0];
  for (double v : z) mx = v > mx ? v : mx;
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp(z[k] - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return mx + std::log(sum);
}

inline void check_superpixels(const Logits& logits, const SuperpixelMap& sp, std::size_t n_stats,
                              const RetainedSet& retained) {
  if (!logits.same_extent(sp.ids)) throw InvalidArgument("logits and superpixel map differ in size");
  if (n_stats != sp.count || retained.size() != sp.count)
    throw InvalidArgument("per-superpixel inputs do not match the superpixel count");
}

/// Shared body of the two consistency regularizers.
inline LossResult consistency_loss(const Logits& logits, const SuperpixelMap& sp,
                                   std::span<const std::optional<std::uint8_t>> target, const RetainedSet& retained,
                                   double lambda, std::span<const std::uint8_t> frozen) {
  if (!frozen.empty() && frozen.size() != logits.pixels()) throw InvalidArgument("frozen mask size mismatch");
  LossResult r = empty_loss(logits);
  std::vector<double> prob(logits.depth());
  for (std::size_t p = 0; p < logits.pixels(); ++p) {
    const std::size_t id = sp.at(p);
    if (!retained[id] || !target[id]) continue;
    const std::uint8_t y = *target[id];
    const double lse = pixel_softmax(logits.pixel(p), prob);
    if (frozen.empty() ? !(prob[y] > lambda) : !frozen[p]) continue;
    r.loss -= logits.pixel(p)[y] - lse;
    auto g = r.grad.pixel(p);
    for (std::size_t k = 0; k < prob.size(); ++k) g[k] = prob[k];
    g[y] -= 1.0;
    r.mask[p] = 1;
    ++r.punished;
  }
  return r;
}

}  // namespace detail

/// Mean cross-entropy over labeled pixels.
inline LossResult seg_loss(const Logits& logits, const LabelMap& labels) {
  if (!logits.same_extent(labels)) throw InvalidArgument("logits and labels differ in size");
  LossResult r = detail::empty_loss(logits);
  std::size_t counted = 0;
  for (std::uint8_t v : labels.data()) counted += v != kIgnoreLabel;
  if (counted == 0) {
    r.all_ignored = true;
    return r;
  }
  const double inv = 1.0 / static_cast<double>(counted);
  std::vector<double> prob(logits.depth());
  for (std::size_t p = 0; p < logits.pixels(); ++p) {
    const std::uint8_t y = labels.data()[p];
    if (y == kIgnoreLabel) continue;
    if (y >= logits.depth()) throw InvalidArgument("label outside class range");
    const double lse = detail::pixel_softmax(logits.pixel(p), prob);
    r.loss -= (logits.pixel(p)[y] - lse) * inv;
    auto g = r.grad.pixel(p);
    for (std::size_t k = 0; k < prob.size(); ++k) g[k] = prob[k] * inv;
    g[y] -= inv;
    r.mask[p] = 1;
    ++r.punished;
  }
  return r;
}

inline LossResult pcr_loss(const Logits& logits, const SuperpixelMap& sp, const SuperpixelStats& stats,
                           const RetainedSet& retained, double lambda_pc,
                           std::span<const std::uint8_t> frozen = {}) {
  detail::check_superpixels(logits, sp, stats.size(), retained);
  std::vector<std::optional<std::uint8_t>> target(sp.count);
  for (std::size_t i = 0; i < sp.count; ++i)
    if (stats[i].valid) target[i] = stats[i].dominant;
  return detail::consistency_loss(logits, sp, target, retained, lambda_pc, frozen);
}

/// `assignment` maps this image's superpixels to clusters of `model`.
inline LossResult ccr_loss(const Logits& logits, const SuperpixelMap& sp, const ClusterModel& model,
                           std::span<const std::uint32_t> assignment, const RetainedSet& retained,
                           double lambda_cc, std::span<const std::uint8_t> frozen = {}) {
  detail::check_superpixels(logits, sp, assignment.size(), retained);
  const auto target = cluster_targets(model, assignment);
  return detail::consistency_loss(logits, sp, target, retained, lambda_cc, frozen);
}

inline LossResult slr_loss(const Logits& logits, const SuperpixelMap& sp, const SuperpixelStats& stats,
                           const LogicScores& logic, const RetainedSet& retained, double lambda_sl) {
  detail::check_superpixels(logits, sp, stats.size(), retained);
  if (logic.p_logic.size() != sp.count || logic.covered.size() != sp.count)
    throw InvalidArgument("logic scores do not match the superpixel count");
  LossResult r = detail::empty_loss(logits);
  std::vector<double> prob(logits.depth());
  for (std::size_t p = 0; p < logits.pixels(); ++p) {
    const std::size_t id = sp.at(p);
    if (!retained[id] || !stats[id].valid || !logic.covered[id] || !(logic.p_logic[id] < lambda_sl)) continue;
    const std::uint8_t y = stats[id].dominant;
    const double lse = detail::pixel_softmax(logits.pixel(p), prob);
    r.loss += logits.pixel(p)[y] - lse;
    auto g = r.grad.pixel(p);
    for (std::size_t k = 0; k < prob.size(); ++k) g[k] = -prob[k];
    g[y] += 1.0;
    r.mask[p] = 1;
    ++r.punished;
  }
  return r;
}

/// Elementwise sum of regularizer results; the mask is the union.
inline LossResult combine(std::span<const LossResult* const> parts) {
  if (parts.empty()) throw InvalidArgument("nothing to combine");
  LossResult r = detail::empty_loss(parts.front()->grad);
  for (const LossResult* part : parts) {
    r.loss += part->loss;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad.data()[i] += part->grad.data()[i];
    for (std::size_t p = 0; p < r.mask.size(); ++p) r.mask[p] |= part->mask[p];
  }
  for (auto m : r.mask) r.punished += m;
  return r;
}

inline LossResult rpt_loss(const LossResult& pcr, const LossResult& ccr, const LossResult& slr) {
  const LossResult* parts[] = {&pcr, &ccr, &slr};
  return combine(parts);
}

}  // namespace rpt
