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

// Random instances and finite-difference gradient checks shared by the unit
// and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rpt/rpt.hpp"

namespace rpt::testing {

inline Logits random_logits(Rng& rng, std::size_t h, std::size_t w, std::size_t c, double scale = 2.0) {
  Logits z(h, w, c);
  for (double& v : z.data()) v = rng.uniform(-scale, scale);
  return z;
}

inline Image random_image(Rng& rng, std::size_t h, std::size_t w, std::size_t channels = 3) {
  Image im(h, w, channels);
  for (double& v : im.data()) v = rng.uniform();
  return im;
}

inline LabelMap random_labels(Rng& rng, std::size_t h, std::size_t w, std::size_t classes, double ignore_prob = 0.0) {
  LabelMap labels(h, w, 1);
  for (auto& v : labels.data())
    v = rng.uniform() < ignore_prob ? kIgnoreLabel : static_cast<std::uint8_t>(rng.index(classes));
  return labels;
}

/// Dense ids 0..n-1, every id used at least once; not necessarily connected.
inline SuperpixelMap random_partition(Rng& rng, std::size_t h, std::size_t w, std::size_t n) {
  SuperpixelMap sp;
  sp.ids = Grid<std::uint16_t, SuperpixelTag>(h, w, 1);
  sp.count = n;
  std::vector<std::size_t> order(h * w);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  for (std::size_t i = 0; i < order.size(); ++i)
    sp.ids.data()[order[i]] = static_cast<std::uint16_t>(i < n ? i : rng.index(n));
  return sp;
}

/// ||a - b|| / max(||a||, ||b||, 1e-12).
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

/// Central differences of `f` with respect to each entry of `params`, which
/// are restored afterwards.
inline std::vector<double> numeric_gradient(std::vector<std::span<double>> params, const std::function<double()>& f,
                                            double step = 1e-5) {
  std::vector<double> out;
  for (auto block : params) {
    for (double& v : block) {
      const double saved = v;
      v = saved + step;
      const double up = f();
      v = saved - step;
      const double down = f();
      v = saved;
      out.push_back((up - down) / (2.0 * step));
    }
  }
  return out;
}

inline std::vector<double> flatten(const std::vector<std::span<const double>>& blocks) {
  std::vector<double> out;
  for (auto b : blocks) out.insert(out.end(), b.begin(), b.end());
  return out;
}

struct GradCheck {
  double error = 0.0;
  std::size_t active = 0;  // punished pixels or non-zero gradient entries
};

/// Random regularizer state for one image: superpixels, votes from the given
/// logits, a cluster model, logic scores and the frozen consistency masks.
struct RegularizerCase {
  SuperpixelMap sp;
  SuperpixelStats stats;
  RetainedSet retained;
  ClusterModel clusters;
  std::vector<std::uint32_t> assignment;
  LogicScores logic;
  Thresholds lambda;
  std::vector<std::uint8_t> pc_mask, cc_mask;

  LossResult pcr(const Logits& z) const { return pcr_loss(z, sp, stats, retained, lambda.pc, pc_mask); }
  LossResult ccr(const Logits& z) const { return ccr_loss(z, sp, clusters, assignment, retained, lambda.cc, cc_mask); }
  LossResult slr(const Logits& z) const { return slr_loss(z, sp, stats, logic, retained, lambda.sl); }
  LossResult rpt(const Logits& z) const { return rpt_loss(pcr(z), ccr(z), slr(z)); }
};

inline RegularizerCase random_regularizer_case(Rng& rng, const Logits& logits) {
  RegularizerCase rc;
  const std::size_t classes = logits.depth();
  const std::size_t n = 2 + rng.index(std::min<std::size_t>(6, logits.pixels() - 1));
  rc.sp = random_partition(rng, logits.height(), logits.width(), n);
  rc.stats = dominative_categories(rc.sp, argmax_labels(logits), classes);
  rc.retained.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) rc.retained[i] = rng.uniform() < 0.7;
  rc.retained[rng.index(n)] = true;
  rc.clusters.k = 3;
  rc.clusters.dominant = {static_cast<std::uint8_t>(rng.index(classes)), static_cast<std::uint8_t>(rng.index(classes)),
                          static_cast<std::uint8_t>(rng.index(classes))};
  rc.clusters.dominant_valid = {true, true, rng.uniform() < 0.5};
  for (std::size_t i = 0; i < n; ++i) rc.assignment.push_back(static_cast<std::uint32_t>(rng.index(3)));
  rc.clusters.assignment = rc.assignment;
  for (std::size_t i = 0; i < n; ++i) {
    rc.logic.p_logic.push_back(rng.uniform());
    rc.logic.covered.push_back(rng.uniform() < 0.8);
  }
  rc.lambda = {0.25, 0.25, 0.5};
  rc.pc_mask = pcr_loss(logits, rc.sp, rc.stats, rc.retained, rc.lambda.pc).mask;
  rc.cc_mask = ccr_loss(logits, rc.sp, rc.clusters, rc.assignment, rc.retained, rc.lambda.cc).mask;
  return rc;
}

/// Gradient of a per-logits loss against central differences.
inline GradCheck check_logits_loss(Logits logits, const std::function<LossResult(const Logits&)>& loss) {
  const LossResult at = loss(logits);
  const auto numeric =
      numeric_gradient({std::span<double>(logits.data())}, [&] { return loss(logits).loss; });
  return {relative_error(at.grad.data(), numeric), at.punished};
}

enum class LossKind { kSeg, kPcr, kCcr, kSlr };

inline GradCheck check_loss_gradient(LossKind kind, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t h = 3 + rng.index(4), w = 3 + rng.index(4), c = 3 + rng.index(3);
  const Logits logits = random_logits(rng, h, w, c);
  if (kind == LossKind::kSeg) {
    const LabelMap labels = random_labels(rng, h, w, c, 0.2);
    return check_logits_loss(logits, [&](const Logits& z) { return seg_loss(z, labels); });
  }
  const RegularizerCase rc = random_regularizer_case(rng, logits);
  switch (kind) {
    case LossKind::kPcr:
      return check_logits_loss(logits, [&](const Logits& z) { return rc.pcr(z); });
    case LossKind::kCcr:
      return check_logits_loss(logits, [&](const Logits& z) { return rc.ccr(z); });
    default:
      return check_logits_loss(logits, [&](const Logits& z) { return rc.slr(z); });
  }
}

inline std::vector<FeatureMap> random_hidden_maps(Rng& rng, std::size_t count, std::size_t depth) {
  std::vector<FeatureMap> maps;
  for (std::size_t i = 0; i < count; ++i) {
    FeatureMap m(2 + rng.index(3), 2 + rng.index(3), depth);
    for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
    maps.push_back(std::move(m));
  }
  return maps;
}

inline Discriminator random_discriminator(Rng& rng, std::size_t depth) {
  Discriminator d = make_discriminator(depth);
  for (double& v : d.w) v = rng.uniform(-1.0, 1.0);
  d.b = rng.uniform(-0.5, 0.5);
  return d;
}

/// L_adv with respect to the hidden maps of both domains.
inline GradCheck check_adv_hidden_gradient(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t depth = 2 + rng.index(4);
  auto src = random_hidden_maps(rng, 1 + rng.index(2), depth);
  auto tgt = random_hidden_maps(rng, 1 + rng.index(2), depth);
  const Discriminator d = random_discriminator(rng, depth);
  const AdvResult at = adv_loss(d, src, tgt);
  std::vector<std::span<double>> params;
  std::vector<double> analytic;
  for (std::size_t i = 0; i < src.size(); ++i) {
    params.emplace_back(src[i].data());
    analytic.insert(analytic.end(), at.grad_src[i].data().begin(), at.grad_src[i].data().end());
  }
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    params.emplace_back(tgt[i].data());
    analytic.insert(analytic.end(), at.grad_tgt[i].data().begin(), at.grad_tgt[i].data().end());
  }
  const auto numeric = numeric_gradient(params, [&] { return adv_loss(d, src, tgt).loss; });
  return {relative_error(analytic, numeric), analytic.size()};
}

/// L_adv with respect to the discriminator's own parameters, on hidden maps
/// produced by a random SegHead.
inline GradCheck check_discriminator_gradient(std::uint64_t seed) {
  Rng rng(seed);
  const SegHead head = init_seg_head(3, 4 + rng.index(4), 3, rng.next());
  const auto hs = forward_seg(head, random_image(rng, 3 + rng.index(3), 3 + rng.index(3))).hidden;
  const auto ht = forward_seg(head, random_image(rng, 3 + rng.index(3), 3 + rng.index(3))).hidden;
  Discriminator d = random_discriminator(rng, head.hidden);
  const AdvResult at = adv_loss(d, hs, ht);
  std::vector<double> analytic = at.grad_w;
  analytic.push_back(at.grad_b);
  const auto numeric = numeric_gradient({std::span<double>(d.w), std::span<double>(&d.b, 1)},
                                        [&] { return adv_loss(d, hs, ht).loss; });
  return {relative_error(analytic, numeric), analytic.size()};
}

/// SegHead parameters through one full model step:
/// L_seg(source) + L_rpt(target) - epsilon * L_adv.
inline GradCheck check_seg_head_gradient(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t classes = 3 + rng.index(3);
  SegHead model = init_seg_head(3, 3 + rng.index(4), classes, rng.next());
  const Image src = random_image(rng, 3 + rng.index(3), 3 + rng.index(3));
  const Image tgt = random_image(rng, 3 + rng.index(3), 3 + rng.index(3));
  const LabelMap labels = random_labels(rng, src.height(), src.width(), classes, 0.1);
  const Discriminator d = random_discriminator(rng, model.hidden);
  const double epsilon = 0.1;
  const RegularizerCase rc = random_regularizer_case(rng, forward_seg(model, tgt).logits);

  auto objective = [&] {
    const auto fs = forward_seg(model, src);
    const auto ft = forward_seg(model, tgt);
    return seg_loss(fs.logits, labels).loss + rc.rpt(ft.logits).loss - epsilon * adv_loss(d, fs.hidden, ft.hidden).loss;
  };
  const auto fs = forward_seg(model, src);
  const auto ft = forward_seg(model, tgt);
  const auto adv = adv_loss(d, fs.hidden, ft.hidden);
  FeatureMap dh_src = adv.grad_src.front(), dh_tgt = adv.grad_tgt.front();
  for (double& v : dh_src.data()) v *= -epsilon;
  for (double& v : dh_tgt.data()) v *= -epsilon;
  SegHead grad = make_seg_head(model.channels, model.hidden, model.classes);
  backward_seg(model, src, fs, seg_loss(fs.logits, labels).grad, &dh_src, grad);
  backward_seg(model, tgt, ft, rc.rpt(ft.logits).grad, &dh_tgt, grad);
  const auto analytic = flatten(std::as_const(grad).blocks());
  const auto numeric = numeric_gradient(model.blocks(), objective);
  return {relative_error(analytic, numeric), analytic.size()};
}

/// Full encoder-decoder BPTT on a random masked sequence.
inline GradCheck check_lstm_gradient(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t classes = 3 + rng.index(3), hidden = 4 + rng.index(5), length = 3 + rng.index(5);
  LogicModel model = make_logic_model(classes, hidden);
  init_uniform(model, rng.next(), 0.5);
  TokenSequence seq;
  for (std::size_t t = 0; t < length; ++t) {
    seq.tokens.push_back(static_cast<std::uint8_t>(rng.index(classes)));
    seq.positions.push_back(static_cast<std::uint16_t>(t));
  }
  const auto seq_runs = runs(seq.tokens);
  const auto masked = mask_run(seq, seq_runs[rng.index(seq_runs.size())], model.mask_token());
  LogicModel grad = make_logic_model(classes, hidden);
  encdec_loss(model, masked.tokens, seq.tokens, &grad);
  const auto analytic = flatten(std::as_const(grad).blocks());
  const auto numeric = numeric_gradient(model.blocks(), [&] { return encdec_loss(model, masked.tokens, seq.tokens); });
  return {relative_error(analytic, numeric), analytic.size()};
}

}  // namespace rpt::testing
