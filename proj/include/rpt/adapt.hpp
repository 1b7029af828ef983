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

// Source pre-training and the adversarial adaptation loop with
// prediction-transfer regularization on the target domain.
//
// Pseudo-targets (superpixel and cluster dominative categories, the retained
// set, and spatial-logic scores) live in an AdaptState. Version 0 is computed
// from the pre-trained model before any target optimization; the loop then
// refreshes it n_su times at evenly spaced iterations. The consistency masks
// are taken from the model at refresh time and stay fixed until the next
// version. Superpixel maps and the
// k-means assignment depend only on the frozen images and features, so they
// are computed once and carried across versions.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rpt/color.hpp"
#include "rpt/config.hpp"
#include "rpt/error.hpp"
#include "rpt/metrics.hpp"
#include "rpt/parallel.hpp"
#include "rpt/random.hpp"
#include "rpt/regularizers.hpp"
#include "rpt/scene.hpp"
#include "rpt/seg_model.hpp"
#include "rpt/slic.hpp"
#include "rpt/spatial_logic.hpp"
#include "rpt/statistics.hpp"

namespace rpt {

inline SlicParams slic_params_for(const TrainConfig& config, std::size_t height, std::size_t width) {
  SlicParams p;
  p.n_target = config.slic_n != 0 ? config.slic_n : std::max<std::size_t>(1, height * width / 32);
  p.compactness = config.slic_m;
  p.max_iters = config.slic_iters;
  p.seed = config.seed;
  return p;
}

inline std::size_t strips_for(const TrainConfig& config, std::size_t width) {
  return config.n_strips != 0 ? config.n_strips : std::max<std::size_t>(1, width / 8);
}

inline SuperpixelMap superpixels_for(const Image& image, const TrainConfig& config) {
  return slic(rgb_to_lab(image), slic_params_for(config, image.height(), image.width()));
}

inline LabelMap predict(const SegHead& model, const Image& image) {
  return argmax_labels(forward_seg(model, image).logits);
}

inline IouReport evaluate(const SegHead& model, const std::vector<Sample>& samples, std::size_t threads = 1) {
  std::vector<LabelMap> preds(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) { preds[i] = predict(model, samples[i].image); });
  ConfusionMatrix cm(model.classes);
  for (std::size_t i = 0; i < samples.size(); ++i) cm.add(preds[i], samples[i].labels);
  return iou_report(cm);
}

// ---------------------------------------------------------------------------
// Spatial-logic training data

/// Column sequences of ground-truth dominative categories over SLIC superpixels.
inline std::vector<TokenSequence> source_sequences(const std::vector<Sample>& source, const TrainConfig& config) {
  std::vector<std::vector<TokenSequence>> per_image(source.size());
  parallel_for(source.size(), config.threads, [&](std::size_t i) {
    const auto sp = superpixels_for(source[i].image, config);
    const auto stats = dominative_categories(sp, source[i].labels, kNumClasses);
    per_image[i] = build_column_sequences(sp, stats, strips_for(config, sp.width()));
  });
  std::vector<TokenSequence> out;
  for (auto& v : per_image)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

inline LogicTrainResult train_logic_on_source(const std::vector<Sample>& source, const TrainConfig& config) {
  LogicTrainParams p;
  p.hidden = config.logic_hidden;
  p.epochs = config.logic_epochs;
  p.lr = config.logic_lr;
  p.seed = config.seed;
  auto result = train_logic(source_sequences(source, config), kNumClasses, p);
  quantize_to_f32(result.model);
  return result;
}

// ---------------------------------------------------------------------------
// Adaptation state

struct ImageState {
  SuperpixelMap sp;
  SuperpixelStats stats;
  RetainedSet retained;
  std::vector<TokenSequence> sequences;
  LogicScores logic;
  std::vector<std::uint8_t> pc_mask, cc_mask;
};

struct AdaptState {
  std::size_t version = 0;
  std::vector<ImageState> images;
  ClusterModel clusters;             // assignment over all target superpixels, image by image
  std::vector<std::size_t> offsets;  // first global superpixel index of each image

  std::span<const std::uint32_t> assignment(std::size_t image) const {
    return {clusters.assignment.data() + offsets[image], images[image].sp.count};
  }
};

/// Superpixels and clustering of the target set; independent of the model.
struct ClusterSetup {
  std::vector<SuperpixelMap> superpixels;
  ClusterModel clusters;
  std::vector<std::size_t> offsets;
};

inline ClusterSetup cluster_target(const std::vector<Sample>& target, const TrainConfig& config) {
  ClusterSetup setup;
  setup.superpixels.resize(target.size());
  std::vector<Matrix> pooled(target.size());
  parallel_for(target.size(), config.threads, [&](std::size_t i) {
    setup.superpixels[i] = superpixels_for(target[i].image, config);
    pooled[i] = pool_features(target[i].features, setup.superpixels[i]);
  });
  std::size_t total = 0;
  for (const auto& m : pooled) {
    setup.offsets.push_back(total);
    total += m.rows;
  }
  Matrix all(total, pooled.front().cols);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    std::copy(pooled[i].data.begin(), pooled[i].data.end(), all.data.begin() + setup.offsets[i] * all.cols);
  setup.clusters = kmeans(all, std::min(config.k, total), config.kmeans_iters, mix_seed(config.seed, 3));
  return setup;
}

/// Bundle layout: "centroids" (K x F), "assignment" (u16, one entry per
/// superpixel in image order) and "sp_NNNN" per target image.
inline TensorBundle to_bundle(const ClusterSetup& setup) {
  if (setup.clusters.k > 0xFFFF) throw InvalidArgument("too many clusters to store");
  TensorBundle b;
  b.put("centroids", to_raw(setup.clusters.centroids));
  const auto& a = setup.clusters.assignment;
  b.put("assignment",
        RawTensor{{static_cast<std::uint32_t>(a.size())}, std::vector<std::uint16_t>(a.begin(), a.end())});
  for (std::size_t i = 0; i < setup.superpixels.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sp_%04zu", i);
    b.put(name, to_raw(setup.superpixels[i]));
  }
  return b;
}

inline ClusterSetup cluster_setup_from_bundle(const TensorBundle& b) {
  ClusterSetup setup;
  setup.clusters.centroids = matrix_from_raw(b.get("centroids"));
  setup.clusters.k = setup.clusters.centroids.rows;
  const auto& a = b.get("assignment");
  if (a.dtype() != DType::kU16 || a.dims.size() != 1) throw FormatError("cluster assignment must be a u16 vector");
  for (auto v : a.values<std::uint16_t>()) {
    if (v >= setup.clusters.k) throw FormatError("cluster assignment out of range");
    setup.clusters.assignment.push_back(v);
  }
  std::size_t total = 0;
  for (std::size_t i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sp_%04zu", i);
    if (!b.contains(name)) break;
    setup.superpixels.push_back(superpixels_from_raw(b.get(name)));
    setup.offsets.push_back(total);
    total += setup.superpixels.back().count;
  }
  if (total != setup.clusters.assignment.size()) throw FormatError("cluster assignment does not cover the superpixels");
  return setup;
}

namespace detail {

/// Recomputes every prediction-derived field of `state` from `model`.
inline void update_targets(AdaptState& state, const SegHead& model, const std::vector<Sample>& target,
                           const LogicModel& logic, const TrainConfig& config) {
  std::vector<Logits> logits(target.size());
  parallel_for(target.size(), config.threads, [&](std::size_t i) {
    auto& img = state.images[i];
    logits[i] = forward_seg(model, target[i].image).logits;
    img.stats = dominative_categories(img.sp, argmax_labels(logits[i]), model.classes);
    img.retained = complexity_filter(img.stats, config.keep_fraction);
    img.sequences = build_column_sequences(img.sp, img.stats, strips_for(config, img.sp.width()));
    img.logic = score_logic(logic, img.sequences, img.sp.count);
  });
  SuperpixelStats all;
  for (const auto& img : state.images) all.insert(all.end(), img.stats.begin(), img.stats.end());
  cluster_dominative(state.clusters, all, model.classes);
  parallel_for(target.size(), config.threads, [&](std::size_t i) {
    auto& img = state.images[i];
    img.pc_mask = pcr_loss(logits[i], img.sp, img.stats, img.retained, config.lambda_pc).mask;
    img.cc_mask =
        ccr_loss(logits[i], img.sp, state.clusters, state.assignment(i), img.retained, config.lambda_cc).mask;
  });
}

}  // namespace detail

/// Version-0 state; `setup` may carry a precomputed clustering.
inline AdaptState build_state(const SegHead& model, const std::vector<Sample>& target, const LogicModel& logic,
                              const TrainConfig& config, std::optional<ClusterSetup> setup = std::nullopt) {
  if (target.empty()) throw InvalidArgument("no target images");
  if (!setup) setup = cluster_target(target, config);
  if (setup->superpixels.size() != target.size()) throw InvalidArgument("cluster setup does not match target set");
  AdaptState state;
  state.clusters = std::move(setup->clusters);
  state.offsets = std::move(setup->offsets);
  state.images.resize(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) state.images[i].sp = std::move(setup->superpixels[i]);
  detail::update_targets(state, model, target, logic, config);
  return state;
}

inline AdaptState refresh_state(const AdaptState& previous, const SegHead& model, const std::vector<Sample>& target,
                                const LogicModel& logic, const TrainConfig& config) {
  AdaptState state = previous;
  detail::update_targets(state, model, target, logic, config);
  state.version = previous.version + 1;
  return state;
}

// ---------------------------------------------------------------------------
// Training

inline double poly_lr(double base, std::size_t iter, std::size_t total, double power) {
  if (total == 0) return base;
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total), power);
}

template <class Model>
void sgd_step(Model& model, const Model& grad, double lr) {
  auto p = model.blocks();
  auto g = grad.blocks();
  for (std::size_t b = 0; b < p.size(); ++b)
    for (std::size_t i = 0; i < p[b].size(); ++i) p[b][i] -= lr * g[b][i];
}

template <class Model>
void zero_grad(Model& grad) {
  for (auto block : grad.blocks()) std::fill(block.begin(), block.end(), 0.0);
}

/// SGD on the source cross-entropy with a poly learning-rate decay.
inline SegHead pretrain(const TrainConfig& config, const std::vector<Sample>& source) {
  if (source.empty()) throw InvalidArgument("no source images to pre-train on");
  const std::size_t channels = source.front().image.depth();
  SegHead model = init_seg_head(channels, config.seg_hidden, kNumClasses, mix_seed(config.seed, 10));
  SegHead grad = make_seg_head(channels, config.seg_hidden, kNumClasses);
  Rng rng(mix_seed(config.seed, 11));
  for (std::size_t it = 0; it < config.pretrain_iters; ++it) {
    const Sample& s = source[rng.index(source.size())];
    const auto fwd = forward_seg(model, s.image);
    const auto loss = seg_loss(fwd.logits, s.labels);
    zero_grad(grad);
    backward_seg(model, s.image, fwd, loss.grad, nullptr, grad);
    sgd_step(model, grad, poly_lr(config.pretrain_lr, it, config.pretrain_iters, config.poly_power));
  }
  quantize_to_f32(model);
  return model;
}

/// One logged interval; losses are means over the interval's iterations.
struct MetricsRow {
  std::size_t iteration = 0;
  double seg = 0.0;
  double pc = 0.0;
  double cc = 0.0;
  double sl = 0.0;
  double adv = 0.0;
  double total = 0.0;
  double target_miou = 0.0;
};

/// Model-step objective L_seg + L_rpt - epsilon * L_adv.
inline double objective_total(double seg, double pc, double cc, double sl, double adv, double epsilon) {
  return seg + (pc + cc + sl) - epsilon * adv;
}

/// Iterations (0-based, taken before the step runs) at which the state is refreshed.
inline std::vector<std::size_t> refresh_marks(std::size_t n_su, std::size_t iterations) {
  std::vector<std::size_t> marks;
  for (std::size_t i = 1; i <= n_su; ++i) marks.push_back(i * iterations / (n_su + 1));
  return marks;
}

struct AdaptResult {
  SegHead model;
  Discriminator discriminator;
  AdaptState state;
  std::vector<MetricsRow> rows;
  std::vector<std::size_t> refreshed_at;
  double initial_miou = 0.0;
  double final_miou = 0.0;
};

/// Per-image regularizer evaluation under the current state.
struct RptTerms {
  LossResult pcr, ccr, slr;
};

inline RptTerms rpt_terms(const Logits& logits, const AdaptState& state, std::size_t image, const TrainConfig& config) {
  const auto& img = state.images[image];
  return {pcr_loss(logits, img.sp, img.stats, img.retained, config.lambda_pc, img.pc_mask),
          ccr_loss(logits, img.sp, state.clusters, state.assignment(image), img.retained, config.lambda_cc,
                   img.cc_mask),
          slr_loss(logits, img.sp, img.stats, img.logic, img.retained, config.lambda_sl)};
}

/// Alternating minimax: one discriminator step on L_adv, then one model step on
/// L_seg(source) + L_rpt(target) - epsilon * L_adv.
inline AdaptResult adapt(const TrainConfig& config, const Dataset& data, const LogicModel& logic,
                         const SegHead& pretrained, AdaptState state) {
  validate(config);
  if (state.images.size() != data.target.size()) throw InvalidArgument("adapt state does not match target set");
  AdaptResult result;
  result.model = pretrained;
  result.discriminator = make_discriminator(pretrained.hidden);
  result.initial_miou = evaluate(pretrained, data.target, config.threads).miou;

  SegHead grad = make_seg_head(pretrained.channels, pretrained.hidden, pretrained.classes);
  Rng rng(mix_seed(config.seed, 20));
  const auto marks = refresh_marks(config.n_su, config.adapt_iters);
  std::size_t next_mark = 0;

  MetricsRow acc;
  std::size_t acc_n = 0;
  for (std::size_t it = 0; it < config.adapt_iters; ++it) {
    while (next_mark < marks.size() && marks[next_mark] == it) {
      state = refresh_state(state, result.model, data.target, logic, config);
      result.refreshed_at.push_back(it);
      ++next_mark;
    }
    const std::size_t si = rng.index(data.source.size());
    const std::size_t ti = rng.index(data.target.size());
    const Sample& src = data.source[si];
    const Sample& tgt = data.target[ti];
    const auto fs = forward_seg(result.model, src.image);
    const auto ft = forward_seg(result.model, tgt.image);
    const double frac_lr = poly_lr(1.0, it, config.adapt_iters, config.poly_power);

    // Discriminator step.
    const auto adv_d = adv_loss(result.discriminator, fs.hidden, ft.hidden);
    for (std::size_t j = 0; j < result.discriminator.w.size(); ++j)
      result.discriminator.w[j] -= config.disc_lr * frac_lr * adv_d.grad_w[j];
    result.discriminator.b -= config.disc_lr * frac_lr * adv_d.grad_b;

    // Model step against the updated discriminator.
    const auto adv = adv_loss(result.discriminator, fs.hidden, ft.hidden);
    const auto seg = seg_loss(fs.logits, src.labels);
    const auto terms = rpt_terms(ft.logits, state, ti, config);
    const auto rpt = rpt_loss(terms.pcr, terms.ccr, terms.slr);

    FeatureMap dh_src = adv.grad_src.front();
    FeatureMap dh_tgt = adv.grad_tgt.front();
    for (double& v : dh_src.data()) v *= -config.epsilon;
    for (double& v : dh_tgt.data()) v *= -config.epsilon;
    zero_grad(grad);
    backward_seg(result.model, src.image, fs, seg.grad, &dh_src, grad);
    backward_seg(result.model, tgt.image, ft, rpt.grad, &dh_tgt, grad);
    sgd_step(result.model, grad, config.adapt_lr * frac_lr);

    acc.seg += seg.loss;
    acc.pc += terms.pcr.loss;
    acc.cc += terms.ccr.loss;
    acc.sl += terms.slr.loss;
    acc.adv += adv.loss;
    ++acc_n;
    if ((it + 1) % config.log_interval == 0 || it + 1 == config.adapt_iters) {
      const double n = static_cast<double>(acc_n);
      MetricsRow row;
      row.iteration = it + 1;
      row.seg = acc.seg / n;
      row.pc = acc.pc / n;
      row.cc = acc.cc / n;
      row.sl = acc.sl / n;
      row.adv = acc.adv / n;
      row.total = objective_total(row.seg, row.pc, row.cc, row.sl, row.adv, config.epsilon);
      row.target_miou = evaluate(result.model, data.target, config.threads).miou;
      result.rows.push_back(row);
      acc = MetricsRow{};
      acc_n = 0;
    }
  }
  result.state = std::move(state);
  result.final_miou = result.rows.empty() ? result.initial_miou : result.rows.back().target_miou;
  return result;
}

// ---------------------------------------------------------------------------
// metrics.csv

inline constexpr const char* kMetricsHeader = "iteration,L_seg,L_pc,L_cc,L_sl,L_adv,total,target_mIoU";

inline std::string format_metrics_row(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.iteration, r.seg, r.pc, r.cc,
                r.sl, r.adv, r.total, r.target_miou);
  return buf;
}

inline std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) out += format_metrics_row(r) + "\n";
  return out;
}

inline std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics.csv header mismatch");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.iteration, &r.seg, &r.pc, &r.cc, &r.sl,
                    &r.adv, &r.total, &r.target_miou) != 8)
      throw FormatError("malformed metrics row: " + line);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace rpt
