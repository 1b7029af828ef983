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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "rpt/rpt.hpp"

namespace rpt {
namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.pretrain_iters = 150;
  c.adapt_iters = 40;
  c.log_interval = 10;
  c.k = 6;
  c.logic_hidden = 8;
  c.logic_epochs = 3;
  c.seg_hidden = 8;
  return c;
}

const Dataset& small_data() {
  static const Dataset data = [] {
    GenDatasetOptions o;
    o.n_source = 12;
    o.n_target = 4;
    o.height = o.width = 32;
    const auto [src, tgt] = benchmark_domains(3);
    return make_dataset(src, tgt, o);
  }();
  return data;
}

struct Trained {
  SegHead model;
  LogicModel logic;
};

const Trained& small_models() {
  static const Trained t{pretrain(small_config(), small_data().source),
                         train_logic_on_source(small_data().source, small_config()).model};
  return t;
}

void expect_same_state(const AdaptState& a, const AdaptState& b) {
  ASSERT_EQ(a.images.size(), b.images.size());
  EXPECT_EQ(a.clusters, b.clusters);
  EXPECT_EQ(a.offsets, b.offsets);
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    const auto &x = a.images[i], &y = b.images[i];
    EXPECT_EQ(x.sp, y.sp);
    EXPECT_EQ(x.stats, y.stats);
    EXPECT_EQ(x.retained, y.retained);
    EXPECT_EQ(x.sequences, y.sequences);
    EXPECT_EQ(x.logic.p_logic, y.logic.p_logic);
    EXPECT_EQ(x.logic.covered, y.logic.covered);
    EXPECT_EQ(x.pc_mask, y.pc_mask);
    EXPECT_EQ(x.cc_mask, y.cc_mask);
  }
}

TEST(Objective, ModelStepArithmetic) {
  EXPECT_NEAR(objective_total(1.0, 2.0, 0.0, 0.0, 3.0, 0.1), 2.7, 1e-15);
  EXPECT_NEAR(objective_total(1.0, 0.5, 1.0, 0.5, 3.0, 0.1), 2.7, 1e-15);
  EXPECT_EQ(objective_total(0, 0, 0, 0, 0, 0.1), 0.0);
}

TEST(Schedule, RefreshMarksAndPolyDecay) {
  EXPECT_EQ(refresh_marks(3, 1500), (std::vector<std::size_t>{375, 750, 1125}));
  EXPECT_EQ(refresh_marks(1, 1500), (std::vector<std::size_t>{750}));
  EXPECT_TRUE(refresh_marks(0, 1500).empty());
  EXPECT_EQ(poly_lr(0.5, 0, 100, 0.9), 0.5);
  EXPECT_NEAR(poly_lr(1.0, 50, 100, 1.0), 0.5, 1e-15);
}

TEST(Pretrain, ZeroIterationsLeavesInitialization) {
  TrainConfig c = small_config();
  c.pretrain_iters = 0;
  SegHead init = init_seg_head(3, c.seg_hidden, kNumClasses, mix_seed(c.seed, 10));
  quantize_to_f32(init);
  EXPECT_EQ(pretrain(c, small_data().source), init);
}

TEST(Pretrain, Reproducible) {
  EXPECT_EQ(pretrain(small_config(), small_data().source), small_models().model);
}

TEST(AdaptState, VersionZeroFromGivenModel) {
  const auto& m = small_models();
  const auto state = build_state(m.model, small_data().target, m.logic, small_config());
  EXPECT_EQ(state.version, 0u);
  ASSERT_EQ(state.images.size(), small_data().target.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < state.images.size(); ++i) {
    EXPECT_EQ(state.offsets[i], total);
    total += state.images[i].sp.count;
    EXPECT_EQ(testing::check_superpixel_map(state.images[i].sp), "");
  }
  EXPECT_EQ(state.clusters.assignment.size(), total);
}

TEST(AdaptState, RefreshWithUnchangedModelIsIdentical) {
  const auto& m = small_models();
  const auto s0 = build_state(m.model, small_data().target, m.logic, small_config());
  const auto s1 = refresh_state(s0, m.model, small_data().target, m.logic, small_config());
  const auto s2 = refresh_state(s1, m.model, small_data().target, m.logic, small_config());
  EXPECT_EQ(s2.version, 2u);
  expect_same_state(s0, s1);
  expect_same_state(s1, s2);
}

// Refreshed votes equal brute-force votes over the new model's predictions.
TEST(AdaptState, RefreshMatchesBruteForceVotes) {
  const auto& m = small_models();
  const auto& target = small_data().target;
  const auto s0 = build_state(m.model, target, m.logic, small_config());
  SegHead other = init_seg_head(3, 8, kNumClasses, 99);
  const auto s1 = refresh_state(s0, other, target, m.logic, small_config());
  EXPECT_EQ(s1.version, 1u);
  SuperpixelStats all;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& img = s1.images[i];
    EXPECT_EQ(img.sp, s0.images[i].sp);
    const auto oracle = testing::oracle_dominative(img.sp, testing::oracle_argmax(forward_seg(other, target[i].image).logits),
                                                   kNumClasses);
    for (std::size_t id = 0; id < img.sp.count; ++id) {
      ASSERT_EQ(img.stats[id].valid, oracle[id].valid);
      ASSERT_EQ(img.stats[id].dominant, oracle[id].dominant);
    }
    all.insert(all.end(), img.stats.begin(), img.stats.end());
  }
  const auto votes = testing::oracle_cluster_votes(s1.clusters.k, s1.clusters.assignment, all, kNumClasses);
  for (std::size_t c = 0; c < s1.clusters.k; ++c) {
    ASSERT_EQ(s1.clusters.dominant_valid[c], votes[c].has_value());
    if (votes[c]) {
      ASSERT_EQ(s1.clusters.dominant[c], *votes[c]);
    }
  }
}

TEST(Adapt, ZeroIterationsKeepsModel) {
  const auto& m = small_models();
  TrainConfig c = small_config();
  c.adapt_iters = 0;
  const auto state = build_state(m.model, small_data().target, m.logic, c);
  const auto r = adapt(c, small_data(), m.logic, m.model, state);
  EXPECT_EQ(r.model, m.model);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(r.final_miou, r.initial_miou);
}

TEST(Adapt, ReproducibleAndBookkept) {
  const auto& m = small_models();
  const TrainConfig c = small_config();
  const auto state = build_state(m.model, small_data().target, m.logic, c);
  const auto a = adapt(c, small_data(), m.logic, m.model, state);
  const auto b = adapt(c, small_data(), m.logic, m.model, state);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(format_metrics_csv(a.rows), format_metrics_csv(b.rows));
  ASSERT_EQ(a.rows.size(), 4u);
  EXPECT_EQ(a.refreshed_at, (std::vector<std::size_t>{10, 20, 30}));
  EXPECT_EQ(a.state.version, 3u);
  for (const auto& row : parse_metrics_csv(format_metrics_csv(a.rows)))
    EXPECT_EQ(row.total, objective_total(row.seg, row.pc, row.cc, row.sl, row.adv, c.epsilon));
}

// Without adversarial weight and with every threshold out of reach, adaptation
// is continued source training.
TEST(Adapt, DegenerateConfigurationIsSourceTraining) {
  const auto& m = small_models();
  TrainConfig c = small_config();
  c.epsilon = 0.0;
  c.lambda_pc = c.lambda_cc = 1.0 - 1e-12;
  c.lambda_sl = 1e-300;
  const auto state = build_state(m.model, small_data().target, m.logic, c);
  const auto r = adapt(c, small_data(), m.logic, m.model, state);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.pc, 0.0);
    EXPECT_EQ(row.cc, 0.0);
    EXPECT_EQ(row.sl, 0.0);
    EXPECT_EQ(row.total, row.seg);
  }
  EXPECT_NEAR(r.final_miou, r.initial_miou, 0.05);
}

TEST(MetricsCsv, FormatAndParse) {
  MetricsRow row{100, 0.5, 1.25, 0.75, -0.5, 1.3862943611198906, 0.0, 0.625};
  row.total = objective_total(row.seg, row.pc, row.cc, row.sl, row.adv, 0.1);
  const std::string csv = format_metrics_csv({row});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,L_seg,L_pc,L_cc,L_sl,L_adv,total,target_mIoU");
  const auto back = parse_metrics_csv(csv);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].total, row.total);
  EXPECT_EQ(back[0].adv, row.adv);
  EXPECT_THROW(parse_metrics_csv("iteration\n"), FormatError);
  EXPECT_THROW(parse_metrics_csv(std::string(kMetricsHeader) + "\n1,2\n"), FormatError);
}

TEST(ClusterSetup, BundleRoundTrip) {
  const auto setup = cluster_target(small_data().target, small_config());
  const auto dir = std::filesystem::temp_directory_path() / "rpt_unit_clusters";
  std::filesystem::remove_all(dir);
  to_bundle(setup).save(dir);
  const auto back = cluster_setup_from_bundle(TensorBundle::load(dir));
  EXPECT_EQ(back.superpixels, setup.superpixels);
  EXPECT_EQ(back.offsets, setup.offsets);
  EXPECT_EQ(back.clusters.assignment, setup.clusters.assignment);
  EXPECT_EQ(back.clusters.k, setup.clusters.k);
}

}  // namespace
}  // namespace rpt
