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
#include <sstream>

#include "rpt/rpt.hpp"
#include "test_support.hpp"

namespace rpt {
namespace {

LabelMap map2x2(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  return LabelMap(2, 2, 1, std::vector<std::uint8_t>{a, b, c, d});
}

TEST(Iou, PerfectPrediction) {
  const auto gt = map2x2(0, 1, 2, 2);
  const auto r = evaluate_labels(gt, gt, 3);
  for (double v : r.iou) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(r.miou, 1.0);
}

TEST(Iou, HandConfusionMatrix) {
  const auto r = evaluate_labels(map2x2(0, 1, 1, 1), map2x2(0, 0, 1, 1), 2);
  EXPECT_DOUBLE_EQ(r.iou[0], 0.5);
  EXPECT_DOUBLE_EQ(r.iou[1], 2.0 / 3.0);
  EXPECT_NEAR(r.miou, 0.583, 1e-3);
}

TEST(Iou, SwappingPredictionAndTruthIsSymmetric) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto a = testing::random_labels(rng, 6, 6, 4), b = testing::random_labels(rng, 6, 6, 4);
    const auto ab = evaluate_labels(a, b, 4), ba = evaluate_labels(b, a, 4);
    for (std::size_t c = 0; c < 4; ++c) {
      ASSERT_EQ(ab.present[c], ba.present[c]);
      if (ab.present[c]) {
        ASSERT_EQ(ab.iou[c], ba.iou[c]);
      }
    }
  }
}

TEST(Iou, AbsentClassesAndIgnoreAreSkipped) {
  const auto r = evaluate_labels(map2x2(0, 0, 1, 1), map2x2(0, kIgnoreLabel, 1, 1), 5);
  EXPECT_TRUE(std::isnan(r.iou[4]));
  EXPECT_FALSE(r.present[4]);
  EXPECT_DOUBLE_EQ(r.miou, 1.0);
  EXPECT_THROW(evaluate_labels(map2x2(0, 0, 7, 1), map2x2(0, 0, 1, 1), 5), InvalidArgument);
}

TEST(Render, PaletteFileMatchesBuiltIn) {
  EXPECT_EQ(read_palette(std::string(RPT_SOURCE_DIR) + "/data/palette.txt"), kDefaultPalette);
}

TEST(Render, PpmLayout) {
  const std::string ppm = encode_ppm(LabelMap(1, 2, 1, std::vector<std::uint8_t>{0, 2}));
  const std::string header = "P6\n2 1\n255\n";
  ASSERT_EQ(ppm.size(), header.size() + 6);
  EXPECT_EQ(ppm.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(ppm[header.size()]), kDefaultPalette[0][0]);
  EXPECT_EQ(static_cast<unsigned char>(ppm[header.size() + 3]), kDefaultPalette[2][0]);
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const TrainConfig c;
  EXPECT_EQ(c.lambda_pc, 0.25);
  EXPECT_EQ(c.lambda_cc, 0.25);
  EXPECT_EQ(c.lambda_sl, 0.25);
  EXPECT_EQ(c.epsilon, 0.1);
  EXPECT_EQ(c.keep_fraction, 0.5);
  EXPECT_EQ(c.n_su, 3u);
  EXPECT_EQ(c.pretrain_iters, 2000u);
  EXPECT_EQ(c.adapt_iters, 1500u);
  EXPECT_EQ(c.seg_hidden, 16u);
  EXPECT_EQ(c.logic_hidden, 32u);
  EXPECT_EQ(c.logic_epochs, 30u);
}

TEST(Config, ParsesKeysCommentsAndBlankLines) {
  std::istringstream in("# run\nlambda_pc = 0.3\n\n  n_su=1   # one refresh\nseed = 12\n");
  const TrainConfig c = parse_config(in);
  EXPECT_EQ(c.lambda_pc, 0.3);
  EXPECT_EQ(c.n_su, 1u);
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.lambda_cc, 0.25);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* text : {"bogus = 1\n", "lambda_pc = 1.0\n", "lambda_sl = 0\n", "epsilon = -0.1\n",
                           "keep_fraction = 0\n", "k = abc\n", "n_su = -1\n", "just a line\n", "threads = 0\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_config(in), InvalidArgument) << text;
  }
}

TEST(Config, FormatRoundTrips) {
  TrainConfig c;
  c.lambda_sl = 0.1;
  c.adapt_lr = 3.3e-7;
  c.k = 17;
  c.seed = 123456789012345ULL;
  std::istringstream in(format_config(c));
  EXPECT_EQ(parse_config(in), c);
  EXPECT_EQ(config_value(c, "lambda_sl"), "0.1");
  EXPECT_EQ(config_keys().size(), 25u);
}

}  // namespace
}  // namespace rpt
